use rand::seq::index;
use rand::Rng;

use super::{EntcfParams, Family, KeyBody, TrapdoorBody};

/// Random truth tables. G: 2^(w+1) distinct images split between the two
/// functions. F: 2^w distinct images for f₀ and f₁(x) = f₀(x ⊕ s), s ≠ 0.
pub(super) fn generate<R: Rng + ?Sized>(
    family: Family,
    params: &EntcfParams,
    rng: &mut R,
) -> (KeyBody, TrapdoorBody) {
    let count = 1usize << params.w;
    let space = params.image_space_size as usize;
    match family {
        Family::G => {
            let picks: Vec<u64> = index::sample(rng, space, 2 * count)
                .into_iter()
                .map(|i| i as u64)
                .collect();
            let f1 = picks[count..].to_vec();
            let f0 = picks[..count].to_vec();
            (KeyBody::Ideal { f0, f1 }, TrapdoorBody::Ideal { shift: None })
        }
        Family::F => {
            let f0: Vec<u64> = index::sample(rng, space, count)
                .into_iter()
                .map(|i| i as u64)
                .collect();
            let shift = rng.random_range(1..count as u32);
            let f1 = (0..count).map(|x| f0[x ^ shift as usize]).collect();
            (
                KeyBody::Ideal { f0, f1 },
                TrapdoorBody::Ideal { shift: Some(shift) },
            )
        }
    }
}
