use std::collections::BTreeSet;

use proptest::prelude::*;
use qselftest::entcf::{self, chk, dot, gen_keypair, Backend, EntcfParams, Family, PublicKey, Trapdoor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn keypair(family: Family, params: &EntcfParams, seed: u64) -> (PublicKey, Trapdoor) {
    gen_keypair(family, params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// A, u and the dimensions read straight off the key bytes.
struct LweOracle {
    n: usize,
    m: usize,
    q: u32,
    bound: u32,
    a: Vec<u32>,
    u: Vec<u32>,
}

impl LweOracle {
    fn from_key(key: &PublicKey) -> Self {
        let bytes = key.to_bytes();
        let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]) as usize;
        let u32_at = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        let (n, m, q, bound) = (u16_at(11), u16_at(13), u32_at(15), u32_at(19));
        let vals: Vec<u32> = bytes[23..].chunks(4).map(|c| u32::from_be_bytes(c.try_into().unwrap())).collect();
        assert_eq!(vals.len(), m * n + m);
        Self {
            n,
            m,
            q,
            bound,
            a: vals[..m * n].to_vec(),
            u: vals[m * n..].to_vec(),
        }
    }

    fn unpack(&self, mut y: u64) -> Vec<u32> {
        let mut out = vec![0; self.m];
        for c in out.iter_mut().rev() {
            *c = (y % self.q as u64) as u32;
            y /= self.q as u64;
        }
        out
    }

    fn member(&self, b: u8, x: u32, y: u64) -> bool {
        let y = self.unpack(y);
        (0..self.m).all(|i| {
            let mut c = if b == 1 { self.u[i] } else { 0 };
            for j in 0..self.n {
                if (x >> (self.n - 1 - j)) & 1 == 1 {
                    c += self.a[i * self.n + j];
                }
            }
            let d = (y[i] + self.q - c % self.q) % self.q;
            d.min(self.q - d) <= self.bound
        })
    }

    fn images(&self) -> u64 {
        (self.q as u64).pow(self.m as u32)
    }
}

#[test]
fn ideal_claw_key_satisfies_shift_relation() {
    let params = EntcfParams::ideal(2);
    let (key, td) = keypair(Family::F, &params, 7);
    let s = td.claw_shift().unwrap();
    assert_ne!(s, 0);
    for x in 0..4 {
        assert_eq!(key.support(1, x).unwrap(), key.support(0, x ^ s).unwrap());
        assert_eq!(key.support(0, x).unwrap().len(), 1);
    }
}

#[test]
fn ideal_injective_ranges_are_disjoint() {
    let params = EntcfParams::ideal(2);
    for seed in 0..20 {
        let (key, _) = keypair(Family::G, &params, seed);
        let r0: BTreeSet<u64> = (0..4).flat_map(|x| key.support(0, x).unwrap()).collect();
        let r1: BTreeSet<u64> = (0..4).flat_map(|x| key.support(1, x).unwrap()).collect();
        assert_eq!(r0.len() + r1.len(), 8);
        assert!(r0.is_disjoint(&r1));
    }
}

#[test]
fn chk_agrees_with_support_enumeration_at_w2() {
    let params = EntcfParams::ideal(2);
    for family in [Family::F, Family::G] {
        let (key, _) = keypair(family, &params, 3);
        let keys = [key.clone()];
        for b in 0..2u8 {
            for x in 0..4u32 {
                let supp = key.support(b, x).unwrap();
                for y in 0..params.image_space_size {
                    let expect = if supp.contains(&y) { 0 } else { 1 };
                    assert_eq!(chk(&keys, &[y], &[b], &[x]).unwrap(), expect);
                }
            }
        }
    }
}

#[test]
fn flipping_b_under_injective_key_fails_chk() {
    let params = EntcfParams::ideal(3);
    let (key, _) = keypair(Family::G, &params, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for x in 0..8 {
        for b in 0..2u8 {
            let y = key.evaluate(b, x, &mut rng).unwrap();
            assert_eq!(chk(&[key.clone()], &[y], &[b], &[x]).unwrap(), 0);
            for x2 in 0..8 {
                assert_eq!(chk(&[key.clone()], &[y], &[1 - b], &[x2]).unwrap(), 1);
            }
        }
    }
}

#[test]
fn ideal_decoding_inverts_tables() {
    let params = EntcfParams::ideal_with_slack(2, 5);
    let (key, td) = keypair(Family::G, &params, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut hit = BTreeSet::new();
    for b in 0..2u8 {
        for x in 0..4 {
            let y = key.evaluate(b, x, &mut rng).unwrap();
            hit.insert(y);
            assert_eq!(td.decode_b(y).unwrap(), Some(b));
            assert_eq!(td.decode_x(Some(b), y), Some(x));
        }
    }
    for y in (0..params.image_space_size).filter(|y| !hit.contains(y)) {
        assert_eq!(td.decode_b(y).unwrap(), None);
        assert_eq!(td.decode_x(Some(0), y), None);
        assert_eq!(td.decode_x(Some(1), y), None);
    }
}

#[test]
fn ideal_equation_bit_is_inner_product_with_shift() {
    for w in 1..=4 {
        let params = EntcfParams::ideal(w);
        let (key, td) = keypair(Family::F, &params, w as u64);
        let s = td.claw_shift().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for x in 0..1u32 << w {
            let y = key.evaluate(0, x, &mut rng).unwrap();
            assert_eq!(td.decode_h(y, 0).unwrap(), None);
            for d in 1..1u32 << w {
                assert_eq!(td.decode_h(y, d).unwrap(), Some(dot(d, s)));
            }
        }
    }
}

#[test]
fn decoders_reject_wrong_family() {
    let params = EntcfParams::ideal(2);
    let (_, f) = keypair(Family::F, &params, 0);
    let (_, g) = keypair(Family::G, &params, 0);
    assert!(f.decode_b(0).is_err());
    assert!(g.decode_h(0, 1).is_err());
}

#[test]
fn toy_lwe_support_matches_box_membership() {
    let params = EntcfParams::toy_lwe(2, 3, 16, 1);
    for family in [Family::F, Family::G] {
        let (key, _) = keypair(family, &params, 4);
        let o = LweOracle::from_key(&key);
        for b in 0..2u8 {
            for x in 0..4u32 {
                let brute: Vec<u64> = (0..o.images()).filter(|&y| o.member(b, x, y)).collect();
                assert_eq!(brute.len(), 27);
                assert_eq!(key.support(b, x).unwrap(), brute);
                for y in (0..o.images()).step_by(7) {
                    assert_eq!(key.in_support(b, x, y), o.member(b, x, y));
                }
            }
        }
    }
}

#[test]
fn toy_lwe_decoding_matches_exhaustive_search() {
    let params = EntcfParams::toy_lwe(2, 3, 16, 1);
    for seed in 0..3 {
        let (gkey, gtd) = keypair(Family::G, &params, seed);
        let o = LweOracle::from_key(&gkey);
        for y in 0..o.images() {
            let hits: Vec<(u8, u32)> =
                (0..2u8).flat_map(|b| (0..4u32).map(move |x| (b, x))).filter(|&(b, x)| o.member(b, x, y)).collect();
            assert!(hits.len() <= 1, "injective key with two preimages for {y}");
            let b = gtd.decode_b(y).unwrap();
            assert_eq!(b, hits.first().map(|h| h.0));
            assert_eq!(gtd.decode_x(b, y), hits.first().map(|h| h.1));
        }

        let (fkey, ftd) = keypair(Family::F, &params, seed);
        let o = LweOracle::from_key(&fkey);
        for y in 0..o.images() {
            let x0 = (0..4u32).find(|&x| o.member(0, x, y));
            let x1 = (0..4u32).find(|&x| o.member(1, x, y));
            for d in 0..4u32 {
                let expect = match (x0, x1) {
                    (Some(a), Some(b)) if d != 0 => Some(dot(d, a ^ b)),
                    _ => None,
                };
                assert_eq!(ftd.decode_h(y, d).unwrap(), expect, "seed {seed} y {y} d {d}");
            }
        }
    }
}

#[test]
fn toy_lwe_claw_supports_match_under_shift() {
    let params = EntcfParams::toy_lwe(4, 8, 64, 1);
    let (key, td) = keypair(Family::F, &params, 1);
    let s = td.claw_shift().unwrap();
    for x in 0..16 {
        assert_eq!(key.support(0, x).unwrap(), key.support(1, x ^ s).unwrap());
    }
}

#[test]
fn toy_lwe_rejects_square_matrices() {
    assert!(EntcfParams::toy_lwe(3, 3, 16, 1).validate().is_err());
    assert!(EntcfParams::toy_lwe(2, 3, 16, 4).validate().is_err());
    for w in 1..=6 {
        EntcfParams::toy_lwe_default(w).validate().unwrap();
    }
}

#[test]
fn suite_passes_on_both_backends() {
    for w in 1..=4 {
        let report = entcf::suite::run(&EntcfParams::ideal(w), 3, w as u64).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
    }
    for w in 1..=3 {
        let report = entcf::suite::run(&EntcfParams::toy_lwe_default(w), 2, w as u64).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn key_encoding_round_trips_and_hides_family(seed in any::<u64>(), w in 1usize..=5, lwe in any::<bool>()) {
        let params = if lwe { EntcfParams::toy_lwe_default(w) } else { EntcfParams::ideal(w) };
        let (f, _) = keypair(Family::F, &params, seed);
        let (g, _) = keypair(Family::G, &params, seed);
        prop_assert_eq!(f.to_bytes().len(), g.to_bytes().len());
        for key in [f, g] {
            let bytes = key.to_bytes();
            prop_assert_eq!(PublicKey::from_bytes(&bytes).unwrap(), key.clone());
            prop_assert_eq!(PublicKey::from_hex(&key.to_hex()).unwrap(), key.clone());
            prop_assert!(PublicKey::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn honest_evaluation_passes_chk(seed in any::<u64>(), w in 1usize..=4, family in prop::bool::ANY) {
        let params = EntcfParams::ideal(w);
        let family = if family { Family::F } else { Family::G };
        let (key, _) = keypair(family, &params, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for x in 0..1u32 << w {
            for b in 0..2u8 {
                let y = key.evaluate(b, x, &mut rng).unwrap();
                prop_assert_eq!(chk(&[key.clone()], &[y], &[b], &[x]).unwrap(), 0);
                prop_assert!(key.preimages(y).contains(&(b, x)));
            }
        }
        prop_assert_eq!(key.params().backend, Backend::Ideal);
    }
}
