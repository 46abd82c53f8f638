use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EntcfError, Family, Image, KeyBody, Result, TrapdoorBody};

/// Dimensions for the toy LWE backend: A ∈ Z_q^{m×n}, u ∈ Z_q^m, noise in [−B, B]^m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LweDims {
    pub n: usize,
    pub m: usize,
    pub q: u32,
    pub bound: u32,
}

impl LweDims {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EntcfError::Params(m));
        // m = n leaves no room for u outside the span of A, so injective keys cannot exist
        if self.n == 0 || self.n > 16 || self.m <= self.n {
            return bad(format!("need 1 ≤ n ≤ 16 and m > n, got n={} m={}", self.n, self.m));
        }
        if self.q < 4 || !self.q.is_multiple_of(2) || self.q > 1 << 16 {
            return bad(format!("q = {} must be even and in 4..=65536", self.q));
        }
        if 4 * self.bound >= self.q {
            return bad("need q > 4B so shifted supports cannot meet".into());
        }
        if 2 * self.bound as u64 * self.m as u64 >= self.q as u64 {
            return bad("need 2·B·m < q".into());
        }
        let bits = 32 - (self.q - 1).leading_zeros();
        if bits as usize * self.m > 64 {
            return bad("images do not fit in 64 bits".into());
        }
        Ok(())
    }

    pub fn pack(&self, y: &[u32]) -> Image {
        y.iter().fold(0u64, |acc, &c| acc * self.q as u64 + c as u64)
    }

    pub fn unpack(&self, mut y: Image) -> Vec<u32> {
        let mut out = vec![0u32; self.m];
        for slot in out.iter_mut().rev() {
            *slot = (y % self.q as u64) as u32;
            y /= self.q as u64;
        }
        out
    }

    /// Center of f_{k,b}(x): A·x + b·u mod q, x read MSB-first as a vector.
    fn center(&self, a: &[u32], u: &[u32], b: u8, x: u32) -> Vec<u32> {
        (0..self.m)
            .map(|i| {
                let mut acc = if b == 1 { u[i] as u64 } else { 0 };
                for j in 0..self.n {
                    if (x >> (self.n - 1 - j)) & 1 == 1 {
                        acc += a[i * self.n + j] as u64;
                    }
                }
                (acc % self.q as u64) as u32
            })
            .collect()
    }

    /// Centered distance |a − b| in Z_q.
    fn dist(&self, a: u32, b: u32) -> u32 {
        let d = (a + self.q - b) % self.q;
        d.min(self.q - d)
    }
}

fn gf2_columns(dims: LweDims, a: &[u32]) -> Vec<u64> {
    // column j as an m-bit mask; entries are 0 or q/2
    (0..dims.n)
        .map(|j| {
            (0..dims.m).fold(0u64, |acc, i| (acc << 1) | (a[i * dims.n + j] != 0) as u64)
        })
        .collect()
}

fn span_contains(cols: &[u64], target: u64) -> bool {
    (0u32..1 << cols.len()).any(|mask| {
        cols.iter()
            .enumerate()
            .filter(|(j, _)| (mask >> j) & 1 == 1)
            .fold(0u64, |acc, (_, c)| acc ^ c)
            == target
    })
}

fn full_rank(cols: &[u64]) -> bool {
    (1u32..1 << cols.len()).all(|mask| {
        cols.iter()
            .enumerate()
            .filter(|(j, _)| (mask >> j) & 1 == 1)
            .fold(0u64, |acc, (_, c)| acc ^ c)
            != 0
    })
}

/// A has entries in {0, q/2} so that A(x ⊕ s) ≡ A·x + A·s (mod q).
/// F: u = A·s with s ≠ 0. G: u = (q/2)·t with t outside the GF(2) span of A.
pub(super) fn generate<R: Rng + ?Sized>(
    family: Family,
    dims: LweDims,
    rng: &mut R,
) -> (KeyBody, TrapdoorBody) {
    let half = dims.q / 2;
    let a = loop {
        let a: Vec<u32> = (0..dims.m * dims.n)
            .map(|_| if rng.random::<bool>() { half } else { 0 })
            .collect();
        if full_rank(&gf2_columns(dims, &a)) {
            break a;
        }
    };
    match family {
        Family::F => {
            let secret = rng.random_range(1..1u32 << dims.n);
            let u = dims.center(&a, &vec![0; dims.m], 0, secret);
            (
                KeyBody::ToyLwe { a, u },
                TrapdoorBody::ToyLwe { secret: Some(secret) },
            )
        }
        Family::G => {
            let cols = gf2_columns(dims, &a);
            let t = loop {
                let t = rng.random_range(0..1u64 << dims.m);
                if !span_contains(&cols, t) {
                    break t;
                }
            };
            let u = (0..dims.m)
                .map(|i| if (t >> (dims.m - 1 - i)) & 1 == 1 { half } else { 0 })
                .collect();
            (KeyBody::ToyLwe { a, u }, TrapdoorBody::ToyLwe { secret: None })
        }
    }
}

pub(super) fn in_support(dims: LweDims, a: &[u32], u: &[u32], b: u8, x: u32, y: Image) -> bool {
    if y >= (dims.q as u64).pow(dims.m as u32) {
        return false;
    }
    let c = dims.center(a, u, b, x);
    dims.unpack(y)
        .iter()
        .zip(&c)
        .all(|(&yi, &ci)| dims.dist(yi, ci) <= dims.bound)
}

pub(super) fn support(dims: LweDims, a: &[u32], u: &[u32], b: u8, x: u32) -> Vec<Image> {
    let c = dims.center(a, u, b, x);
    let width = 2 * dims.bound + 1;
    let total = (width as usize).pow(dims.m as u32);
    let mut out: Vec<Image> = (0..total)
        .map(|mut k| {
            let y: Vec<u32> = c
                .iter()
                .map(|&ci| {
                    let e = (k % width as usize) as u32;
                    k /= width as usize;
                    (ci + dims.q + e - dims.bound) % dims.q
                })
                .collect();
            dims.pack(&y)
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub(super) fn sample<R: Rng + ?Sized>(
    dims: LweDims,
    a: &[u32],
    u: &[u32],
    b: u8,
    x: u32,
    rng: &mut R,
) -> Image {
    let c = dims.center(a, u, b, x);
    let y: Vec<u32> = c
        .iter()
        .map(|&ci| {
            let e = rng.random_range(0..=2 * dims.bound);
            (ci + dims.q + e - dims.bound) % dims.q
        })
        .collect();
    dims.pack(&y)
}
