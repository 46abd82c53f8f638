//! Function-pair families for the protocol's cryptographic layer.
//!
//! A key names a pair (f_{k,0}, f_{k,1}) from one of two families:
//! claw-free pairs (`Family::F`), where both functions have the same range
//! and collide along a secret perfect matching, and injective pairs
//! (`Family::G`), whose ranges are disjoint. The verifier holds a trapdoor and
//! uses the decoding maps `decode_b`, `decode_x` and `decode_h`; `chk` needs
//! only the public key.
//!
//! Two backends exist. `Ideal` stores explicit truth tables (public, so the
//! families are trivially distinguishable; use it for functional tests).
//! `ToyLwe` evaluates y = A·x + b·u + e over Z_q with bounded uniform noise
//! and decodes by exhaustive search over the preimage set.

mod ideal;
pub mod suite;
mod toylwe;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use toylwe::LweDims;

pub const KEY_ENCODING_VERSION: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EntcfError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("preimage {0} outside the domain")]
    Domain(u32),
    #[error("operation needs a {expected:?} trapdoor")]
    Family { expected: Family },
    #[error("tuple lengths differ")]
    Length,
    #[error("malformed key encoding: {0}")]
    Encoding(String),
}

pub type Result<T> = std::result::Result<T, EntcfError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    F,
    G,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backend {
    Ideal,
    ToyLwe,
}

/// Element of the image set 𝒴. Ideal images are table entries; ToyLwe images
/// pack a vector of Z_q^m as base-q digits, first coordinate most significant.
pub type Image = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntcfParams {
    pub backend: Backend,
    /// Preimages are w-bit strings.
    pub w: usize,
    /// Size of 𝒴 for the Ideal backend.
    pub image_space_size: u64,
    pub lwe: Option<LweDims>,
}

impl EntcfParams {
    /// Ideal backend with 𝒴 = {0,1}^(w+1).
    pub fn ideal(w: usize) -> Self {
        Self::ideal_with_slack(w, 0)
    }

    /// Ideal backend with `slack` extra images that no key ever hits.
    pub fn ideal_with_slack(w: usize, slack: u64) -> Self {
        Self {
            backend: Backend::Ideal,
            w,
            image_space_size: (1u64 << (w + 1)) + slack,
            lwe: None,
        }
    }

    /// ToyLwe over Z_q with binary preimages of length n (so w = n).
    pub fn toy_lwe(n: usize, m: usize, q: u32, bound: u32) -> Self {
        let dims = LweDims { n, m, q, bound };
        Self {
            backend: Backend::ToyLwe,
            w: n,
            image_space_size: (q as u64).checked_pow(m as u32).unwrap_or(u64::MAX),
            lwe: Some(dims),
        }
    }

    /// Smallest toy LWE instance with preimage width `w`: m = max(w + 1, 3),
    /// B = 1 and q = max(2m + 2, 16).
    pub fn toy_lwe_default(w: usize) -> Self {
        let m = (w + 1).max(3);
        let q = (2 * m as u32 + 2).max(16);
        Self::toy_lwe(w, m, q, 1)
    }

    pub fn domain_size(&self) -> u32 {
        1u32 << self.w
    }

    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.w > 16 {
            return Err(EntcfError::Params(format!("w = {} outside 1..=16", self.w)));
        }
        match self.backend {
            Backend::Ideal => {
                if self.lwe.is_some() {
                    return Err(EntcfError::Params("Ideal params carry LWE dims".into()));
                }
                if self.image_space_size < 1u64 << (self.w + 1) {
                    return Err(EntcfError::Params(format!(
                        "image space {} smaller than 2^(w+1)",
                        self.image_space_size
                    )));
                }
                Ok(())
            }
            Backend::ToyLwe => {
                let dims = self
                    .lwe
                    .ok_or_else(|| EntcfError::Params("ToyLwe params need LWE dims".into()))?;
                if dims.n != self.w {
                    return Err(EntcfError::Params("ToyLwe needs w = n".into()));
                }
                dims.validate()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
enum KeyBody {
    Ideal { f0: Vec<Image>, f1: Vec<Image> },
    ToyLwe { a: Vec<u32>, u: Vec<u32> },
}

/// Public description of a function pair. The encoding does not reveal the family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    params: EntcfParams,
    body: KeyBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
enum TrapdoorBody {
    Ideal { shift: Option<u32> },
    ToyLwe { secret: Option<u32> },
}

/// Secret decoding information. Carries a copy of its public key so the
/// decoding maps can search supports; it never goes on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trapdoor {
    family: Family,
    key: PublicKey,
    body: TrapdoorBody,
    /// image → list of (b, x) with y in Supp(f_{k,b}(x)), Ideal backend only
    #[serde(skip)]
    inverse: std::collections::HashMap<Image, Vec<(u8, u32)>>,
}

/// Key generation for either family, deterministic given the RNG state.
pub fn gen_keypair<R: Rng + ?Sized>(
    family: Family,
    params: &EntcfParams,
    rng: &mut R,
) -> Result<(PublicKey, Trapdoor)> {
    params.validate()?;
    let (body, tbody) = match params.backend {
        Backend::Ideal => ideal::generate(family, params, rng),
        Backend::ToyLwe => toylwe::generate(family, params.lwe.expect("validated"), rng),
    };
    let key = PublicKey {
        params: *params,
        body,
    };
    let trapdoor = Trapdoor::new(family, key.clone(), tbody);
    Ok((key, trapdoor))
}

impl PublicKey {
    pub fn params(&self) -> &EntcfParams {
        &self.params
    }

    fn check_x(&self, x: u32) -> Result<()> {
        if x >= self.params.domain_size() {
            Err(EntcfError::Domain(x))
        } else {
            Ok(())
        }
    }

    /// Supp(f_{k,b}(x)), sorted. A singleton for the Ideal backend.
    pub fn support(&self, b: u8, x: u32) -> Result<Vec<Image>> {
        self.check_x(x)?;
        Ok(match &self.body {
            KeyBody::Ideal { f0, f1 } => vec![if b == 0 { f0[x as usize] } else { f1[x as usize] }],
            KeyBody::ToyLwe { a, u } => {
                toylwe::support(self.params.lwe.expect("validated"), a, u, b, x)
            }
        })
    }

    /// y ∈ Supp(f_{k,b}(x)).
    pub fn in_support(&self, b: u8, x: u32, y: Image) -> bool {
        if x >= self.params.domain_size() {
            return false;
        }
        match &self.body {
            KeyBody::Ideal { f0, f1 } => (if b == 0 { f0 } else { f1 })[x as usize] == y,
            KeyBody::ToyLwe { a, u } => {
                toylwe::in_support(self.params.lwe.expect("validated"), a, u, b, x, y)
            }
        }
    }

    /// Sample from f_{k,b}(x).
    pub fn evaluate<R: Rng + ?Sized>(&self, b: u8, x: u32, rng: &mut R) -> Result<Image> {
        self.check_x(x)?;
        Ok(match &self.body {
            KeyBody::Ideal { .. } => self.support(b, x)?[0],
            KeyBody::ToyLwe { a, u } => {
                toylwe::sample(self.params.lwe.expect("validated"), a, u, b, x, rng)
            }
        })
    }

    /// All (b, x) whose support contains y (brute force over the domain).
    pub fn preimages(&self, y: Image) -> Vec<(u8, u32)> {
        let mut out = Vec::new();
        for b in 0..2u8 {
            for x in 0..self.params.domain_size() {
                if self.in_support(b, x, y) {
                    out.push((b, x));
                }
            }
        }
        out
    }

    /// Canonical bytes: version, params block, payload block.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = vec![KEY_ENCODING_VERSION];
        out.push(match p.backend {
            Backend::Ideal => 0,
            Backend::ToyLwe => 1,
        });
        out.push(p.w as u8);
        out.extend_from_slice(&p.image_space_size.to_be_bytes());
        let dims = p.lwe.unwrap_or(LweDims {
            n: 0,
            m: 0,
            q: 0,
            bound: 0,
        });
        out.extend_from_slice(&(dims.n as u16).to_be_bytes());
        out.extend_from_slice(&(dims.m as u16).to_be_bytes());
        out.extend_from_slice(&dims.q.to_be_bytes());
        out.extend_from_slice(&dims.bound.to_be_bytes());
        match &self.body {
            KeyBody::Ideal { f0, f1 } => {
                for y in f0.iter().chain(f1) {
                    out.extend_from_slice(&y.to_be_bytes());
                }
            }
            KeyBody::ToyLwe { a, u } => {
                for v in a.iter().chain(u) {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| EntcfError::Encoding(m.to_string());
        const HEADER: usize = 1 + 1 + 1 + 8 + 2 + 2 + 4 + 4;
        if bytes.len() < HEADER {
            return Err(bad("truncated header"));
        }
        if bytes[0] != KEY_ENCODING_VERSION {
            return Err(bad("unknown version"));
        }
        let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]) as usize;
        let u32_at = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        let w = bytes[2] as usize;
        let image_space_size = u64::from_be_bytes(bytes[3..11].try_into().unwrap());
        let (n, m, q, bound) = (u16_at(11), u16_at(13), u32_at(15), u32_at(19));
        let payload = &bytes[HEADER..];
        let (params, body) = match bytes[1] {
            0 => {
                let params = EntcfParams {
                    backend: Backend::Ideal,
                    w,
                    image_space_size,
                    lwe: None,
                };
                params.validate()?;
                let count = 1usize << w;
                if payload.len() != 2 * count * 8 {
                    return Err(bad("payload length"));
                }
                let vals: Vec<Image> = payload
                    .chunks_exact(8)
                    .map(|c| u64::from_be_bytes(c.try_into().unwrap()))
                    .collect();
                if vals.iter().any(|&y| y >= image_space_size) {
                    return Err(bad("image outside the image space"));
                }
                let f1 = vals[count..].to_vec();
                let f0 = vals[..count].to_vec();
                (params, KeyBody::Ideal { f0, f1 })
            }
            1 => {
                let params = EntcfParams::toy_lwe(n, m, q, bound);
                if params.w != w || params.image_space_size != image_space_size {
                    return Err(bad("inconsistent params block"));
                }
                params.validate()?;
                if payload.len() != (m * n + m) * 4 {
                    return Err(bad("payload length"));
                }
                let vals: Vec<u32> = payload
                    .chunks_exact(4)
                    .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
                    .collect();
                if vals.iter().any(|&v| v >= q) {
                    return Err(bad("entry outside Z_q"));
                }
                let u = vals[m * n..].to_vec();
                let a = vals[..m * n].to_vec();
                (params, KeyBody::ToyLwe { a, u })
            }
            _ => return Err(bad("unknown backend")),
        };
        Ok(Self { params, body })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| EntcfError::Encoding(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

impl Trapdoor {
    fn new(family: Family, key: PublicKey, body: TrapdoorBody) -> Self {
        let mut inverse: std::collections::HashMap<Image, Vec<(u8, u32)>> = Default::default();
        if let KeyBody::Ideal { f0, f1 } = &key.body {
            for (b, table) in [(0u8, f0), (1u8, f1)] {
                for (x, &y) in table.iter().enumerate() {
                    inverse.entry(y).or_default().push((b, x as u32));
                }
            }
        }
        Self {
            family,
            key,
            body,
            inverse,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.key
    }

    /// Claw shift s with x̂₁ = x̂₀ ⊕ s (F keys).
    pub fn claw_shift(&self) -> Option<u32> {
        match self.body {
            TrapdoorBody::Ideal { shift } => shift,
            TrapdoorBody::ToyLwe { secret } => secret,
        }
    }

    /// Every (b, x) with y ∈ Supp(f_{k,b}(x)), ordered by (b, x).
    fn inverse(&self, y: Image) -> Vec<(u8, u32)> {
        match self.key.body {
            KeyBody::Ideal { .. } => {
                let mut v = self.inverse.get(&y).cloned().unwrap_or_default();
                v.sort_unstable();
                v
            }
            KeyBody::ToyLwe { .. } => self.key.preimages(y),
        }
    }

    /// b̂(k, y) for injective keys: which range y lies in, or ⊥.
    pub fn decode_b(&self, y: Image) -> Result<Option<u8>> {
        if self.family != Family::G {
            return Err(EntcfError::Family { expected: Family::G });
        }
        Ok(self.inverse(y).first().map(|&(b, _)| b))
    }

    /// x̂(b, k, y): the x with y ∈ Supp(f_{k,b}(x)), or ⊥.
    pub fn decode_x(&self, b: Option<u8>, y: Image) -> Option<u32> {
        let b = b?;
        self.inverse(y)
            .into_iter()
            .find(|&(bb, _)| bb == b)
            .map(|(_, x)| x)
    }

    /// ĥ(k, y, d) = d·(x̂₀ ⊕ x̂₁) for claw-free keys; ⊥ for d = 0 or y off range.
    pub fn decode_h(&self, y: Image, d: u32) -> Result<Option<u8>> {
        if self.family != Family::F {
            return Err(EntcfError::Family { expected: Family::F });
        }
        if d == 0 {
            return Ok(None);
        }
        let x0 = self.decode_x(Some(0), y);
        let x1 = self.decode_x(Some(1), y);
        Ok(match (x0, x1) {
            (Some(x0), Some(x1)) => Some(((d & (x0 ^ x1)).count_ones() % 2) as u8),
            _ => None,
        })
    }

    /// Claw (x̂₀, x̂₁) for an in-range y under an F key.
    pub fn claw(&self, y: Image) -> Option<(u32, u32)> {
        Some((self.decode_x(Some(0), y)?, self.decode_x(Some(1), y)?))
    }
}

/// CHK: 0 iff y_i ∈ Supp(f_{k_i,b_i}(x_i)) for every i.
pub fn chk(keys: &[PublicKey], y: &[Image], b: &[u8], x: &[u32]) -> Result<u8> {
    if keys.is_empty() || y.len() != keys.len() || b.len() != keys.len() || x.len() != keys.len()
    {
        return Err(EntcfError::Length);
    }
    let ok = (0..keys.len()).all(|i| keys[i].in_support(b[i], x[i], y[i]));
    Ok(if ok { 0 } else { 1 })
}

/// Inner product mod 2 of two bit strings.
pub fn dot(a: u32, b: u32) -> u8 {
    ((a & b).count_ones() % 2) as u8
}
