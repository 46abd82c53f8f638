use rand::{Rng, RngCore};

use super::{Device, HonestProver, ProverError, Result, SimMode};
use crate::entcf::{Image, PublicKey};
use crate::protocol::{modp, ProtocolKind};

/// A classical device. It commits to preimages it chose itself, so it can
/// answer every preimage round and every b̂ check, but it cannot know the
/// claw bit ĥ and guesses it uniformly.
#[derive(Debug, Clone)]
pub struct ClassicalGuess {
    kind: ProtocolKind,
    n: usize,
    b: Vec<u8>,
    x: Vec<u32>,
    w: usize,
}

impl ClassicalGuess {
    pub fn new(kind: ProtocolKind, n: usize) -> Self {
        Self {
            kind,
            n,
            b: Vec::new(),
            x: Vec::new(),
            w: 0,
        }
    }
}

impl Device for ClassicalGuess {
    fn on_keys(&mut self, keys: &[PublicKey], rng: &mut dyn RngCore) -> Result<Vec<Image>> {
        if !self.b.is_empty() {
            return Err(ProverError::Contract("on_keys"));
        }
        self.w = keys.first().map(|k| k.params().w).unwrap_or(1);
        let mut y = Vec::with_capacity(keys.len());
        for k in keys {
            let b = rng.random_range(0..2u8);
            let x = rng.random_range(0..k.params().domain_size());
            y.push(k.evaluate(b, x, rng)?);
            self.b.push(b);
            self.x.push(x);
        }
        Ok(y)
    }

    fn on_preimage(&mut self, _rng: &mut dyn RngCore) -> Result<(Vec<u8>, Vec<u32>)> {
        if self.b.is_empty() {
            return Err(ProverError::Contract("on_preimage"));
        }
        Ok((self.b.clone(), self.x.clone()))
    }

    /// Any nonzero d, so every ĥ the verifier computes is defined.
    fn on_hadamard(&mut self, rng: &mut dyn RngCore) -> Result<Vec<u32>> {
        if self.b.is_empty() {
            return Err(ProverError::Contract("on_hadamard"));
        }
        Ok((0..self.b.len())
            .map(|_| rng.random_range(1..1u32 << self.w))
            .collect())
    }

    fn on_question(&mut self, q: u8, rng: &mut dyn RngCore) -> Result<Vec<u8>> {
        if self.b.is_empty() {
            return Err(ProverError::Contract("on_question"));
        }
        let n = self.n;
        let b = &self.b;
        let g: Vec<u8> = (0..b.len()).map(|_| rng.random_range(0..2u8)).collect();
        Ok(match self.kind {
            // an equation position takes guess ⊕ partner bit, a b̂ position its own bit
            ProtocolKind::SelfTest => (0..2 * n)
                .map(|i| {
                    let equation = match q {
                        0 => false,
                        1 => true,
                        2 => i >= n,
                        _ => i < n,
                    };
                    if equation {
                        g[i] ^ b[modp(i, n)]
                    } else {
                        b[i]
                    }
                })
                .collect(),
            ProtocolKind::DimTest => {
                if q == 0 {
                    b.clone()
                } else {
                    g
                }
            }
        })
    }
}

/// Honest device whose final answer has each bit flipped with probability p.
#[derive(Debug, Clone)]
pub struct BitFlip {
    inner: HonestProver,
    p: f64,
}

impl BitFlip {
    pub fn new(inner: HonestProver, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ProverError::Param(format!("flip probability {p} outside [0, 1]")));
        }
        Ok(Self { inner, p })
    }
}

impl Device for BitFlip {
    fn on_keys(&mut self, keys: &[PublicKey], rng: &mut dyn RngCore) -> Result<Vec<Image>> {
        self.inner.on_keys(keys, rng)
    }

    fn on_preimage(&mut self, rng: &mut dyn RngCore) -> Result<(Vec<u8>, Vec<u32>)> {
        self.inner.on_preimage(rng)
    }

    fn on_hadamard(&mut self, rng: &mut dyn RngCore) -> Result<Vec<u32>> {
        self.inner.on_hadamard(rng)
    }

    fn on_question(&mut self, q: u8, rng: &mut dyn RngCore) -> Result<Vec<u8>> {
        let mut v = self.inner.on_question(q, rng)?;
        for bit in &mut v {
            if rng.random_bool(self.p) {
                *bit ^= 1;
            }
        }
        Ok(v)
    }
}

/// Honest device with the q = 0 and q = 1 measurement bases exchanged.
#[derive(Debug, Clone)]
pub struct WrongBasis {
    inner: HonestProver,
}

fn swapped_bases(kind: ProtocolKind, n: usize, q: u8) -> Vec<bool> {
    let q = match q {
        0 => 1,
        1 => 0,
        other => other,
    };
    super::question_bases(kind, n, q)
}

impl WrongBasis {
    pub fn new(kind: ProtocolKind, n: usize, mode: SimMode) -> Self {
        Self {
            inner: HonestProver::new(kind, n, mode).with_bases(swapped_bases),
        }
    }
}

impl Device for WrongBasis {
    fn on_keys(&mut self, keys: &[PublicKey], rng: &mut dyn RngCore) -> Result<Vec<Image>> {
        self.inner.on_keys(keys, rng)
    }

    fn on_preimage(&mut self, rng: &mut dyn RngCore) -> Result<(Vec<u8>, Vec<u32>)> {
        self.inner.on_preimage(rng)
    }

    fn on_hadamard(&mut self, rng: &mut dyn RngCore) -> Result<Vec<u32>> {
        self.inner.on_hadamard(rng)
    }

    fn on_question(&mut self, q: u8, rng: &mut dyn RngCore) -> Result<Vec<u8>> {
        self.inner.on_question(q, rng)
    }
}
