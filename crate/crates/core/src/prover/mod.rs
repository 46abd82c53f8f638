//! Device-side strategies.
//!
//! A [`Device`] answers the four prompts of a session in order. The honest
//! prover runs on the statevector engine; the adversaries are scripted
//! probes for the soundness gap and never search for a better strategy.

mod adversary;
mod honest;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entcf::{EntcfError, Image, PublicKey};
use crate::protocol::ProtocolKind;

pub use adversary::{BitFlip, ClassicalGuess, WrongBasis};
pub use honest::{HonestProver, SimMode, DEFAULT_FULLSIM_BUDGET};

#[derive(Debug, Error)]
pub enum ProverError {
    #[error("callback `{0}` called out of order")]
    Contract(&'static str),
    #[error("full simulation needs {needed} amplitudes, budget is {budget}")]
    Budget { needed: usize, budget: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid prover parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Entcf(#[from] EntcfError),
    #[error(transparent)]
    Sim(#[from] qsim::QsimError),
}

pub type Result<T> = std::result::Result<T, ProverError>;

/// The four prompts a device answers, in order: keys, then either the
/// preimage prompt or the Hadamard prompt followed by a question.
pub trait Device: Send {
    fn on_keys(&mut self, keys: &[PublicKey], rng: &mut dyn RngCore) -> Result<Vec<Image>>;
    fn on_preimage(&mut self, rng: &mut dyn RngCore) -> Result<(Vec<u8>, Vec<u32>)>;
    fn on_hadamard(&mut self, rng: &mut dyn RngCore) -> Result<Vec<u32>>;
    fn on_question(&mut self, q: u8, rng: &mut dyn RngCore) -> Result<Vec<u8>>;
}

/// Prover selection as given on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProverKind {
    Honest,
    Classical,
    BitFlip(f64),
    WrongBasis,
}

impl ProverKind {
    pub fn build(self, kind: ProtocolKind, n: usize, mode: SimMode) -> Result<Box<dyn Device>> {
        Ok(match self {
            ProverKind::Honest => Box::new(HonestProver::new(kind, n, mode)),
            ProverKind::Classical => Box::new(ClassicalGuess::new(kind, n)),
            ProverKind::BitFlip(p) => Box::new(BitFlip::new(HonestProver::new(kind, n, mode), p)?),
            ProverKind::WrongBasis => Box::new(WrongBasis::new(kind, n, mode)),
        })
    }
}

impl fmt::Display for ProverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProverKind::Honest => write!(f, "honest"),
            ProverKind::Classical => write!(f, "classical"),
            ProverKind::BitFlip(p) => write!(f, "bitflip={p}"),
            ProverKind::WrongBasis => write!(f, "wrongbasis"),
        }
    }
}

impl FromStr for ProverKind {
    type Err = ProverError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "honest" => Ok(ProverKind::Honest),
            "classical" => Ok(ProverKind::Classical),
            "wrongbasis" => Ok(ProverKind::WrongBasis),
            _ => {
                let p = s
                    .strip_prefix("bitflip=")
                    .ok_or_else(|| ProverError::Param(format!("unknown prover `{s}`")))?;
                let p: f64 = p
                    .parse()
                    .map_err(|_| ProverError::Param(format!("bad flip probability `{p}`")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(ProverError::Param(format!("flip probability {p} outside [0, 1]")));
                }
                Ok(ProverKind::BitFlip(p))
            }
        }
    }
}

/// Measurement basis of each logical qubit for question q: `true` means
/// Hadamard. Self-test: q=0 all computational, q=1 all Hadamard, q=2 the
/// first N computational and the rest Hadamard, q=3 the reverse. Dimension
/// test: q=0 computational, q=1 Hadamard.
pub fn question_bases(kind: ProtocolKind, n: usize, q: u8) -> Vec<bool> {
    match kind {
        ProtocolKind::SelfTest => (0..2 * n)
            .map(|i| match q {
                0 => false,
                1 => true,
                2 => i >= n,
                _ => i < n,
            })
            .collect(),
        ProtocolKind::DimTest => vec![q == 1; n],
    }
}
