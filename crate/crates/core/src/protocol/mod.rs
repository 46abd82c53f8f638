//! Verifier side of the two protocols.
//!
//! The self-test runs over 2N coordinates, draws θ from [2N] ∪ {0, ⋄} and
//! asks one of four questions in a Hadamard round. The dimension test runs
//! over N coordinates, draws θ from {0, …, N} and asks one of two questions.
//! Both share the message vocabulary defined here and the state machine in
//! [`Verifier`].

mod rules;
mod verifier;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entcf::{EntcfError, EntcfParams, Family, Image, PublicKey};

pub use rules::{
    dimtest_check, dimtest_sigma_membership, dimtest_v_star, modp, selftest_hadamard_check,
    selftest_sigma_membership, selftest_v_star, sigma_membership, v_star, Decoded, Verdict,
};
pub use verifier::{Phase, Verifier};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("message out of sequence in phase {0:?}")]
    OutOfSequence(Phase),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error(transparent)]
    Entcf(#[from] EntcfError),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    SelfTest,
    DimTest,
}

/// Which coordinate, if any, carries the claw-free key. Coordinates are
/// 1-based to match the protocol description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theta {
    Zero,
    Coord(usize),
    Diamond,
}

impl Theta {
    /// Every θ the protocol can draw, in a fixed order: 0, 1, …, then ⋄.
    pub fn all(kind: ProtocolKind, n: usize) -> Vec<Theta> {
        let mut out = vec![Theta::Zero];
        match kind {
            ProtocolKind::SelfTest => {
                out.extend((1..=2 * n).map(Theta::Coord));
                out.push(Theta::Diamond);
            }
            ProtocolKind::DimTest => out.extend((1..=n).map(Theta::Coord)),
        }
        out
    }

    /// Family of the key at 0-based coordinate `i`.
    pub fn family(self, i: usize) -> Family {
        match self {
            Theta::Zero => Family::G,
            Theta::Diamond => Family::F,
            Theta::Coord(t) if t == i + 1 => Family::F,
            Theta::Coord(_) => Family::G,
        }
    }

    pub fn label(self) -> String {
        match self {
            Theta::Zero => "0".into(),
            Theta::Coord(t) => t.to_string(),
            Theta::Diamond => "diamond".into(),
        }
    }

    fn valid_for(self, kind: ProtocolKind, n: usize) -> bool {
        match (self, kind) {
            (Theta::Zero, _) => true,
            (Theta::Coord(t), ProtocolKind::SelfTest) => (1..=2 * n).contains(&t),
            (Theta::Coord(t), ProtocolKind::DimTest) => (1..=n).contains(&t),
            (Theta::Diamond, ProtocolKind::SelfTest) => true,
            (Theta::Diamond, ProtocolKind::DimTest) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundType {
    Preimage,
    Hadamard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    /// Self-test: N EPR pairs on 2N coordinates. Dimension test: N coordinates.
    pub n: usize,
    pub entcf: EntcfParams,
}

impl ProtocolConfig {
    pub fn selftest(n: usize, entcf: EntcfParams) -> Self {
        Self {
            kind: ProtocolKind::SelfTest,
            n,
            entcf,
        }
    }

    pub fn dimtest(n: usize, entcf: EntcfParams) -> Self {
        Self {
            kind: ProtocolKind::DimTest,
            n,
            entcf,
        }
    }

    /// Security parameter tied to the number of pairs, N = λ.
    pub fn selftest_lambda(lambda: usize) -> Self {
        Self::selftest(lambda, EntcfParams::ideal(lambda))
    }

    /// Number of coordinates on the wire.
    pub fn width(&self) -> usize {
        match self.kind {
            ProtocolKind::SelfTest => 2 * self.n,
            ProtocolKind::DimTest => self.n,
        }
    }

    pub fn question_count(&self) -> u8 {
        match self.kind {
            ProtocolKind::SelfTest => 4,
            ProtocolKind::DimTest => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(ProtocolError::Config("N must be at least 1".into()));
        }
        self.entcf.validate()?;
        Ok(())
    }
}

/// Messages exchanged in one session. Keys and images travel as lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProtocolMessage {
    Keys {
        #[serde(with = "hex_keys")]
        keys: Vec<PublicKey>,
    },
    Images {
        #[serde(with = "hex_images")]
        y: Vec<Image>,
    },
    RoundType {
        round: RoundType,
    },
    PreimageAnswer {
        b: Vec<u8>,
        x: Vec<u32>,
    },
    HadamardD {
        d: Vec<u32>,
    },
    Question {
        q: u8,
    },
    FinalAnswer {
        v: Vec<u8>,
    },
    Verdict {
        accept: bool,
        reason: String,
    },
}

impl ProtocolMessage {
    /// Stable type byte used by the wire frame.
    pub fn type_byte(&self) -> u8 {
        match self {
            ProtocolMessage::Keys { .. } => 1,
            ProtocolMessage::Images { .. } => 2,
            ProtocolMessage::RoundType { .. } => 3,
            ProtocolMessage::PreimageAnswer { .. } => 4,
            ProtocolMessage::HadamardD { .. } => 5,
            ProtocolMessage::Question { .. } => 6,
            ProtocolMessage::FinalAnswer { .. } => 7,
            ProtocolMessage::Verdict { .. } => 8,
        }
    }

    /// True for messages the prover sends.
    pub fn from_prover(&self) -> bool {
        matches!(
            self,
            ProtocolMessage::Images { .. }
                | ProtocolMessage::PreimageAnswer { .. }
                | ProtocolMessage::HadamardD { .. }
                | ProtocolMessage::FinalAnswer { .. }
        )
    }
}

mod hex_keys {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::entcf::PublicKey;

    pub fn serialize<S: Serializer>(keys: &[PublicKey], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(keys.iter().map(|k| k.to_hex()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<PublicKey>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|h| {
                if h.chars().any(|c| c.is_ascii_uppercase()) {
                    return Err(D::Error::custom("key hex must be lowercase"));
                }
                PublicKey::from_hex(h).map_err(D::Error::custom)
            })
            .collect()
    }
}

mod hex_images {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::entcf::Image;

    pub fn serialize<S: Serializer>(y: &[Image], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(y.iter().map(|v| format!("{v:016x}")))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Image>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|h| {
                if h.len() != 16 || h.chars().any(|c| !matches!(c, '0'..='9' | 'a'..='f')) {
                    return Err(D::Error::custom(format!("bad image encoding `{h}`")));
                }
                u64::from_str_radix(h, 16).map_err(D::Error::custom)
            })
            .collect()
    }
}
