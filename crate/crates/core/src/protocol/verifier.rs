use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rules::{dimtest_check, selftest_hadamard_check, Decoded, Verdict};
use super::{
    ProtocolConfig, ProtocolError, ProtocolKind, ProtocolMessage, Result, RoundType, Theta,
};
use crate::entcf::{chk, gen_keypair, Image, PublicKey, Trapdoor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Start,
    AwaitImages,
    AwaitPreimage,
    AwaitD,
    AwaitV,
    Done,
}

/// One session of the verifier. Drive it with [`Verifier::step`]: the first
/// call takes no message and returns the keys; each later call consumes one
/// prover message and returns the next verifier message. The session ends
/// with a `Verdict` message.
#[derive(Debug, Clone)]
pub struct Verifier {
    config: ProtocolConfig,
    forced_theta: Option<Theta>,
    theta: Option<Theta>,
    keys: Vec<PublicKey>,
    trapdoors: Vec<Trapdoor>,
    phase: Phase,
    y: Vec<Image>,
    round: Option<RoundType>,
    d: Vec<u32>,
    q: Option<u8>,
    decoded: Option<Decoded>,
    verdict: Option<Verdict>,
}

impl Verifier {
    pub fn new(config: ProtocolConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            forced_theta: None,
            theta: None,
            keys: Vec::new(),
            trapdoors: Vec::new(),
            phase: Phase::Start,
            y: Vec::new(),
            round: None,
            d: Vec::new(),
            q: None,
            decoded: None,
            verdict: None,
        })
    }

    /// A verifier that skips the θ draw and uses `theta` instead.
    pub fn with_theta(config: ProtocolConfig, theta: Theta) -> Result<Self> {
        if !theta.valid_for(config.kind, config.n) {
            return Err(ProtocolError::Config(format!("θ = {theta:?} not allowed")));
        }
        let mut v = Self::new(config)?;
        v.forced_theta = Some(theta);
        Ok(v)
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn theta(&self) -> Option<Theta> {
        self.theta
    }

    pub fn keys(&self) -> &[PublicKey] {
        &self.keys
    }

    pub fn trapdoors(&self) -> &[Trapdoor] {
        &self.trapdoors
    }

    pub fn round(&self) -> Option<RoundType> {
        self.round
    }

    pub fn question(&self) -> Option<u8> {
        self.q
    }

    pub fn decoded(&self) -> Option<&Decoded> {
        self.decoded.as_ref()
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        self.verdict.as_ref()
    }

    fn draw_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Theta {
        let all = Theta::all(self.config.kind, self.config.n);
        all[rng.random_range(0..all.len())]
    }

    fn finish(&mut self, v: Verdict) -> Option<ProtocolMessage> {
        self.phase = Phase::Done;
        let msg = ProtocolMessage::Verdict {
            accept: v.accept,
            reason: v.reason.clone(),
        };
        self.verdict = Some(v);
        Some(msg)
    }

    /// Ends the session early with a reject (transport failure, timeout).
    pub fn abort(&mut self, reason: &str) -> Option<ProtocolMessage> {
        if self.phase == Phase::Done {
            return None;
        }
        self.finish(Verdict::reject(reason))
    }

    /// Advances the state machine by one message. An unexpected or malformed
    /// message ends the session with a reject verdict ("protocol" or
    /// "malformed"); a message after the verdict is an error.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        incoming: Option<&ProtocolMessage>,
        rng: &mut R,
    ) -> Result<Option<ProtocolMessage>> {
        let width = self.config.width();
        let w = self.config.entcf.w;
        match (self.phase, incoming) {
            (Phase::Done, _) => Err(ProtocolError::OutOfSequence(Phase::Done)),
            (Phase::Start, None) => {
                let theta = match self.forced_theta {
                    Some(t) => t,
                    None => self.draw_theta(rng),
                };
                self.theta = Some(theta);
                for i in 0..width {
                    let (k, t) = gen_keypair(theta.family(i), &self.config.entcf, rng)?;
                    self.keys.push(k);
                    self.trapdoors.push(t);
                }
                self.phase = Phase::AwaitImages;
                Ok(Some(ProtocolMessage::Keys {
                    keys: self.keys.clone(),
                }))
            }
            (Phase::AwaitImages, Some(ProtocolMessage::Images { y })) => {
                if y.len() != width {
                    return Ok(self.finish(Verdict::reject("malformed")));
                }
                self.y = y.clone();
                let round = if rng.random::<bool>() {
                    RoundType::Hadamard
                } else {
                    RoundType::Preimage
                };
                self.round = Some(round);
                self.phase = match round {
                    RoundType::Preimage => Phase::AwaitPreimage,
                    RoundType::Hadamard => Phase::AwaitD,
                };
                Ok(Some(ProtocolMessage::RoundType { round }))
            }
            (Phase::AwaitPreimage, Some(ProtocolMessage::PreimageAnswer { b, x })) => {
                if b.len() != width || x.len() != width || b.iter().any(|&bit| bit > 1) {
                    return Ok(self.finish(Verdict::reject("malformed")));
                }
                let c = chk(&self.keys, &self.y, b, x)?;
                Ok(self.finish(if c == 0 {
                    Verdict::accept("preimage.accept")
                } else {
                    Verdict::reject("preimage.chk")
                }))
            }
            (Phase::AwaitD, Some(ProtocolMessage::HadamardD { d })) => {
                if d.len() != width || d.iter().any(|&di| di >> w != 0) {
                    return Ok(self.finish(Verdict::reject("malformed")));
                }
                self.d = d.clone();
                self.decoded = Some(Decoded::new(&self.trapdoors, &self.y, Some(d))?);
                let q = rng.random_range(0..self.config.question_count());
                self.q = Some(q);
                self.phase = Phase::AwaitV;
                Ok(Some(ProtocolMessage::Question { q }))
            }
            (Phase::AwaitV, Some(ProtocolMessage::FinalAnswer { v })) => {
                if v.len() != width || v.iter().any(|&bit| bit > 1) {
                    return Ok(self.finish(Verdict::reject("malformed")));
                }
                let dec = self.decoded.as_ref().expect("set in AwaitD");
                let theta = self.theta.expect("set in Start");
                let q = self.q.expect("set in AwaitD");
                let n = self.config.n;
                let verdict = match self.config.kind {
                    ProtocolKind::SelfTest => selftest_hadamard_check(n, theta, q, dec, v),
                    ProtocolKind::DimTest => dimtest_check(n, theta, q, dec, v),
                };
                Ok(self.finish(verdict))
            }
            _ => Ok(self.finish(Verdict::reject("protocol"))),
        }
    }
}
