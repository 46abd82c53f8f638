use std::collections::BTreeSet;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use qsim::linalg::{cr, CVec};
use qsim::{Basis, StateVector};

use super::{question_bases, Device, ProverError, Result};
use crate::entcf::{Backend, Image, PublicKey};
use crate::protocol::ProtocolKind;

/// Amplitude budget for one coordinate's full superposition.
pub const DEFAULT_FULLSIM_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Sample y classically and keep only the post-measurement preimage state.
    Collapsed,
    /// Build Σ_{b,x} |b⟩|x⟩|f_{k,b}(x)⟩ per coordinate and Born-measure y.
    FullSim { budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Fresh,
    Committed,
    Measured,
    Done,
}

/// The honest prover. Each coordinate's state after the image measurement
/// is a vector over (b, x) with index b·2^w + x.
#[derive(Debug, Clone)]
pub struct HonestProver {
    kind: ProtocolKind,
    n: usize,
    mode: SimMode,
    stage: Stage,
    w: usize,
    coords: Vec<CVec>,
    qubits: Option<StateVector>,
    bases_override: Option<fn(ProtocolKind, usize, u8) -> Vec<bool>>,
}

impl HonestProver {
    pub fn new(kind: ProtocolKind, n: usize, mode: SimMode) -> Self {
        Self {
            kind,
            n,
            mode,
            stage: Stage::Fresh,
            w: 0,
            coords: Vec::new(),
            qubits: None,
            bases_override: None,
        }
    }

    /// Same prover measuring with a different basis table (used by WrongBasis).
    pub(crate) fn with_bases(mut self, bases: fn(ProtocolKind, usize, u8) -> Vec<bool>) -> Self {
        self.bases_override = Some(bases);
        self
    }

    /// Post-image-measurement state of coordinate i over (b, x).
    pub fn coordinate_state(&self, i: usize) -> Option<&CVec> {
        self.coords.get(i)
    }

    /// The logical-qubit state after the d-measurement and the CZ layer,
    /// before the question is answered.
    pub fn final_state(&self) -> Option<&StateVector> {
        self.qubits.as_ref()
    }

    fn width(&self) -> usize {
        match self.kind {
            ProtocolKind::SelfTest => 2 * self.n,
            ProtocolKind::DimTest => self.n,
        }
    }

    /// Uniform superposition over the preimages of y.
    fn collapsed(&self, key: &PublicKey, y: Image) -> CVec {
        let pre = key.preimages(y);
        let amp = cr(1.0 / (pre.len() as f64).sqrt());
        let mut v = CVec::zeros(2 << self.w);
        for (b, x) in pre {
            v[((b as usize) << self.w) + x as usize] = amp;
        }
        v
    }

    /// Full range superposition, then a Born measurement of the image register.
    fn full_sim(&self, key: &PublicKey, budget: usize, rng: &mut dyn RngCore) -> Result<(Image, CVec)> {
        let dom = 1usize << self.w;
        let images: Vec<Image> = match key.params().backend {
            Backend::Ideal => (0..key.params().image_space_size).collect(),
            Backend::ToyLwe => {
                let mut set = BTreeSet::new();
                for b in 0..2u8 {
                    for x in 0..dom as u32 {
                        set.extend(key.support(b, x)?);
                    }
                }
                set.into_iter().collect()
            }
        };
        let needed = 2 * dom * images.len();
        if needed > budget {
            return Err(ProverError::Budget { needed, budget });
        }
        let mut amps = CVec::zeros(needed);
        let base = 1.0 / ((2 * dom) as f64).sqrt();
        for b in 0..2u8 {
            for x in 0..dom {
                let supp = key.support(b, x as u32)?;
                let a = cr(base / (supp.len() as f64).sqrt());
                for y in supp {
                    let yi = images.binary_search(&y).expect("support inside the register");
                    amps[((b as usize * dom) + x) * images.len() + yi] += a;
                }
            }
        }
        let state = StateVector::new(vec![("b", 2), ("x", dom), ("y", images.len())], amps)?;
        let (yi, post) = state.measure("y", Basis::Computational, rng)?;
        let rest = post.extract("y", yi)?.normalized()?;
        Ok((images[yi], rest.amplitudes().clone()))
    }

    fn bases(&self, q: u8) -> Vec<bool> {
        match self.bases_override {
            Some(f) => f(self.kind, self.n, q),
            None => question_bases(self.kind, self.n, q),
        }
    }
}

/// Index sampled from the Born distribution of `amps`.
fn born_index(amps: &CVec, rng: &mut dyn RngCore) -> usize {
    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, a) in amps.iter().enumerate() {
        let p = a.norm_sqr();
        if p > 0.0 {
            last = i;
            if u < p {
                return i;
            }
            u -= p;
        }
    }
    last
}

impl Device for HonestProver {
    fn on_keys(&mut self, keys: &[PublicKey], rng: &mut dyn RngCore) -> Result<Vec<Image>> {
        if self.stage != Stage::Fresh {
            return Err(ProverError::Contract("on_keys"));
        }
        if keys.len() != self.width() {
            return Err(ProverError::Param(format!("expected {} keys", self.width())));
        }
        self.w = keys[0].params().w;
        if let SimMode::FullSim { .. } = self.mode {
            if keys[0].params().backend == Backend::ToyLwe && keys.len() > 1 {
                return Err(ProverError::Unsupported(
                    "full simulation of ToyLwe keys is limited to one coordinate".into(),
                ));
            }
        }
        let mut ys = Vec::with_capacity(keys.len());
        for key in keys {
            let (y, state) = match self.mode {
                SimMode::Collapsed => {
                    let b = rng.random_range(0..2u8);
                    let x = rng.random_range(0..key.params().domain_size());
                    let y = key.evaluate(b, x, rng)?;
                    (y, self.collapsed(key, y))
                }
                SimMode::FullSim { budget } => self.full_sim(key, budget, rng)?,
            };
            ys.push(y);
            self.coords.push(state);
        }
        self.stage = Stage::Committed;
        Ok(ys)
    }

    fn on_preimage(&mut self, rng: &mut dyn RngCore) -> Result<(Vec<u8>, Vec<u32>)> {
        if self.stage != Stage::Committed {
            return Err(ProverError::Contract("on_preimage"));
        }
        let mask = (1usize << self.w) - 1;
        let (mut b, mut x) = (Vec::new(), Vec::new());
        for c in &self.coords {
            let idx = born_index(c, rng);
            b.push((idx >> self.w) as u8);
            x.push((idx & mask) as u32);
        }
        self.stage = Stage::Done;
        Ok((b, x))
    }

    fn on_hadamard(&mut self, rng: &mut dyn RngCore) -> Result<Vec<u32>> {
        if self.stage != Stage::Committed {
            return Err(ProverError::Contract("on_hadamard"));
        }
        let dom = 1usize << self.w;
        let mut d = Vec::with_capacity(self.coords.len());
        let mut qubits = Vec::with_capacity(self.coords.len());
        for c in &self.coords {
            let mut s = StateVector::new(vec![("b", 2), ("x", dom)], c.clone())?;
            let (di, _) = s.measure("x", Basis::Hadamard, rng)?;
            s.apply_hadamard("x")?;
            let qubit = s.extract("x", di)?.normalized()?;
            d.push(di as u32);
            qubits.push(qubit.amplitudes().clone());
        }
        let mut amps = qubits[0].clone();
        for q in &qubits[1..] {
            amps = amps.kronecker(q);
        }
        let regs: Vec<(String, usize)> = (1..=qubits.len()).map(|i| (format!("q{i}"), 2)).collect();
        let mut state = StateVector::new(regs, amps)?;
        if self.kind == ProtocolKind::SelfTest {
            for i in 0..self.n {
                state = state.controlled_z(i, self.n + i)?;
            }
        }
        self.qubits = Some(state);
        self.stage = Stage::Measured;
        Ok(d)
    }

    fn on_question(&mut self, q: u8, rng: &mut dyn RngCore) -> Result<Vec<u8>> {
        if self.stage != Stage::Measured {
            return Err(ProverError::Contract("on_question"));
        }
        let mut state = self.qubits.clone().expect("set in on_hadamard");
        let mut v = Vec::with_capacity(self.width());
        for (i, hadamard) in self.bases(q).into_iter().enumerate() {
            let basis = if hadamard { Basis::Hadamard } else { Basis::Computational };
            let (bit, post) = state.measure(&format!("q{}", i + 1), basis, rng)?;
            v.push(bit as u8);
            state = post;
        }
        self.stage = Stage::Done;
        Ok(v)
    }
}
