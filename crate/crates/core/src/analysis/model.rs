//! White-box devices: states classical on the image register and projective
//! measurements for the preimage answer, the d answer and the final answer.

use std::collections::{BTreeMap, BTreeSet};

use qsim::linalg::{self, bits_of, cr, ginibre, identity, kron, random_unitary, zeros};
use qsim::{CVec, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};
use crate::entcf::{dot, gen_keypair, EntcfParams, Image, PublicKey, Trapdoor};
use crate::prover::question_bases;
use crate::protocol::{ProtocolKind, Theta};

/// Largest H_D dimension a builder accepts unless told otherwise.
pub const DEFAULT_MODEL_BUDGET: usize = 1 << 12;
/// Cap on the number of (y, d) labels of one θ.
const LABEL_BUDGET: usize = 1 << 16;

/// Classical label (y, d) of a post-d-measurement block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub y: Vec<Image>,
    pub d: Vec<u32>,
}

/// Projective measurement stored as one isometry Q per nonzero outcome, with
/// projector Q Q†.
#[derive(Debug, Clone)]
pub struct Projective<O> {
    pub outcomes: Vec<(O, Mat)>,
}

impl<O: Clone + Ord> Projective<O> {
    /// Groups the columns of an orthonormal basis by their assigned outcome.
    pub fn from_basis(basis: &Mat, assign: &[O]) -> Self {
        let mut groups: BTreeMap<O, Vec<usize>> = BTreeMap::new();
        for (col, o) in assign.iter().enumerate() {
            groups.entry(o.clone()).or_default().push(col);
        }
        let outcomes = groups
            .into_iter()
            .map(|(o, cols)| {
                let mut q = zeros(basis.nrows(), cols.len());
                for (k, &c) in cols.iter().enumerate() {
                    q.set_column(k, &basis.column(c));
                }
                (o, q)
            })
            .collect();
        Self { outcomes }
    }
}

impl<O> Projective<O> {
    /// For each outcome and classical block c, the columns of Q inside block
    /// c (of size m), with vanishing columns dropped.
    pub fn blocked(&self, classical: usize, m: usize) -> Vec<Vec<Mat>> {
        self.outcomes
            .iter()
            .map(|(_, q)| (0..classical).map(|c| block_columns(q, c, m)).collect())
            .collect()
    }

    pub fn projector(&self, k: usize) -> Mat {
        let q = &self.outcomes[k].1;
        q * q.adjoint()
    }

    /// Largest entry of Σ P − 𝟙, of Q_a†Q_b for a ≠ b and of Q_a†Q_a − 𝟙.
    pub fn defect(&self, dim: usize) -> f64 {
        let mut sum = zeros(dim, dim);
        let mut worst: f64 = 0.0;
        for (a, (_, qa)) in self.outcomes.iter().enumerate() {
            if qa.nrows() != dim {
                return f64::INFINITY;
            }
            sum += qa * qa.adjoint();
            worst = worst.max(linalg::max_abs(&(qa.adjoint() * qa - identity(qa.ncols()))));
            for (_, qb) in &self.outcomes[a + 1..] {
                worst = worst.max(linalg::max_abs(&(qa.adjoint() * qb)));
            }
        }
        worst.max(linalg::max_abs(&(sum - identity(dim))))
    }
}

/// A measurement family that either ignores the classical label or has one
/// measurement per label.
#[derive(Debug, Clone)]
pub enum Family<K: Ord, O> {
    Uniform(Projective<O>),
    PerLabel(BTreeMap<K, Projective<O>>),
}

impl<K: Ord, O> Family<K, O> {
    pub fn at(&self, key: &K) -> Option<&Projective<O>> {
        match self {
            Family::Uniform(p) => Some(p),
            Family::PerLabel(map) => map.get(key),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, Family::Uniform(_))
    }

    fn all(&self) -> Vec<&Projective<O>> {
        match self {
            Family::Uniform(p) => vec![p],
            Family::PerLabel(map) => map.values().collect(),
        }
    }
}

/// Rows c·m..(c+1)·m of Q, keeping only columns that are nonzero there.
pub fn block_columns(q: &Mat, c: usize, m: usize) -> Mat {
    let rows = q.rows(c * m, m);
    let keep: Vec<usize> = (0..q.ncols()).filter(|&j| rows.column(j).norm_squared() > 0.0).collect();
    Mat::from_fn(m, keep.len(), |r, j| rows[(r, keep[j])])
}

/// H_D = C^before ⊗ (2^width tested qubits) ⊗ C^after, for models whose tested
/// qubits sit in a known place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub before: usize,
    pub after: usize,
}

/// Hilbert-space dimensions (D, Y, R). Y and R may overflow for large
/// parameters and saturate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d: usize,
    pub y: u64,
    pub r: u64,
}

#[derive(Debug, Clone)]
pub struct DeviceModel {
    pub name: String,
    pub kind: ProtocolKind,
    pub n: usize,
    pub params: EntcfParams,
    pub dim: usize,
    /// H_D = C^classical_dim ⊗ H_Q, with every operator block-diagonal in
    /// the first factor.
    pub classical_dim: usize,
    pub layout: Option<Layout>,
    pub trapdoors: BTreeMap<Theta, Vec<Trapdoor>>,
    /// ψ^θ_y = F F†, keyed by θ then by y.
    pub states: BTreeMap<Theta, BTreeMap<Vec<Image>, Mat>>,
    pub preimage: Family<Vec<Image>, (Vec<u8>, Vec<u32>)>,
    pub dmeas: Family<Vec<Image>, Vec<u32>>,
    /// P_q with outcomes u encoded MSB-first (coordinate 1 is the top bit).
    pub questions: Vec<Family<Label, usize>>,
}

impl DeviceModel {
    pub fn width(&self) -> usize {
        match self.kind {
            ProtocolKind::SelfTest => 2 * self.n,
            ProtocolKind::DimTest => self.n,
        }
    }

    pub fn thetas(&self) -> Vec<Theta> {
        Theta::all(self.kind, self.n)
    }

    pub fn dims(&self) -> Dims {
        let width = self.width() as u32;
        Dims {
            d: self.dim,
            y: self.params.image_space_size.saturating_pow(width),
            r: 1u64
                .checked_shl(width * self.params.w as u32)
                .unwrap_or(u64::MAX),
        }
    }

    pub fn keys(&self, theta: Theta) -> Result<Vec<PublicKey>> {
        Ok(self
            .trapdoors
            .get(&theta)
            .ok_or_else(|| AnalysisError::Input(format!("no trapdoors for θ = {}", theta.label())))?
            .iter()
            .map(|t| t.public_key().clone())
            .collect())
    }

    pub fn trapdoors(&self, theta: Theta) -> Result<&[Trapdoor]> {
        self.trapdoors
            .get(&theta)
            .map(Vec::as_slice)
            .ok_or_else(|| AnalysisError::Input(format!("no trapdoors for θ = {}", theta.label())))
    }

    /// Checks the structural invariants: normalized states, projective
    /// families with the right outcome alphabets, classical split respected.
    /// Returns the largest projectivity defect seen.
    pub fn validate(&self, tol: f64) -> Result<f64> {
        let width = self.width();
        if !self.dim.is_multiple_of(self.classical_dim) {
            return Err(AnalysisError::Model("classical split does not divide dim".into()));
        }
        let mut worst: f64 = 0.0;
        for theta in self.thetas() {
            let states = self
                .states
                .get(&theta)
                .ok_or_else(|| AnalysisError::Model(format!("no state for θ = {}", theta.label())))?;
            self.trapdoors(theta)?;
            let total: f64 = states.values().map(|f| f.norm_squared()).sum();
            if (total - 1.0).abs() > tol {
                return Err(AnalysisError::Model(format!(
                    "ψ^{} has trace {total}",
                    theta.label()
                )));
            }
            for (y, f) in states {
                if f.nrows() != self.dim || y.len() != width {
                    return Err(AnalysisError::Model("state block shape".into()));
                }
                if self.preimage.at(y).is_none() || self.dmeas.at(y).is_none() {
                    return Err(AnalysisError::Model(format!("no measurement for y = {y:?}")));
                }
                for (d, _) in &self.dmeas.at(y).unwrap().outcomes {
                    let label = Label {
                        y: y.clone(),
                        d: d.clone(),
                    };
                    if self.questions.iter().any(|p| p.at(&label).is_none()) {
                        return Err(AnalysisError::Model(format!("no P_q for {label:?}")));
                    }
                }
            }
        }
        for p in self.preimage.all() {
            worst = worst.max(p.defect(self.dim));
            if p.outcomes.iter().any(|((b, x), _)| b.len() != width || x.len() != width) {
                return Err(AnalysisError::Model("preimage outcome length".into()));
            }
        }
        for p in self.dmeas.all() {
            worst = worst.max(p.defect(self.dim));
            if p.outcomes.iter().any(|(d, _)| d.len() != width) {
                return Err(AnalysisError::Model("d outcome length".into()));
            }
        }
        for fam in &self.questions {
            for p in fam.all() {
                worst = worst.max(p.defect(self.dim));
                if p.outcomes.iter().any(|(u, _)| *u >> width != 0) {
                    return Err(AnalysisError::Model("question outcome out of range".into()));
                }
            }
        }
        if worst > tol {
            return Err(AnalysisError::Model(format!(
                "measurement is not projective (defect {worst:.3e})"
            )));
        }
        Ok(worst)
    }
}

/// Keys for every θ drawn from one seeded stream, θ in protocol order and
/// coordinates in order within θ.
pub fn generate_trapdoors(
    kind: ProtocolKind,
    n: usize,
    params: &EntcfParams,
    seed: u64,
) -> Result<BTreeMap<Theta, Vec<Trapdoor>>> {
    let width = match kind {
        ProtocolKind::SelfTest => 2 * n,
        ProtocolKind::DimTest => n,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for theta in Theta::all(kind, n) {
        let tds = (0..width)
            .map(|i| Ok(gen_keypair(theta.family(i), params, &mut rng)?.1))
            .collect::<Result<Vec<_>>>()?;
        out.insert(theta, tds);
    }
    Ok(out)
}

/// Product state of qubits, each |u_i⟩ or H|u_i⟩.
pub fn qubit_state(bits: &[u8], hadamard: &[bool]) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = CVec::from_element(1, cr(1.0));
    for (&b, &h) in bits.iter().zip(hadamard) {
        let q = match (h, b) {
            (false, 0) => CVec::from_vec(vec![cr(1.0), cr(0.0)]),
            (false, _) => CVec::from_vec(vec![cr(0.0), cr(1.0)]),
            (true, 0) => CVec::from_vec(vec![cr(s), cr(s)]),
            (true, _) => CVec::from_vec(vec![cr(s), cr(-s)]),
        };
        out = out.kronecker(&q);
    }
    out
}

fn cartesian<T: Clone>(lists: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for list in lists {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                list.iter().map(move |item| {
                    let mut p = prefix.clone();
                    p.push(item.clone());
                    p
                })
            })
            .collect();
    }
    out
}

/// All d tuples, coordinate 1 first.
fn all_d(width: usize, w: usize) -> Vec<Vec<u32>> {
    cartesian(&vec![(0..1u32 << w).collect::<Vec<_>>(); width])
}

/// Honest amplitudes of one coordinate after y is returned: y ↦ vector over
/// (b, x) at index b·2^w + x, squared norm Pr(y).
fn coordinate_amplitudes(key: &PublicKey) -> Result<BTreeMap<Image, Vec<f64>>> {
    let size = key.params().domain_size() as usize;
    let mut out: BTreeMap<Image, Vec<f64>> = BTreeMap::new();
    for b in 0..2u8 {
        for x in 0..size as u32 {
            let supp = key.support(b, x)?;
            let p = 1.0 / (2 * size * supp.len()) as f64;
            for y in supp {
                out.entry(y).or_insert_with(|| vec![0.0; 2 * size])[b as usize * size + x as usize] =
                    p.sqrt();
            }
        }
    }
    Ok(out)
}

/// The honest prover of either protocol as an explicit device. H_D holds the
/// tested qubits followed by the x registers. The controlled-Z layer of the
/// self-test acts on the b qubits only, so it commutes with the x-register
/// measurement and is folded into ψ_y.
pub fn build_honest_model(
    kind: ProtocolKind,
    n: usize,
    params: &EntcfParams,
    keys_seed: u64,
    budget: usize,
) -> Result<DeviceModel> {
    params.validate()?;
    let width = match kind {
        ProtocolKind::SelfTest => 2 * n,
        ProtocolKind::DimTest => n,
    };
    let w = params.w;
    let dim_b = 1usize << width;
    let dim_x = 1usize
        .checked_shl((width * w) as u32)
        .filter(|&d| d <= budget)
        .ok_or(AnalysisError::Budget {
            needed: usize::MAX,
            budget,
        })?;
    let dim = dim_b * dim_x;
    if dim > budget || n == 0 {
        return Err(AnalysisError::Budget {
            needed: dim,
            budget,
        });
    }
    let size = 1usize << w;
    let trapdoors = generate_trapdoors(kind, n, params, keys_seed)?;

    let mut states = BTreeMap::new();
    for (&theta, tds) in &trapdoors {
        let amps = tds
            .iter()
            .map(|t| coordinate_amplitudes(t.public_key()))
            .collect::<Result<Vec<_>>>()?;
        let images: Vec<Vec<Image>> = amps.iter().map(|m| m.keys().copied().collect()).collect();
        let tuples = cartesian(&images);
        if tuples.len() * dim_x > LABEL_BUDGET {
            return Err(AnalysisError::Budget {
                needed: tuples.len() * dim_x,
                budget: LABEL_BUDGET,
            });
        }
        let mut blocks = BTreeMap::new();
        for y in tuples {
            let phis: Vec<&Vec<f64>> = (0..width).map(|i| &amps[i][&y[i]]).collect();
            let f = Mat::from_fn(dim, 1, |idx, _| {
                let bi = idx / dim_x;
                let xi = idx % dim_x;
                let mut a = 1.0;
                let mut sign = 1.0;
                for (i, phi) in phis.iter().enumerate() {
                    let b = (bi >> (width - 1 - i)) & 1;
                    let x = (xi >> (w * (width - 1 - i))) & (size - 1);
                    a *= phi[b * size + x];
                }
                if kind == ProtocolKind::SelfTest {
                    for i in 0..n {
                        let bl = (bi >> (width - 1 - i)) & 1;
                        let bh = (bi >> (width - 1 - (n + i))) & 1;
                        if bl & bh == 1 {
                            sign = -sign;
                        }
                    }
                }
                cr(sign * a)
            });
            if f.norm_squared() > 0.0 {
                blocks.insert(y, f);
            }
        }
        states.insert(theta, blocks);
    }

    // Π: computational-basis readout of (b, x)
    let mut pre = Vec::with_capacity(dim);
    for idx in 0..dim {
        let bi = idx / dim_x;
        let xi = idx % dim_x;
        let b = bits_of(bi, width);
        let x = (0..width)
            .map(|i| ((xi >> (w * (width - 1 - i))) & (size - 1)) as u32)
            .collect();
        let mut q = zeros(dim, 1);
        q[(idx, 0)] = cr(1.0);
        pre.push(((b, x), q));
    }

    // M: Hadamard-basis readout of every x register
    let norm = (dim_x as f64).sqrt().recip();
    let mut dm = Vec::new();
    for d in all_d(width, w) {
        let h = CVec::from_fn(dim_x, |xi, _| {
            let parity: u8 = (0..width)
                .map(|i| dot(d[i], ((xi >> (w * (width - 1 - i))) & (size - 1)) as u32))
                .fold(0, |a, b| a ^ b);
            cr(if parity == 0 { norm } else { -norm })
        });
        let q = kron(&identity(dim_b), &Mat::from_column_slice(dim_x, 1, h.as_slice()));
        dm.push((d, q));
    }

    // P_q: the question's basis on the tested qubits
    let mut questions = Vec::new();
    let count = match kind {
        ProtocolKind::SelfTest => 4,
        ProtocolKind::DimTest => 2,
    };
    for q in 0..count as u8 {
        let bases = question_bases(kind, n, q);
        let outcomes = (0..dim_b)
            .map(|u| {
                let s = qubit_state(&bits_of(u, width), &bases);
                let col = Mat::from_column_slice(dim_b, 1, s.as_slice());
                (u, kron(&col, &identity(dim_x)))
            })
            .collect();
        questions.push(Family::Uniform(Projective { outcomes }));
    }

    Ok(DeviceModel {
        name: "honest".into(),
        kind,
        n,
        params: *params,
        dim,
        classical_dim: 1,
        layout: Some(Layout {
            before: 1,
            after: dim_x,
        }),
        trapdoors,
        states,
        preimage: Family::Uniform(Projective { outcomes: pre }),
        dmeas: Family::Uniform(Projective { outcomes: dm }),
        questions,
    })
}

/// Adds a classical coin register in front of H_D holding the flip pattern
/// c ∈ {0,1}^width with probability p^|c|(1 − p)^(width − |c|); the final
/// answer becomes u ⊕ c. The question families must be uniform.
pub fn with_bit_flip(model: DeviceModel, p: f64) -> Result<DeviceModel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AnalysisError::Input(format!("flip probability {p} outside [0, 1]")));
    }
    let width = model.width();
    let coins = 1usize << width;
    let dim = coins * model.dim;
    let weight = |c: usize| {
        let k = c.count_ones() as i32;
        p.powi(k) * (1.0 - p).powi(width as i32 - k)
    };
    let live: Vec<usize> = (0..coins).filter(|&c| weight(c) > 0.0).collect();

    let states = model
        .states
        .iter()
        .map(|(&theta, blocks)| {
            let blocks = blocks
                .iter()
                .map(|(y, f)| {
                    let mut g = zeros(dim, live.len() * f.ncols());
                    for (k, &c) in live.iter().enumerate() {
                        let e = Mat::from_fn(coins, 1, |i, _| cr(if i == c { 1.0 } else { 0.0 }));
                        g.columns_mut(k * f.ncols(), f.ncols())
                            .copy_from(&(kron(&e, f) * cr(weight(c).sqrt())));
                    }
                    (y.clone(), g)
                })
                .collect();
            (theta, blocks)
        })
        .collect();
    let preimage = lift_family(&model.preimage, coins)?;
    let dmeas = lift_family(&model.dmeas, coins)?;
    let mut questions = Vec::new();
    for fam in &model.questions {
        let Family::Uniform(pq) = fam else {
            return Err(AnalysisError::Model("bit flip needs uniform P_q".into()));
        };
        let by_u: BTreeMap<usize, &Mat> = pq.outcomes.iter().map(|(u, q)| (*u, q)).collect();
        let mut outcomes = Vec::new();
        for u in 0..coins {
            let mut cols: Vec<Mat> = Vec::new();
            for c in 0..coins {
                if let Some(q) = by_u.get(&(u ^ c)) {
                    let e = Mat::from_fn(coins, 1, |i, _| cr(if i == c { 1.0 } else { 0.0 }));
                    cols.push(kron(&e, q));
                }
            }
            let total: usize = cols.iter().map(|m| m.ncols()).sum();
            let mut q = zeros(dim, total);
            let mut at = 0;
            for m in cols {
                q.columns_mut(at, m.ncols()).copy_from(&m);
                at += m.ncols();
            }
            if total > 0 {
                outcomes.push((u, q));
            }
        }
        questions.push(Family::Uniform(Projective { outcomes }));
    }
    Ok(DeviceModel {
        name: format!("bitflip={p}"),
        dim,
        classical_dim: coins * model.classical_dim,
        layout: model.layout.map(|l| Layout {
            before: coins * l.before,
            after: l.after,
        }),
        states,
        preimage,
        dmeas,
        questions,
        ..model
    })
}

fn lift_family<O: Clone>(fam: &Family<Vec<Image>, O>, coins: usize) -> Result<Family<Vec<Image>, O>> {
    match fam {
        Family::Uniform(p) => Ok(Family::Uniform(Projective {
            outcomes: p
                .outcomes
                .iter()
                .map(|(o, q)| (o.clone(), kron(&identity(coins), q)))
                .collect(),
        })),
        Family::PerLabel(_) => Err(AnalysisError::Model("bit flip needs uniform Π and M".into())),
    }
}

/// Exchanges the q = 0 and q = 1 measurements.
pub fn with_wrong_basis(mut model: DeviceModel) -> DeviceModel {
    model.questions.swap(0, 1);
    model.name = "wrongbasis".into();
    model
}

/// Random self-test device on C^dim: every ψ^θ_y a random low-rank operator
/// over the whole image set, every measurement a random orthonormal basis
/// whose vectors get random outcomes. Π and M depend on y and P_q on (y, d).
pub fn build_random_model(n: usize, w: usize, dim: usize, seed: u64) -> Result<DeviceModel> {
    let kind = ProtocolKind::SelfTest;
    let params = EntcfParams::ideal(w);
    let width = 2 * n;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let trapdoors = generate_trapdoors(kind, n, &params, rng.random())?;
    let images: Vec<Image> = (0..params.image_space_size).collect();
    let tuples = cartesian(&vec![images; width]);
    let ds = all_d(width, w);
    if tuples.len() * ds.len() > LABEL_BUDGET || dim > DEFAULT_MODEL_BUDGET {
        return Err(AnalysisError::Budget {
            needed: tuples.len() * ds.len(),
            budget: LABEL_BUDGET,
        });
    }

    let mut states = BTreeMap::new();
    for theta in Theta::all(kind, n) {
        let weights: Vec<f64> = tuples.iter().map(|_| rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let mut blocks = BTreeMap::new();
        for (y, wgt) in tuples.iter().zip(&weights) {
            let rank = rng.random_range(1..=dim.min(2));
            let g = ginibre(dim, rank, &mut rng);
            let scale = (wgt / total / g.norm_squared()).sqrt();
            blocks.insert(y.clone(), g * cr(scale));
        }
        states.insert(theta, blocks);
    }

    let xs = 1u32 << w;
    let pre_outcomes: Vec<(Vec<u8>, Vec<u32>)> = (0..(2 * xs as usize).pow(width as u32))
        .map(|mut k| {
            let mut b = vec![0u8; width];
            let mut x = vec![0u32; width];
            for i in (0..width).rev() {
                x[i] = (k % xs as usize) as u32;
                k /= xs as usize;
                b[i] = (k % 2) as u8;
                k /= 2;
            }
            (b, x)
        })
        .collect();
    let mut preimage = BTreeMap::new();
    let mut dmeas = BTreeMap::new();
    for y in &tuples {
        let u = random_unitary(dim, &mut rng);
        let assign: Vec<_> = (0..dim)
            .map(|_| pre_outcomes[rng.random_range(0..pre_outcomes.len())].clone())
            .collect();
        preimage.insert(y.clone(), Projective::from_basis(&u, &assign));
        let u = random_unitary(dim, &mut rng);
        let assign: Vec<_> = (0..dim).map(|_| ds[rng.random_range(0..ds.len())].clone()).collect();
        dmeas.insert(y.clone(), Projective::from_basis(&u, &assign));
    }
    let mut questions = Vec::new();
    for _ in 0..4 {
        let mut fam = BTreeMap::new();
        for y in &tuples {
            for d in &ds {
                let u = random_unitary(dim, &mut rng);
                let assign: Vec<usize> = (0..dim).map(|_| rng.random_range(0..1usize << width)).collect();
                fam.insert(
                    Label {
                        y: y.clone(),
                        d: d.clone(),
                    },
                    Projective::from_basis(&u, &assign),
                );
            }
        }
        questions.push(Family::PerLabel(fam));
    }
    Ok(DeviceModel {
        name: format!("random={seed}"),
        kind,
        n,
        params,
        dim,
        classical_dim: 1,
        layout: None,
        trapdoors,
        states,
        preimage: Family::PerLabel(preimage),
        dmeas: Family::PerLabel(dmeas),
        questions,
    })
}

/// A dimension-test device with H_D = C^1: every measurement is a
/// deterministic table. y is sampled like an honest commitment, the preimage
/// answer is the first preimage under the θ = 0 keys, d is all ones and the
/// final answer is that b for q = 0 and all zeros for q = 1.
pub fn build_classical_model(n: usize, params: &EntcfParams, keys_seed: u64) -> Result<DeviceModel> {
    let kind = ProtocolKind::DimTest;
    params.validate()?;
    let trapdoors = generate_trapdoors(kind, n, params, keys_seed)?;
    let one = identity(1);
    let mut states = BTreeMap::new();
    let mut seen: BTreeSet<Vec<Image>> = BTreeSet::new();
    for (&theta, tds) in &trapdoors {
        let amps = tds
            .iter()
            .map(|t| coordinate_amplitudes(t.public_key()))
            .collect::<Result<Vec<_>>>()?;
        let probs: Vec<BTreeMap<Image, f64>> = amps
            .iter()
            .map(|m| m.iter().map(|(&y, a)| (y, a.iter().map(|v| v * v).sum())).collect())
            .collect();
        let images: Vec<Vec<Image>> = probs.iter().map(|m| m.keys().copied().collect()).collect();
        let mut blocks = BTreeMap::new();
        for y in cartesian(&images) {
            let p: f64 = (0..n).map(|i| probs[i][&y[i]]).product();
            blocks.insert(y.clone(), Mat::from_element(1, 1, cr(p.sqrt())));
            seen.insert(y);
        }
        states.insert(theta, blocks);
    }
    let reference = &trapdoors[&Theta::Zero];
    let table = |y: &Vec<Image>| -> (Vec<u8>, Vec<u32>) {
        (0..n)
            .map(|i| {
                reference[i]
                    .public_key()
                    .preimages(y[i])
                    .first()
                    .copied()
                    .unwrap_or((0, 0))
            })
            .unzip()
    };
    let ones = vec![1u32; n];
    let mut preimage = BTreeMap::new();
    let mut dmeas = BTreeMap::new();
    let mut p0 = BTreeMap::new();
    let mut p1 = BTreeMap::new();
    for y in &seen {
        let (b, x) = table(y);
        preimage.insert(
            y.clone(),
            Projective {
                outcomes: vec![((b.clone(), x), one.clone())],
            },
        );
        dmeas.insert(
            y.clone(),
            Projective {
                outcomes: vec![(ones.clone(), one.clone())],
            },
        );
        let label = Label {
            y: y.clone(),
            d: ones.clone(),
        };
        let u0 = b.iter().fold(0usize, |acc, &bit| (acc << 1) | bit as usize);
        p0.insert(
            label.clone(),
            Projective {
                outcomes: vec![(u0, one.clone())],
            },
        );
        p1.insert(
            label,
            Projective {
                outcomes: vec![(0usize, one.clone())],
            },
        );
    }
    Ok(DeviceModel {
        name: "classical".into(),
        kind,
        n,
        params: *params,
        dim: 1,
        classical_dim: 1,
        layout: None,
        trapdoors,
        states,
        preimage: Family::PerLabel(preimage),
        dmeas: Family::PerLabel(dmeas),
        questions: vec![Family::PerLabel(p0), Family::PerLabel(p1)],
    })
}

/// Amplitude vector of the target state τ^{θ,v} on the tested qubits.
pub fn tau_vector(kind: ProtocolKind, n: usize, theta: Theta, v: &[u8]) -> CVec {
    let width = v.len();
    match theta {
        Theta::Zero => qubit_state(v, &vec![false; width]),
        Theta::Coord(t) => {
            let bases: Vec<bool> = (0..width).map(|i| i == t - 1).collect();
            qubit_state(v, &bases)
        }
        Theta::Diamond => {
            debug_assert_eq!(kind, ProtocolKind::SelfTest);
            // N pairs (i, N+i), each (|0+⟩ + |1−⟩)/√2 shifted by X^{v_i} ⊗ X^{v_{N+i}}
            CVec::from_fn(1 << width, |idx, _| {
                let bit = |i: usize| ((idx >> (width - 1 - i)) & 1) as u8;
                let mut amp = 1.0;
                for i in 0..n {
                    let a = bit(i) ^ v[i];
                    let b = bit(n + i) ^ v[n + i];
                    amp *= if a & b == 1 { -0.5 } else { 0.5 };
                }
                cr(amp)
            })
        }
    }
}
