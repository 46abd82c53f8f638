//! The swap isometry 𝒱 = Σ_u |u⟩ ⊗ X_1^{u_1}⋯X_m^{u_m} Z_1^{(u_1)}⋯Z_m^{(u_m)}
//! and the distances it is used to measure.
//!
//! The ancilla sits in front of H_D, its top bit being coordinate 1.

use std::collections::BTreeMap;

use qsim::linalg::{bits_of, identity, kron, operator_norm, trace_norm_factored, zeros};
use qsim::{CVec, Mat};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{block_columns, tau_vector, DeviceModel, Label};
use super::observables::{LabelObservables, MarginalObservables};
use super::sigma::SigmaSet;
use super::{AnalysisError, Result};
use crate::prover::question_bases;

/// 𝒱 from its defining sum, as a (2^m·dim) × dim matrix.
pub fn swap_matrix(obs: &LabelObservables) -> Mat {
    let m = obs.z.len();
    let dim = obs.z.first().map_or(1, |o| o.matrix().nrows());
    let mut v = zeros((1 << m) * dim, dim);
    for u in 0..1usize << m {
        let bits = bits_of(u, m);
        let mut op = identity(dim);
        for i in (0..m).rev() {
            op = obs.z[i].projector(bits[i]) * op;
        }
        for i in (0..m).rev() {
            if bits[i] == 1 {
                op = obs.x[i].matrix() * op;
            }
        }
        v.rows_mut(u * dim, dim).copy_from(&op);
    }
    v
}

fn ancilla_hadamard(state: &mut CVec, m: usize, i: usize, dim: usize) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bit = 1usize << (m - 1 - i);
    for a in 0..1usize << m {
        if a & bit != 0 {
            continue;
        }
        for k in 0..dim {
            let (p, q) = (a * dim + k, (a | bit) * dim + k);
            let (x, y) = (state[p], state[q]);
            state[p] = (x + y) * s;
            state[q] = (x - y) * s;
        }
    }
}

fn controlled(state: &mut CVec, m: usize, i: usize, dim: usize, op: &Mat) {
    let bit = 1usize << (m - 1 - i);
    for a in (0..1usize << m).filter(|a| a & bit != 0) {
        let block = op * state.rows(a * dim, dim);
        state.rows_mut(a * dim, dim).copy_from(&block);
    }
}

/// The circuit realization: H on the ancilla, controlled-Z_i, H again,
/// then controlled-X_i with X_m applied first so the product reads X_1⋯X_m.
pub fn swap_circuit(obs: &LabelObservables, psi: &CVec) -> CVec {
    let m = obs.z.len();
    let dim = psi.len();
    let mut state = CVec::zeros((1 << m) * dim);
    state.rows_mut(0, dim).copy_from(psi);
    for i in 0..m {
        ancilla_hadamard(&mut state, m, i, dim);
    }
    for i in 0..m {
        controlled(&mut state, m, i, dim, obs.z[i].matrix());
    }
    for i in 0..m {
        ancilla_hadamard(&mut state, m, i, dim);
    }
    for i in (0..m).rev() {
        controlled(&mut state, m, i, dim, obs.x[i].matrix());
    }
    state
}

/// (σ^Z_k ⊗ 𝟙) V for V with 2^m row blocks.
fn ancilla_z(v: &Mat, m: usize, k: usize) -> Mat {
    let dim = v.nrows() >> m;
    let bit = 1usize << (m - 1 - k);
    let mut out = v.clone();
    for a in (0..1usize << m).filter(|a| a & bit != 0) {
        let mut rows = out.rows_mut(a * dim, dim);
        rows.neg_mut();
    }
    out
}

/// (σ^X_k ⊗ 𝟙) V for V with 2^m row blocks.
fn ancilla_x(v: &Mat, m: usize, k: usize) -> Mat {
    let dim = v.nrows() >> m;
    let bit = 1usize << (m - 1 - k);
    let mut out = v.clone();
    for a in 0..1usize << m {
        out.rows_mut(a * dim, dim).copy_from(&v.rows((a ^ bit) * dim, dim));
    }
    out
}

/// A value per label, shared when the observables are label-independent.
pub struct ByLabel<T> {
    uniform: Option<T>,
    per_label: BTreeMap<Label, T>,
}

impl<T: Send> ByLabel<T> {
    pub fn build(
        obs: &MarginalObservables,
        f: impl Fn(Option<&Label>, &LabelObservables) -> Result<T> + Sync,
    ) -> Result<Self> {
        let built = obs
            .entries()
            .par_iter()
            .map(|(l, o)| Ok((l.cloned(), f(*l, o)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self {
            uniform: None,
            per_label: BTreeMap::new(),
        };
        for (l, v) in built {
            match l {
                None => out.uniform = Some(v),
                Some(l) => {
                    out.per_label.insert(l, v);
                }
            }
        }
        Ok(out)
    }

    /// Derives a value per entry of another per-label table.
    pub fn build_keyed<S: Sync>(
        src: &ByLabel<S>,
        f: impl Fn(Option<&Label>, &S) -> Result<T> + Sync,
    ) -> Result<Self> {
        let uniform = src.uniform.as_ref().map(|s| f(None, s)).transpose()?;
        let entries: Vec<(&Label, &S)> = src.per_label.iter().collect();
        let per_label = entries
            .par_iter()
            .map(|(l, s)| Ok(((*l).clone(), f(Some(l), s)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { uniform, per_label })
    }

    pub fn at(&self, label: &Label) -> Result<&T> {
        match &self.uniform {
            Some(v) => Ok(v),
            None => self
                .per_label
                .get(label)
                .ok_or_else(|| AnalysisError::Model(format!("nothing built for {label:?}"))),
        }
    }
}

/// 𝒱 for every label a computation touches.
/// Largest entry 𝒱 may have between different classical blocks.
const BLOCK_TOLERANCE: f64 = 1e-10;

/// 𝒱 for every label, in full and split by the classical blocks of H_D.
pub struct SwapIsometries {
    full: ByLabel<Mat>,
    blocks: ByLabel<Vec<Mat>>,
    /// Dimension of one classical block.
    block_dim: usize,
}

impl SwapIsometries {
    pub fn at(&self, label: &Label) -> Result<&Mat> {
        self.full.at(label)
    }

    /// 𝒱_c: C^m → C^{2^width} ⊗ C^m for each classical value c.
    pub fn blocks_at(&self, label: &Label) -> Result<&[Mat]> {
        self.blocks.at(label).map(Vec::as_slice)
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }
}

/// Splits 𝒱 by classical value, failing if it mixes blocks.
pub fn isometry_blocks(iso: &Mat, classical: usize) -> Result<Vec<Mat>> {
    let dim = iso.ncols();
    let k = iso.nrows() / dim;
    let m = dim / classical;
    (0..classical)
        .map(|c| {
            let mut out = zeros(k * m, m);
            for a in 0..k {
                for r in 0..dim {
                    let row_block = r / m;
                    for col in c * m..(c + 1) * m {
                        let x = iso[(a * dim + r, col)];
                        if row_block == c {
                            out[(a * m + r % m, col - c * m)] = x;
                        } else if x.norm() > BLOCK_TOLERANCE {
                            return Err(AnalysisError::Model(format!(
                                "the swap isometry mixes classical blocks {c} and {row_block}"
                            )));
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect()
}

pub fn swap_isometries(model: &DeviceModel, obs: &MarginalObservables) -> Result<SwapIsometries> {
    let full = ByLabel::build(obs, |_, o| Ok(swap_matrix(o)))?;
    let blocks = ByLabel::build_keyed(&full, |_, v| isometry_blocks(v, model.classical_dim))?;
    Ok(SwapIsometries {
        full,
        blocks,
        block_dim: model.dim / model.classical_dim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapChecks {
    /// max ‖𝒱†𝒱 − 𝟙‖_∞.
    pub isometry_defect: f64,
    /// max_k ‖𝒱†(σ^Z_k ⊗ 𝟙)𝒱 − Z_k‖_∞.
    pub z_conjugation_defect: f64,
    /// max ‖circuit(ψ) − 𝒱ψ‖ over random ψ.
    pub circuit_defect: f64,
    /// Per θ, ‖𝒱†(σ^X_k ⊗ 𝟙)𝒱 − X_k‖_{σ^θ} for each k.
    pub x_conjugation: BTreeMap<String, Vec<f64>>,
    /// Per θ, a width × width table: ‖[Z_i, X_j]‖_{σ^θ} off the diagonal and
    /// ‖{Z_i, X_i}‖_{σ^θ} on it.
    pub commutators: BTreeMap<String, Vec<Vec<f64>>>,
}

/// Operator-level identities, label by label.
pub fn exact_identities(obs: &MarginalObservables, circuit_samples: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut iso: f64 = 0.0;
    let mut zc: f64 = 0.0;
    let mut circ: f64 = 0.0;
    for (_, o) in obs.entries() {
        let v = swap_matrix(o);
        let m = o.z.len();
        let dim = v.ncols();
        iso = iso.max(operator_norm(&(v.adjoint() * &v - identity(dim))));
        for k in 0..m {
            let zv = ancilla_z(&v, m, k);
            zc = zc.max(operator_norm(&(v.adjoint() * zv - o.z[k].matrix())));
        }
        for _ in 0..circuit_samples {
            let psi = qsim::linalg::random_state(dim, &mut rng);
            circ = circ.max((swap_circuit(o, &psi) - &v * &psi).norm());
        }
    }
    (iso, zc, circ)
}

fn diagonal_blocks(op: &Mat, m: usize) -> Vec<Mat> {
    (0..op.nrows() / m)
        .map(|c| op.view((c * m, c * m), (m, m)).into_owned())
        .collect()
}

/// ‖A‖_σ summed over the blocks of σ, with A given by its classical blocks.
fn sigma_norm(sigma: &SigmaSet, op: &ByLabel<Vec<Mat>>) -> Result<f64> {
    let parts = sigma
        .blocks
        .iter()
        .map(|(l, b)| {
            let a = op.at(l)?;
            Ok(b.pieces.iter().map(|(c, g)| (&a[*c] * g).norm_squared()).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum::<f64>().sqrt())
}

pub fn swap_checks(
    obs: &MarginalObservables,
    isos: &SwapIsometries,
    sigmas: &[SigmaSet],
    circuit_samples: usize,
    seed: u64,
) -> Result<SwapChecks> {
    let (isometry_defect, z_conjugation_defect, circuit_defect) = exact_identities(obs, circuit_samples, seed);
    let width = obs.entries().first().map_or(0, |(_, o)| o.z.len());
    let m = isos.block_dim;
    let x_ops = (0..width)
        .map(|k| {
            ByLabel::build(obs, |l, o| {
                let vs = match l {
                    Some(l) => isos.blocks.at(l)?,
                    None => isos
                        .blocks
                        .uniform
                        .as_ref()
                        .ok_or_else(|| AnalysisError::Model("no isometry".into()))?,
                };
                let xs = diagonal_blocks(o.x[k].matrix(), m);
                Ok(vs
                    .iter()
                    .zip(xs)
                    .map(|(v, x)| v.adjoint() * ancilla_x(v, width, k) - x)
                    .collect())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let comm_ops = (0..width * width)
        .map(|ij| {
            let (i, j) = (ij / width, ij % width);
            ByLabel::build(obs, |_, o| {
                let zs = diagonal_blocks(o.z[i].matrix(), m);
                let xs = diagonal_blocks(o.x[j].matrix(), m);
                Ok(zs
                    .iter()
                    .zip(&xs)
                    .map(|(z, x)| if i == j { z * x + x * z } else { z * x - x * z })
                    .collect())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut x_conjugation = BTreeMap::new();
    let mut commutators = BTreeMap::new();
    for sigma in sigmas {
        let xs = x_ops
            .iter()
            .map(|op| sigma_norm(sigma, op))
            .collect::<Result<Vec<_>>>()?;
        x_conjugation.insert(sigma.theta.label(), xs);
        let flat = comm_ops
            .iter()
            .map(|op| sigma_norm(sigma, op))
            .collect::<Result<Vec<_>>>()?;
        commutators.insert(
            sigma.theta.label(),
            flat.chunks(width.max(1)).map(<[f64]>::to_vec).collect(),
        );
    }
    Ok(SwapChecks {
        isometry_defect,
        z_conjugation_defect,
        circuit_defect,
        x_conjugation,
        commutators,
    })
}

/// A with α = A A† = (⟨τ| ⊗ 𝟙) 𝒱 G G† 𝒱† (|τ⟩ ⊗ 𝟙).
pub fn extract_alpha(vg: &Mat, tau: &CVec) -> Mat {
    let dim = vg.nrows() / tau.len();
    let mut a = zeros(dim, vg.ncols());
    for (t, amp) in tau.iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        a += vg.rows(t * dim, dim) * amp.conj();
    }
    a
}

fn column(v: &CVec) -> Mat {
    Mat::from_column_slice(v.len(), 1, v.as_slice())
}

pub(crate) fn bits_label(v: &[u8]) -> String {
    v.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundnessReport {
    pub theta: String,
    /// Σ over labels of ‖𝒱σ𝒱† − τ ⊗ α‖₁, keyed by v.
    pub per_v: BTreeMap<String, f64>,
    pub total: f64,
    /// Tr α^{θ,v}, keyed by v.
    pub alpha_trace: BTreeMap<String, f64>,
    /// Post-measurement totals, one per question q.
    pub measurement_total: Vec<f64>,
}

/// Distances between the extracted state and τ ⊗ α, before and after each
/// question measurement. Classical blocks of H_D have orthogonal images
/// under 𝒱, so each is handled on its own and the norms add.
pub fn soundness_distance(model: &DeviceModel, sigma: &SigmaSet, isos: &SwapIsometries) -> Result<SoundnessReport> {
    let width = model.width();
    let m = isos.block_dim;
    let qcount = model.questions.len();
    let bases: Vec<Vec<bool>> = (0..qcount)
        .map(|q| question_bases(model.kind, model.n, q as u8))
        .collect();
    let covered: Vec<_> = sigma.blocks.iter().filter(|(_, b)| b.v.is_some()).collect();
    let Some((any, _)) = covered.first() else {
        return Ok(SoundnessReport {
            theta: sigma.theta.label(),
            per_v: BTreeMap::new(),
            total: 0.0,
            alpha_trace: BTreeMap::new(),
            measurement_total: vec![0.0; qcount],
        });
    };
    // per (q, outcome, c): (u, Q_u restricted to c, 𝒱_c Q_u restricted to c)
    type Prepared = Vec<Vec<(usize, Vec<(Mat, Mat)>)>>;
    let prepared: ByLabel<Prepared> = ByLabel::build_keyed(&isos.blocks, |label, vs| {
        let label = label.unwrap_or(any);
        model
            .questions
            .iter()
            .enumerate()
            .map(|(q, fam)| {
                let p = fam
                    .at(label)
                    .ok_or_else(|| AnalysisError::Model(format!("no P_{q} for {label:?}")))?;
                Ok(p.outcomes
                    .iter()
                    .map(|(u, qu)| {
                        let per_c = vs
                            .iter()
                            .enumerate()
                            .map(|(c, v)| {
                                let qc = block_columns(qu, c, m);
                                let vq = v * &qc;
                                (qc, vq)
                            })
                            .collect();
                        (*u, per_c)
                    })
                    .collect())
            })
            .collect()
    })?;
    let parts = covered
        .iter()
        .map(|(label, block)| -> Result<(Vec<u8>, f64, f64, Vec<f64>)> {
            let v = block.v.clone().unwrap_or_default();
            let tau = tau_vector(model.kind, model.n, sigma.theta, &v);
            let tau_col = column(&tau);
            let vs = isos.blocks_at(label)?;
            let prep = prepared.at(label)?;
            let mut dist = 0.0;
            let mut alpha = 0.0;
            let mut meas = vec![0.0; qcount];
            for (c, g) in &block.pieces {
                let vg = &vs[*c] * g;
                let a = extract_alpha(&vg, &tau);
                alpha += a.norm_squared();
                dist += trace_norm_factored(&vg, &kron(&tau_col, &a));
                for (q, outcomes) in prep.iter().enumerate() {
                    for (u, per_c) in outcomes {
                        let (qc, vq) = &per_c[*c];
                        let f1 = vq * (qc.adjoint() * g);
                        let basis = super::model::qubit_state(&bits_of(*u, width), &bases[q]);
                        let overlap = basis.dotc(&tau).norm();
                        let f2 = kron(&column(&basis), &a) * qsim::linalg::cr(overlap);
                        meas[q] += trace_norm_factored(&f1, &f2);
                    }
                }
            }
            Ok((v, dist, alpha, meas))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_v = BTreeMap::new();
    let mut alpha_trace = BTreeMap::new();
    let mut measurement_total = vec![0.0; qcount];
    let mut total = 0.0;
    for (v, d, at, meas) in parts {
        let key = bits_label(&v);
        *per_v.entry(key.clone()).or_insert(0.0) += d;
        *alpha_trace.entry(key).or_insert(0.0) += at;
        total += d;
        for (m, x) in measurement_total.iter_mut().zip(meas) {
            *m += x;
        }
    }
    Ok(SoundnessReport {
        theta: sigma.theta.label(),
        per_v,
        total,
        alpha_trace,
        measurement_total,
    })
}
