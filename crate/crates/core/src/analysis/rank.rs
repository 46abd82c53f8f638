//! The rank bound Rank(ρ) ≥ (1 − ε)2^n and the dimension certificate built
//! on it.

use qsim::linalg::{
    cr, hermitian_eigen, identity, kron, numerical_rank, operator_norm, psd_sqrt, schmidt_coefficients, trace_norm,
    trace_norm_factored, vec_op, zeros,
};
use qsim::{CVec, Mat};
use serde::{Deserialize, Serialize};

use super::model::{DeviceModel, Label};
use super::observables::MarginalObservables;
use super::sigma::sigma_theta;
use super::swap::{bits_label, extract_alpha, swap_isometries};
use super::{AnalysisError, Result};
use crate::protocol::{ProtocolKind, Theta};

pub const UNITARY_TOLERANCE: f64 = 1e-9;
const SCHMIDT_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    /// ‖U(|0⟩⟨0|^{⊗n} ⊗ ρ)U† − 2^{−n}𝟙 ⊗ α‖₁.
    pub eps: f64,
    pub rank: usize,
    /// (1 − ε)·2^n.
    pub bound: f64,
    pub bound_satisfied: bool,
    /// |⟨α|β⟩|² for the normalized vectorizations.
    pub overlap: f64,
    /// Schmidt rank R of |α⟩ and largest Schmidt coefficient b of |β⟩.
    pub schmidt_rank: usize,
    pub max_schmidt: f64,
    pub overlap_holds: bool,
}

/// |α⟩ = vec(U √(|0⟩⟨0| ⊗ ρ) U†) and |β⟩ = vec(√(2^{−n}𝟙 ⊗ α)), cut between
/// row and column indices.
pub fn rank_bound_check(u: &Mat, rho: &Mat, alpha: &Mat, n: usize) -> Result<RankCheck> {
    let m = rho.nrows();
    let big = (1usize << n) * m;
    if !rho.is_square() || alpha.shape() != (m, m) || u.shape() != (big, big) {
        return Err(AnalysisError::Input(format!(
            "dimension mismatch: U is {:?}, ρ is {:?}, α is {:?}, n = {n}",
            u.shape(),
            rho.shape(),
            alpha.shape()
        )));
    }
    let unitarity = operator_norm(&(u.adjoint() * u - identity(big)));
    if unitarity > UNITARY_TOLERANCE {
        return Err(AnalysisError::Input(format!("U is not unitary: ‖U†U − 1‖ = {unitarity:.3e}")));
    }
    let mut zero = zeros(1 << n, 1 << n);
    zero[(0, 0)] = cr(1.0);
    let lifted = kron(&zero, rho);
    let scale = ((1usize << n) as f64).recip();
    let target = kron(&identity(1 << n), alpha) * cr(scale);
    let eps = trace_norm(&(u * &lifted * u.adjoint() - &target))?;
    let rank = numerical_rank(rho);
    let bound = (1.0 - eps) * (1u64 << n) as f64;

    let a_vec = normalized(vec_op(&(u * psd_sqrt(&lifted) * u.adjoint())));
    let b_vec = normalized(vec_op(&psd_sqrt(&target)));
    let overlap = a_vec.dotc(&b_vec).norm_sqr();
    let sa = schmidt_coefficients(&a_vec, big, big)?;
    let top = sa.first().copied().unwrap_or(0.0);
    let schmidt_rank = sa.iter().filter(|&&s| s > SCHMIDT_CUTOFF * top).count();
    let max_schmidt = schmidt_coefficients(&b_vec, big, big)?
        .first()
        .copied()
        .unwrap_or(0.0);
    Ok(RankCheck {
        eps,
        rank,
        bound,
        bound_satisfied: rank as f64 >= bound - UNITARY_TOLERANCE,
        overlap,
        schmidt_rank,
        max_schmidt,
        overlap_holds: overlap <= schmidt_rank as f64 * max_schmidt * max_schmidt + UNITARY_TOLERANCE,
    })
}

fn normalized(v: CVec) -> CVec {
    let n = v.norm();
    if n > 0.0 {
        v / cr(n)
    } else {
        v
    }
}

/// Completes an isometry V: C^m → C^{k·m} to a unitary U with
/// U(|0⟩ ⊗ ψ) = Vψ, taking the remaining columns from the kernel of V V†.
pub fn unitary_completion(v: &Mat) -> Mat {
    let (rows, m) = v.shape();
    let (vals, vecs) = hermitian_eigen(&(v * v.adjoint()));
    let mut u = zeros(rows, rows);
    u.columns_mut(0, m).copy_from(v);
    let complement: Vec<usize> = (0..rows).filter(|&i| vals[i] < 0.5).collect();
    for (k, &i) in complement.iter().take(rows - m).enumerate() {
        u.set_column(m + k, &vecs.column(i));
    }
    u
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionCertificate {
    pub n: usize,
    /// Number of v with Tr σ^v > 0.
    pub support: usize,
    pub v_min: String,
    /// Normalized distance Σ_labels ‖𝒱ρ^v𝒱† − 2^{−N}𝟙 ⊗ α̃^v‖₁ at v_min.
    pub v_min_distance: f64,
    pub c_star: Label,
    pub c_star_register: usize,
    pub c_star_distance: f64,
    pub rank_check: RankCheck,
    /// (1 − ε)·2^N.
    pub certified: f64,
}

struct Piece {
    label: Label,
    /// ρ = F F† after the q = 1 measurement (unnormalized).
    f: Mat,
    /// The post-d block G.
    g: Mat,
}

/// Lower bound on dim(H_Q) from the θ = 0, q = 1 states of the dimension test.
pub fn dimension_certificate(model: &DeviceModel) -> Result<DimensionCertificate> {
    if model.kind != ProtocolKind::DimTest {
        return Err(AnalysisError::Input("the dimension certificate needs a dimension-test model".into()));
    }
    let n = model.n;
    let k = 1usize << n;
    let scale = (k as f64).recip();
    let sigma = sigma_theta(model, Theta::Zero)?;
    let obs = MarginalObservables::build(model, sigma.blocks.keys())?;
    let isos = swap_isometries(model, &obs)?;
    let groups = sigma.by_v();
    if groups.is_empty() {
        return Err(AnalysisError::Degenerate("no v has Tr σ^v > 0".into()));
    }
    let mut best: Option<(f64, Vec<u8>, Vec<Piece>)> = None;
    for (v, labels) in &groups {
        let tau = v_vector(v);
        let mut pieces = Vec::new();
        let mut total = 0.0;
        for label in labels {
            let g = sigma.blocks[*label].factor.clone();
            total += g.norm_squared();
            let p1 = model.questions[1]
                .at(label)
                .ok_or_else(|| AnalysisError::Model(format!("no P_1 for {label:?}")))?;
            let cols: Vec<Mat> = p1.outcomes.iter().map(|(_, q)| q * (q.adjoint() * &g)).collect();
            pieces.push(Piece {
                label: (*label).clone(),
                f: hstack(&cols, model.dim),
                g,
            });
        }
        let norm = total.sqrt().recip();
        let mut dist = 0.0;
        for p in &pieces {
            let iso = isos.at(&p.label)?;
            let a = extract_alpha(&(iso * &p.g), &tau);
            let pos = iso * &p.f * cr(norm);
            let neg = kron(&identity(k), &a) * cr(norm * scale.sqrt());
            dist += trace_norm_factored(&pos, &neg);
        }
        if best.as_ref().is_none_or(|(d, _, _)| dist < *d) {
            best = Some((dist, v.clone(), pieces));
        }
    }
    let (v_min_distance, v_min, pieces) = best.expect("groups nonempty");
    let tau = v_vector(&v_min);

    let cd = model.classical_dim;
    let m = model.dim / cd;
    let mut star: Option<(f64, Label, usize, Mat, Mat, Mat)> = None;
    for p in &pieces {
        for c in 0..cd {
            let vc = isos.blocks_at(&p.label)?[c].clone();
            let gc = p.g.rows(c * m, m).into_owned();
            let weight = gc.norm_squared();
            if weight <= 1e-24 {
                continue;
            }
            let fc = p.f.rows(c * m, m).into_owned() * cr(weight.sqrt().recip());
            let ac = extract_alpha(&(&vc * &gc), &tau) * cr(weight.sqrt().recip());
            let d = trace_norm_factored(&(&vc * &fc), &(kron(&identity(k), &ac) * cr(scale.sqrt())));
            if star.as_ref().is_none_or(|s| d < s.0) {
                star = Some((d, p.label.clone(), c, vc, fc, ac));
            }
        }
    }
    let (c_star_distance, c_star, c_star_register, vc, fc, ac) =
        star.ok_or_else(|| AnalysisError::Degenerate("every classical block is empty".into()))?;
    let u = unitary_completion(&vc);
    let rho = &fc * fc.adjoint();
    let mut alpha = &ac * ac.adjoint();
    let tr = alpha.trace().re;
    if tr > 0.0 {
        alpha /= cr(tr);
    }
    let rank_check = rank_bound_check(&u, &rho, &alpha, n)?;
    Ok(DimensionCertificate {
        n,
        support: groups.len(),
        v_min: bits_label(&v_min),
        v_min_distance,
        c_star,
        c_star_register,
        c_star_distance,
        certified: rank_check.bound,
        rank_check,
    })
}

fn v_vector(v: &[u8]) -> CVec {
    let idx = v.iter().fold(0usize, |a, &b| (a << 1) | b as usize);
    let mut out = CVec::zeros(1 << v.len());
    out[idx] = cr(1.0);
    out
}

fn hstack(cols: &[Mat], rows: usize) -> Mat {
    let total: usize = cols.iter().map(Mat::ncols).sum();
    let mut out = zeros(rows, total);
    let mut at = 0;
    for c in cols {
        out.columns_mut(at, c.ncols()).copy_from(c);
        at += c.ncols();
    }
    out
}
