//! Post-d-measurement blocks σ^θ_{y,d} and their grouping into σ^{θ,v}.

use std::collections::BTreeMap;

use qsim::{CqOperator, Mat};
use rayon::prelude::*;

use super::model::{DeviceModel, Label};
use super::Result;
use crate::protocol::{sigma_membership, v_star, Decoded, Theta};

/// Blocks below this squared Frobenius norm are dropped.
const ZERO_BLOCK: f64 = 1e-28;

#[derive(Debug, Clone)]
pub struct SigmaBlock {
    /// G with σ^θ_{y,d} = G G†.
    pub factor: Mat,
    /// The rows of G in each classical block c of H_D, nonzero ones only.
    pub pieces: Vec<(usize, Mat)>,
    pub decoded: Decoded,
    /// The v with (y, d) ∈ Σ(θ, v), if any.
    pub v: Option<Vec<u8>>,
    /// Every coordinate of y lies in the range of its key.
    pub valid_y: bool,
}

impl SigmaBlock {
    pub fn trace(&self) -> f64 {
        self.factor.norm_squared()
    }

    pub fn density(&self) -> Mat {
        &self.factor * self.factor.adjoint()
    }
}

/// σ^θ split into labelled blocks.
#[derive(Debug, Clone)]
pub struct SigmaSet {
    pub theta: Theta,
    pub blocks: BTreeMap<Label, SigmaBlock>,
}

impl SigmaSet {
    /// Labels of σ^{θ,v} for every v with a nonzero block.
    pub fn by_v(&self) -> BTreeMap<Vec<u8>, Vec<&Label>> {
        let mut out: BTreeMap<Vec<u8>, Vec<&Label>> = BTreeMap::new();
        for (label, block) in &self.blocks {
            if let Some(v) = &block.v {
                out.entry(v.clone()).or_default().push(label);
            }
        }
        out
    }

    /// Tr σ^{θ,v} for every v with a nonzero block.
    pub fn traces(&self) -> BTreeMap<Vec<u8>, f64> {
        let mut out: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for block in self.blocks.values() {
            if let Some(v) = &block.v {
                *out.entry(v.clone()).or_insert(0.0) += block.trace();
            }
        }
        out
    }

    /// Σ_v Tr σ^{θ,v}.
    pub fn covered_trace(&self) -> f64 {
        self.blocks
            .values()
            .filter(|b| b.v.is_some())
            .map(SigmaBlock::trace)
            .sum()
    }

    pub fn total_trace(&self) -> f64 {
        self.blocks.values().map(SigmaBlock::trace).sum()
    }

    /// σ^{θ,v} as an explicit CQ operator.
    pub fn cq(&self, v: &[u8], dim: usize) -> Result<CqOperator<Label>> {
        let mut out = CqOperator::new(dim);
        for (label, block) in &self.blocks {
            if block.v.as_deref() == Some(v) {
                out.insert(label.clone(), block.density())?;
            }
        }
        Ok(out)
    }

    /// Blocks of σ^θ that lie in no Σ(θ, v).
    pub fn residual(&self) -> impl Iterator<Item = (&Label, &SigmaBlock)> {
        self.blocks.iter().filter(|(_, b)| b.v.is_none())
    }
}

fn nonzero_columns(g: Mat) -> Mat {
    let keep: Vec<usize> = (0..g.ncols())
        .filter(|&j| g.column(j).norm_squared() > ZERO_BLOCK)
        .collect();
    Mat::from_fn(g.nrows(), keep.len(), |r, j| g[(r, keep[j])])
}

/// σ^θ_{y,d} = M^d_y ψ^θ_y M^d_y for every label, each tagged with its v.
pub fn sigma_theta(model: &DeviceModel, theta: Theta) -> Result<SigmaSet> {
    let trapdoors = model.trapdoors(theta)?;
    let states = model.states.get(&theta).ok_or_else(|| {
        super::AnalysisError::Model(format!("no state for θ = {}", theta.label()))
    })?;
    let entries: Vec<(&Vec<u64>, &Mat)> = states.iter().collect();
    let block_dim = model.dim / model.classical_dim;
    let per_y = entries
        .par_iter()
        .map(|(y, f)| -> Result<Vec<(Label, SigmaBlock)>> {
            let m = model
                .dmeas
                .at(y)
                .ok_or_else(|| super::AnalysisError::Model(format!("no M for y = {y:?}")))?;
            let mut out = Vec::new();
            for (d, q) in &m.outcomes {
                let g = q * (q.adjoint() * *f);
                if g.norm_squared() <= ZERO_BLOCK {
                    continue;
                }
                let decoded = Decoded::new(trapdoors, y, Some(d))?;
                let v = v_star(model.kind, model.n, theta, &decoded);
                debug_assert!(v
                    .as_ref()
                    .is_none_or(|v| sigma_membership(model.kind, model.n, theta, v, &decoded)));
                let pieces = (0..model.classical_dim)
                    .map(|c| (c, nonzero_columns(g.rows(c * block_dim, block_dim).into_owned())))
                    .filter(|(_, p)| p.ncols() > 0)
                    .collect();
                out.push((
                    Label {
                        y: (*y).clone(),
                        d: d.clone(),
                    },
                    SigmaBlock {
                        factor: g,
                        pieces,
                        valid_y: decoded.all_valid(),
                        decoded,
                        v,
                    },
                ));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SigmaSet {
        theta,
        blocks: per_y.into_iter().flatten().collect(),
    })
}

/// σ^{θ,v} for every v with a nonzero block, as CQ operators over (y, d).
pub fn sigma_theta_v(model: &DeviceModel, theta: Theta) -> Result<BTreeMap<Vec<u8>, CqOperator<Label>>> {
    let set = sigma_theta(model, theta)?;
    set.by_v()
        .into_keys()
        .map(|v| Ok((v.clone(), set.cq(&v, model.dim)?)))
        .collect()
}
