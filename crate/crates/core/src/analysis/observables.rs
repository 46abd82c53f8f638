//! Marginal observables read off the question measurements, per label.

use std::collections::BTreeMap;

use qsim::linalg::{self, cr, zeros};
use qsim::{BinaryObservable, Mat};
use serde::{Deserialize, Serialize};

use super::model::{DeviceModel, Family, Label, Projective};
use super::{AnalysisError, Result};
use crate::protocol::ProtocolKind;

/// Σ_u (−1)^{bit(u)} P^u.
fn signed_sum(p: &Projective<usize>, dim: usize, bit: impl Fn(usize) -> u8) -> Result<BinaryObservable> {
    let mut op = zeros(dim, dim);
    for (u, q) in &p.outcomes {
        let proj = q * q.adjoint();
        if bit(*u) == 0 {
            op += proj;
        } else {
            op -= proj;
        }
    }
    BinaryObservable::new(op).map_err(|e| AnalysisError::Model(format!("marginal observable: {e}")))
}

fn bit_at(u: usize, i: usize, width: usize) -> u8 {
    ((u >> (width - 1 - i)) & 1) as u8
}

/// Observables at one label. `zt`/`xt` are empty for the dimension test.
#[derive(Debug, Clone)]
pub struct LabelObservables {
    pub z: Vec<BinaryObservable>,
    pub x: Vec<BinaryObservable>,
    /// Z̃_j for j ≤ N from P₂, Z̃_k for k > N from P₃.
    pub zt: Vec<BinaryObservable>,
    /// X̃_j for j ≤ N from P₃, X̃_k for k > N from P₂.
    pub xt: Vec<BinaryObservable>,
    /// Z̃_i X̃_{N+i} (from P₂) and X̃_i Z̃_{N+i} (from P₃), i ≤ N.
    pub bell_zx: Vec<BinaryObservable>,
    pub bell_xz: Vec<BinaryObservable>,
}

impl LabelObservables {
    fn build(model: &DeviceModel, ps: &[&Projective<usize>]) -> Result<Self> {
        let width = model.width();
        let n = model.n;
        let dim = model.dim;
        let marg = |p: &Projective<usize>, i: usize| signed_sum(p, dim, |u| bit_at(u, i, width));
        let z = (0..width).map(|i| marg(ps[0], i)).collect::<Result<Vec<_>>>()?;
        let x = (0..width).map(|i| marg(ps[1], i)).collect::<Result<Vec<_>>>()?;
        let (mut zt, mut xt, mut bell_zx, mut bell_xz) = (vec![], vec![], vec![], vec![]);
        if model.kind == ProtocolKind::SelfTest {
            for i in 0..width {
                let (zs, xs) = if i < n { (ps[2], ps[3]) } else { (ps[3], ps[2]) };
                zt.push(marg(zs, i)?);
                xt.push(marg(xs, i)?);
            }
            for i in 0..n {
                bell_zx.push(signed_sum(ps[2], dim, |u| {
                    bit_at(u, i, width) ^ bit_at(u, n + i, width)
                })?);
                bell_xz.push(signed_sum(ps[3], dim, |u| {
                    bit_at(u, i, width) ^ bit_at(u, n + i, width)
                })?);
            }
        }
        Ok(Self {
            z,
            x,
            zt,
            xt,
            bell_zx,
            bell_xz,
        })
    }

    /// Largest ‖[A, B]‖_∞ over same-type pairs (Z with Z, X with X).
    pub fn same_type_commutator(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for set in [&self.z, &self.x] {
            for (a, oa) in set.iter().enumerate() {
                for ob in &set[a + 1..] {
                    let (ma, mb) = (oa.matrix(), ob.matrix());
                    worst = worst.max(linalg::operator_norm(&(ma * mb - mb * ma)));
                }
            }
        }
        worst
    }

    /// Largest deviation of Z̃_i X̃_{N+i} (product of the two marginals) from
    /// the parity observable read off the same measurement.
    pub fn bell_product_defect(&self, n: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.bell_zx.len() {
            let zx = self.zt[i].matrix() * self.xt[n + i].matrix();
            let xz = self.xt[i].matrix() * self.zt[n + i].matrix();
            worst = worst
                .max(linalg::max_abs(&(zx - self.bell_zx[i].matrix())))
                .max(linalg::max_abs(&(xz - self.bell_xz[i].matrix())));
        }
        worst
    }
}

/// Marginal observables for every label a computation touches. Models whose
/// question families ignore the label share one entry.
#[derive(Debug, Clone)]
pub struct MarginalObservables {
    uniform: Option<LabelObservables>,
    per_label: BTreeMap<Label, LabelObservables>,
}

impl MarginalObservables {
    pub fn build<'a>(model: &DeviceModel, labels: impl IntoIterator<Item = &'a Label>) -> Result<Self> {
        if model.questions.iter().all(Family::is_uniform) {
            let ps: Vec<&Projective<usize>> = model
                .questions
                .iter()
                .map(|f| match f {
                    Family::Uniform(p) => p,
                    Family::PerLabel(_) => unreachable!(),
                })
                .collect();
            return Ok(Self {
                uniform: Some(LabelObservables::build(model, &ps)?),
                per_label: BTreeMap::new(),
            });
        }
        let mut per_label = BTreeMap::new();
        for label in labels {
            if per_label.contains_key(label) {
                continue;
            }
            let ps = model
                .questions
                .iter()
                .map(|f| {
                    f.at(label)
                        .ok_or_else(|| AnalysisError::Model(format!("no P_q for {label:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            per_label.insert(label.clone(), LabelObservables::build(model, &ps)?);
        }
        Ok(Self {
            uniform: None,
            per_label,
        })
    }

    pub fn at(&self, label: &Label) -> Result<&LabelObservables> {
        match &self.uniform {
            Some(obs) => Ok(obs),
            None => self
                .per_label
                .get(label)
                .ok_or_else(|| AnalysisError::Model(format!("observables not built for {label:?}"))),
        }
    }

    /// Entries with their label; the uniform entry has none.
    pub fn entries(&self) -> Vec<(Option<&Label>, &LabelObservables)> {
        match &self.uniform {
            Some(obs) => vec![(None, obs)],
            None => self.per_label.iter().map(|(l, o)| (Some(l), o)).collect(),
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform.is_some()
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = &LabelObservables> + '_> {
        match &self.uniform {
            Some(obs) => Box::new(std::iter::once(obs)),
            None => Box::new(self.per_label.values()),
        }
    }
}

/// Exact-identity diagnostics on the marginal observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableChecks {
    /// max ‖[Z_i, Z_j]‖ and ‖[X_i, X_j]‖ over labels and pairs.
    pub same_type_commutator: f64,
    /// max |Z̃_i X̃_{N+i} − (parity observable)| entrywise.
    pub bell_product_defect: f64,
}

pub fn observable_checks(model: &DeviceModel, obs: &MarginalObservables) -> ObservableChecks {
    let mut out = ObservableChecks {
        same_type_commutator: 0.0,
        bell_product_defect: 0.0,
    };
    for o in obs.iter() {
        out.same_type_commutator = out.same_type_commutator.max(o.same_type_commutator());
        out.bell_product_defect = out.bell_product_defect.max(o.bell_product_defect(model.n));
    }
    out
}

/// ‖A G‖_F² = Tr[A†A G G†].
pub fn weight(a: &Mat, g: &Mat) -> f64 {
    (a * g).norm_squared()
}

/// ‖(O − s𝟙) G‖_F² for a sign s.
pub fn shifted_weight(o: &Mat, sign: f64, g: &Mat) -> f64 {
    (o * g - g * cr(sign)).norm_squared()
}
