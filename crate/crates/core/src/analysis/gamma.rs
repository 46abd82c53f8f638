//! The γ quantities, exact failure probabilities and the inequalities that
//! relate them.

use std::collections::BTreeMap;

use qsim::linalg::{bits_of, trace_norm_factored, zeros};
use qsim::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{DeviceModel, Family};
use super::observables::{LabelObservables, MarginalObservables};
use super::sigma::{SigmaBlock, SigmaSet};
use super::Result;
use crate::entcf::chk;
use crate::harness::{recompose_eps, SessionStats};
use crate::protocol::{dimtest_check, selftest_hadamard_check, ProtocolKind, Theta};

/// Slack allowed on every inequality.
pub const SLACK_TOLERANCE: f64 = 1e-9;

/// Expectation Re Tr[G†OG] and the two shifted weights ‖(O ∓ 𝟙)G‖².
#[derive(Debug, Clone, Copy, Default)]
struct Ev {
    e: f64,
    /// dev[b] = ‖(O − (−1)^b 𝟙) G‖², computed directly.
    dev: [f64; 2],
}

/// Summed over the classical pieces of G, using the diagonal blocks of O.
fn ev(o: &Mat, pieces: &[(usize, Mat)], m: usize) -> Ev {
    let mut out = Ev::default();
    for (c, g) in pieces {
        let og = o.view((c * m, c * m), (m, m)) * g;
        out.e += (g.adjoint() * &og).trace().re;
        out.dev[0] += (&og - g).norm_squared();
        out.dev[1] += (&og + g).norm_squared();
    }
    out
}

fn sign(b: u8) -> f64 {
    if b == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Per-θ sums. Vectors are indexed by 0-based coordinate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaStats {
    pub t: f64,
    /// 1 − Σ_v Tr σ^{θ,v}.
    pub beta: f64,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub r_tilde: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub r_diamond: Vec<f64>,
    pub s_diamond: Vec<f64>,
    /// Σ_v ζ(i,θ,v), Σ_v χ-type sums with X_i, and the tilde and Bell versions.
    pub zeta: Vec<f64>,
    pub chi: Vec<f64>,
    pub zeta_tilde: Vec<f64>,
    pub chi_tilde: Vec<f64>,
    pub zeta_diamond: Vec<f64>,
    pub chi_diamond: Vec<f64>,
    /// Pr(accept | θ, Hadamard round, q).
    pub accept: Vec<f64>,
    /// ‖σ^θ − Σ_v σ^{θ,v}‖₁, and that mass split by cause.
    pub residual_norm: f64,
    pub invalid_y_mass: f64,
    pub undefined_h_mass: f64,
}

impl ThetaStats {
    fn zeroed(model: &DeviceModel) -> Self {
        let w = model.width();
        let n = model.n;
        let (tw, dn) = match model.kind {
            ProtocolKind::SelfTest => (w, n),
            ProtocolKind::DimTest => (0, 0),
        };
        Self {
            r: vec![0.0; w],
            s: vec![0.0; w],
            r_tilde: vec![0.0; tw],
            s_tilde: vec![0.0; tw],
            r_diamond: vec![0.0; dn],
            s_diamond: vec![0.0; dn],
            zeta: vec![0.0; w],
            chi: vec![0.0; w],
            zeta_tilde: vec![0.0; tw],
            chi_tilde: vec![0.0; tw],
            zeta_diamond: vec![0.0; dn],
            chi_diamond: vec![0.0; dn],
            accept: vec![0.0; model.questions.len()],
            ..Default::default()
        }
    }

    fn add(&mut self, o: &ThetaStats) {
        let pairs: [(&mut Vec<f64>, &Vec<f64>); 13] = [
            (&mut self.r, &o.r),
            (&mut self.s, &o.s),
            (&mut self.r_tilde, &o.r_tilde),
            (&mut self.s_tilde, &o.s_tilde),
            (&mut self.r_diamond, &o.r_diamond),
            (&mut self.s_diamond, &o.s_diamond),
            (&mut self.zeta, &o.zeta),
            (&mut self.chi, &o.chi),
            (&mut self.zeta_tilde, &o.zeta_tilde),
            (&mut self.chi_tilde, &o.chi_tilde),
            (&mut self.zeta_diamond, &o.zeta_diamond),
            (&mut self.chi_diamond, &o.chi_diamond),
            (&mut self.accept, &o.accept),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.t += o.t;
        self.beta += o.beta;
        self.residual_norm += o.residual_norm;
        self.invalid_y_mass += o.invalid_y_mass;
        self.undefined_h_mass += o.undefined_h_mass;
    }
}

fn accepts(model: &DeviceModel, theta: Theta, q: u8, block: &SigmaBlock, u: usize) -> bool {
    let v = bits_of(u, model.width());
    match model.kind {
        ProtocolKind::SelfTest => selftest_hadamard_check(model.n, theta, q, &block.decoded, &v).accept,
        ProtocolKind::DimTest => dimtest_check(model.n, theta, q, &block.decoded, &v).accept,
    }
}

/// Contribution of one block. `beta` temporarily carries the covered trace.
fn block_stats(
    model: &DeviceModel,
    theta: Theta,
    label: &super::model::Label,
    block: &SigmaBlock,
    obs: &LabelObservables,
    uniform_q: &[Option<Vec<Vec<Mat>>>],
) -> Result<ThetaStats> {
    let mut out = ThetaStats::zeroed(model);
    let g = &block.factor;
    let n2 = block.trace();
    let m = model.dim / model.classical_dim;
    let pieces = &block.pieces;
    for (q, fam) in model.questions.iter().enumerate() {
        let p = fam.at(label).ok_or_else(|| {
            super::AnalysisError::Model(format!("no P_{q} for {label:?}"))
        })?;
        let local;
        let blocked = match &uniform_q[q] {
            Some(b) => b,
            None => {
                local = p.blocked(model.classical_dim, m);
                &local
            }
        };
        for ((u, _), qb) in p.outcomes.iter().zip(blocked) {
            if accepts(model, theta, q as u8, block, *u) {
                out.accept[q] += pieces
                    .iter()
                    .map(|(c, gc)| (qb[*c].adjoint() * gc).norm_squared())
                    .sum::<f64>();
            }
        }
    }
    let Some(v) = &block.v else {
        let mass = trace_norm_factored(g, &zeros(g.nrows(), 0));
        out.residual_norm = mass;
        if block.valid_y {
            out.undefined_h_mass = mass;
        } else {
            out.invalid_y_mass = mass;
        }
        return Ok(out);
    };
    out.beta = n2;
    let n = model.n;
    let proj = |x: Ev, b: u8| (n2 + sign(b) * x.e) / 2.0;
    for i in 0..model.width() {
        let z = ev(obs.z[i].matrix(), pieces, m);
        let x = ev(obs.x[i].matrix(), pieces, m);
        out.r[i] = proj(z, v[i]);
        out.s[i] = proj(x, v[i]);
        out.zeta[i] = z.dev[v[i] as usize];
        out.chi[i] = x.dev[v[i] as usize];
        if model.kind == ProtocolKind::SelfTest {
            let zt = ev(obs.zt[i].matrix(), pieces, m);
            let xt = ev(obs.xt[i].matrix(), pieces, m);
            out.r_tilde[i] = proj(zt, v[i]);
            out.s_tilde[i] = proj(xt, v[i]);
            out.zeta_tilde[i] = zt.dev[v[i] as usize];
            out.chi_tilde[i] = xt.dev[v[i] as usize];
        }
    }
    if theta == Theta::Diamond {
        for i in 0..n {
            let zx = ev(obs.bell_zx[i].matrix(), pieces, m);
            let xz = ev(obs.bell_xz[i].matrix(), pieces, m);
            out.r_diamond[i] = proj(zx, v[i]);
            out.s_diamond[i] = proj(xz, v[n + i]);
            out.zeta_diamond[i] = zx.dev[v[i] as usize];
            out.chi_diamond[i] = xz.dev[v[n + i] as usize];
        }
    }
    Ok(out)
}

/// t_θ: probability that the preimage answer passes CHK.
pub fn preimage_pass(model: &DeviceModel, theta: Theta) -> Result<f64> {
    let keys = model.keys(theta)?;
    let mut t = 0.0;
    for (y, f) in &model.states[&theta] {
        let pi = model
            .preimage
            .at(y)
            .ok_or_else(|| super::AnalysisError::Model(format!("no Π for y = {y:?}")))?;
        for ((b, x), q) in &pi.outcomes {
            if chk(&keys, y, b, x)? == 0 {
                t += (q.adjoint() * f).norm_squared();
            }
        }
    }
    Ok(t)
}

/// All per-θ sums for one θ. Blocks are processed in parallel and summed in
/// label order.
pub fn theta_stats(model: &DeviceModel, sigma: &SigmaSet, obs: &MarginalObservables) -> Result<ThetaStats> {
    let theta = sigma.theta;
    let m = model.dim / model.classical_dim;
    let uniform_q: Vec<Option<Vec<Vec<Mat>>>> = model
        .questions
        .iter()
        .map(|f| match f {
            Family::Uniform(p) => Some(p.blocked(model.classical_dim, m)),
            Family::PerLabel(_) => None,
        })
        .collect();
    let blocks: Vec<_> = sigma.blocks.iter().collect();
    let parts = blocks
        .par_iter()
        .map(|(label, block)| block_stats(model, theta, label, block, obs.at(label)?, &uniform_q))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ThetaStats::zeroed(model);
    for p in &parts {
        out.add(p);
    }
    out.beta = 1.0 - out.beta;
    out.t = preimage_pass(model, theta)?;
    Ok(out)
}

/// Per-θ sums keyed by θ label ("0", "1", …, "diamond").
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    pub kind: Option<ProtocolKind>,
    pub n: usize,
    pub theta: BTreeMap<String, ThetaStats>,
}

impl Tables {
    fn get(&self, theta: Theta) -> &ThetaStats {
        &self.theta[&theta.label()]
    }

    /// Entrywise mean over several key draws.
    pub fn average(list: &[Tables]) -> Option<Tables> {
        let first = list.first()?;
        let mut out = first.clone();
        for t in &list[1..] {
            for (k, s) in out.theta.iter_mut() {
                s.add(&t.theta[k]);
            }
        }
        let m = list.len() as f64;
        for s in out.theta.values_mut() {
            let scale = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x /= m);
            for v in [
                &mut s.r,
                &mut s.s,
                &mut s.r_tilde,
                &mut s.s_tilde,
                &mut s.r_diamond,
                &mut s.s_diamond,
                &mut s.zeta,
                &mut s.chi,
                &mut s.zeta_tilde,
                &mut s.chi_tilde,
                &mut s.zeta_diamond,
                &mut s.chi_diamond,
                &mut s.accept,
            ] {
                scale(v);
            }
            s.t /= m;
            s.beta /= m;
            s.residual_norm /= m;
            s.invalid_y_mass /= m;
            s.undefined_h_mass /= m;
        }
        Some(out)
    }
}

pub fn tables(model: &DeviceModel, sigmas: &[SigmaSet], obs: &MarginalObservables) -> Result<Tables> {
    let mut theta = BTreeMap::new();
    for s in sigmas {
        theta.insert(s.theta.label(), theta_stats(model, s, obs)?);
    }
    Ok(Tables {
        kind: Some(model.kind),
        n: model.n,
        theta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub gamma_p: f64,
    pub gamma_t0: f64,
    pub gamma_t1: f64,
    pub gamma_t0_tilde: Option<f64>,
    pub gamma_t0_tilde_prime: Option<f64>,
    pub gamma_t1_tilde: Option<f64>,
    pub gamma_t: f64,
    pub gamma_diamond0: Option<f64>,
    pub gamma_diamond1: Option<f64>,
    pub gamma_diamond: Option<f64>,
}

fn one_minus_min(values: impl IntoIterator<Item = f64>) -> f64 {
    let m = values.into_iter().fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        (1.0 - m).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl GammaReport {
    pub fn from_tables(tables: &Tables) -> Self {
        let kind = tables.kind.unwrap_or(ProtocolKind::SelfTest);
        let n = tables.n;
        let thetas = Theta::all(kind, n);
        let width = match kind {
            ProtocolKind::SelfTest => 2 * n,
            ProtocolKind::DimTest => n,
        };
        let coord = |th: Theta| match th {
            Theta::Coord(t) => Some(t - 1),
            _ => None,
        };
        let non_bell: Vec<Theta> = thetas.iter().copied().filter(|t| *t != Theta::Diamond).collect();
        let gamma_p = one_minus_min(thetas.iter().map(|&t| tables.get(t).t));
        let gamma_t0 = one_minus_min(non_bell.iter().flat_map(|&th| {
            (0..width)
                .filter(move |&i| Some(i) != coord(th))
                .map(move |i| tables.get(th).r[i])
        }));
        let gamma_t1 = one_minus_min(
            non_bell
                .iter()
                .filter_map(|&th| coord(th).map(|t| tables.get(th).s[t])),
        );
        if kind == ProtocolKind::DimTest {
            return Self {
                gamma_p,
                gamma_t0,
                gamma_t1,
                gamma_t0_tilde: None,
                gamma_t0_tilde_prime: None,
                gamma_t1_tilde: None,
                gamma_t: gamma_t0.max(gamma_t1),
                gamma_diamond0: None,
                gamma_diamond1: None,
                gamma_diamond: None,
            };
        }
        let low = |th: Theta| matches!(th, Theta::Zero) || coord(th).is_some_and(|t| t < n);
        let high = |th: Theta| matches!(th, Theta::Zero) || coord(th).is_some_and(|t| t >= n);
        let gt0 = one_minus_min(non_bell.iter().filter(|&&th| low(th)).flat_map(|&th| {
            (0..n)
                .filter(move |&i| Some(i) != coord(th))
                .map(move |i| tables.get(th).r_tilde[i])
        }));
        let gt0p = one_minus_min(non_bell.iter().filter(|&&th| high(th)).flat_map(|&th| {
            (n..width)
                .filter(move |&i| Some(i) != coord(th))
                .map(move |i| tables.get(th).r_tilde[i])
        }));
        let gt1 = one_minus_min(
            non_bell
                .iter()
                .filter_map(|&th| coord(th).map(|t| tables.get(th).s_tilde[t])),
        );
        let d = tables.get(Theta::Diamond);
        let gd0 = one_minus_min(d.r_diamond.iter().copied());
        let gd1 = one_minus_min(d.s_diamond.iter().copied());
        Self {
            gamma_p,
            gamma_t0,
            gamma_t1,
            gamma_t0_tilde: Some(gt0),
            gamma_t0_tilde_prime: Some(gt0p),
            gamma_t1_tilde: Some(gt1),
            gamma_t: [gamma_t0, gamma_t1, gt0, gt0p, gt1].into_iter().fold(0.0, f64::max),
            gamma_diamond0: Some(gd0),
            gamma_diamond1: Some(gd1),
            gamma_diamond: Some(gd0.max(gd1)),
        }
    }

    fn tilde_sum(&self) -> f64 {
        [
            self.gamma_t0_tilde,
            self.gamma_t0_tilde_prime,
            self.gamma_t1_tilde,
            self.gamma_diamond0,
            self.gamma_diamond1,
        ]
        .into_iter()
        .flatten()
        .sum()
    }
}

/// Clips round-off outside [0, 1].
fn unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub eps_p: f64,
    pub eps_h: Vec<f64>,
    pub eps: f64,
    /// "exact" or "monte_carlo".
    pub source: String,
}

impl FailureReport {
    /// θ, round and question uniform, as the verifier draws them.
    pub fn exact(tables: &Tables) -> Self {
        let m = tables.theta.len() as f64;
        let eps_p = unit(1.0 - tables.theta.values().map(|s| s.t).sum::<f64>() / m);
        let q = tables.theta.values().next().map_or(0, |s| s.accept.len());
        let eps_h: Vec<f64> = (0..q)
            .map(|k| unit(1.0 - tables.theta.values().map(|s| s.accept[k]).sum::<f64>() / m))
            .collect();
        Self {
            eps: recompose_eps(eps_p, &eps_h),
            eps_p,
            eps_h,
            source: "exact".into(),
        }
    }

    pub fn from_stats(stats: &SessionStats) -> Self {
        Self {
            eps_p: stats.eps_p.rate,
            eps_h: stats.eps_h.iter().map(|e| e.rate).collect(),
            eps: stats.eps,
            source: "monte_carlo".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl InequalityCheck {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            slack: rhs - lhs,
            holds: lhs <= rhs + SLACK_TOLERANCE,
        }
    }
}

/// The γ-versus-ε inequalities as stated, and the same inequalities with the
/// mass that no Σ(θ, v) covers added to the right-hand side. The stated
/// form assumes every accepted transcript lies in some Σ(θ, v); transcripts
/// with d_θ = 0 are accepted by the q = 0 check yet excluded from σ^{θ,v}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundChecks {
    pub literal: Vec<InequalityCheck>,
    pub corrected: Vec<InequalityCheck>,
}

impl BoundChecks {
    pub fn literal_hold(&self) -> bool {
        self.literal.iter().all(|c| c.holds)
    }

    pub fn corrected_hold(&self) -> bool {
        self.corrected.iter().all(|c| c.holds)
    }
}

pub fn check_gamma_bounds(tables: &Tables, g: &GammaReport, f: &FailureReport) -> BoundChecks {
    let kind = tables.kind.unwrap_or(ProtocolKind::SelfTest);
    let thetas = Theta::all(kind, tables.n);
    let m = thetas.len() as f64;
    let beta = |pred: &dyn Fn(Theta) -> bool| -> f64 {
        thetas
            .iter()
            .filter(|&&t| pred(t))
            .map(|&t| tables.get(t).beta)
            .sum()
    };
    let b_t0 = beta(&|t| t != Theta::Diamond);
    let b_t1 = beta(&|t| matches!(t, Theta::Coord(_)));
    let b_all = beta(&|_| true);
    let (mut literal, mut corrected) = (Vec::new(), Vec::new());
    let mut both = |name: &str, lhs: f64, rhs: f64, extra: f64| {
        literal.push(InequalityCheck::new(name, lhs, rhs));
        corrected.push(InequalityCheck::new(name, lhs, rhs + extra));
    };
    both("gamma_p", g.gamma_p, m * f.eps_p, 0.0);
    both("gamma_t0", g.gamma_t0, m * f.eps_h[0], b_t0);
    both("gamma_t1", g.gamma_t1, m * f.eps_h[1], b_t1);
    both("aggregate_p", g.gamma_p, 2.0 * m * f.eps, 0.0);
    match kind {
        ProtocolKind::SelfTest => {
            both("tilde_sum", g.tilde_sum(), m * (f.eps_h[2] + f.eps_h[3]), 2.0 * b_all);
            both("aggregate_t", g.gamma_t, 8.0 * m * f.eps, 2.0 * b_all);
            both(
                "aggregate_diamond",
                g.gamma_diamond.unwrap_or(0.0),
                8.0 * m * f.eps,
                2.0 * b_all,
            );
        }
        ProtocolKind::DimTest => both("aggregate_t", g.gamma_t, 4.0 * m * f.eps, b_all),
    }
    BoundChecks { literal, corrected }
}

/// ‖σ^θ − Σ_v σ^{θ,v}‖₁ against γ_P, with the uncovered mass split into
/// invalid images and undefined ĥ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumSigmaCheck {
    pub theta: String,
    pub residual_norm: f64,
    pub invalid_y_mass: f64,
    pub undefined_h_mass: f64,
    pub one_minus_t: f64,
    pub gamma_p: f64,
    pub holds: bool,
    /// invalid-image mass ≤ 1 − t_θ, which is the part the bound controls.
    pub invalid_part_holds: bool,
}

pub fn sum_sigma_checks(tables: &Tables, g: &GammaReport) -> Vec<SumSigmaCheck> {
    tables
        .theta
        .iter()
        .map(|(label, s)| SumSigmaCheck {
            theta: label.clone(),
            residual_norm: s.residual_norm,
            invalid_y_mass: s.invalid_y_mass,
            undefined_h_mass: s.undefined_h_mass,
            one_minus_t: 1.0 - s.t,
            gamma_p: g.gamma_p,
            holds: s.residual_norm <= g.gamma_p + SLACK_TOLERANCE,
            invalid_part_holds: s.invalid_y_mass <= 1.0 - s.t + SLACK_TOLERANCE,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaChiEntry {
    pub check: InequalityCheck,
    /// |Σ_v ζ/4 − (Σ_v Tr σ^{θ,v} − r_{θ,i})|: the directly computed sum
    /// against the one implied by the trace table.
    pub identity_gap: f64,
}

/// Sums of ζ, χ and their variants over v against 4γ_T (or 4γ_⋄).
pub fn zeta_chi_checks(tables: &Tables, g: &GammaReport) -> Vec<ZetaChiEntry> {
    let kind = tables.kind.unwrap_or(ProtocolKind::SelfTest);
    let n = tables.n;
    let width = match kind {
        ProtocolKind::SelfTest => 2 * n,
        ProtocolKind::DimTest => n,
    };
    let mut out = Vec::new();
    let bound_t = 4.0 * g.gamma_t;
    for th in Theta::all(kind, n) {
        let s = tables.get(th);
        let covered = 1.0 - s.beta;
        let coord = match th {
            Theta::Coord(t) => Some(t - 1),
            _ => None,
        };
        let tag = th.label();
        match th {
            Theta::Diamond => {
                let bound = 4.0 * g.gamma_diamond.unwrap_or(0.0);
                for i in 0..n {
                    out.push((
                        InequalityCheck::new(format!("zeta_diamond[{}]", i + 1), s.zeta_diamond[i], bound),
                        (s.zeta_diamond[i] / 4.0 - (covered - s.r_diamond[i])).abs(),
                    ));
                    out.push((
                        InequalityCheck::new(format!("chi_diamond[{}]", i + 1), s.chi_diamond[i], bound),
                        (s.chi_diamond[i] / 4.0 - (covered - s.s_diamond[i])).abs(),
                    ));
                }
            }
            _ => {
                for i in (0..width).filter(|&i| Some(i) != coord) {
                    out.push((
                        InequalityCheck::new(format!("zeta[{},{tag}]", i + 1), s.zeta[i], bound_t),
                        (s.zeta[i] / 4.0 - (covered - s.r[i])).abs(),
                    ));
                    let tilde_ok = kind == ProtocolKind::SelfTest
                        && match coord {
                            None => true,
                            Some(t) => (t < n) == (i < n),
                        };
                    if tilde_ok {
                        out.push((
                            InequalityCheck::new(
                                format!("zeta_tilde[{},{tag}]", i + 1),
                                s.zeta_tilde[i],
                                bound_t,
                            ),
                            (s.zeta_tilde[i] / 4.0 - (covered - s.r_tilde[i])).abs(),
                        ));
                    }
                }
                if let Some(t) = coord {
                    out.push((
                        InequalityCheck::new(format!("chi[{tag}]"), s.chi[t], bound_t),
                        (s.chi[t] / 4.0 - (covered - s.s[t])).abs(),
                    ));
                    if kind == ProtocolKind::SelfTest {
                        out.push((
                            InequalityCheck::new(format!("chi_tilde[{tag}]"), s.chi_tilde[t], bound_t),
                            (s.chi_tilde[t] / 4.0 - (covered - s.s_tilde[t])).abs(),
                        ));
                    }
                }
            }
        }
    }
    out.into_iter()
        .map(|(check, identity_gap)| ZetaChiEntry { check, identity_gap })
        .collect()
}
