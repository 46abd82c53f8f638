//! White-box analysis of explicit device models.
//!
//! A [`DeviceModel`] lists the states and measurements of a prover as dense
//! matrices. From it the analyzer computes the σ^{θ,v} blocks, the γ and ε
//! metrics, the swap isometry with its identities, the soundness distances and
//! a dimension certificate, and gathers them in an [`AnalysisReport`].

pub mod gamma;
pub mod model;
pub mod observables;
pub mod rank;
pub mod sigma;
pub mod swap;

use std::collections::BTreeMap;

use qsim::linalg::{cr, ket_bra, partial_trace, trace_norm, zeros};
use qsim::QsimError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entcf::{EntcfError, EntcfParams};
use crate::protocol::{ProtocolError, ProtocolKind, Theta};

pub use gamma::{
    check_gamma_bounds, sum_sigma_checks, tables, zeta_chi_checks, BoundChecks, FailureReport, GammaReport,
    InequalityCheck, SumSigmaCheck, Tables, ThetaStats, ZetaChiEntry,
};
pub use model::{
    build_classical_model, build_honest_model, build_random_model, tau_vector, with_bit_flip, with_wrong_basis,
    DeviceModel, Dims, Label, DEFAULT_MODEL_BUDGET,
};
pub use observables::{observable_checks, MarginalObservables, ObservableChecks};
pub use rank::{dimension_certificate, rank_bound_check, DimensionCertificate, RankCheck};
pub use sigma::{sigma_theta, sigma_theta_v, SigmaSet};
pub use swap::{soundness_distance, swap_checks, swap_circuit, swap_isometries, swap_matrix, SoundnessReport, SwapChecks};

/// Schema version of [`AnalysisReport`].
pub const REPORT_VERSION: u32 = 1;
/// Tolerance for identities that hold exactly.
pub const EXACT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_KEY_DRAWS: usize = 32;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("model needs dimension {needed}, over the budget of {budget}")]
    Budget { needed: usize, budget: usize },
    #[error("malformed model: {0}")]
    Model(String),
    #[error("bad input: {0}")]
    Input(String),
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Entcf(#[from] EntcfError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model", content = "param")]
pub enum ModelSpec {
    Honest,
    /// Honest, followed by a classical flip of each answer bit with probability p.
    BitFlip(f64),
    /// Honest, with the q = 0 and q = 1 measurements exchanged.
    WrongBasis,
    /// Random projective measurements on a random state of the given seed.
    Random { seed: u64, dim: usize },
    /// Deterministic classical answers on a one-dimensional H_D.
    Classical,
}

impl ModelSpec {
    /// Parses `honest`, `bitflip=P`, `wrongbasis`, `random=SEED[:DIM]`, `classical`.
    /// `:` and `=` are interchangeable separators.
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.split([':', '=']);
        let head = parts.next().unwrap_or_default().to_ascii_lowercase();
        let rest: Vec<&str> = parts.collect();
        let bad = || AnalysisError::Input(format!("unknown model `{s}`"));
        match (head.as_str(), rest.as_slice()) {
            ("honest", []) => Ok(Self::Honest),
            ("wrongbasis", []) => Ok(Self::WrongBasis),
            ("classical", []) => Ok(Self::Classical),
            ("bitflip", [p]) => {
                let p: f64 = p.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(AnalysisError::Input(format!("flip probability {p} outside [0, 1]")));
                }
                Ok(Self::BitFlip(p))
            }
            ("random", [seed]) => Ok(Self::Random {
                seed: seed.parse().map_err(|_| bad())?,
                dim: 4,
            }),
            ("random", [seed, dim]) => Ok(Self::Random {
                seed: seed.parse().map_err(|_| bad())?,
                dim: dim.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub kind: ProtocolKind,
    pub n: usize,
    pub params: EntcfParams,
    pub model: ModelSpec,
    pub keys_seed: u64,
    /// Extra key tuples for the key-averaged γ; 0 or 1 disables averaging.
    pub key_draws: usize,
    pub budget: usize,
    pub circuit_samples: usize,
}

impl AnalysisConfig {
    pub fn new(kind: ProtocolKind, n: usize, w: usize, model: ModelSpec) -> Self {
        Self {
            kind,
            n,
            params: EntcfParams::ideal(w),
            model,
            keys_seed: 0,
            key_draws: DEFAULT_KEY_DRAWS,
            budget: DEFAULT_MODEL_BUDGET,
            circuit_samples: 8,
        }
    }
}

/// Builds the model a configuration names, with the given key seed.
pub fn build_model(config: &AnalysisConfig, keys_seed: u64) -> Result<DeviceModel> {
    let honest = || build_honest_model(config.kind, config.n, &config.params, keys_seed, config.budget);
    match config.model {
        ModelSpec::Honest => honest(),
        ModelSpec::BitFlip(p) => with_bit_flip(honest()?, p),
        ModelSpec::WrongBasis => Ok(with_wrong_basis(honest()?)),
        ModelSpec::Random { seed, dim } => {
            if config.kind != ProtocolKind::SelfTest {
                return Err(AnalysisError::Input("random models exist for the self-test only".into()));
            }
            build_random_model(config.n, config.params.w, dim, seed)
        }
        ModelSpec::Classical => {
            if config.kind != ProtocolKind::DimTest {
                return Err(AnalysisError::Input("the classical model is a dimension-test device".into()));
            }
            build_classical_model(config.n, &config.params, keys_seed)
        }
    }
}

/// Tr_{Y,R}[σ^{θ,v}] against 2^{−m} τ^{θ,v} for one θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEntry {
    pub theta: String,
    pub v: String,
    pub trace: f64,
    /// ½‖Tr_{Y,R,x}[σ^{θ,v}] − 2^{−m} τ^{θ,v}‖₁.
    pub distance: f64,
    /// The same distance after normalizing both sides to unit trace.
    pub normalized_distance: f64,
}

/// Compares the reduced state on the tested qubits with 2^{−m} τ^{θ,v}. The
/// model's x registers are traced out along with Y and R. Needs a layout.
pub fn marginal_identity(model: &DeviceModel, sigma: &SigmaSet) -> Result<Vec<MarginalEntry>> {
    let layout = model
        .layout
        .ok_or_else(|| AnalysisError::Input("model has no qubit layout".into()))?;
    let width = model.width();
    let dims = [layout.before, 1usize << width, layout.after];
    let scale = ((1usize << width) as f64).recip();
    let mut out = Vec::new();
    for (v, labels) in sigma.by_v() {
        let mut rho = zeros(model.dim, model.dim);
        for l in labels {
            rho += sigma.blocks[l].density();
        }
        let reduced = partial_trace(&rho, &dims, &[1])?;
        let tau = ket_bra(&tau_vector(model.kind, model.n, sigma.theta, &v));
        let trace = reduced.trace().re;
        let distance = trace_norm(&(&reduced - &tau * cr(scale)))? / 2.0;
        let normalized_distance = if trace > 0.0 {
            trace_norm(&(&reduced / cr(trace) - &tau))? / 2.0
        } else {
            1.0
        };
        out.push(MarginalEntry {
            theta: sigma.theta.label(),
            v: swap::bits_label(&v),
            trace,
            distance,
            normalized_distance,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyAverage {
    pub draws: usize,
    pub gamma: GammaReport,
    pub failure: FailureReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub version: u32,
    pub model: String,
    pub kind: ProtocolKind,
    pub n: usize,
    pub w: usize,
    pub keys_seed: u64,
    pub dims: Dims,
    pub projectivity_defect: f64,
    /// max over θ of Σ_v Tr σ^{θ,v}.
    pub max_covered_trace: f64,
    pub observables: ObservableChecks,
    pub gamma: GammaReport,
    pub failure: FailureReport,
    pub bounds: BoundChecks,
    pub sum_sigma: Vec<SumSigmaCheck>,
    pub zeta_chi: Vec<ZetaChiEntry>,
    pub swap: SwapChecks,
    pub soundness: Vec<SoundnessReport>,
    pub marginal_identity: Option<Vec<MarginalEntry>>,
    pub dimension: Option<DimensionCertificate>,
    pub key_average: Option<KeyAverage>,
    pub tables: Tables,
    /// Identities and corrected bounds that failed.
    pub violations: Vec<String>,
    /// Inequalities in their stated form that failed. Informational.
    pub literal_violations: Vec<String>,
}

impl AnalysisReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Everything the analyzer knows how to compute, for one model.
pub fn analyze(config: &AnalysisConfig) -> Result<AnalysisReport> {
    let model = build_model(config, config.keys_seed)?;
    let projectivity_defect = model.validate(1e-9)?;
    let sigmas = model
        .thetas()
        .into_iter()
        .map(|t| sigma_theta(&model, t))
        .collect::<Result<Vec<_>>>()?;
    let obs = MarginalObservables::build(&model, sigmas.iter().flat_map(|s| s.blocks.keys()))?;
    let observables = observable_checks(&model, &obs);
    let tables = gamma::tables(&model, &sigmas, &obs)?;
    let gamma = GammaReport::from_tables(&tables);
    let failure = FailureReport::exact(&tables);
    let bounds = check_gamma_bounds(&tables, &gamma, &failure);
    let sum_sigma = sum_sigma_checks(&tables, &gamma);
    let zeta_chi = zeta_chi_checks(&tables, &gamma);
    let isos = swap_isometries(&model, &obs)?;
    let swap = swap_checks(&obs, &isos, &sigmas, config.circuit_samples, config.keys_seed)?;
    let soundness = sigmas
        .iter()
        .map(|s| soundness_distance(&model, s, &isos))
        .collect::<Result<Vec<_>>>()?;
    let marginal_identity = match model.layout {
        Some(_) => {
            let mut all = Vec::new();
            for s in &sigmas {
                all.extend(marginal_identity(&model, s)?);
            }
            Some(all)
        }
        None => None,
    };
    let dimension = match model.kind {
        ProtocolKind::DimTest => Some(dimension_certificate(&model)?),
        ProtocolKind::SelfTest => None,
    };
    let key_average = key_average(config, &tables)?;
    let max_covered_trace = sigmas.iter().map(SigmaSet::covered_trace).fold(0.0, f64::max);

    let mut violations = Vec::new();
    let mut flag = |ok: bool, name: String| {
        if !ok {
            violations.push(name);
        }
    };
    flag(projectivity_defect <= 1e-9, "projective measurements".into());
    flag(
        observables.same_type_commutator <= EXACT_TOLERANCE,
        "same-type observables commute".into(),
    );
    flag(
        observables.bell_product_defect <= EXACT_TOLERANCE,
        "Bell observables are products of marginals".into(),
    );
    flag(swap.isometry_defect <= EXACT_TOLERANCE, "V is an isometry".into());
    flag(swap.z_conjugation_defect <= EXACT_TOLERANCE, "V conjugates Z exactly".into());
    flag(swap.circuit_defect <= EXACT_TOLERANCE, "circuit matches the formula".into());
    flag(max_covered_trace <= 1.0 + gamma::SLACK_TOLERANCE, "sum of traces at most 1".into());
    for c in &bounds.corrected {
        flag(c.holds, format!("corrected {}", c.name));
    }
    for c in &sum_sigma {
        flag(c.invalid_part_holds, format!("invalid-image mass at θ = {}", c.theta));
    }
    for z in &zeta_chi {
        flag(z.check.holds, z.check.name.clone());
    }
    let mut literal_violations: Vec<String> = bounds
        .literal
        .iter()
        .filter(|c| !c.holds)
        .map(|c| c.name.clone())
        .collect();
    literal_violations.extend(
        sum_sigma
            .iter()
            .filter(|c| !c.holds)
            .map(|c| format!("residual at θ = {} exceeds gamma_p", c.theta)),
    );

    Ok(AnalysisReport {
        version: REPORT_VERSION,
        model: model.name.clone(),
        kind: model.kind,
        n: model.n,
        w: model.params.w,
        keys_seed: config.keys_seed,
        dims: model.dims(),
        projectivity_defect,
        max_covered_trace,
        observables,
        gamma,
        failure,
        bounds,
        sum_sigma,
        zeta_chi,
        swap,
        soundness,
        marginal_identity,
        dimension,
        key_average,
        tables,
        violations,
        literal_violations,
    })
}

/// Seed of key draw `i`; draw 0 is the configured seed itself.
fn draw_seed(base: u64, i: usize) -> u64 {
    base ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The γ tables averaged over `key_draws` key tuples. Random models fix
/// their keys together with the device and are not averaged.
fn key_average(config: &AnalysisConfig, first: &Tables) -> Result<Option<KeyAverage>> {
    if config.key_draws <= 1 || matches!(config.model, ModelSpec::Random { .. }) {
        return Ok(None);
    }
    let mut all = vec![first.clone()];
    for i in 1..config.key_draws {
        let model = build_model(config, draw_seed(config.keys_seed, i))?;
        let sigmas = model
            .thetas()
            .into_iter()
            .map(|t| sigma_theta(&model, t))
            .collect::<Result<Vec<_>>>()?;
        let obs = MarginalObservables::build(&model, sigmas.iter().flat_map(|s| s.blocks.keys()))?;
        all.push(gamma::tables(&model, &sigmas, &obs)?);
    }
    let avg = Tables::average(&all).expect("nonempty");
    Ok(Some(KeyAverage {
        draws: all.len(),
        gamma: GammaReport::from_tables(&avg),
        failure: FailureReport::exact(&avg),
    }))
}

/// θ labels in report order.
pub fn theta_labels(kind: ProtocolKind, n: usize) -> Vec<String> {
    Theta::all(kind, n).into_iter().map(Theta::label).collect()
}

/// Report keyed by θ label, for quick lookups.
pub fn soundness_by_theta(report: &AnalysisReport) -> BTreeMap<String, &SoundnessReport> {
    report.soundness.iter().map(|s| (s.theta.clone(), s)).collect()
}
