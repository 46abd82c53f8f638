use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::session::Transcript;
use crate::protocol::{ProtocolKind, RoundType};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes out of `n` trials.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    // at k = 0 or k = n the endpoints are exactly 0 or 1 but rounding can miss p
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub events: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn new(events: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson(events, trials);
        let rate = if trials == 0 { 0.0 } else { events as f64 / trials as f64 };
        Self {
            events,
            trials,
            rate,
            ci_low,
            ci_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub theta: String,
    pub round: String,
    pub q: Option<u8>,
    pub acceptance: Estimate,
}

/// Upper bounds on the γ quantities implied by the measured failure rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBounds {
    pub gamma_p: f64,
    pub gamma_t0: f64,
    pub gamma_t1: f64,
    pub gamma_p_aggregate: f64,
    pub gamma_t_aggregate: f64,
    pub gamma_diamond_aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub kind: ProtocolKind,
    pub n: usize,
    pub w: usize,
    pub backend: String,
    pub prover: String,
    pub seed: u64,
    pub sessions: u64,
    pub accepted: u64,
    pub acceptance: Estimate,
    pub strata: Vec<Stratum>,
    /// ε̂_P: failure rate in preimage rounds.
    pub eps_p: Estimate,
    /// ε̂_{H,q} for each question q.
    pub eps_h: Vec<Estimate>,
    /// Overall failure probability recomposed from the per-round rates.
    pub eps: f64,
    pub gamma_bounds: Option<GammaBounds>,
    pub reasons: BTreeMap<String, u64>,
}

/// Overall failure probability from the per-round rates: uniform over the two
/// round types and uniform over the questions.
pub fn recompose_eps(eps_p: f64, eps_h: &[f64]) -> f64 {
    let q = eps_h.len() as f64;
    eps_p / 2.0 + eps_h.iter().sum::<f64>() / (2.0 * q)
}

impl SessionStats {
    pub fn from_transcripts(
        kind: ProtocolKind,
        n: usize,
        w: usize,
        backend: String,
        prover: String,
        seed: u64,
        transcripts: &[Transcript],
    ) -> Self {
        let questions = match kind {
            ProtocolKind::SelfTest => 4,
            ProtocolKind::DimTest => 2,
        };
        // (θ, round, q) → (accepted, total); BTreeMap keeps the output order fixed
        let mut cells: BTreeMap<(String, String, Option<u8>), (u64, u64)> = BTreeMap::new();
        let mut reasons = BTreeMap::new();
        let mut pre = (0u64, 0u64);
        let mut had = vec![(0u64, 0u64); questions];
        let mut accepted = 0;
        for t in transcripts {
            let ok = t.verdict.accept;
            accepted += ok as u64;
            *reasons.entry(t.verdict.reason.clone()).or_insert(0) += 1;
            let theta = t.theta.map(|th| th.label()).unwrap_or_else(|| "none".into());
            let round = match t.round {
                Some(RoundType::Preimage) => "preimage",
                Some(RoundType::Hadamard) => "hadamard",
                None => "none",
            };
            let cell = cells
                .entry((theta, round.to_string(), t.question))
                .or_insert((0, 0));
            cell.0 += ok as u64;
            cell.1 += 1;
            match (t.round, t.question) {
                (Some(RoundType::Preimage), _) => {
                    pre.0 += !ok as u64;
                    pre.1 += 1;
                }
                (Some(RoundType::Hadamard), Some(q)) => {
                    had[q as usize].0 += !ok as u64;
                    had[q as usize].1 += 1;
                }
                _ => {}
            }
        }
        let eps_p = Estimate::new(pre.0, pre.1);
        let eps_h: Vec<Estimate> = had.iter().map(|&(f, t)| Estimate::new(f, t)).collect();
        let eps = recompose_eps(eps_p.rate, &eps_h.iter().map(|e| e.rate).collect::<Vec<_>>());
        let gamma_bounds = (kind == ProtocolKind::SelfTest).then(|| {
            let m = (2 * n + 2) as f64;
            GammaBounds {
                gamma_p: m * eps_p.rate,
                gamma_t0: m * eps_h[0].rate,
                gamma_t1: m * eps_h[1].rate,
                gamma_p_aggregate: 2.0 * m * eps,
                gamma_t_aggregate: 8.0 * m * eps,
                gamma_diamond_aggregate: 8.0 * m * eps,
            }
        });
        let total = transcripts.len() as u64;
        Self {
            kind,
            n,
            w,
            backend,
            prover,
            seed,
            sessions: total,
            accepted,
            acceptance: Estimate::new(accepted, total),
            strata: cells
                .into_iter()
                .map(|((theta, round, q), (a, t))| Stratum {
                    theta,
                    round,
                    q,
                    acceptance: Estimate::new(a, t),
                })
                .collect(),
            eps_p,
            eps_h,
            eps,
            gamma_bounds,
            reasons,
        }
    }
}
