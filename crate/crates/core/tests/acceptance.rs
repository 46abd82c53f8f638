//! The eleven acceptance criteria, run in order by one test so timings are
//! taken on an otherwise idle process. Each criterion prints one PASS/FAIL
//! line; the test fails if any criterion does.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::time::{Duration, Instant};

use qselftest::analysis::{analyze, rank_bound_check, AnalysisConfig, AnalysisReport, ModelSpec};
use qselftest::entcf::{self, dot, gen_keypair, EntcfParams, PublicKey};
use qselftest::harness::{run_sessions, write_outputs, RunConfig, Transcript};
use qselftest::protocol::{ProtocolConfig, ProtocolKind, ProtocolMessage, Theta};
use qselftest::prover::{Device, HonestProver, ProverKind, SimMode, DEFAULT_FULLSIM_BUDGET};
use qsim::linalg::{cr, identity, random_density, random_unitary, zeros};
use qsim::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn d_of(t: &Transcript) -> Option<Vec<u32>> {
    t.prover_messages().find_map(|m| match m {
        ProtocolMessage::HadamardD { d } => Some(d.clone()),
        _ => None,
    })
}

fn analysis(kind: ProtocolKind, model: ModelSpec) -> AnalysisReport {
    let mut config = AnalysisConfig::new(kind, 1, 2, model);
    config.key_draws = 1;
    analyze(&config).unwrap()
}

fn honest_completeness_selftest() -> Outcome {
    let (n, w, sessions) = (2, 4, 10_000);
    let start = Instant::now();
    let protocol = ProtocolConfig::selftest(n, EntcfParams::ideal(w));
    let stats = run_sessions(&RunConfig::new(protocol, ProverKind::Honest, sessions, 1)).unwrap().stats;
    let elapsed = start.elapsed();
    let p = stats.acceptance.rate;
    let sigma = (p * (1.0 - p) / sessions as f64).sqrt();
    let floor = 1.0 - 2.0 * n as f64 * 2f64.powi(1 - w as i32) - 3.0 * sigma;
    outcome(
        p >= floor && elapsed < Duration::from_secs(60),
        format!("acceptance {p:.4} vs floor {floor:.4}, {elapsed:.1?}"),
    )
}

fn honest_completeness_dimtest() -> Outcome {
    let protocol = ProtocolConfig::dimtest(3, EntcfParams::ideal(4));
    let out = run_sessions(&RunConfig::new(protocol, ProverKind::Honest, 10_000, 2)).unwrap();
    let mut bad = 0;
    for t in out.transcripts.iter().filter(|t| !t.verdict.accept) {
        let zero_d = match (t.theta, d_of(t)) {
            (Some(Theta::Coord(i)), Some(d)) => d[i - 1] == 0,
            _ => false,
        };
        if !(zero_d && t.verdict.reason.ends_with("h_undefined")) {
            bad += 1;
        }
    }
    let p = out.stats.acceptance.rate;
    outcome(
        p >= 0.97 && bad == 0,
        format!(
            "acceptance {p:.4}, {} rejections, {bad} not caused by d = 0",
            out.stats.sessions - out.stats.accepted
        ),
    )
}

type Counts<K> = BTreeMap<K, u64>;
type Sample = (Vec<u64>, Vec<u32>, Vec<u8>);

fn total_variation<K: Ord + Clone>(a: &Counts<K>, b: &Counts<K>) -> f64 {
    let (na, nb) = (a.values().sum::<u64>() as f64, b.values().sum::<u64>() as f64);
    let keys: BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| (*a.get(k).unwrap_or(&0) as f64 / na - *b.get(k).unwrap_or(&0) as f64 / nb).abs())
        .sum::<f64>()
        / 2.0
}

/// (y, d, v) from `samples` fresh honest devices on fixed keys.
fn hadamard_samples(
    kind: ProtocolKind,
    n: usize,
    mode: SimMode,
    keys: &[PublicKey],
    q: u8,
    samples: u64,
    seed: u64,
) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let mut dev = HonestProver::new(kind, n, mode);
            let y = dev.on_keys(keys, &mut rng).unwrap();
            let d = dev.on_hadamard(&mut rng).unwrap();
            let v = dev.on_question(q, &mut rng).unwrap();
            (y, d, v)
        })
        .collect()
}

/// Collapsed against FullSim with keys fixed per θ. The dimension test at
/// N = 1 compares full (y, d, v) joints per (θ, q); the self-test at N = 1
/// compares per-coordinate (y_i, d_i, v_i) joints per (θ, q), since its full
/// joint has thousands of cells and 2·10⁴ samples cannot resolve it.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let samples = 20_000;
    let params = EntcfParams::ideal(2);
    let modes = [SimMode::Collapsed, SimMode::FullSim { budget: DEFAULT_FULLSIM_BUDGET }];
    let mut worst: f64 = 0.0;
    let mut support_mismatches = 0;
    let mut strata = 0;
    for kind in [ProtocolKind::DimTest, ProtocolKind::SelfTest] {
        let (width, protocol) = match kind {
            ProtocolKind::DimTest => (1, ProtocolConfig::dimtest(1, params)),
            ProtocolKind::SelfTest => (2, ProtocolConfig::selftest(1, params)),
        };
        for (ti, theta) in Theta::all(kind, 1).into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + ti as u64);
            let keys: Vec<PublicKey> = (0..width)
                .map(|i| gen_keypair(theta.family(i), &params, &mut rng).unwrap().0)
                .collect();
            for q in 0..protocol.question_count() {
                let per_mode: Vec<_> = modes
                    .iter()
                    .enumerate()
                    .map(|(mi, &mode)| hadamard_samples(kind, 1, mode, &keys, q, samples, 7 * ti as u64 + mi as u64))
                    .collect();
                let projections: Vec<Box<dyn Fn(&Sample) -> Sample>> = match kind {
                    ProtocolKind::DimTest => vec![Box::new(|s| s.clone())],
                    ProtocolKind::SelfTest => (0..width)
                        .map(|i| -> Box<dyn Fn(&Sample) -> Sample> {
                            Box::new(move |s| (vec![s.0[i]], vec![s.1[i]], vec![s.2[i]]))
                        })
                        .collect(),
                };
                for project in &projections {
                    let counts: Vec<Counts<_>> = per_mode
                        .iter()
                        .map(|list| {
                            let mut c = Counts::new();
                            for s in list {
                                *c.entry(project(s)).or_insert(0) += 1;
                            }
                            c
                        })
                        .collect();
                    strata += 1;
                    let a: BTreeSet<_> = counts[0].keys().collect();
                    let b: BTreeSet<_> = counts[1].keys().collect();
                    if a != b {
                        support_mismatches += 1;
                    }
                    worst = worst.max(total_variation(&counts[0], &counts[1]));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        support_mismatches == 0 && worst <= 0.05 && elapsed < Duration::from_secs(120),
        format!("{strata} strata, {support_mismatches} support mismatches, max TV {worst:.4}, {elapsed:.1?}"),
    )
}

fn entcf_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut cases = 0;
    let backends = (1..=4)
        .map(|w| (format!("ideal w={w}"), EntcfParams::ideal(w), 4))
        .chain((1..=4).map(|w| (format!("toylwe w={w}"), EntcfParams::toy_lwe_default(w), 1)));
    for (name, params, keys) in backends {
        let report = entcf::suite::run(&params, keys, 11).unwrap();
        for c in &report.checks {
            cases += c.cases;
            if c.failures > 0 {
                failures.push(format!("{name}: {} ({:?})", c.name, c.first_failure));
            }
        }
    }
    outcome(failures.is_empty(), format!("{cases} cases, failures {failures:?}"))
}

fn swap_identities(reports: &[(String, AnalysisReport)]) -> Outcome {
    let mut worst = (0.0f64, String::new());
    for (name, r) in reports {
        for x in [r.swap.isometry_defect, r.swap.z_conjugation_defect, r.swap.circuit_defect] {
            if x > worst.0 {
                worst = (x, name.clone());
            }
        }
    }
    outcome(
        worst.0 <= 1e-10,
        format!("{} models, largest defect {:.2e} ({})", reports.len(), worst.0, worst.1),
    )
}

fn marginal_identity(honest: &AnalysisReport) -> Outcome {
    let entries = honest.marginal_identity.as_ref().unwrap();
    let bad: Vec<String> = entries
        .iter()
        .filter(|e| e.distance > 1e-9)
        .map(|e| format!("θ={} v={} trace {:.4} distance {:.4}", e.theta, e.v, e.trace, e.distance))
        .collect();
    let normalized = entries.iter().map(|e| e.normalized_distance).fold(0.0, f64::max);
    outcome(
        bad.is_empty(),
        format!(
            "{} of {} entries off; after normalizing to unit trace the largest distance is {normalized:.1e}; off: {bad:?}",
            bad.len(),
            entries.len()
        ),
    )
}

fn gamma_suite(reports: &[(String, AnalysisReport)]) -> Outcome {
    let mut failed = Vec::new();
    let mut corrected_failed = 0;
    for (name, r) in reports {
        for c in r.bounds.literal.iter().filter(|c| !c.holds) {
            failed.push(format!("{name}: {} slack {:.4}", c.name, c.slack));
        }
        for c in r.sum_sigma.iter().filter(|c| !c.holds) {
            failed.push(format!(
                "{name}: residual at θ={} is {:.4} > γ_P = {:.4}",
                c.theta, c.residual_norm, c.gamma_p
            ));
        }
        for z in r.zeta_chi.iter().filter(|z| !z.check.holds) {
            failed.push(format!("{name}: {}", z.check.name));
        }
        corrected_failed += r.bounds.corrected.iter().filter(|c| !c.holds).count();
    }
    outcome(
        failed.is_empty(),
        format!(
            "{} models, {} failures in the stated forms, {corrected_failed} in the corrected forms: {failed:?}",
            reports.len(),
            failed.len()
        ),
    )
}

fn soundness_distance(honest: &AnalysisReport) -> Outcome {
    let budget = 4.0 * 2f64.powi(1 - honest.w as i32);
    let worst = honest
        .soundness
        .iter()
        .flat_map(|s| std::iter::once(s.total).chain(s.measurement_total.iter().copied()))
        .fold(0.0, f64::max);
    outcome(
        honest.soundness.len() == 4 && worst <= budget,
        format!("largest distance {worst:.2e}, budget {budget}"),
    )
}

fn swap_unitary(k: usize, m: usize) -> Mat {
    let mut u = zeros(k * m, k * m);
    for i in 0..k {
        for j in 0..m {
            u[(j * k + i, i * m + j)] = cr(1.0);
        }
    }
    u
}

fn rank_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut overlap_failures = 0;
    for i in 0..50 {
        let n = 1 + i % 2;
        let m = (1 << n) + rng.random_range(0..=2);
        let rank = rng.random_range(1..=m);
        let u = random_unitary((1 << n) * m, &mut rng);
        let rho = random_density(m, rank, &mut rng);
        let alpha = random_density(m, rng.random_range(1..=m), &mut rng);
        let c = rank_bound_check(&u, &rho, &alpha, n).unwrap();
        violations += !c.bound_satisfied as usize;
        overlap_failures += !c.overlap_holds as usize;
    }
    let mut swap_ok = true;
    let mut swap_eps: f64 = 0.0;
    for n in 1..=2 {
        let k = 1 << n;
        let mut alpha = zeros(k, k);
        alpha[(0, 0)] = cr(1.0);
        let c = rank_bound_check(&swap_unitary(k, k), &(identity(k) * cr(1.0 / k as f64)), &alpha, n).unwrap();
        swap_eps = swap_eps.max(c.eps);
        swap_ok &= c.eps <= 1e-10 && c.rank == k;
        overlap_failures += !c.overlap_holds as usize;
    }
    outcome(
        violations == 0 && overlap_failures == 0 && swap_ok,
        format!("50 random: {violations} rank violations; overlap failures {overlap_failures}; SWAP ε {swap_eps:.1e}"),
    )
}

/// Exact rejection rate on q = 1 of a device that returns nonzero uniform d
/// and a uniform guess for every equation bit, against the verifier's rule:
/// θ = 0 accepts, θ = t compares v_t with d_t·s_t.
fn classical_cheat_value(n: usize, w: usize) -> f64 {
    let thetas = Theta::all(ProtocolKind::DimTest, n);
    let mut total = 0.0;
    for theta in &thetas {
        let Theta::Coord(_) = theta else { continue };
        let (mut miss, mut cases) = (0u64, 0u64);
        for s in 1..1u32 << w {
            for d in 1..1u32 << w {
                for guess in 0..2u8 {
                    miss += (guess != dot(d, s)) as u64;
                    cases += 1;
                }
            }
        }
        total += miss as f64 / cases as f64;
    }
    total / thetas.len() as f64
}

/// The same rule for the honest device: it answers d_t·s_t and fails only
/// when d_t = 0.
fn honest_value(n: usize, w: usize) -> f64 {
    let thetas = Theta::all(ProtocolKind::DimTest, n);
    let coords = thetas.iter().filter(|t| matches!(t, Theta::Coord(_))).count();
    coords as f64 * 2f64.powi(-(w as i32)) / thetas.len() as f64
}

fn soundness_gap() -> Outcome {
    let protocol = ProtocolConfig::dimtest(2, EntcfParams::ideal(4));
    let cheat = classical_cheat_value(2, 4);
    let measured = run_sessions(&RunConfig::new(protocol, ProverKind::Classical, 10_000, 3))
        .unwrap()
        .stats
        .eps_h[1]
        .rate;
    let honest = run_sessions(&RunConfig::new(protocol, ProverKind::Honest, 10_000, 3))
        .unwrap()
        .stats
        .eps_h[1]
        .rate;
    outcome(
        (measured - cheat).abs() <= 0.02 && cheat >= 0.2 && honest < cheat,
        format!(
            "ε̂_H,1 {measured:.4} vs exhaustive {cheat:.4}; honest ε̂_H,1 {honest:.4} (exact {:.4})",
            honest_value(2, 4)
        ),
    )
}

fn determinism() -> Outcome {
    let runs = [
        RunConfig::new(ProtocolConfig::selftest(1, EntcfParams::ideal(3)), ProverKind::Honest, 2_000, 42),
        RunConfig::new(ProtocolConfig::dimtest(2, EntcfParams::toy_lwe_default(2)), ProverKind::Classical, 500, 42),
    ];
    let mut differ = Vec::new();
    for (i, config) in runs.iter().enumerate() {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            write_outputs(d.path(), &run_sessions(config).unwrap()).unwrap();
        }
        for name in ["stats.json", "transcripts.jsonl"] {
            let a = fs::read(dirs[0].path().join(name)).unwrap();
            let b = fs::read(dirs[1].path().join(name)).unwrap();
            if a.is_empty() || a != b {
                differ.push(format!("run {i}: {name}"));
            }
        }
    }
    outcome(differ.is_empty(), format!("differing files: {differ:?}"))
}

#[test]
fn acceptance_criteria() {
    let mut models: Vec<(String, AnalysisReport)> = Vec::new();
    for spec in [
        ModelSpec::Honest,
        ModelSpec::BitFlip(0.05),
        ModelSpec::BitFlip(0.1),
        ModelSpec::BitFlip(0.25),
        ModelSpec::WrongBasis,
    ] {
        models.push((format!("{spec:?}"), analysis(ProtocolKind::SelfTest, spec)));
    }
    for seed in 0..20 {
        let spec = ModelSpec::Random { seed, dim: 4 };
        models.push((format!("random {seed}"), analysis(ProtocolKind::SelfTest, spec)));
    }
    let honest = &models[0].1;
    let swap_models: Vec<(String, AnalysisReport)> = models
        .iter()
        .filter(|(name, _)| name == "Honest" || name.starts_with("random"))
        .cloned()
        .collect();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("honest completeness, self-test", Box::new(honest_completeness_selftest)),
        ("honest completeness, dimension test", Box::new(honest_completeness_dimtest)),
        ("Collapsed and FullSim agree", Box::new(oracle_equivalence)),
        ("ENTCF property suite", Box::new(entcf_suite)),
        ("swap isometry identities", Box::new(|| swap_identities(&swap_models))),
        ("honest marginal identity", Box::new(|| marginal_identity(honest))),
        ("γ-vs-ε inequality suite", Box::new(|| gamma_suite(&models))),
        ("soundness distance", Box::new(|| soundness_distance(honest))),
        ("rank bound", Box::new(rank_suite)),
        ("soundness gap", Box::new(soundness_gap)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("criterion {:>2} {}: {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
