use std::fs;

use proptest::prelude::*;
use qselftest::entcf::EntcfParams;
use qselftest::harness::{
    audit, recompose_eps, replay, run_sessions, wilson, write_outputs, Party, RunConfig, TransportKind, SEED_ENV,
};
use qselftest::protocol::{ProtocolConfig, ProtocolMessage, Theta};
use qselftest::prover::ProverKind;

fn selftest(n: usize, w: usize) -> ProtocolConfig {
    ProtocolConfig::selftest(n, EntcfParams::ideal(w))
}

/// Wilson score interval at z = 1.96 written from the textbook formula.
fn wilson_oracle(k: u64, n: u64) -> (f64, f64) {
    let z = 1.959963984540054f64;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let center = p + z * z / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    (((center - spread) / denom).max(0.0), ((center + spread) / denom).min(1.0))
}

#[test]
fn wilson_matches_formula() {
    for (k, n) in [(0, 1), (1, 1), (8, 10), (50, 100), (9_700, 10_000), (3, 10_000)] {
        let (lo, hi) = wilson(k, n);
        let (olo, ohi) = wilson_oracle(k, n);
        assert!((lo - olo).abs() < 1e-4 && (hi - ohi).abs() < 1e-4, "{k}/{n}: ({lo}, {hi}) vs ({olo}, {ohi})");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let config = RunConfig::new(selftest(1, 3), ProverKind::BitFlip(0.1), 300, 77);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(a.path(), &run_sessions(&config).unwrap()).unwrap();
    write_outputs(b.path(), &run_sessions(&config).unwrap()).unwrap();
    for name in ["stats.json", "transcripts.jsonl"] {
        let x = fs::read(a.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let lines = fs::read_to_string(a.path().join("transcripts.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 300);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let config = RunConfig::new(selftest(1, 2), ProverKind::Honest, 200, 5);
    let run_with = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_sessions(&config).unwrap())
    };
    let one = run_with(1);
    let many = run_with(4);
    assert_eq!(one.stats, many.stats);
    assert_eq!(one.transcripts, many.transcripts);
}

#[test]
fn different_seeds_differ() {
    let a = run_sessions(&RunConfig::new(selftest(1, 2), ProverKind::Honest, 50, 1)).unwrap();
    let b = run_sessions(&RunConfig::new(selftest(1, 2), ProverKind::Honest, 50, 2)).unwrap();
    assert_ne!(a.transcripts, b.transcripts);
}

#[test]
fn stats_are_consistent_with_transcripts() {
    for (protocol, prover) in [
        (selftest(1, 2), ProverKind::WrongBasis),
        (ProtocolConfig::dimtest(2, EntcfParams::ideal(3)), ProverKind::Classical),
    ] {
        let out = run_sessions(&RunConfig::new(protocol, prover, 2000, 3)).unwrap();
        let s = &out.stats;
        assert_eq!(s.sessions, 2000);
        assert_eq!(s.strata.iter().map(|x| x.acceptance.trials).sum::<u64>(), 2000);
        assert_eq!(s.strata.iter().map(|x| x.acceptance.events).sum::<u64>(), s.accepted);
        assert_eq!(s.reasons.values().sum::<u64>(), 2000);
        let accepted = out.transcripts.iter().filter(|t| t.verdict.accept).count() as u64;
        assert_eq!(accepted, s.accepted);
        for e in s.strata.iter().map(|x| &x.acceptance).chain([&s.acceptance, &s.eps_p]).chain(&s.eps_h) {
            assert!(e.ci_low <= e.rate && e.rate <= e.ci_high);
        }
        // ε = ε_P/2 + Σ_q ε_{H,q}/(2·#q), recomputed from raw counts
        let q = s.eps_h.len() as f64;
        let by_hand = s.eps_p.events as f64 / s.eps_p.trials as f64 / 2.0
            + s.eps_h.iter().map(|e| e.events as f64 / e.trials as f64).sum::<f64>() / (2.0 * q);
        assert!((s.eps - by_hand).abs() < 1e-12);
        assert_eq!(s.eps, recompose_eps(s.eps_p.rate, &s.eps_h.iter().map(|e| e.rate).collect::<Vec<_>>()));
    }
}

#[test]
fn every_transcript_replays() {
    let config = RunConfig::new(selftest(1, 3), ProverKind::BitFlip(0.2), 300, 12);
    let out = run_sessions(&config).unwrap();
    assert!(audit(&config, &out.transcripts).unwrap().is_empty());

    let mut forged = out.transcripts[0].clone();
    let verdict = forged.messages.iter_mut().rev().find(|e| e.from == Party::Verifier).unwrap();
    if let ProtocolMessage::Verdict { accept, .. } = &mut verdict.message {
        *accept = !*accept;
    }
    assert!(!replay(config.protocol, None, &forged).unwrap());
}

#[test]
fn tcp_transport_reproduces_inproc_transcripts() {
    let protocol = ProtocolConfig::dimtest(1, EntcfParams::ideal(2));
    let inproc = RunConfig::new(protocol, ProverKind::Honest, 40, 21);
    let mut tcp = inproc.clone();
    tcp.transport = TransportKind::Tcp(0);
    let a = run_sessions(&inproc).unwrap();
    let b = run_sessions(&tcp).unwrap();
    assert_eq!(a.transcripts, b.transcripts);
    assert_eq!(a.stats, b.stats);
}

#[test]
fn pinned_theta_is_respected() {
    let mut config = RunConfig::new(selftest(1, 2), ProverKind::Honest, 60, 0);
    config.theta = Some(Theta::Diamond);
    let out = run_sessions(&config).unwrap();
    assert!(out.transcripts.iter().all(|t| t.theta == Some(Theta::Diamond)));
    assert!(out.stats.strata.iter().all(|s| s.theta == "diamond"));
    assert!(audit(&config, &out.transcripts).unwrap().is_empty());
}

#[test]
fn environment_seed_overrides_config() {
    let config = RunConfig::new(selftest(1, 2), ProverKind::Honest, 1, 5);
    std::env::set_var(SEED_ENV, "991");
    let applied = config.clone().with_env_seed();
    std::env::set_var(SEED_ENV, "not a number");
    let broken = config.clone().with_env_seed();
    std::env::remove_var(SEED_ENV);
    assert_eq!(applied.unwrap().seed, 991);
    assert!(broken.is_err());
    assert_eq!(config.with_env_seed().unwrap().seed, 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wilson_interval_brackets_rate(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as u64;
        let (lo, hi) = wilson(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn recomposition_is_the_stated_average(p in 0.0f64..=1.0, h in prop::collection::vec(0.0f64..=1.0, 2..=4)) {
        let eps = recompose_eps(p, &h);
        let expect = p / 2.0 + h.iter().sum::<f64>() / (2.0 * h.len() as f64);
        prop_assert!((eps - expect).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&eps));
    }
}
