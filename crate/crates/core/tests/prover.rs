use proptest::prelude::*;
use qselftest::entcf::{chk, dot, gen_keypair, EntcfParams, Family, PublicKey, Trapdoor};
use qselftest::harness::{run_sessions, RunConfig, Transcript};
use qselftest::protocol::{ProtocolConfig, ProtocolKind, ProtocolMessage, RoundType, Theta};
use qselftest::prover::{question_bases, Device, HonestProver, ProverKind, SimMode, DEFAULT_FULLSIM_BUDGET};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn keys(families: &[Family], params: &EntcfParams, seed: u64) -> (Vec<PublicKey>, Vec<Trapdoor>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    families
        .iter()
        .map(|&f| gen_keypair(f, params, &mut rng).unwrap())
        .unzip()
}

fn d_of(t: &Transcript) -> Option<Vec<u32>> {
    t.prover_messages().find_map(|m| match m {
        ProtocolMessage::HadamardD { d } => Some(d.clone()),
        _ => None,
    })
}

fn v_of(t: &Transcript) -> Option<Vec<u8>> {
    t.prover_messages().find_map(|m| match m {
        ProtocolMessage::FinalAnswer { v } => Some(v.clone()),
        _ => None,
    })
}

fn pinned(protocol: ProtocolConfig, prover: ProverKind, theta: Theta, sessions: u64, seed: u64) -> Vec<Transcript> {
    let mut config = RunConfig::new(protocol, prover, sessions, seed);
    config.theta = Some(theta);
    run_sessions(&config).unwrap().transcripts
}

fn within_sigmas(hits: usize, trials: usize, p: f64, k: f64) -> bool {
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    ((hits as f64 / trials as f64) - p).abs() <= k * sigma + 1e-12
}

#[test]
fn honest_preimage_answers_always_pass_chk() {
    for params in [EntcfParams::ideal(3), EntcfParams::toy_lwe_default(2)] {
        for mode in [SimMode::Collapsed, SimMode::FullSim { budget: DEFAULT_FULLSIM_BUDGET }] {
            let n = if matches!(mode, SimMode::FullSim { .. }) && params.lwe.is_some() { 1 } else { 2 };
            let width = if n == 1 { 1 } else { 2 };
            for seed in 0..30 {
                let families: Vec<Family> = (0..width).map(|i| if (seed + i) % 2 == 0 { Family::F } else { Family::G }).collect();
                let (pks, _) = keys(&families, &params, seed as u64);
                let mut dev = HonestProver::new(ProtocolKind::DimTest, width, mode);
                let mut rng = ChaCha8Rng::seed_from_u64(seed as u64 + 100);
                let y = dev.on_keys(&pks, &mut rng).unwrap();
                let (b, x) = dev.on_preimage(&mut rng).unwrap();
                assert_eq!(chk(&pks, &y, &b, &x).unwrap(), 0);
            }
        }
    }
}

#[test]
fn injective_coordinates_collapse_to_decoded_preimage() {
    let params = EntcfParams::ideal(3);
    for seed in 0..20 {
        let (pks, tds) = keys(&[Family::G, Family::G], &params, seed);
        let mut dev = HonestProver::new(ProtocolKind::DimTest, 2, SimMode::Collapsed);
        let y = dev.on_keys(&pks, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for i in 0..2 {
            let b = tds[i].decode_b(y[i]).unwrap().unwrap();
            let x = tds[i].decode_x(Some(b), y[i]).unwrap();
            let state = dev.coordinate_state(i).unwrap();
            for (idx, a) in state.iter().enumerate() {
                let expect = if idx == (b as usize) * 8 + x as usize { 1.0 } else { 0.0 };
                assert!((a.norm() - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn claw_coordinates_collapse_to_equal_superposition_of_the_claw() {
    let params = EntcfParams::ideal(3);
    for seed in 0..20 {
        let (pks, tds) = keys(&[Family::F], &params, seed);
        let mut dev = HonestProver::new(ProtocolKind::DimTest, 1, SimMode::Collapsed);
        let y = dev.on_keys(&pks, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (x0, x1) = tds[0].claw(y[0]).unwrap();
        assert_eq!(x0 ^ x1, tds[0].claw_shift().unwrap());
        let state = dev.coordinate_state(0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((state[x0 as usize].norm() - h).abs() < 1e-12);
        assert!((state[8 + x1 as usize].norm() - h).abs() < 1e-12);
        assert!((state.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn claw_side_is_a_fair_coin() {
    let params = EntcfParams::ideal(3);
    let (pks, _) = keys(&[Family::F], &params, 1);
    let trials = 10_000;
    let mut ones = 0;
    for s in 0..trials {
        let mut dev = HonestProver::new(ProtocolKind::DimTest, 1, SimMode::Collapsed);
        let mut rng = ChaCha8Rng::seed_from_u64(s as u64);
        dev.on_keys(&pks, &mut rng).unwrap();
        ones += dev.on_preimage(&mut rng).unwrap().0[0] as usize;
    }
    assert!(within_sigmas(ones, trials, 0.5, 3.0), "{ones}");
}

#[test]
fn hadamard_readout_distribution_matches_amplitudes() {
    // (|0,x0⟩ + |1,x1⟩)/√2 with the x register Hadamard-measured: every d
    // gets Σ_b |(−1)^{d·x_b}|²/(2·2^w)
    let w = 2;
    let params = EntcfParams::ideal(w);
    let (pks, _) = keys(&[Family::F], &params, 4);
    let mut counts = [0usize; 4];
    let trials = 8000;
    for s in 0..trials {
        let mut dev = HonestProver::new(ProtocolKind::DimTest, 1, SimMode::Collapsed);
        let mut rng = ChaCha8Rng::seed_from_u64(s as u64);
        dev.on_keys(&pks, &mut rng).unwrap();
        counts[dev.on_hadamard(&mut rng).unwrap()[0] as usize] += 1;
    }
    let amp2 = 0.5 / (1 << w) as f64;
    for c in counts {
        assert!(within_sigmas(c, trials, 2.0 * amp2, 4.0), "{counts:?}");
    }
}

#[test]
fn selftest_theta_zero_question_zero_returns_decoded_bits() {
    let protocol = ProtocolConfig::selftest(2, EntcfParams::ideal(3));
    for t in pinned(protocol, ProverKind::Honest, Theta::Zero, 400, 3) {
        if t.round == Some(RoundType::Hadamard) {
            assert!(t.verdict.accept, "{}", t.verdict.reason);
            if t.question == Some(0) {
                let b: Vec<u8> = t.decoded.as_ref().unwrap().b.iter().map(|b| b.unwrap()).collect();
                assert_eq!(v_of(&t).unwrap(), b);
            }
        }
    }
}

#[test]
fn diamond_sessions_fail_only_on_zero_readouts() {
    let protocol = ProtocolConfig::selftest(1, EntcfParams::ideal(2));
    let mut bell = 0;
    let mut zero_hits = 0;
    for t in pinned(protocol, ProverKind::Honest, Theta::Diamond, 4000, 9) {
        let Some(q) = t.question else { continue };
        if q < 2 {
            assert!(t.verdict.accept);
            continue;
        }
        let d = d_of(&t).unwrap();
        let needed = if q == 2 { d[1] } else { d[0] };
        assert_eq!(t.verdict.accept, needed != 0, "{:?}", t.verdict);
        bell += 1;
        zero_hits += (needed == 0) as usize;
    }
    assert!(within_sigmas(zero_hits, bell, 0.25, 3.5), "{zero_hits}/{bell}");
}

#[test]
fn dimtest_hadamard_answers_equal_equation_bits() {
    let protocol = ProtocolConfig::dimtest(2, EntcfParams::ideal(3));
    for theta in [Theta::Coord(1), Theta::Coord(2)] {
        for t in pinned(protocol, ProverKind::Honest, theta, 300, 5) {
            if t.question != Some(1) {
                continue;
            }
            let Theta::Coord(c) = theta else { unreachable!() };
            let d = d_of(&t).unwrap();
            let h = t.decoded.as_ref().unwrap().h[c - 1];
            if d[c - 1] != 0 {
                assert_eq!(Some(v_of(&t).unwrap()[c - 1]), h);
                assert!(t.verdict.accept);
            } else {
                assert!(!t.verdict.accept);
                assert!(t.verdict.reason.ends_with("h_undefined"));
            }
        }
    }
}

/// Exhaustive value of a uniformly guessed bit against d·s over every
/// shift s ≠ 0 and nonzero d: the guess matches half the time.
fn classical_guess_value(w: usize) -> f64 {
    let mut hit = 0u64;
    let mut total = 0u64;
    for s in 1..1u32 << w {
        for d in 1..1u32 << w {
            for g in 0..2u8 {
                hit += (g == dot(d, s)) as u64;
                total += 1;
            }
        }
    }
    hit as f64 / total as f64
}

#[test]
fn classical_guess_wins_the_equation_half_the_time() {
    let protocol = ProtocolConfig::dimtest(2, EntcfParams::ideal(4));
    let target = classical_guess_value(4);
    let mut hits = 0;
    let mut trials = 0;
    for t in pinned(protocol, ProverKind::Classical, Theta::Coord(1), 20_000, 2) {
        match (t.round, t.question) {
            (Some(RoundType::Preimage), _) | (_, Some(0)) => assert!(t.verdict.accept),
            (_, Some(1)) => {
                trials += 1;
                hits += t.verdict.accept as usize;
            }
            _ => unreachable!(),
        }
    }
    assert!(trials > 4000);
    assert!((hits as f64 / trials as f64 - target).abs() <= 0.02, "{hits}/{trials}");
}

#[test]
fn bit_flip_zero_is_the_honest_prover() {
    let protocol = ProtocolConfig::selftest(1, EntcfParams::ideal(2));
    let a = run_sessions(&RunConfig::new(protocol, ProverKind::Honest, 200, 8)).unwrap();
    let b = run_sessions(&RunConfig::new(protocol, ProverKind::BitFlip(0.0), 200, 8)).unwrap();
    for (x, y) in a.transcripts.iter().zip(&b.transcripts) {
        assert_eq!(x.messages, y.messages);
    }
}

#[test]
fn bit_flip_one_fails_every_basis_check() {
    let protocol = ProtocolConfig::selftest(1, EntcfParams::ideal(2));
    let mut seen = 0;
    for t in pinned(protocol, ProverKind::BitFlip(1.0), Theta::Zero, 400, 1) {
        if t.question == Some(0) {
            assert!(!t.verdict.accept);
            seen += 1;
        }
    }
    assert!(seen > 20);
}

#[test]
fn wrong_basis_is_caught_on_theta_zero() {
    let protocol = ProtocolConfig::selftest(1, EntcfParams::ideal(2));
    let out = pinned(protocol, ProverKind::WrongBasis, Theta::Zero, 2000, 4);
    let q0: Vec<&Transcript> = out.iter().filter(|t| t.question == Some(0)).collect();
    let rejected = q0.iter().filter(|t| !t.verdict.accept).count();
    // a Hadamard readout of a basis state matches each b̂ with probability 1/2
    assert!(within_sigmas(rejected, q0.len(), 0.75, 4.0), "{rejected}/{}", q0.len());
}

#[test]
fn devices_enforce_call_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for kind in [ProverKind::Honest, ProverKind::Classical, ProverKind::BitFlip(0.5), ProverKind::WrongBasis] {
        let mut dev = kind.build(ProtocolKind::SelfTest, 1, SimMode::Collapsed).unwrap();
        assert!(dev.on_question(0, &mut rng).is_err() || dev.on_hadamard(&mut rng).is_err());
    }
    assert!(ProverKind::BitFlip(1.5).build(ProtocolKind::SelfTest, 1, SimMode::Collapsed).is_err());
}

#[test]
fn full_simulation_respects_its_budget() {
    let params = EntcfParams::ideal(4);
    let (pks, _) = keys(&[Family::F, Family::G], &params, 0);
    let mut dev = HonestProver::new(ProtocolKind::DimTest, 2, SimMode::FullSim { budget: 8 });
    assert!(dev.on_keys(&pks, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn question_basis_table() {
    assert_eq!(question_bases(ProtocolKind::SelfTest, 2, 0), [false; 4]);
    assert_eq!(question_bases(ProtocolKind::SelfTest, 2, 1), [true; 4]);
    assert_eq!(question_bases(ProtocolKind::SelfTest, 2, 2), [false, false, true, true]);
    assert_eq!(question_bases(ProtocolKind::SelfTest, 2, 3), [true, true, false, false]);
    assert_eq!(question_bases(ProtocolKind::DimTest, 3, 1), [true; 3]);
}

proptest! {
    #[test]
    fn prover_names_round_trip(p in 0.0f64..=1.0) {
        for kind in [ProverKind::Honest, ProverKind::Classical, ProverKind::WrongBasis, ProverKind::BitFlip(p)] {
            prop_assert_eq!(kind.to_string().parse::<ProverKind>().unwrap(), kind);
        }
    }

    #[test]
    fn honest_answers_have_protocol_shape(seed in any::<u64>(), n in 1usize..=2) {
        let params = EntcfParams::ideal(2);
        let families = vec![Family::F; 2 * n];
        let (pks, _) = keys(&families, &params, seed);
        let mut dev = HonestProver::new(ProtocolKind::SelfTest, n, SimMode::Collapsed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = dev.on_keys(&pks, &mut rng).unwrap();
        prop_assert_eq!(y.len(), 2 * n);
        let d = dev.on_hadamard(&mut rng).unwrap();
        prop_assert!(d.iter().all(|&di| di < 4));
        let v = dev.on_question((seed % 4) as u8, &mut rng).unwrap();
        prop_assert_eq!(v.len(), 2 * n);
        prop_assert!(v.iter().all(|&b| b <= 1));
    }
}
