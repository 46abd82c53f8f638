use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qselftest::analysis::{self, AnalysisConfig, ModelSpec};
use qselftest::entcf::{self, EntcfParams};
use qselftest::harness::{self, HarnessError, RunConfig, TransportKind, SEED_ENV};
use qselftest::protocol::{ProtocolConfig, ProtocolKind};
use qselftest::prover::ProverKind;

#[derive(Parser)]
#[command(name = "qselftest", version, about = "Simulate and analyze the EPR self-test and the dimension test")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// N-pair EPR self-test.
    Selftest {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Quantum dimension test.
    Dimtest {
        #[command(subcommand)]
        action: RunAction,
    },
    /// White-box analysis of a device model.
    Analyze(AnalyzeArgs),
    /// Exhaustive ENTCF property suite.
    EntcfCheck(EntcfArgs),
}

#[derive(Subcommand)]
enum RunAction {
    /// Run sessions and write statistics and transcripts.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Ideal,
    Toylwe,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Selftest,
    Dimtest,
}

impl From<KindArg> for ProtocolKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Selftest => ProtocolKind::SelfTest,
            KindArg::Dimtest => ProtocolKind::DimTest,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    w: usize,
    #[arg(long, value_enum, default_value_t = BackendArg::Ideal)]
    backend: BackendArg,
    /// honest, classical, bitflip=P or wrongbasis.
    #[arg(long, default_value = "honest", value_parser = parse_prover)]
    prover: ProverKind,
    #[arg(long, default_value_t = 1000)]
    sessions: u64,
    /// Master seed; SELFTEST_SEED overrides it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// inproc or tcp:PORT (port 0 picks a free one).
    #[arg(long, default_value = "inproc", value_parser = parse_transport)]
    transport: TransportKind,
    /// Directory for stats.json and transcripts.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    w: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Selftest)]
    kind: KindArg,
    /// honest, bitflip=P, wrongbasis, random=SEED or classical (dimension test).
    #[arg(long, default_value = "honest", value_parser = parse_model)]
    model: ModelSpec,
    /// Seed for the key tuple the model is built on; SELFTEST_SEED overrides it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra key tuples for the key-averaged γ (0 disables).
    #[arg(long, default_value_t = analysis::DEFAULT_KEY_DRAWS)]
    key_draws: usize,
    #[arg(long, default_value = "analysis.json")]
    report: PathBuf,
}

#[derive(Args)]
struct EntcfArgs {
    #[arg(long, value_enum, default_value_t = BackendArg::Ideal)]
    backend: BackendArg,
    #[arg(long, default_value_t = 3)]
    w: usize,
    /// Keys generated per family.
    #[arg(long, default_value_t = 4)]
    keys: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_prover(s: &str) -> Result<ProverKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_model(s: &str) -> Result<ModelSpec, String> {
    ModelSpec::parse(s).map_err(|e| e.to_string())
}

fn parse_transport(s: &str) -> Result<TransportKind, String> {
    if s == "inproc" {
        return Ok(TransportKind::InProc);
    }
    let port = s
        .strip_prefix("tcp:")
        .ok_or_else(|| format!("expected `inproc` or `tcp:PORT`, got `{s}`"))?;
    port.parse()
        .map(TransportKind::Tcp)
        .map_err(|_| format!("bad port `{port}`"))
}

fn entcf_params(backend: BackendArg, w: usize) -> EntcfParams {
    match backend {
        BackendArg::Ideal => EntcfParams::ideal(w),
        BackendArg::Toylwe => EntcfParams::toy_lwe_default(w),
    }
}

fn env_seed(seed: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}=`{raw}` is not a u64"))),
        Err(_) => Ok(seed),
    }
}

enum Failure {
    /// Bad parameters: exit 2.
    Usage(String),
    /// A check did not hold or the run broke: exit 1.
    Check(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => Failure::Usage(m),
            e => Failure::Check(e.to_string()),
        }
    }
}

fn check(failures: &mut Vec<String>, ok: bool, what: impl FnOnce() -> String) {
    if !ok {
        failures.push(what());
    }
}

fn run(kind: ProtocolKind, args: RunArgs) -> Result<(), Failure> {
    let entcf = entcf_params(args.backend, args.w);
    let protocol = match kind {
        ProtocolKind::SelfTest => ProtocolConfig::selftest(args.n, entcf),
        ProtocolKind::DimTest => ProtocolConfig::dimtest(args.n, entcf),
    };
    protocol.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let mut config = RunConfig::new(protocol, args.prover, args.sessions, args.seed).with_env_seed()?;
    config.transport = args.transport;
    let out = harness::run_sessions(&config)?;
    if let Some(dir) = &args.out {
        harness::write_outputs(dir, &out)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&out.stats).map_err(|e| Failure::Check(e.to_string()))?
    );

    let stats = &out.stats;
    let mut failures = Vec::new();
    let replay = harness::audit(&config, &out.transcripts)?;
    check(&mut failures, replay.is_empty(), || {
        format!("{} transcripts did not replay, first is session {}", replay.len(), replay[0])
    });
    let counted: u64 = stats.strata.iter().map(|s| s.acceptance.trials).sum();
    check(&mut failures, counted == stats.sessions, || {
        format!("strata count {counted} sessions, expected {}", stats.sessions)
    });
    if config.prover == ProverKind::Honest {
        let stray: BTreeSet<&str> = out
            .transcripts
            .iter()
            .filter(|t| !t.verdict.accept && !t.verdict.reason.ends_with("h_undefined"))
            .map(|t| t.verdict.reason.as_str())
            .collect();
        check(&mut failures, stray.is_empty(), || {
            format!("honest prover rejected for reasons other than an undefined equation bit: {stray:?}")
        });
        let floor = honest_floor(&config);
        check(&mut failures, stats.acceptance.rate >= floor, || {
            format!("honest acceptance {:.4} below the completeness floor {floor:.4}", stats.acceptance.rate)
        });
    }
    report_failures(&failures)
}

/// 1 − width·2^{1−w} minus three standard errors: the honest device only loses
/// when some coordinate of d is zero.
fn honest_floor(config: &RunConfig) -> f64 {
    let width = config.protocol.width() as f64;
    let p = 1.0 - width * 2f64.powi(1 - config.protocol.entcf.w as i32);
    let sigma = (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / config.sessions.max(1) as f64).sqrt();
    p - 3.0 * sigma
}

fn report_failures(failures: &[String]) -> Result<(), Failure> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failures.join("\n")))
    }
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let mut config = AnalysisConfig::new(args.kind.into(), args.n, args.w, args.model);
    config.keys_seed = env_seed(args.seed)?;
    config.key_draws = args.key_draws;
    let report = analysis::analyze(&config).map_err(|e| match e {
        analysis::AnalysisError::Input(m) => Failure::Usage(m),
        e => Failure::Check(e.to_string()),
    })?;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Check(e.to_string()))?;
    json.push('\n');
    fs::write(&args.report, json).map_err(|e| Failure::Check(format!("{}: {e}", args.report.display())))?;
    println!("report written to {}", args.report.display());
    for v in &report.literal_violations {
        println!("note: literal form does not hold: {v}");
    }
    report_failures(&report.violations)
}

fn entcf_check(args: EntcfArgs) -> Result<(), Failure> {
    let params = entcf_params(args.backend, args.w);
    params.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let report = entcf::suite::run(&params, args.keys, args.seed).map_err(|e| Failure::Check(e.to_string()))?;
    for c in &report.checks {
        let status = if c.failures == 0 { "ok" } else { "FAILED" };
        println!("{status:>6}  {} ({} cases, {} failures)", c.name, c.cases, c.failures);
        if let Some(first) = &c.first_failure {
            println!("        first failure: {first}");
        }
    }
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| c.failures > 0)
        .map(|c| format!("{}: {} failures", c.name, c.failures))
        .collect();
    report_failures(&failed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Selftest { action: RunAction::Run(args) } => run(ProtocolKind::SelfTest, args),
        Command::Dimtest { action: RunAction::Run(args) } => run(ProtocolKind::DimTest, args),
        Command::Analyze(args) => analyze(args),
        Command::EntcfCheck(args) => entcf_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed:\n{m}");
            ExitCode::from(1)
        }
    }
}
