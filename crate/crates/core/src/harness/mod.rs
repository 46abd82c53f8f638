//! Session orchestration and Monte Carlo statistics.
//!
//! Session i draws verifier randomness from ChaCha stream 2i and prover
//! randomness from stream 2i + 1 of the master seed, so results do not depend
//! on how rayon schedules the sessions.

mod session;
mod stats;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entcf::Backend;
use crate::prover::{ProverError, ProverKind, SimMode};
use crate::protocol::{ProtocolConfig, ProtocolError, Theta};
use crate::transport::TransportError;

pub use session::{
    prover_reply, prover_rng, replay, run_inproc, run_tcp, session_id, verifier_rng, Party,
    TcpProverServer, Transcript, TranscriptEntry,
};
pub use stats::{recompose_eps, wilson, Estimate, GammaBounds, SessionStats, Stratum};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SELFTEST_SEED";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Prover(#[from] ProverError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    InProc,
    /// Port 0 picks a free port.
    Tcp(u16),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: ProtocolConfig,
    pub prover: ProverKind,
    pub mode: SimMode,
    pub sessions: u64,
    pub seed: u64,
    pub transport: TransportKind,
    pub timeout: Duration,
    /// Pin θ instead of drawing it (for conditioned experiments).
    pub theta: Option<Theta>,
}

impl RunConfig {
    pub fn new(protocol: ProtocolConfig, prover: ProverKind, sessions: u64, seed: u64) -> Self {
        Self {
            protocol,
            prover,
            mode: SimMode::Collapsed,
            sessions,
            seed,
            transport: TransportKind::InProc,
            timeout: Duration::from_secs(10),
            theta: None,
        }
    }

    /// Applies `SELFTEST_SEED` when it is set to an integer.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{SEED_ENV}=`{raw}` is not a u64")))?;
        }
        Ok(self)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub stats: SessionStats,
    pub transcripts: Vec<Transcript>,
}

/// Runs every session and aggregates the statistics. The output depends only
/// on the configuration.
pub fn run_sessions(config: &RunConfig) -> Result<RunOutput> {
    config.protocol.validate()?;
    let server = match config.transport {
        TransportKind::InProc => None,
        TransportKind::Tcp(port) => Some(TcpProverServer::start(port, config.timeout)?),
    };
    let transcripts = (0..config.sessions)
        .into_par_iter()
        .map(|i| session::run_one(config, i, server.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let backend = match config.protocol.entcf.backend {
        Backend::Ideal => "ideal",
        Backend::ToyLwe => "toylwe",
    };
    let stats = SessionStats::from_transcripts(
        config.protocol.kind,
        config.protocol.n,
        config.protocol.entcf.w,
        backend.to_string(),
        config.prover.to_string(),
        config.seed,
        &transcripts,
    );
    Ok(RunOutput { stats, transcripts })
}

/// Replays every transcript through a fresh verifier; returns the indices
/// that did not reproduce.
pub fn audit(config: &RunConfig, transcripts: &[Transcript]) -> Result<Vec<u64>> {
    let bad = transcripts
        .par_iter()
        .map(|t| Ok((t.index, replay(config.protocol, config.theta, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(bad.into_iter().filter(|(_, ok)| !ok).map(|(i, _)| i).collect())
}

/// Writes `stats.json` and `transcripts.jsonl` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut stats = serde_json::to_string_pretty(&out.stats)?;
    stats.push('\n');
    fs::write(dir.join("stats.json"), stats)?;
    let mut file = std::io::BufWriter::new(fs::File::create(dir.join("transcripts.jsonl"))?);
    for t in &out.transcripts {
        serde_json::to_writer(&mut file, t)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}
