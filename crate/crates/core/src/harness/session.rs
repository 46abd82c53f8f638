use std::collections::HashMap;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::{HarnessError, Result, RunConfig, TransportKind};
use crate::prover::Device;
use crate::protocol::{
    Decoded, ProtocolConfig, ProtocolKind, ProtocolMessage, RoundType, Theta, Verdict, Verifier,
};
use crate::transport::{inproc_pair, Channel, TcpChannel, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Verifier,
    Prover,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Logical timestamp: position of the message in the session.
    pub t: u64,
    pub from: Party,
    pub message: ProtocolMessage,
}

/// Persisted record of one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: Uuid,
    pub index: u64,
    pub kind: ProtocolKind,
    pub seed: u64,
    /// Revealed after the verdict.
    pub theta: Option<Theta>,
    pub round: Option<RoundType>,
    pub question: Option<u8>,
    pub messages: Vec<TranscriptEntry>,
    pub verdict: Verdict,
    pub decoded: Option<Decoded>,
}

impl Transcript {
    pub fn prover_messages(&self) -> impl Iterator<Item = &ProtocolMessage> {
        self.messages
            .iter()
            .filter(|e| e.from == Party::Prover)
            .map(|e| &e.message)
    }

    pub fn verifier_messages(&self) -> impl Iterator<Item = &ProtocolMessage> {
        self.messages
            .iter()
            .filter(|e| e.from == Party::Verifier)
            .map(|e| &e.message)
    }
}

/// Verifier randomness for session `index`: stream 2·index of the master seed.
pub fn verifier_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index);
    rng
}

/// Prover randomness for session `index`: stream 2·index + 1.
pub fn prover_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index + 1);
    rng
}

/// Session ids come from their own keyed stream so they never perturb the
/// parties' randomness.
pub fn session_id(seed: u64, index: u64) -> Uuid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e55_1011_d000_0000);
    rng.set_stream(index);
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    uuid::Builder::from_random_bytes(bytes).into_uuid()
}

/// The prover's reply to one verifier message; `None` after the verdict.
pub fn prover_reply(
    device: &mut dyn Device,
    msg: &ProtocolMessage,
    rng: &mut dyn RngCore,
) -> crate::prover::Result<Option<ProtocolMessage>> {
    Ok(match msg {
        ProtocolMessage::Keys { keys } => Some(ProtocolMessage::Images {
            y: device.on_keys(keys, rng)?,
        }),
        ProtocolMessage::RoundType { round } => Some(match round {
            RoundType::Preimage => {
                let (b, x) = device.on_preimage(rng)?;
                ProtocolMessage::PreimageAnswer { b, x }
            }
            RoundType::Hadamard => ProtocolMessage::HadamardD {
                d: device.on_hadamard(rng)?,
            },
        }),
        ProtocolMessage::Question { q } => Some(ProtocolMessage::FinalAnswer {
            v: device.on_question(*q, rng)?,
        }),
        _ => None,
    })
}

fn new_verifier(config: &RunConfig) -> Result<Verifier> {
    Ok(match config.theta {
        Some(t) => Verifier::with_theta(config.protocol, t)?,
        None => Verifier::new(config.protocol)?,
    })
}

fn abort_reason(e: &TransportError) -> &'static str {
    match e {
        TransportError::Timeout => "timeout",
        _ => "transport",
    }
}

/// Drives the verifier over its channel end. `pump` lets the caller run the
/// prover side between verifier messages (in-process mode); over TCP the
/// prover runs elsewhere and `pump` does nothing.
fn drive(
    config: &RunConfig,
    index: u64,
    chan: &mut dyn Channel,
    mut pump: impl FnMut() -> std::result::Result<(), TransportError>,
) -> Result<Transcript> {
    let mut verifier = new_verifier(config)?;
    let mut rng = verifier_rng(config.seed, index);
    let mut messages = Vec::new();
    let mut t = 0u64;
    let mut log = |from, message: &ProtocolMessage| {
        messages.push(TranscriptEntry {
            t,
            from,
            message: message.clone(),
        });
        t += 1;
    };
    let mut incoming: Option<ProtocolMessage> = None;
    loop {
        let out = verifier.step(incoming.as_ref(), &mut rng)?;
        let Some(out) = out else { break };
        log(Party::Verifier, &out);
        let is_verdict = matches!(out, ProtocolMessage::Verdict { .. });
        let sent = chan.send(&out).and_then(|_| pump());
        if is_verdict {
            break;
        }
        let received = sent.and_then(|_| chan.recv(config.timeout));
        match received {
            Ok(msg) => {
                log(Party::Prover, &msg);
                incoming = Some(msg);
            }
            Err(e) => {
                if let Some(v) = verifier.abort(abort_reason(&e)) {
                    log(Party::Verifier, &v);
                    let _ = chan.send(&v);
                }
                break;
            }
        }
    }
    Ok(Transcript {
        session_id: chan.session(),
        index,
        kind: config.protocol.kind,
        seed: config.seed,
        theta: verifier.theta(),
        round: verifier.round(),
        question: verifier.question(),
        messages,
        verdict: verifier.verdict().cloned().expect("session ended with a verdict"),
        decoded: verifier.decoded().cloned(),
    })
}

/// Runs session `index` over an in-process channel.
pub fn run_inproc(config: &RunConfig, index: u64) -> Result<Transcript> {
    let id = session_id(config.seed, index);
    let (mut vchan, pchan) = inproc_pair(id);
    let mut device = config.prover.build(config.protocol.kind, config.protocol.n, config.mode)?;
    let mut prng = prover_rng(config.seed, index);
    let mut pchan = Some(pchan);
    drive(config, index, &mut vchan, || {
        // the prover answers exactly one message per verifier turn
        let Some(p) = pchan.as_mut() else {
            return Err(TransportError::Closed);
        };
        let msg = p.recv(config.timeout)?;
        match prover_reply(device.as_mut(), &msg, &mut prng) {
            Ok(Some(reply)) => p.send(&reply),
            Ok(None) => Ok(()),
            Err(_) => {
                // a failing device goes silent; the verifier sees a closed channel
                pchan = None;
                Ok(())
            }
        }
    })
}

type Registry = Arc<Mutex<HashMap<Uuid, (Box<dyn Device>, ChaCha8Rng)>>>;

/// Prover-side TCP server. Each connection is one session; the device and
/// its RNG are looked up by the session id of the first frame.
pub struct TcpProverServer {
    port: u16,
    registry: Registry,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl TcpProverServer {
    pub fn start(port: u16, timeout: Duration) -> Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", port)).map_err(TransportError::from)?;
        let port = listener.local_addr().map_err(TransportError::from)?.port();
        let registry: Registry = Arc::default();
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let registry = registry.clone();
            let stop = stop.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let registry = registry.clone();
                    std::thread::spawn(move || serve_connection(stream, registry, timeout));
                }
            })
        };
        Ok(Self {
            port,
            registry,
            stop,
            handle: Some(handle),
        })
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    fn register(&self, id: Uuid, device: Box<dyn Device>, rng: ChaCha8Rng) {
        self.registry.lock().expect("registry lock").insert(id, (device, rng));
    }
}

impl Drop for TcpProverServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(("127.0.0.1", self.port));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve_connection(stream: TcpStream, registry: Registry, timeout: Duration) {
    let Ok((mut chan, first)) = TcpChannel::accept(stream, timeout) else {
        return;
    };
    let entry = registry.lock().expect("registry lock").remove(&chan.session());
    let Some((mut device, mut rng)) = entry else {
        return;
    };
    let mut msg = first;
    loop {
        match prover_reply(device.as_mut(), &msg, &mut rng) {
            Ok(Some(reply)) => {
                if chan.send(&reply).is_err() {
                    return;
                }
            }
            Ok(None) | Err(_) => return,
        }
        msg = match chan.recv(timeout) {
            Ok(m) => m,
            Err(_) => return,
        };
    }
}

/// Runs session `index` against a prover served over TCP.
pub fn run_tcp(config: &RunConfig, index: u64, server: &TcpProverServer) -> Result<Transcript> {
    let id = session_id(config.seed, index);
    let device = config.prover.build(config.protocol.kind, config.protocol.n, config.mode)?;
    server.register(id, device, prover_rng(config.seed, index));
    let stream = TcpStream::connect(("127.0.0.1", server.port())).map_err(TransportError::from)?;
    let mut chan = TcpChannel::new(id, stream)?;
    drive(config, index, &mut chan, || Ok(()))
}

/// Re-runs a fresh verifier on the session's stream, feeding it the recorded
/// prover messages, and checks that it emits the recorded verifier messages.
pub fn replay(protocol: ProtocolConfig, theta: Option<Theta>, transcript: &Transcript) -> Result<bool> {
    let mut verifier = match theta {
        Some(t) => Verifier::with_theta(protocol, t)?,
        None => Verifier::new(protocol)?,
    };
    let mut rng = verifier_rng(transcript.seed, transcript.index);
    let mut produced = Vec::new();
    let mut incoming: Option<&ProtocolMessage> = None;
    let mut prover = transcript.prover_messages();
    loop {
        match verifier.step(incoming, &mut rng)? {
            Some(out) => {
                let done = matches!(out, ProtocolMessage::Verdict { .. });
                produced.push(out);
                if done {
                    break;
                }
            }
            None => break,
        }
        match prover.next() {
            Some(m) => incoming = Some(m),
            None => {
                // the live session ended without a prover reply
                let Some(last) = transcript.verifier_messages().last() else {
                    return Ok(false);
                };
                if let ProtocolMessage::Verdict { reason, .. } = last {
                    if let Some(v) = verifier.abort(reason) {
                        produced.push(v);
                    }
                }
                break;
            }
        }
    }
    let recorded: Vec<&ProtocolMessage> = transcript.verifier_messages().collect();
    let same_messages = produced.len() == recorded.len()
        && produced
            .iter()
            .zip(&recorded)
            .all(|(a, b)| crate::transport::canonical_json(a) == crate::transport::canonical_json(b));
    Ok(same_messages && verifier.verdict() == Some(&transcript.verdict))
}

pub(super) fn run_one(config: &RunConfig, index: u64, server: Option<&TcpProverServer>) -> Result<Transcript> {
    match (config.transport, server) {
        (TransportKind::InProc, _) => run_inproc(config, index),
        (TransportKind::Tcp(_), Some(s)) => run_tcp(config, index, s),
        (TransportKind::Tcp(_), None) => Err(HarnessError::Config("TCP run without a server".into())),
    }
}
