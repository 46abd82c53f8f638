//! Message carriage between the two parties.
//!
//! Every message is sent as one frame:
//!
//! ```text
//! u32 BE length | 0x01 | session id (16 bytes) | type byte | canonical JSON
//! ```
//!
//! The length counts every byte after the prefix. The JSON payload has sorted
//! keys and no insignificant whitespace. Both channel kinds use the same
//! encoder, so a message produces identical bytes over either one.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use thiserror::Error;
use uuid::Uuid;

use crate::protocol::ProtocolMessage;

pub const WIRE_VERSION: u8 = 0x01;
/// Frames larger than this are refused before allocation.
pub const MAX_FRAME: usize = 16 << 20;
const HEADER: usize = 1 + 16 + 1;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error("channel closed")]
    Closed,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unsupported wire version {0:#04x}")]
    Version(u8),
    #[error("frame for session {got} on channel of session {expected}")]
    Session { expected: Uuid, got: Uuid },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, TransportError>;

/// Canonical JSON of a message: keys sorted, compact.
pub fn canonical_json(msg: &ProtocolMessage) -> String {
    // serde_json's Map is ordered by key unless `preserve_order` is enabled
    let value = serde_json::to_value(msg).expect("messages always serialize");
    value.to_string()
}

pub fn encode_frame(session: Uuid, msg: &ProtocolMessage) -> Vec<u8> {
    let payload = canonical_json(msg);
    let body_len = HEADER + payload.len();
    let mut out = Vec::with_capacity(4 + body_len);
    out.extend_from_slice(&(body_len as u32).to_be_bytes());
    out.push(WIRE_VERSION);
    out.extend_from_slice(session.as_bytes());
    out.push(msg.type_byte());
    out.extend_from_slice(payload.as_bytes());
    out
}

/// Decodes a complete frame, length prefix included.
pub fn decode_frame(frame: &[u8]) -> Result<(Uuid, ProtocolMessage)> {
    if frame.len() < 4 {
        return Err(TransportError::Malformed("missing length prefix".into()));
    }
    let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
    if frame.len() - 4 != len {
        return Err(TransportError::Malformed(format!(
            "length prefix {len} but {} bytes follow",
            frame.len() - 4
        )));
    }
    decode_body(&frame[4..])
}

fn decode_body(body: &[u8]) -> Result<(Uuid, ProtocolMessage)> {
    if body.len() < HEADER {
        return Err(TransportError::Malformed("truncated header".into()));
    }
    if body[0] != WIRE_VERSION {
        return Err(TransportError::Version(body[0]));
    }
    let session = Uuid::from_bytes(body[1..17].try_into().unwrap());
    let type_byte = body[17];
    let payload = std::str::from_utf8(&body[HEADER..])
        .map_err(|e| TransportError::Malformed(e.to_string()))?;
    let msg: ProtocolMessage =
        serde_json::from_str(payload).map_err(|e| TransportError::Malformed(e.to_string()))?;
    if msg.type_byte() != type_byte {
        return Err(TransportError::Malformed(format!(
            "type byte {type_byte} does not match payload"
        )));
    }
    if canonical_json(&msg) != payload {
        return Err(TransportError::Malformed("payload is not canonical".into()));
    }
    Ok((session, msg))
}

/// One end of a session's reliable, ordered message stream.
pub trait Channel: Send {
    fn session(&self) -> Uuid;
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()>;
    fn recv(&mut self, timeout: Duration) -> Result<ProtocolMessage>;
    /// Raw frames sent so far, in order.
    fn sent_frames(&self) -> &[Vec<u8>];
}

fn check_session(expected: Uuid, got: Uuid) -> Result<()> {
    if expected != got {
        return Err(TransportError::Session { expected, got });
    }
    Ok(())
}

/// In-process channel end backed by `std::sync::mpsc`.
#[derive(Debug)]
pub struct InProcChannel {
    session: Uuid,
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    sent: Vec<Vec<u8>>,
}

/// Two connected ends of one in-process session.
pub fn inproc_pair(session: Uuid) -> (InProcChannel, InProcChannel) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    (
        InProcChannel {
            session,
            tx: tx_a,
            rx: rx_a,
            sent: Vec::new(),
        },
        InProcChannel {
            session,
            tx: tx_b,
            rx: rx_b,
            sent: Vec::new(),
        },
    )
}

impl Channel for InProcChannel {
    fn session(&self) -> Uuid {
        self.session
    }

    fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        let frame = encode_frame(self.session, msg);
        self.tx
            .send(frame.clone())
            .map_err(|_| TransportError::Closed)?;
        self.sent.push(frame);
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<ProtocolMessage> {
        let frame = self.rx.recv_timeout(timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => TransportError::Timeout,
            RecvTimeoutError::Disconnected => TransportError::Closed,
        })?;
        let (session, msg) = decode_frame(&frame)?;
        check_session(self.session, session)?;
        Ok(msg)
    }

    fn sent_frames(&self) -> &[Vec<u8>] {
        &self.sent
    }
}

/// Channel end over a TCP stream.
#[derive(Debug)]
pub struct TcpChannel {
    session: Uuid,
    stream: TcpStream,
    sent: Vec<Vec<u8>>,
}

impl TcpChannel {
    pub fn new(session: Uuid, stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self {
            session,
            stream,
            sent: Vec::new(),
        })
    }

    /// Accept side: reads the first frame to learn the session id.
    pub fn accept(mut stream: TcpStream, timeout: Duration) -> Result<(Self, ProtocolMessage)> {
        stream.set_nodelay(true)?;
        let (session, msg) = read_frame(&mut stream, timeout)?;
        Ok((
            Self {
                session,
                stream,
                sent: Vec::new(),
            },
            msg,
        ))
    }
}

/// Reads one frame from a stream, honoring `timeout` per read.
pub fn read_frame(stream: &mut TcpStream, timeout: Duration) -> Result<(Uuid, ProtocolMessage)> {
    stream.set_read_timeout(Some(timeout))?;
    let map = |e: io::Error| match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
        io::ErrorKind::UnexpectedEof => TransportError::Closed,
        _ => TransportError::Io(e),
    };
    let mut prefix = [0u8; 4];
    stream.read_exact(&mut prefix).map_err(map)?;
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME {
        return Err(TransportError::Malformed(format!("frame of {len} bytes")));
    }
    let mut body = vec![0u8; len];
    stream.read_exact(&mut body).map_err(map)?;
    decode_body(&body)
}

impl Channel for TcpChannel {
    fn session(&self) -> Uuid {
        self.session
    }

    fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        let frame = encode_frame(self.session, msg);
        self.stream.write_all(&frame)?;
        self.sent.push(frame);
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<ProtocolMessage> {
        let (session, msg) = read_frame(&mut self.stream, timeout)?;
        check_session(self.session, session)?;
        Ok(msg)
    }

    fn sent_frames(&self) -> &[Vec<u8>] {
        &self.sent
    }
}
