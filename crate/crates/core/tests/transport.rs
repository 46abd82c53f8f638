use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use qselftest::entcf::{gen_keypair, EntcfParams, Family};
use qselftest::protocol::{ProtocolMessage, RoundType};
use qselftest::transport::{
    decode_frame, encode_frame, inproc_pair, Channel, TcpChannel, TransportError, MAX_FRAME, WIRE_VERSION,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

const WAIT: Duration = Duration::from_secs(5);

fn sample_messages(seed: u64) -> Vec<ProtocolMessage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, _) = gen_keypair(Family::G, &EntcfParams::ideal(2), &mut rng).unwrap();
    vec![
        ProtocolMessage::Keys { keys: vec![k.clone(), k] },
        ProtocolMessage::Images { y: vec![3, u64::MAX] },
        ProtocolMessage::RoundType { round: RoundType::Hadamard },
        ProtocolMessage::PreimageAnswer { b: vec![0, 1], x: vec![2, 3] },
        ProtocolMessage::HadamardD { d: vec![1, 0] },
        ProtocolMessage::Question { q: 3 },
        ProtocolMessage::FinalAnswer { v: vec![1, 1] },
        ProtocolMessage::Verdict { accept: true, reason: "C.q0.accept".into() },
    ]
}

#[test]
fn frame_header_layout() {
    let id = Uuid::from_u128(0x0123_4567_89ab_cdef_0123_4567_89ab_cdef);
    let msg = ProtocolMessage::Question { q: 2 };
    let frame = encode_frame(id, &msg);
    let body = &frame[4..];
    assert_eq!(u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize, body.len());
    assert_eq!(body[0], WIRE_VERSION);
    assert_eq!(&body[1..17], id.as_bytes());
    assert_eq!(body[17], 6);
    assert_eq!(std::str::from_utf8(&body[18..]).unwrap(), r#"{"q":2,"type":"question"}"#);
}

#[test]
fn every_variant_round_trips() {
    let id = Uuid::from_u128(7);
    for msg in sample_messages(1) {
        assert_eq!(decode_frame(&encode_frame(id, &msg)).unwrap(), (id, msg));
    }
}

#[test]
fn damaged_frames_are_refused() {
    let id = Uuid::from_u128(9);
    let frame = encode_frame(id, &ProtocolMessage::FinalAnswer { v: vec![0, 1] });
    for cut in 0..frame.len() {
        assert!(decode_frame(&frame[..cut]).is_err(), "prefix of {cut} bytes decoded");
    }
    let mut wrong_type = frame.clone();
    wrong_type[4 + 17] = 5;
    assert!(matches!(decode_frame(&wrong_type), Err(TransportError::Malformed(_))));
    let mut wrong_version = frame.clone();
    wrong_version[4] = 0x02;
    assert!(matches!(decode_frame(&wrong_version), Err(TransportError::Version(2))));

    // a payload with extra whitespace is valid JSON but not canonical
    let payload = r#"{"type": "final_answer","v":[0,1]}"#;
    let mut loose = Vec::new();
    loose.extend_from_slice(&((18 + payload.len()) as u32).to_be_bytes());
    loose.push(WIRE_VERSION);
    loose.extend_from_slice(id.as_bytes());
    loose.push(7);
    loose.extend_from_slice(payload.as_bytes());
    assert!(decode_frame(&loose).is_err());
}

#[test]
fn inproc_channels_deliver_in_order_and_time_out() {
    let id = Uuid::from_u128(11);
    let (mut a, mut b) = inproc_pair(id);
    let msgs = sample_messages(2);
    for m in &msgs {
        a.send(m).unwrap();
    }
    for m in &msgs {
        assert_eq!(&b.recv(WAIT).unwrap(), m);
    }
    assert!(matches!(b.recv(Duration::from_millis(20)), Err(TransportError::Timeout)));
    assert_eq!(a.sent_frames().len(), msgs.len());
    drop(a);
    assert!(matches!(b.recv(WAIT), Err(TransportError::Closed)));
}

#[test]
fn tcp_and_inproc_send_identical_bytes() {
    let id = Uuid::from_u128(0xfeed);
    let msgs = sample_messages(3);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let expected = msgs.clone();
    let server = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let (mut chan, first) = TcpChannel::accept(stream, WAIT).unwrap();
        let mut got = vec![first];
        for _ in 1..expected.len() {
            got.push(chan.recv(WAIT).unwrap());
        }
        chan.send(&ProtocolMessage::Question { q: 1 }).unwrap();
        got
    });
    let mut client = TcpChannel::new(id, std::net::TcpStream::connect(addr).unwrap()).unwrap();
    for m in &msgs {
        client.send(m).unwrap();
    }
    assert_eq!(client.recv(WAIT).unwrap(), ProtocolMessage::Question { q: 1 });
    assert_eq!(server.join().unwrap(), msgs);

    let (mut a, _b) = inproc_pair(id);
    for m in &msgs {
        a.send(m).unwrap();
    }
    assert_eq!(client.sent_frames(), a.sent_frames());
}

#[test]
fn tcp_rejects_frames_from_another_session() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let (mut chan, _) = TcpChannel::accept(stream, WAIT).unwrap();
        chan.recv(WAIT)
    });
    let stream = std::net::TcpStream::connect(addr).unwrap();
    let mut first = TcpChannel::new(Uuid::from_u128(1), stream.try_clone().unwrap()).unwrap();
    first.send(&ProtocolMessage::Question { q: 0 }).unwrap();
    let mut other = TcpChannel::new(Uuid::from_u128(2), stream).unwrap();
    other.send(&ProtocolMessage::Question { q: 0 }).unwrap();
    assert!(matches!(server.join().unwrap(), Err(TransportError::Session { .. })));
}

#[test]
fn oversized_length_prefix_is_refused_before_reading() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        qselftest::transport::read_frame(&mut stream, WAIT)
    });
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    std::io::Write::write_all(&mut stream, &((MAX_FRAME + 1) as u32).to_be_bytes()).unwrap();
    assert!(server.join().unwrap().is_err());
}

proptest! {
    #[test]
    fn arbitrary_messages_round_trip(
        id in any::<u128>(),
        y in prop::collection::vec(any::<u64>(), 0..6),
        b in prop::collection::vec(0u8..2, 0..6),
        x in prop::collection::vec(any::<u32>(), 0..6),
        reason in "[a-zA-Z0-9._ ]{0,24}",
        accept in any::<bool>(),
    ) {
        let id = Uuid::from_u128(id);
        let msgs = [
            ProtocolMessage::Images { y },
            ProtocolMessage::PreimageAnswer { b: b.clone(), x: x.clone() },
            ProtocolMessage::HadamardD { d: x },
            ProtocolMessage::FinalAnswer { v: b },
            ProtocolMessage::Verdict { accept, reason },
        ];
        for m in msgs {
            let frame = encode_frame(id, &m);
            prop_assert_eq!(decode_frame(&frame).unwrap(), (id, m.clone()));
            prop_assert_eq!(encode_frame(id, &decode_frame(&frame).unwrap().1), frame);
        }
    }

    #[test]
    fn random_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode_frame(&bytes);
    }
}
