mod common;

use std::net::TcpListener;
use std::time::Duration;

use common::{agent, agent_footprint, ex, malformed_frames, registration, without_agent, Harness};
use kbauthz_core::wire::{serve, Client, ClientError, MessageType, TcpTransport, Transport, WireMessage};
use kbauthz_core::{Term, Triple};
use proptest::prelude::*;

fn facts() -> Vec<Triple> {
    vec![Triple::from_parts(ex("cell1"), ex("servedBy"), Term::Iri(ex("gnb1"))).unwrap()]
}

/// A fixed conversation covering permits, open denials, a malformed body
/// and a server-terminated session.
fn script(h: &Harness) -> Vec<(MessageType, String)> {
    vec![
        (MessageType::Query, "ex:cell1 ex:servedBy ?g".into()),
        (MessageType::Hello, format!("v1\n{}", h.credential("g1", "grounder"))),
        (
            MessageType::Register,
            registration("g1", "UserPlaneGrounding", &["cell1", "gnb1"], &["latencyMs", "servedBy"]),
        ),
        (MessageType::Assert, "ex:cell1 ex:latencyMs \"42\" .".into()),
        (MessageType::Query, "ex:cell1 ?p ?o".into()),
        (MessageType::Assert, "ex:gnb2 ex:latencyMs \"1\" .".into()),
        (MessageType::Retract, "ex:cell1 ex:latencyMs \"42\" .".into()),
        (MessageType::Query, "GRAPH <http://example.org/kb#intents>\nex:cell1 ?p ?o".into()),
        (MessageType::Assert, "ex:cell1 ex:latencyMs".into()),
    ]
}

fn transcript<T: Transport>(mut client: Client<T>, script: &[(MessageType, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for (kind, body) in script {
        match client.call(*kind, body) {
            Ok(reply) => out.push(format!("{reply:?}")),
            Err(e) => {
                out.push(format!("client error: {e}"));
                break;
            }
        }
    }
    out.push(format!("terminated: {:?}", client.terminated()));
    out
}

#[test]
fn loopback_and_tcp_produce_identical_transcripts() {
    let a = Harness::with_facts(false, &facts());
    let via_loopback = transcript(a.client(), &script(&a));

    let b = Harness::with_facts(false, &facts());
    let server = serve("127.0.0.1:0", b.controller.clone()).unwrap();
    let tcp = Client::new(TcpTransport::connect(server.local_addr()).unwrap());
    let via_tcp = transcript(tcp, &script(&b));
    server.shutdown();

    assert_eq!(via_loopback, via_tcp);
    assert!(via_loopback.last().unwrap().contains("MALFORMED_REQUEST"), "{via_loopback:#?}");
    assert_eq!(a.audit.records(), b.audit.records());
    assert_eq!(a.dataset(), b.dataset());
}

#[derive(Debug, Clone)]
enum Op {
    Query(&'static str),
    Assert(&'static str),
    Retract(&'static str),
    Malformed(MessageType),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        prop::sample::select(vec![
            "ex:cell1 ?p ?o",
            "ex:gnb2 ?p ?o",
            "?s ex:servedBy ex:ANY",
            "ex:cell1 ex:congestionLevel ?c"
        ])
        .prop_map(Op::Query),
        prop::sample::select(vec![
            "ex:cell1 ex:latencyMs \"3\" .",
            "ex:gnb1 ex:latencyMs \"4\" .",
            "ex:gnb2 ex:latencyMs \"5\" .",
            "ex:cell1 ex:congestionLevel \"x\" .",
        ])
        .prop_map(Op::Assert),
        prop::sample::select(vec!["ex:cell1 ex:latencyMs \"3\" .", "ex:cell1 ex:servedBy ex:gnb1 ."])
            .prop_map(Op::Retract),
        prop::sample::select(vec![MessageType::Query, MessageType::Assert, MessageType::Retract])
            .prop_map(Op::Malformed),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_data_request_is_decided_exactly_once(strict in any::<bool>(), ops in prop::collection::vec(op(), 1..12)) {
        let h = Harness::with_facts(strict, &facts());
        let mut c = h.grounder("g1", &["cell1", "gnb1"], &["latencyMs", "servedBy"]);
        prop_assert_eq!(h.decisions(), 0);
        for op in ops {
            if c.terminated().is_some() {
                break;
            }
            let before = h.decisions();
            let dataset = h.dataset();
            let (reply, decided) = match op {
                Op::Query(q) => (c.query(q).unwrap().0, true),
                Op::Assert(t) => (c.assert(t).unwrap(), true),
                Op::Retract(t) => (c.retract(t).unwrap(), true),
                Op::Malformed(kind) => (c.call(kind, "ex:cell1 ex:latencyMs").unwrap(), false),
            };
            prop_assert_eq!(h.decisions() - before, u64::from(decided));
            if !decided {
                prop_assert_eq!(reply.code(), "MALFORMED_REQUEST");
                prop_assert!(c.terminated().is_some());
            }
            if !reply.is_ok() {
                let mut expected = dataset;
                if c.terminated().is_some() {
                    expected = without_agent(expected, &agent("g1"));
                }
                prop_assert_eq!(h.dataset(), expected, "denied request changed the knowledge base");
            }
        }
    }
}

#[test]
fn malformed_frames_terminate_without_writing() {
    for (name, bytes) in malformed_frames() {
        let h = Harness::with_facts(false, &facts());
        let mut c = h.grounder("g1", &["cell1", "gnb1"], &["latencyMs"]);
        let baseline = without_agent(h.dataset(), &agent("g1"));
        let replies = c.send_raw(&bytes).unwrap();
        let kinds: Vec<_> = replies.iter().map(|m| (m.kind, m.correlation_id)).collect();
        assert_eq!(kinds, [(MessageType::Error, 0), (MessageType::Bye, 0)], "{name}");
        assert!(replies[0].body.starts_with("MALFORMED_FRAME "), "{name}: {}", replies[0].body);
        assert!(c.terminated().is_some(), "{name}");
        assert_eq!(h.dataset(), baseline, "{name}");
        assert_eq!(h.decisions(), 0, "{name}");
    }
}

#[test]
fn truncated_frame_is_reported_at_end_of_input() {
    for cut in [1, 7, 11, 20] {
        let h = Harness::with_facts(false, &facts());
        let mut c = h.grounder("g1", &["cell1", "gnb1"], &["latencyMs"]);
        let baseline = without_agent(h.dataset(), &agent("g1"));
        let frame = WireMessage::new(MessageType::Assert, 3, "ex:cell1 ex:latencyMs \"42\" .").encode();
        assert!(c.send_raw(&frame[..cut]).unwrap().is_empty());
        let replies = c.finish_sending().unwrap();
        assert_eq!(replies.len(), 2, "cut {cut}");
        assert_eq!((replies[0].kind, replies[0].correlation_id), (MessageType::Error, 0));
        assert!(replies[0].body.starts_with("MALFORMED_FRAME"));
        assert_eq!(replies[1].kind, MessageType::Bye);
        assert_eq!(h.dataset(), baseline);
        assert_eq!(h.decisions(), 0);
    }
}

#[test]
fn truncated_frame_over_tcp() {
    let h = Harness::with_facts(false, &facts());
    let server = serve("127.0.0.1:0", h.controller.clone()).unwrap();
    let mut c = Client::new(TcpTransport::connect(server.local_addr()).unwrap()).with_timeout(Duration::from_secs(2));
    assert!(c.hello(&h.credential("g1", "grounder")).unwrap().is_ok());
    assert!(c.register(&registration("g1", "UserPlaneGrounding", &["cell1"], &["latencyMs"])).unwrap().is_ok());
    c.send_raw(b"ASSERT 3 40\nex:cell1").unwrap();
    let replies = c.finish_sending().unwrap();
    let kinds: Vec<_> = replies.iter().map(|m| m.kind).collect();
    assert_eq!(kinds, [MessageType::Error, MessageType::Bye]);
    server.shutdown();
    assert_eq!(agent_footprint(&h.dataset(), &agent("g1")), 0);
}

#[test]
fn complete_frames_before_garbage_are_still_served() {
    let h = Harness::with_facts(false, &facts());
    let mut c = h.grounder("g1", &["cell1", "gnb1"], &["latencyMs"]);
    let mut bytes = WireMessage::new(MessageType::Assert, 3, "ex:cell1 ex:latencyMs \"42\" .").encode();
    bytes.extend_from_slice(b"BOGUS\n");
    let replies = c.send_raw(&bytes).unwrap();
    let kinds: Vec<_> = replies.iter().map(|m| (m.kind, m.correlation_id)).collect();
    assert_eq!(kinds, [(MessageType::Ok, 3), (MessageType::Error, 0), (MessageType::Bye, 0)]);
    assert_eq!(h.decisions(), 1);
}

#[test]
fn correlation_ids_must_increase() {
    for id in [2, 1] {
        let h = Harness::new(false);
        let mut c = h.grounder("g1", &["cell1"], &["latencyMs"]);
        let bytes = WireMessage::new(MessageType::Query, id, "ex:cell1 ex:latencyMs ?v").encode();
        let replies = c.send_raw(&bytes).unwrap();
        let kinds: Vec<_> = replies.iter().map(|m| (m.kind, m.correlation_id)).collect();
        assert_eq!(kinds, [(MessageType::Error, id), (MessageType::Bye, id)]);
        assert!(replies[0].body.starts_with("PROTOCOL_VIOLATION"));
        assert!(c.terminated().is_some());
        assert_eq!(agent_footprint(&h.dataset(), &agent("g1")), 0);
    }
}

#[test]
fn server_message_types_from_a_client_are_violations() {
    for kind in [MessageType::Ok, MessageType::Deny, MessageType::Error] {
        let h = Harness::new(false);
        let mut c = h.grounder("g1", &["cell1"], &["latencyMs"]);
        let replies = c.send_raw(&WireMessage::new(kind, 9, "x").encode()).unwrap();
        assert_eq!(replies.len(), 2);
        assert!(replies[0].body.starts_with("PROTOCOL_VIOLATION"), "{kind}");
        assert_eq!(agent_footprint(&h.dataset(), &agent("g1")), 0);
    }
}

#[test]
fn unsupported_version_is_an_error() {
    let h = Harness::new(false);
    let mut c = h.client();
    let reply = c.call(MessageType::Hello, &format!("v2\n{}", h.credential("g1", "grounder"))).unwrap();
    assert_eq!(reply.code(), "UNSUPPORTED_VERSION");
    assert!(c.terminated().is_some());
}

#[test]
fn client_times_out_against_a_silent_peer() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let holder = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        std::thread::sleep(Duration::from_millis(800));
        drop(stream);
    });
    let mut c = Client::new(TcpTransport::connect(addr).unwrap()).with_timeout(Duration::from_millis(150));
    let started = std::time::Instant::now();
    let err = c.hello("anything").unwrap_err();
    assert!(matches!(err, ClientError::Timeout(_)), "{err}");
    assert!(started.elapsed() < Duration::from_millis(700));
    holder.join().unwrap();
}

#[test]
fn server_shutdown_ends_open_sessions() {
    let h = Harness::new(false);
    let server = serve("127.0.0.1:0", h.controller.clone()).unwrap();
    let mut c = Client::new(TcpTransport::connect(server.local_addr()).unwrap());
    assert!(c.hello(&h.credential("g1", "grounder")).unwrap().is_ok());
    assert!(c.register(&registration("g1", "UserPlaneGrounding", &["cell1"], &["latencyMs"])).unwrap().is_ok());
    assert!(agent_footprint(&h.dataset(), &agent("g1")) > 0);
    server.shutdown();
    assert_eq!(agent_footprint(&h.dataset(), &agent("g1")), 0);
}
