// Licensed under the Apache-2.0 license

mod common;

use std::io::{Read, Write};
use std::thread;
use std::time::{Duration, Instant};

use edgegate::broker::{serve, BrokerConfig};
use edgegate::mqtt::{
    encode_packet, ConnectOptions, MqttClient, Packet, Publish, SubackCode,
};

use common::{closed_by_peer, eventually, raw_connect_bytes, raw_session, raw_stream, start_broker};

fn client(port: u16, id: &str) -> MqttClient {
    MqttClient::connect(("127.0.0.1", port), &ConnectOptions::new(id)).unwrap()
}

fn recv_publish(c: &mut MqttClient, within: Duration) -> Option<Publish> {
    let deadline = Instant::now() + within;
    while Instant::now() < deadline {
        match c.recv(Some(deadline - Instant::now())).unwrap() {
            Some(Packet::Publish(p)) => return Some(p),
            Some(_) => continue,
            None => return None,
        }
    }
    None
}

#[test]
fn connect_gets_connack() {
    let broker = start_broker();
    let _s = raw_session(broker.port(), "probe", 30);
    assert!(eventually(Duration::from_secs(2), || broker.client_ids() == ["probe"]));
}

#[test]
fn first_packet_must_be_connect() {
    let broker = start_broker();
    let mut s = raw_stream(broker.port());
    s.write_all(&[0xC0, 0x00]).unwrap();
    assert!(closed_by_peer(&mut s));
    assert!(eventually(Duration::from_secs(2), || broker.stats().protocol_violations == 1));
}

#[test]
fn old_protocol_level_is_refused_with_code_one() {
    let broker = start_broker();
    let mut s = raw_stream(broker.port());
    s.write_all(&raw_connect_bytes("old", 30, 0x02, 3)).unwrap();
    let mut ack = [0u8; 4];
    s.read_exact(&mut ack).unwrap();
    assert_eq!(ack, [0x20, 0x02, 0x00, 0x01]);
    assert!(closed_by_peer(&mut s));
}

#[test]
fn empty_client_id_without_clean_session_is_rejected() {
    let broker = start_broker();
    let mut s = raw_stream(broker.port());
    s.write_all(&raw_connect_bytes("", 30, 0x00, 4)).unwrap();
    let mut ack = [0u8; 4];
    s.read_exact(&mut ack).unwrap();
    assert_eq!(ack, [0x20, 0x02, 0x00, 0x02]);

    let _ok = raw_session(broker.port(), "", 30);
}

#[test]
fn publish_routes_to_matching_subscribers_only() {
    let broker = start_broker();
    let port = broker.port();
    let mut exact = client(port, "exact");
    let mut wild = client(port, "wild");
    let mut other = client(port, "other");
    assert_eq!(exact.subscribe(&["camera/stream"]).unwrap(), [SubackCode::Granted(0)]);
    assert_eq!(wild.subscribe(&["camera/+", "#"]).unwrap(), [SubackCode::Granted(0); 2]);
    other.subscribe(&["telemetry/#"]).unwrap();

    let mut publisher = client(port, "pub");
    publisher.publish("camera/stream", b"frame").unwrap();

    assert_eq!(recv_publish(&mut exact, Duration::from_secs(2)).unwrap().payload, b"frame");
    assert_eq!(recv_publish(&mut wild, Duration::from_secs(2)).unwrap().payload, b"frame");
    // Overlapping filters still deliver once.
    assert!(recv_publish(&mut wild, Duration::from_millis(300)).is_none());
    assert!(recv_publish(&mut other, Duration::from_millis(300)).is_none());
    assert!(eventually(Duration::from_secs(2), || broker.stats().deliveries == 2));
}

#[test]
fn publish_without_subscribers_is_dropped_quietly() {
    let broker = start_broker();
    let mut p = client(broker.port(), "lonely");
    p.publish("nobody/listens", b"x").unwrap();
    p.send(&Packet::Pingreq).unwrap();
    assert_eq!(p.recv(Some(Duration::from_secs(2))).unwrap(), Some(Packet::Pingresp));
    let s = broker.stats();
    assert_eq!((s.publishes_received, s.deliveries), (1, 0));
}

#[test]
fn invalid_filter_gets_failure_code() {
    let broker = start_broker();
    let mut c = client(broker.port(), "bad-filter");
    // The client-side encoder refuses bad filters, so build the packet by hand.
    let mut raw = raw_session(broker.port(), "raw-bad", 30);
    let body = [0x00, 0x07, 0x00, 0x03, b'a', b'#', b'b', 0x00];
    let mut pkt = vec![0x82, body.len() as u8];
    pkt.extend_from_slice(&body);
    raw.write_all(&pkt).unwrap();
    let mut ack = [0u8; 5];
    raw.read_exact(&mut ack).unwrap();
    assert_eq!(ack, [0x90, 0x03, 0x00, 0x07, 0x80]);
    assert_eq!(c.subscribe(&["ok/+"]).unwrap(), [SubackCode::Granted(0)]);
}

#[test]
fn retain_flag_is_cleared_on_delivery() {
    let broker = start_broker();
    let mut sub = client(broker.port(), "sub");
    sub.subscribe(&["r"]).unwrap();
    let mut raw = raw_session(broker.port(), "raw-pub", 30);
    raw.write_all(&encode_packet(&Packet::Publish(Publish {
        topic: "r".into(),
        payload: b"keep".to_vec(),
        retain: true,
    }))
    .unwrap())
    .unwrap();
    let p = recv_publish(&mut sub, Duration::from_secs(2)).unwrap();
    assert!(!p.retain);
    assert_eq!(p.payload, b"keep");
}

#[test]
fn fifo_per_publisher_subscriber_pair() {
    let broker = start_broker();
    let mut sub = client(broker.port(), "fifo-sub");
    sub.subscribe(&["seq"]).unwrap();
    let mut publisher = client(broker.port(), "fifo-pub");
    for i in 0u32..1_000 {
        publisher.publish("seq", &i.to_be_bytes()).unwrap();
    }
    let mut got = Vec::new();
    while got.len() < 1_000 {
        match recv_publish(&mut sub, Duration::from_secs(5)) {
            Some(p) => got.push(u32::from_be_bytes(p.payload[..4].try_into().unwrap())),
            None => break,
        }
    }
    assert_eq!(got, (0..1_000).collect::<Vec<_>>());
}

#[test]
fn reconnect_with_same_id_supersedes() {
    let broker = start_broker();
    let mut first = raw_session(broker.port(), "cam", 30);
    let _second = raw_session(broker.port(), "cam", 30);
    assert!(closed_by_peer(&mut first));
    assert!(eventually(Duration::from_secs(2), || {
        let s = broker.stats();
        s.sessions_superseded == 1 && s.sessions_live == 1
    }));
    assert_eq!(broker.client_ids(), ["cam"]);
}

#[test]
fn superseded_session_loses_its_subscriptions() {
    let broker = start_broker();
    let mut old = client(broker.port(), "dup");
    old.subscribe(&["t"]).unwrap();
    let mut new = client(broker.port(), "dup");
    assert!(eventually(Duration::from_secs(2), || broker.subscribed_sessions() == 0));
    new.subscribe(&["t"]).unwrap();
    let mut p = client(broker.port(), "p");
    p.publish("t", b"1").unwrap();
    assert!(recv_publish(&mut new, Duration::from_secs(2)).is_some());
    assert!(eventually(Duration::from_secs(1), || broker.stats().deliveries == 1));
    assert!(recv_publish(&mut new, Duration::from_millis(200)).is_none());
    assert_eq!(broker.stats().deliveries, 1);
}

#[test]
fn idle_session_expires_after_one_and_a_half_keep_alive() {
    let broker = start_broker();
    let start = Instant::now();
    let mut s = raw_session(broker.port(), "sleepy", 1);
    s.set_read_timeout(Some(Duration::from_secs(4))).unwrap();
    assert!(closed_by_peer(&mut s));
    let waited = start.elapsed();
    assert!(waited >= Duration::from_millis(1400), "{waited:?}");
    assert!(waited < Duration::from_millis(3000), "{waited:?}");
    assert!(eventually(Duration::from_secs(1), || broker.stats().sessions_expired == 1));
}

#[test]
fn pings_keep_a_session_alive() {
    let broker = start_broker();
    let mut s = raw_session(broker.port(), "pinger", 1);
    for _ in 0..5 {
        thread::sleep(Duration::from_millis(600));
        s.write_all(&[0xC0, 0x00]).unwrap();
        let mut resp = [0u8; 2];
        s.read_exact(&mut resp).unwrap();
        assert_eq!(resp, [0xD0, 0x00]);
    }
    assert_eq!(broker.stats().sessions_expired, 0);
}

#[test]
fn slow_subscriber_drops_instead_of_blocking() {
    let broker = serve(BrokerConfig {
        max_outbound_bytes: 64 * 1024,
        ..BrokerConfig::new("127.0.0.1", 0)
    })
    .unwrap();
    // Never reads: its socket buffers fill, then its outbox does.
    let mut stalled = client(broker.port(), "stalled");
    stalled.subscribe(&["big"]).unwrap();
    let mut fast = client(broker.port(), "fast");
    fast.subscribe(&["big"]).unwrap();

    // Two frames fit under the cap, so the reader that keeps up never drops.
    let payload = vec![0xA5u8; 16 * 1024];
    let mut publisher = client(broker.port(), "pub");
    let start = Instant::now();
    for _ in 0..1000 {
        publisher.publish("big", &payload).unwrap();
        assert!(recv_publish(&mut fast, Duration::from_secs(5)).is_some(), "{:?}", broker.stats());
    }
    assert!(start.elapsed() < Duration::from_secs(20));
    assert!(eventually(Duration::from_secs(1), || {
        let s = broker.stats();
        s.deliveries + s.dropped_deliveries == 2000
    }));
    let s = broker.stats();
    assert_eq!(s.publishes_received, 1000);
    assert!(s.dropped_deliveries > 0, "{s:?}");
}

#[test]
fn frame_larger_than_cap_reaches_an_idle_subscriber() {
    let broker = serve(BrokerConfig {
        max_outbound_bytes: 1024,
        ..BrokerConfig::new("127.0.0.1", 0)
    })
    .unwrap();
    let mut sub = client(broker.port(), "sub");
    sub.subscribe(&["big"]).unwrap();
    let mut publisher = client(broker.port(), "pub");
    publisher.publish("big", &vec![1u8; 10_000]).unwrap();
    assert_eq!(recv_publish(&mut sub, Duration::from_secs(2)).unwrap().payload.len(), 10_000);
}

#[test]
fn oversized_packet_closes_the_connection() {
    let broker = serve(BrokerConfig {
        max_packet_size: 1000,
        ..BrokerConfig::new("127.0.0.1", 0)
    })
    .unwrap();
    let mut s = raw_session(broker.port(), "huge", 30);
    s.write_all(&[0x30, 0xFF, 0xFF, 0x7F]).unwrap();
    assert!(closed_by_peer(&mut s));
}

#[test]
fn shutdown_closes_live_sessions() {
    let broker = start_broker();
    let mut s = raw_session(broker.port(), "c", 30);
    let stats = broker.shutdown();
    assert_eq!(stats.connections_accepted, 1);
    assert!(closed_by_peer(&mut s));
}
