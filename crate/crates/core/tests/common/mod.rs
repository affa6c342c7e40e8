// Licensed under the Apache-2.0 license

//! Independent reference implementations used as test oracles, plus small
//! helpers shared by the integration tests.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use edgegate::broker::{serve, BrokerConfig, BrokerHandle};

/// Remaining-length encoding written straight from the base-128 definition.
pub fn ref_remaining_length(mut x: usize) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let mut byte = (x % 128) as u8;
        x /= 128;
        if x > 0 {
            byte |= 128;
        }
        out.push(byte);
        if x == 0 {
            return out;
        }
    }
}

const B64: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

/// Padded standard base64, bit by bit.
pub fn ref_base64(bytes: &[u8]) -> String {
    let mut bits = Vec::with_capacity(bytes.len() * 8);
    for b in bytes {
        for i in (0..8).rev() {
            bits.push((b >> i) & 1);
        }
    }
    let mut out = String::new();
    for chunk in bits.chunks(6) {
        let mut v = 0usize;
        for i in 0..6 {
            v = (v << 1) | *chunk.get(i).unwrap_or(&0) as usize;
        }
        out.push(B64[v] as char);
    }
    while !out.len().is_multiple_of(4) {
        out.push('=');
    }
    out
}

pub fn ref_hex_decode(s: &str) -> Vec<u8> {
    let nibble = |c: u8| match c {
        b'0'..=b'9' => c - b'0',
        b'a'..=b'f' => c - b'a' + 10,
        b'A'..=b'F' => c - b'A' + 10,
        _ => panic!("not hex: {c}"),
    };
    s.as_bytes()
        .chunks(2)
        .map(|p| (nibble(p[0]) << 4) | nibble(p[1]))
        .collect()
}

/// Recursive level matcher over already-split levels.
fn ref_match_levels(filter: &[&str], topic: &[&str]) -> bool {
    match (filter.first(), topic.first()) {
        (Some(&"#"), _) => true,
        (None, None) => true,
        (Some(&"+"), Some(_)) => ref_match_levels(&filter[1..], &topic[1..]),
        (Some(f), Some(t)) if f == t => ref_match_levels(&filter[1..], &topic[1..]),
        _ => false,
    }
}

pub fn ref_topic_match(filter: &str, topic: &str) -> bool {
    if topic.starts_with('$') && (filter.starts_with('+') || filter.starts_with('#')) {
        return false;
    }
    let f: Vec<&str> = filter.split('/').collect();
    let t: Vec<&str> = topic.split('/').collect();
    ref_match_levels(&f, &t)
}

pub fn start_broker() -> BrokerHandle {
    serve(BrokerConfig::new("127.0.0.1", 0)).expect("broker binds an ephemeral port")
}

/// Hand-assembled CONNECT for protocol level 4.
pub fn raw_connect_bytes(client_id: &str, keep_alive: u16, flags: u8, level: u8) -> Vec<u8> {
    let mut body = vec![0x00, 0x04, b'M', b'Q', b'T', b'T', level, flags];
    body.extend_from_slice(&keep_alive.to_be_bytes());
    body.extend_from_slice(&(client_id.len() as u16).to_be_bytes());
    body.extend_from_slice(client_id.as_bytes());
    let mut out = vec![0x10];
    out.extend(ref_remaining_length(body.len()));
    out.extend(body);
    out
}

pub fn raw_stream(port: u16) -> TcpStream {
    let s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    s
}

/// Connects with a raw socket and consumes the 4-byte CONNACK.
pub fn raw_session(port: u16, client_id: &str, keep_alive: u16) -> TcpStream {
    let mut s = raw_stream(port);
    s.write_all(&raw_connect_bytes(client_id, keep_alive, 0x02, 4))
        .unwrap();
    let mut ack = [0u8; 4];
    s.read_exact(&mut ack).unwrap();
    assert_eq!(ack, [0x20, 0x02, 0x00, 0x00]);
    s
}

/// True once the peer has closed: a read returns zero bytes or a reset.
pub fn closed_by_peer(s: &mut TcpStream) -> bool {
    let mut buf = [0u8; 64];
    loop {
        match s.read(&mut buf) {
            Ok(0) => return true,
            Ok(_) => continue,
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                return false
            }
            Err(_) => return true,
        }
    }
}

/// Polls `cond` until it holds or `timeout` passes.
pub fn eventually(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = std::time::Instant::now() + timeout;
    while std::time::Instant::now() < deadline {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    cond()
}

pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// Starts an in-process rumqttd broker on a free port.
pub fn start_rumqttd() -> u16 {
    let port = free_port();
    let text = format!(
        r#"
id = 0
[router]
id = 0
max_connections = 100
max_outgoing_packet_count = 200
max_segment_size = 104857600
max_segment_count = 10
[v4.1]
name = "v4-1"
listen = "127.0.0.1:{port}"
next_connection_delay_ms = 1
    [v4.1.connections]
    connection_timeout_ms = 60000
    max_payload_size = 20480000
    max_inflight_count = 100
    dynamic_filters = true
"#
    );
    let config: rumqttd::Config = toml::from_str(&text).unwrap();
    std::thread::spawn(move || {
        let mut broker = rumqttd::Broker::new(config);
        let _ = broker.start();
    });
    assert!(eventually(Duration::from_secs(5), || {
        std::net::TcpStream::connect(("127.0.0.1", port)).is_ok()
    }));
    port
}
