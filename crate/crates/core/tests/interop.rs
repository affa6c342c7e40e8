// Licensed under the Apache-2.0 license

//! Interoperability against an independent MQTT 3.1.1 implementation
//! (rumqttd broker, rumqttc client).

mod common;

use std::thread;
use std::time::{Duration, Instant};

use edgegate::enclave::{Enclave, LatencyModel};
use edgegate::keystore::{CandidateKey, GatewayConfig, KeyLabel};
use edgegate::pipeline::{decode_payload, frame_digest, publish_stream, StreamBound, SyntheticSource};
use edgegate::subscriber::Subscriber;
use rumqttc::{Client, Event, MqttOptions, Packet as RPacket, QoS};

use common::start_rumqttd;

const SECRET: [u8; 32] = [0xA7; 32];

fn gateway(port: u16, topic: &str) -> GatewayConfig {
    let mut c = GatewayConfig::default();
    c.mqtt.host = "127.0.0.1".into();
    c.mqtt.port = port;
    c.mqtt.topic = topic.into();
    c.camera.width = 64;
    c.camera.height = 48;
    c.camera.fps = 50;
    c
}

fn publish_frames(port: u16, topic: &str, n: u64) -> Vec<[u8; 32]> {
    let mut enclave = Enclave::provision_bytes(&SECRET, LatencyModel::pipelined()).unwrap();
    let key = CandidateKey::new(SECRET.to_vec(), KeyLabel::Correct).unwrap();
    publish_stream(&gateway(port, topic), &mut enclave, &key, StreamBound::frames(n))
        .unwrap()
        .digests
}

fn expected_digests(n: u64) -> Vec<[u8; 32]> {
    (0..n)
        .map(|i| frame_digest(&SyntheticSource::frame_bytes(i, 64, 48)))
        .collect()
}

#[test]
fn pipeline_streams_through_an_external_broker() {
    let port = start_rumqttd();
    let sub = Subscriber::connect("127.0.0.1", port, "camera/#", "edgegate-sub").unwrap();
    let collector = thread::spawn(move || {
        sub.collect(
            StreamBound {
                frames: Some(20),
                duration: Some(Duration::from_secs(15)),
            },
            None,
            None,
        )
    });
    let sent = publish_frames(port, "camera/stream", 20);
    let got = collector.join().unwrap().unwrap();
    assert_eq!(sent, expected_digests(20));
    assert_eq!(got.frames_received, 20);
    assert_eq!(got.digests, sent);
    assert_eq!(got.out_of_order_count, 0);
}

/// Waits for SUBACK, then hands back the connection for reading publishes.
fn rumqttc_subscriber(port: u16, filter: &str) -> (Client, rumqttc::Connection) {
    let mut opts = MqttOptions::new("rumqttc-sub", "127.0.0.1", port);
    opts.set_keep_alive(Duration::from_secs(5));
    let (client, mut conn) = Client::new(opts, 64);
    client.subscribe(filter, QoS::AtMostOnce).unwrap();
    for event in conn.iter() {
        if let Event::Incoming(RPacket::SubAck(_)) = event.unwrap() {
            break;
        }
    }
    (client, conn)
}

#[test]
fn external_client_subscribes_through_the_embedded_broker() {
    let broker = common::start_broker();
    let port = broker.port();
    let (_client, mut conn) = rumqttc_subscriber(port, "camera/+");

    let publisher = thread::spawn(move || publish_frames(port, "camera/stream", 20));
    let mut got = Vec::new();
    let deadline = Instant::now() + Duration::from_secs(15);
    while got.len() < 20 && Instant::now() < deadline {
        match conn.recv_timeout(Duration::from_millis(500)) {
            Ok(Ok(Event::Incoming(RPacket::Publish(p)))) => {
                assert_eq!(p.topic, "camera/stream");
                got.push(frame_digest(&decode_payload(&p.payload).unwrap()));
            }
            Ok(Ok(_)) | Err(_) => {}
            Ok(Err(e)) => panic!("external client error: {e}"),
        }
    }
    let sent = publisher.join().unwrap();
    assert_eq!(got, sent);
}

#[test]
fn external_client_publishes_to_the_embedded_broker() {
    let broker = common::start_broker();
    let port = broker.port();
    let sub = Subscriber::connect("127.0.0.1", port, "ext/#", "edgegate-sub").unwrap();
    let collector = thread::spawn(move || sub.collect(StreamBound::frames(5), None, None));

    let (client, mut conn) = Client::new(MqttOptions::new("rumqttc-pub", "127.0.0.1", port), 16);
    let frames: Vec<Vec<u8>> = (0..5).map(|i| SyntheticSource::frame_bytes(i, 16, 16)).collect();
    for f in &frames {
        let text = edgegate::pipeline::encode_bytes(f).text;
        client.publish("ext/frames", QoS::AtMostOnce, false, text.into_bytes()).unwrap();
    }
    let driver = thread::spawn(move || {
        for event in conn.iter() {
            if event.is_err() {
                break;
            }
        }
    });
    let got = collector.join().unwrap().unwrap();
    assert_eq!(got.digests, frames.iter().map(|f| frame_digest(f)).collect::<Vec<_>>());
    client.disconnect().unwrap();
    driver.join().unwrap();
}
