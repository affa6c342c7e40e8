// Licensed under the Apache-2.0 license

//! Authenticates, streams paced synthetic frames through the embedded broker
//! and checks what a subscriber received.
//!
//! ```bash
//! cargo run -p edgegate --example loopback_stream -- 14 28
//! ```

use std::thread;
use std::time::Duration;

use edgegate::broker::{serve, BrokerConfig};
use edgegate::enclave::{Enclave, LatencyModel};
use edgegate::keystore::{CandidateKey, GatewayConfig, KeyLabel};
use edgegate::pipeline::{publish_stream, PipelineError, StreamBound};
use edgegate::subscriber::Subscriber;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let fps: u32 = args.next().map_or(Ok(14), |s| s.parse())?;
    let frames: u64 = args.next().map_or(Ok(28), |s| s.parse())?;

    let broker = serve(BrokerConfig::new("127.0.0.1", 0))?;
    let mut config = GatewayConfig::default();
    config.mqtt.host = "127.0.0.1".into();
    config.mqtt.port = broker.port();
    config.camera.width = 640;
    config.camera.height = 480;
    config.camera.fps = fps;

    let sub = Subscriber::connect("127.0.0.1", broker.port(), &config.mqtt.topic, "viewer")?;
    let viewer = thread::spawn(move || {
        sub.collect(
            StreamBound {
                frames: Some(frames),
                duration: Some(Duration::from_secs(60)),
            },
            None,
            None,
        )
    });

    let secret = [0x42u8; 32];
    let mut enclave = Enclave::provision_bytes(&secret, LatencyModel::pipelined())?;

    let wrong = CandidateKey::new(vec![0x24; 32], KeyLabel::Wrong)?;
    match publish_stream(&config, &mut enclave, &wrong, StreamBound::frames(frames)) {
        Err(PipelineError::AuthorizationRefused { verdict }) => {
            println!("wrong key refused after {} cycles, nothing sent", verdict.cycles)
        }
        other => println!("unexpected: {other:?}"),
    }

    let key = CandidateKey::new(secret.to_vec(), KeyLabel::Correct)?;
    let report = publish_stream(&config, &mut enclave, &key, StreamBound::frames(frames))?;
    let delivery = viewer.join().expect("viewer thread")?;

    println!(
        "published {} frames, {:.2} fps (target {fps}), {} payload bytes",
        report.throttle.frames_sent, report.throttle.measured_fps, report.payload_bytes
    );
    println!(
        "received {} frames, {:.2} fps, {} out of order, hashes match: {}",
        delivery.frames_received,
        delivery.measured_fps.unwrap_or(0.0),
        delivery.out_of_order_count,
        delivery.digests == report.digests
    );
    println!("{:?}", broker.shutdown());
    Ok(())
}
