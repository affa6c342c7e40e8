// Licensed under the Apache-2.0 license

//! Starts the embedded broker on an ephemeral port, wires two clients to
//! it and prints the broker counters.
//!
//! ```bash
//! cargo run -p edgegate --example embedded_broker
//! ```

use std::time::Duration;

use edgegate::broker::{serve, BrokerConfig};
use edgegate::mqtt::{ConnectOptions, MqttClient, Packet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let broker = serve(BrokerConfig::new("127.0.0.1", 0))?;
    println!("broker on {}", broker.local_addr());

    let addr = ("127.0.0.1", broker.port());
    let mut sub = MqttClient::connect(addr, &ConnectOptions::new("viewer"))?;
    println!("suback: {:?}", sub.subscribe(&["sensors/+/temp", "alerts/#"])?);

    let mut publisher = MqttClient::connect(addr, &ConnectOptions::new("sensor-hub"))?;
    for (topic, body) in [
        ("sensors/kitchen/temp", "21.5"),
        ("sensors/kitchen/humidity", "40"),
        ("alerts/door/open", "front"),
    ] {
        publisher.publish(topic, body.as_bytes())?;
    }

    while let Some(packet) = sub.recv(Some(Duration::from_millis(300)))? {
        if let Packet::Publish(p) = packet {
            println!("viewer got {} = {}", p.topic, String::from_utf8_lossy(&p.payload));
        }
    }

    publisher.disconnect()?;
    sub.disconnect()?;
    println!("{:?}", broker.shutdown());
    Ok(())
}
