// Licensed under the Apache-2.0 license

//! Encodes a few MQTT 3.1.1 packets, dumps their bytes, and decodes a
//! stream that arrives in pieces.
//!
//! ```bash
//! cargo run -p edgegate --example mqtt_codec
//! ```

use edgegate::mqtt::{
    decode_packet, encode_packet, encode_remaining_length, CodecError, Connect, Packet, Publish,
    Subscribe, TopicFilter,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let packets = [
        Packet::Connect(Connect {
            client_id: "gateway-01".into(),
            keep_alive_s: 30,
            clean_session: true,
        }),
        Packet::Subscribe(Subscribe {
            packet_id: 1,
            filters: vec![("camera/+".into(), 0)],
        }),
        Packet::Publish(Publish {
            topic: "camera/stream".into(),
            payload: b"aGVsbG8=".to_vec(),
            retain: false,
        }),
        Packet::Pingreq,
    ];

    let mut wire = Vec::new();
    for p in &packets {
        let bytes = encode_packet(p)?;
        println!("{:<9} {}", p.kind(), hex::encode(&bytes));
        wire.extend(bytes);
    }

    for n in [0, 127, 128, 16_383, 16_384, 2_097_152] {
        println!("remaining length {n:>9} -> {}", hex::encode(encode_remaining_length(n)?));
    }

    // Feed the concatenated stream seven bytes at a time.
    let mut buf = Vec::new();
    for chunk in wire.chunks(7) {
        buf.extend_from_slice(chunk);
        loop {
            match decode_packet(&buf) {
                Ok((packet, used)) => {
                    buf.drain(..used);
                    println!("decoded {packet:?}");
                }
                Err(CodecError::NeedMoreBytes) => break,
                Err(e) => return Err(e.into()),
            }
        }
    }

    let filter = TopicFilter::new("camera/#")?;
    for topic in ["camera", "camera/stream", "lidar/stream"] {
        println!("{filter} matches {topic:?}: {}", filter.matches(topic));
    }
    Ok(())
}
