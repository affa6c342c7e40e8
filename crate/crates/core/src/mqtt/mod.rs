// Licensed under the Apache-2.0 license

//! MQTT 3.1.1 wire format for the QoS 0 subset: CONNECT, CONNACK, PUBLISH,
//! SUBSCRIBE, SUBACK, PINGREQ, PINGRESP and DISCONNECT.

mod client;
mod length;
mod packet;
mod topic;

pub use client::{ClientError, ConnectOptions, MqttClient};
pub use length::{decode_remaining_length, encode_remaining_length, MAX_REMAINING_LENGTH};
pub use packet::{
    decode_packet, decode_packet_limited, encode_packet, encode_packet_into,
    encode_publish_header, Connack, Connect, ConnectReturnCode, Packet, Publish, Suback,
    SubackCode, Subscribe, PROTOCOL_LEVEL, PROTOCOL_NAME,
};
pub use topic::{topic_matches, validate_topic_name, TopicError, TopicFilter};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("need more bytes")]
    NeedMoreBytes,
    #[error("malformed packet: {0}")]
    Malformed(&'static str),
    #[error("unsupported protocol level {0}")]
    UnsupportedProtocolLevel(u8),
    #[error("remaining length {0} out of range")]
    LengthOutOfRange(usize),
    #[error("packet of {size} bytes exceeds limit of {limit}")]
    PacketTooLarge { size: usize, limit: usize },
    #[error("cannot encode: {0}")]
    Invalid(&'static str),
}
