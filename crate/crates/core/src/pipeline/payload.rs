// Licensed under the Apache-2.0 license

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use sha2::{Digest, Sha256};

use super::Frame;

pub type FrameDigest = [u8; 32];

/// Standard padded base64 text of one frame, as carried in the MQTT payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePayload {
    pub text: String,
}

impl FramePayload {
    pub fn as_bytes(&self) -> &[u8] {
        self.text.as_bytes()
    }

    pub fn decode(&self) -> Result<Vec<u8>, base64::DecodeError> {
        decode_payload(self.text.as_bytes())
    }
}

pub fn encode_bytes(bytes: &[u8]) -> FramePayload {
    FramePayload {
        text: STANDARD.encode(bytes),
    }
}

pub fn encode_payload(frame: &Frame) -> FramePayload {
    encode_bytes(&frame.bytes)
}

pub fn decode_payload(text: &[u8]) -> Result<Vec<u8>, base64::DecodeError> {
    STANDARD.decode(text)
}

pub fn frame_digest(bytes: &[u8]) -> FrameDigest {
    Sha256::digest(bytes).into()
}
