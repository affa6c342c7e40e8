// Licensed under the Apache-2.0 license

use super::CodecError;

/// Largest value the four-byte remaining-length field can carry.
pub const MAX_REMAINING_LENGTH: usize = 268_435_455;

pub(crate) fn write_remaining_length(mut n: usize, out: &mut Vec<u8>) -> Result<(), CodecError> {
    if n > MAX_REMAINING_LENGTH {
        return Err(CodecError::LengthOutOfRange(n));
    }
    loop {
        let mut byte = (n % 128) as u8;
        n /= 128;
        if n > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if n == 0 {
            return Ok(());
        }
    }
}

/// Base-128 encoding with the continuation bit, least significant group first.
pub fn encode_remaining_length(n: usize) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(4);
    write_remaining_length(n, &mut out)?;
    Ok(out)
}

/// Returns the decoded length and the number of bytes consumed.
pub fn decode_remaining_length(bytes: &[u8]) -> Result<(usize, usize), CodecError> {
    let mut value = 0usize;
    let mut multiplier = 1usize;
    for (i, &byte) in bytes.iter().enumerate() {
        if i == 4 {
            return Err(CodecError::Malformed("remaining length longer than 4 bytes"));
        }
        value += (byte & 0x7F) as usize * multiplier;
        if byte & 0x80 == 0 {
            return Ok((value, i + 1));
        }
        multiplier *= 128;
    }
    if bytes.len() >= 4 {
        Err(CodecError::Malformed("remaining length longer than 4 bytes"))
    } else {
        Err(CodecError::NeedMoreBytes)
    }
}
