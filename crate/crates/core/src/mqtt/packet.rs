// Licensed under the Apache-2.0 license

use super::length::{decode_remaining_length, write_remaining_length, MAX_REMAINING_LENGTH};
use super::topic::{validate_topic_name, TopicFilter};
use super::CodecError;

pub const PROTOCOL_NAME: &str = "MQTT";
pub const PROTOCOL_LEVEL: u8 = 4;

const CONNECT: u8 = 1;
const CONNACK: u8 = 2;
const PUBLISH: u8 = 3;
const SUBSCRIBE: u8 = 8;
const SUBACK: u8 = 9;
const PINGREQ: u8 = 12;
const PINGRESP: u8 = 13;
const DISCONNECT: u8 = 14;

const CONNECT_FLAG_RESERVED: u8 = 0x01;
const CONNECT_FLAG_CLEAN_SESSION: u8 = 0x02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectReturnCode {
    Accepted = 0,
    UnacceptableProtocolVersion = 1,
    IdentifierRejected = 2,
    ServerUnavailable = 3,
    BadUsernameOrPassword = 4,
    NotAuthorized = 5,
}

impl ConnectReturnCode {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => Self::Accepted,
            1 => Self::UnacceptableProtocolVersion,
            2 => Self::IdentifierRejected,
            3 => Self::ServerUnavailable,
            4 => Self::BadUsernameOrPassword,
            5 => Self::NotAuthorized,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connect {
    pub client_id: String,
    pub keep_alive_s: u16,
    pub clean_session: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Connack {
    pub session_present: bool,
    pub return_code: ConnectReturnCode,
}

/// QoS 0 publish. There is no packet identifier at this QoS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub topic: String,
    pub payload: Vec<u8>,
    pub retain: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscribe {
    pub packet_id: u16,
    /// Filter and requested QoS (0-2).
    pub filters: Vec<(String, u8)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubackCode {
    Granted(u8),
    Failure,
}

impl SubackCode {
    fn to_byte(self) -> u8 {
        match self {
            SubackCode::Granted(q) => q,
            SubackCode::Failure => 0x80,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0..=2 => Some(SubackCode::Granted(b)),
            0x80 => Some(SubackCode::Failure),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suback {
    pub packet_id: u16,
    pub granted: Vec<SubackCode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Connect(Connect),
    Connack(Connack),
    Publish(Publish),
    Subscribe(Subscribe),
    Suback(Suback),
    Pingreq,
    Pingresp,
    Disconnect,
}

impl Packet {
    pub fn kind(&self) -> &'static str {
        match self {
            Packet::Connect(_) => "CONNECT",
            Packet::Connack(_) => "CONNACK",
            Packet::Publish(_) => "PUBLISH",
            Packet::Subscribe(_) => "SUBSCRIBE",
            Packet::Suback(_) => "SUBACK",
            Packet::Pingreq => "PINGREQ",
            Packet::Pingresp => "PINGRESP",
            Packet::Disconnect => "DISCONNECT",
        }
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), CodecError> {
    let len: u16 = s
        .len()
        .try_into()
        .map_err(|_| CodecError::Invalid("string longer than 65535 bytes"))?;
    if s.contains('\0') {
        return Err(CodecError::Invalid("string contains NUL"));
    }
    put_u16(out, len);
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// 2-byte length plus UTF-8 bytes.
fn str_len(s: &str) -> usize {
    2 + s.len()
}

fn fixed_header(out: &mut Vec<u8>, first: u8, remaining: usize) -> Result<(), CodecError> {
    out.push(first);
    write_remaining_length(remaining, out)
}

/// Everything of a QoS 0 publish except the payload bytes, so large payloads
/// can be written without copying them into the packet buffer.
pub fn encode_publish_header(
    topic: &str,
    retain: bool,
    payload_len: usize,
    out: &mut Vec<u8>,
) -> Result<(), CodecError> {
    validate_topic_name(topic).map_err(|_| CodecError::Invalid("invalid publish topic"))?;
    let remaining = str_len(topic) + payload_len;
    if remaining > MAX_REMAINING_LENGTH {
        return Err(CodecError::LengthOutOfRange(remaining));
    }
    fixed_header(out, (PUBLISH << 4) | retain as u8, remaining)?;
    put_str(out, topic)
}

/// Appends the encoding of `packet` to `out`.
pub fn encode_packet_into(packet: &Packet, out: &mut Vec<u8>) -> Result<(), CodecError> {
    match packet {
        Packet::Connect(c) => {
            let remaining = str_len(PROTOCOL_NAME) + 1 + 1 + 2 + str_len(&c.client_id);
            fixed_header(out, CONNECT << 4, remaining)?;
            put_str(out, PROTOCOL_NAME)?;
            out.push(PROTOCOL_LEVEL);
            out.push(if c.clean_session { CONNECT_FLAG_CLEAN_SESSION } else { 0 });
            put_u16(out, c.keep_alive_s);
            put_str(out, &c.client_id)?;
        }
        Packet::Connack(c) => {
            fixed_header(out, CONNACK << 4, 2)?;
            out.push(c.session_present as u8);
            out.push(c.return_code as u8);
        }
        Packet::Publish(p) => {
            encode_publish_header(&p.topic, p.retain, p.payload.len(), out)?;
            out.extend_from_slice(&p.payload);
        }
        Packet::Subscribe(s) => {
            if s.packet_id == 0 {
                return Err(CodecError::Invalid("packet identifier must be non-zero"));
            }
            if s.filters.is_empty() {
                return Err(CodecError::Invalid("subscribe needs at least one filter"));
            }
            let mut remaining = 2;
            for (filter, qos) in &s.filters {
                TopicFilter::new(filter.as_str())
                    .map_err(|_| CodecError::Invalid("invalid topic filter"))?;
                if *qos > 2 {
                    return Err(CodecError::Invalid("requested QoS above 2"));
                }
                remaining += str_len(filter) + 1;
            }
            fixed_header(out, (SUBSCRIBE << 4) | 0x02, remaining)?;
            put_u16(out, s.packet_id);
            for (filter, qos) in &s.filters {
                put_str(out, filter)?;
                out.push(*qos);
            }
        }
        Packet::Suback(s) => {
            if s.granted.is_empty() {
                return Err(CodecError::Invalid("suback needs at least one return code"));
            }
            if s.granted.iter().any(|c| matches!(c, SubackCode::Granted(q) if *q > 2)) {
                return Err(CodecError::Invalid("granted QoS above 2"));
            }
            fixed_header(out, SUBACK << 4, 2 + s.granted.len())?;
            put_u16(out, s.packet_id);
            out.extend(s.granted.iter().map(|c| c.to_byte()));
        }
        Packet::Pingreq => fixed_header(out, PINGREQ << 4, 0)?,
        Packet::Pingresp => fixed_header(out, PINGRESP << 4, 0)?,
        Packet::Disconnect => fixed_header(out, DISCONNECT << 4, 0)?,
    }
    Ok(())
}

pub fn encode_packet(packet: &Packet) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    encode_packet_into(packet, &mut out)?;
    Ok(out)
}

/// Bounded reader over one packet body. Every accessor checks the remaining
/// length before touching the slice.
struct Body<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Body<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Malformed("field runs past remaining length"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn string(&mut self) -> Result<String, CodecError> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        let s = std::str::from_utf8(raw).map_err(|_| CodecError::Malformed("invalid UTF-8"))?;
        if s.contains('\0') {
            return Err(CodecError::Malformed("string contains NUL"));
        }
        Ok(s.to_string())
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    fn finish(&self) -> Result<(), CodecError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(CodecError::Malformed("trailing bytes after packet fields"))
        }
    }
}

/// Parsed fixed header: first byte, remaining length, header size.
pub(crate) fn parse_fixed_header(buf: &[u8]) -> Result<(u8, usize, usize), CodecError> {
    let first = *buf.first().ok_or(CodecError::NeedMoreBytes)?;
    let (remaining, len_bytes) = decode_remaining_length(&buf[1..])?;
    Ok((first, remaining, 1 + len_bytes))
}

/// Decodes one packet from the front of `buf`, returning it with the number of
/// bytes consumed. A partial packet yields [`CodecError::NeedMoreBytes`].
pub fn decode_packet(buf: &[u8]) -> Result<(Packet, usize), CodecError> {
    decode_packet_limited(buf, MAX_REMAINING_LENGTH)
}

/// Like [`decode_packet`] but refuses packets whose remaining length exceeds
/// `max_remaining`, before waiting for their bodies to arrive.
pub fn decode_packet_limited(
    buf: &[u8],
    max_remaining: usize,
) -> Result<(Packet, usize), CodecError> {
    let (first, remaining, header_len) = parse_fixed_header(buf)?;
    if remaining > max_remaining {
        return Err(CodecError::PacketTooLarge {
            size: remaining,
            limit: max_remaining,
        });
    }
    let total = header_len + remaining;
    if buf.len() < total {
        return Err(CodecError::NeedMoreBytes);
    }
    let packet_type = first >> 4;
    let flags = first & 0x0F;
    let mut body = Body::new(&buf[header_len..total]);

    let expect_flags = |want: u8| {
        if flags == want {
            Ok(())
        } else {
            Err(CodecError::Malformed("reserved fixed-header flags"))
        }
    };

    let packet = match packet_type {
        CONNECT => {
            expect_flags(0)?;
            let name = body.string()?;
            if name != PROTOCOL_NAME {
                return Err(CodecError::Malformed("protocol name is not MQTT"));
            }
            let level = body.u8()?;
            if level != PROTOCOL_LEVEL {
                return Err(CodecError::UnsupportedProtocolLevel(level));
            }
            let connect_flags = body.u8()?;
            if connect_flags & CONNECT_FLAG_RESERVED != 0 {
                return Err(CodecError::Malformed("reserved connect flag set"));
            }
            if connect_flags & !CONNECT_FLAG_CLEAN_SESSION != 0 {
                return Err(CodecError::Malformed("will, username and password are not supported"));
            }
            let keep_alive_s = body.u16()?;
            let client_id = body.string()?;
            body.finish()?;
            Packet::Connect(Connect {
                client_id,
                keep_alive_s,
                clean_session: connect_flags & CONNECT_FLAG_CLEAN_SESSION != 0,
            })
        }
        CONNACK => {
            expect_flags(0)?;
            let ack = body.u8()?;
            if ack & !0x01 != 0 {
                return Err(CodecError::Malformed("reserved connack flags"));
            }
            let return_code = ConnectReturnCode::from_byte(body.u8()?)
                .ok_or(CodecError::Malformed("unknown connack return code"))?;
            body.finish()?;
            Packet::Connack(Connack {
                session_present: ack & 0x01 != 0,
                return_code,
            })
        }
        PUBLISH => {
            let qos = (flags >> 1) & 0x03;
            if qos != 0 {
                return Err(CodecError::Malformed("only QoS 0 publish is supported"));
            }
            if flags & 0x08 != 0 {
                return Err(CodecError::Malformed("DUP set on QoS 0 publish"));
            }
            let topic = body.string()?;
            validate_topic_name(&topic)
                .map_err(|_| CodecError::Malformed("invalid publish topic"))?;
            let payload = body.rest().to_vec();
            Packet::Publish(Publish {
                topic,
                payload,
                retain: flags & 0x01 != 0,
            })
        }
        SUBSCRIBE => {
            expect_flags(0x02)?;
            let packet_id = body.u16()?;
            if packet_id == 0 {
                return Err(CodecError::Malformed("zero packet identifier"));
            }
            let mut filters = Vec::new();
            while body.remaining() > 0 {
                let filter = body.string()?;
                let qos = body.u8()?;
                if qos > 2 {
                    return Err(CodecError::Malformed("requested QoS above 2"));
                }
                filters.push((filter, qos));
            }
            if filters.is_empty() {
                return Err(CodecError::Malformed("subscribe without filters"));
            }
            Packet::Subscribe(Subscribe { packet_id, filters })
        }
        SUBACK => {
            expect_flags(0)?;
            let packet_id = body.u16()?;
            let granted = body
                .rest()
                .iter()
                .map(|&b| SubackCode::from_byte(b).ok_or(CodecError::Malformed("bad suback code")))
                .collect::<Result<Vec<_>, _>>()?;
            if granted.is_empty() {
                return Err(CodecError::Malformed("suback without return codes"));
            }
            Packet::Suback(Suback { packet_id, granted })
        }
        PINGREQ | PINGRESP | DISCONNECT => {
            expect_flags(0)?;
            body.finish()?;
            match packet_type {
                PINGREQ => Packet::Pingreq,
                PINGRESP => Packet::Pingresp,
                _ => Packet::Disconnect,
            }
        }
        _ => return Err(CodecError::Malformed("unsupported packet type")),
    };
    Ok((packet, total))
}
