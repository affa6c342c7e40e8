// Licensed under the Apache-2.0 license

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::packet::{
    decode_packet_limited, encode_packet_into, encode_publish_header, Connect, ConnectReturnCode,
    Packet, Subscribe, SubackCode,
};
use super::{CodecError, MAX_REMAINING_LENGTH};

const READ_CHUNK: usize = 64 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("codec: {0}")]
    Codec(#[from] CodecError),
    #[error("connection refused by broker: {0:?}")]
    Refused(ConnectReturnCode),
    #[error("protocol violation: {0}")]
    Protocol(&'static str),
    #[error("connection closed by broker")]
    Closed,
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
}

#[derive(Debug, Clone)]
pub struct ConnectOptions {
    pub client_id: String,
    pub keep_alive_s: u16,
    pub clean_session: bool,
    pub timeout: Duration,
}

impl ConnectOptions {
    pub fn new(client_id: impl Into<String>) -> Self {
        Self {
            client_id: client_id.into(),
            keep_alive_s: 30,
            clean_session: true,
            timeout: Duration::from_secs(5),
        }
    }

    pub fn keep_alive(mut self, secs: u16) -> Self {
        self.keep_alive_s = secs;
        self
    }
}

/// Minimal blocking QoS 0 client.
pub struct MqttClient {
    stream: TcpStream,
    rx: Vec<u8>,
    tx: Vec<u8>,
    pending: VecDeque<Packet>,
    next_packet_id: u16,
    keep_alive: Option<Duration>,
    last_sent: Instant,
}

impl MqttClient {
    pub fn connect(addr: impl ToSocketAddrs, opts: &ConnectOptions) -> Result<Self, ClientError> {
        let mut last_err = None;
        let mut stream = None;
        for a in addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&a, opts.timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let stream = match stream {
            Some(s) => s,
            None => {
                return Err(last_err
                    .unwrap_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no address"))
                    .into())
            }
        };
        stream.set_nodelay(true)?;
        let mut client = Self {
            stream,
            rx: Vec::with_capacity(READ_CHUNK),
            tx: Vec::new(),
            pending: VecDeque::new(),
            next_packet_id: 1,
            keep_alive: (opts.keep_alive_s > 0)
                .then(|| Duration::from_secs(opts.keep_alive_s as u64)),
            last_sent: Instant::now(),
        };
        client.send(&Packet::Connect(Connect {
            client_id: opts.client_id.clone(),
            keep_alive_s: opts.keep_alive_s,
            clean_session: opts.clean_session,
        }))?;
        match client.read_packet(Some(Instant::now() + opts.timeout))? {
            Some(Packet::Connack(ack)) if ack.return_code == ConnectReturnCode::Accepted => {
                Ok(client)
            }
            Some(Packet::Connack(ack)) => Err(ClientError::Refused(ack.return_code)),
            Some(_) => Err(ClientError::Protocol("expected CONNACK")),
            None => Err(ClientError::Timeout("CONNACK")),
        }
    }

    pub fn send(&mut self, packet: &Packet) -> Result<(), ClientError> {
        self.tx.clear();
        encode_packet_into(packet, &mut self.tx)?;
        self.stream.write_all(&self.tx)?;
        self.last_sent = Instant::now();
        Ok(())
    }

    pub fn publish(&mut self, topic: &str, payload: &[u8]) -> Result<(), ClientError> {
        self.tx.clear();
        encode_publish_header(topic, false, payload.len(), &mut self.tx)?;
        self.stream.write_all(&self.tx)?;
        self.stream.write_all(payload)?;
        self.last_sent = Instant::now();
        Ok(())
    }

    /// Subscribes and waits for the matching SUBACK. Packets arriving in the
    /// meantime are kept for [`MqttClient::recv`].
    pub fn subscribe(&mut self, filters: &[&str]) -> Result<Vec<SubackCode>, ClientError> {
        let packet_id = self.next_packet_id;
        self.next_packet_id = self.next_packet_id.checked_add(1).unwrap_or(1);
        self.send(&Packet::Subscribe(Subscribe {
            packet_id,
            filters: filters.iter().map(|f| (f.to_string(), 0)).collect(),
        }))?;
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            match self.read_packet(Some(deadline))? {
                Some(Packet::Suback(ack)) if ack.packet_id == packet_id => return Ok(ack.granted),
                Some(other) => self.pending.push_back(other),
                None => return Err(ClientError::Timeout("SUBACK")),
            }
        }
    }

    /// Sends PINGREQ if nothing has been sent for half the keep-alive interval.
    pub fn keep_alive_tick(&mut self) -> Result<(), ClientError> {
        if let Some(ka) = self.keep_alive {
            if self.last_sent.elapsed() >= ka / 2 {
                self.send(&Packet::Pingreq)?;
            }
        }
        Ok(())
    }

    /// Next packet from the broker, or `None` once `timeout` passes.
    pub fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<Packet>, ClientError> {
        if let Some(p) = self.pending.pop_front() {
            return Ok(Some(p));
        }
        self.read_packet(timeout.map(|t| Instant::now() + t))
    }

    fn read_packet(&mut self, deadline: Option<Instant>) -> Result<Option<Packet>, ClientError> {
        loop {
            match decode_packet_limited(&self.rx, MAX_REMAINING_LENGTH) {
                Ok((packet, used)) => {
                    self.rx.drain(..used);
                    return Ok(Some(packet));
                }
                Err(CodecError::NeedMoreBytes) => {}
                Err(e) => return Err(e.into()),
            }
            let timeout = match deadline {
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Ok(None);
                    }
                    Some(d - now)
                }
                None => None,
            };
            self.stream.set_read_timeout(timeout)?;
            let start = self.rx.len();
            self.rx.resize(start + READ_CHUNK, 0);
            let n = match self.stream.read(&mut self.rx[start..]) {
                Ok(n) => n,
                Err(e)
                    if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
                {
                    self.rx.truncate(start);
                    continue;
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {
                    self.rx.truncate(start);
                    continue;
                }
                Err(e) => {
                    self.rx.truncate(start);
                    return Err(e.into());
                }
            };
            self.rx.truncate(start + n);
            if n == 0 {
                return Err(ClientError::Closed);
            }
        }
    }

    pub fn disconnect(mut self) -> Result<(), ClientError> {
        self.send(&Packet::Disconnect)?;
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
        Ok(())
    }

    pub fn local_addr(&self) -> io::Result<std::net::SocketAddr> {
        self.stream.local_addr()
    }
}
