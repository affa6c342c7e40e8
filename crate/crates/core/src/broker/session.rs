// Licensed under the Apache-2.0 license

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::{debug, info, warn};

use super::table::SessionId;
use super::Shared;
use crate::mqtt::{
    decode_packet_limited, encode_packet, CodecError, Connack, ConnectReturnCode, Packet, Suback,
    SubackCode, TopicFilter,
};

const READ_CHUNK: usize = 64 * 1024;

/// Outbound queue for one session. Frames are dropped once the bytes waiting
/// to be written exceed the cap; control packets always go through.
#[derive(Clone)]
pub(crate) struct Outbox {
    tx: mpsc::Sender<Arc<[u8]>>,
    queued: Arc<AtomicUsize>,
    cap: usize,
}

impl Outbox {
    fn new(cap: usize) -> (Self, mpsc::Receiver<Arc<[u8]>>, Arc<AtomicUsize>) {
        let (tx, rx) = mpsc::channel();
        let queued = Arc::new(AtomicUsize::new(0));
        (
            Self {
                tx,
                queued: queued.clone(),
                cap,
            },
            rx,
            queued,
        )
    }

    /// Queues a routed publish unless the session is already backed up.
    /// A single frame larger than the cap still goes through an empty queue.
    pub(crate) fn offer(&self, bytes: Arc<[u8]>) -> bool {
        let queued = self.queued.load(Ordering::Acquire);
        if queued > 0 && queued + bytes.len() > self.cap {
            return false;
        }
        self.push(bytes)
    }

    fn push(&self, bytes: Arc<[u8]>) -> bool {
        let len = bytes.len();
        self.queued.fetch_add(len, Ordering::AcqRel);
        if self.tx.send(bytes).is_err() {
            self.queued.fetch_sub(len, Ordering::AcqRel);
            return false;
        }
        true
    }

    fn control(&self, packet: &Packet) -> bool {
        match encode_packet(packet) {
            Ok(bytes) => self.push(bytes.into()),
            Err(_) => false,
        }
    }
}

fn spawn_writer(
    mut stream: TcpStream,
    rx: mpsc::Receiver<Arc<[u8]>>,
    queued: Arc<AtomicUsize>,
) -> io::Result<thread::JoinHandle<()>> {
    thread::Builder::new()
        .name("broker-writer".into())
        .spawn(move || {
            for bytes in rx {
                if stream.write_all(&bytes).is_err() {
                    let _ = stream.shutdown(Shutdown::Both);
                    break;
                }
                queued.fetch_sub(bytes.len(), Ordering::AcqRel);
            }
        })
}

enum ReadError {
    Closed,
    Idle,
    Io(io::Error),
    Codec(CodecError),
}

/// Incremental packet reader over one connection.
struct PacketReader {
    stream: TcpStream,
    buf: Vec<u8>,
    max_packet: usize,
}

impl PacketReader {
    /// Next packet with its raw encoding.
    fn next(&mut self) -> Result<(Packet, Vec<u8>), ReadError> {
        loop {
            match decode_packet_limited(&self.buf, self.max_packet) {
                Ok((packet, used)) => {
                    let raw: Vec<u8> = self.buf.drain(..used).collect();
                    return Ok((packet, raw));
                }
                Err(CodecError::NeedMoreBytes) => {}
                Err(e) => return Err(ReadError::Codec(e)),
            }
            let start = self.buf.len();
            self.buf.resize(start + READ_CHUNK, 0);
            let res = self.stream.read(&mut self.buf[start..]);
            let n = match res {
                Ok(n) => n,
                Err(e) => {
                    self.buf.truncate(start);
                    match e.kind() {
                        io::ErrorKind::Interrupted => continue,
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => {
                            return Err(ReadError::Idle)
                        }
                        _ => return Err(ReadError::Io(e)),
                    }
                }
            };
            self.buf.truncate(start + n);
            if n == 0 {
                return Err(ReadError::Closed);
            }
        }
    }
}

pub(crate) struct SessionEntry {
    pub(crate) client_id: String,
    pub(crate) outbox: Outbox,
    pub(crate) conn: TcpStream,
}

/// Runs one client connection to completion.
pub(crate) fn handle_connection(shared: Arc<Shared>, session_id: SessionId, stream: TcpStream) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "?".into());
    if let Err(e) = serve_connection(&shared, session_id, stream) {
        debug!("connection {session_id} ({peer}) ended: {e}");
    }
    shared.forget_connection(session_id);
}

fn serve_connection(shared: &Arc<Shared>, session_id: SessionId, stream: TcpStream) -> io::Result<()> {
    let config = &shared.config;
    stream.set_read_timeout(Some(config.connect_timeout))?;
    let mut reader = PacketReader {
        stream: stream.try_clone()?,
        buf: Vec::new(),
        max_packet: config.max_packet_size,
    };

    let (outbox, rx, queued) = Outbox::new(config.max_outbound_bytes);
    let writer = spawn_writer(stream.try_clone()?, rx, queued)?;

    let result = run_session(shared, session_id, &stream, &mut reader, outbox);

    shared.unregister(session_id);
    // Registry copy of the outbox is gone; once ours drops the writer drains and exits.
    let _ = writer.join();
    let _ = stream.shutdown(Shutdown::Both);
    result
}

fn run_session(
    shared: &Arc<Shared>,
    session_id: SessionId,
    stream: &TcpStream,
    reader: &mut PacketReader,
    outbox: Outbox,
) -> io::Result<()> {
    let connect = match reader.next() {
        Ok((Packet::Connect(c), _)) => c,
        Ok((other, _)) => {
            warn!("connection {session_id}: first packet was {}, closing", other.kind());
            shared.stats.protocol_violations.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        }
        Err(ReadError::Codec(CodecError::UnsupportedProtocolLevel(level))) => {
            warn!("connection {session_id}: protocol level {level} refused");
            outbox.control(&Packet::Connack(Connack {
                session_present: false,
                return_code: ConnectReturnCode::UnacceptableProtocolVersion,
            }));
            return Ok(());
        }
        Err(e) => return Err(describe(e)),
    };

    let client_id = if connect.client_id.is_empty() {
        if !connect.clean_session {
            outbox.control(&Packet::Connack(Connack {
                session_present: false,
                return_code: ConnectReturnCode::IdentifierRejected,
            }));
            return Ok(());
        }
        format!("edgegate-auto-{session_id}")
    } else {
        connect.client_id.clone()
    };

    outbox.control(&Packet::Connack(Connack {
        session_present: false,
        return_code: ConnectReturnCode::Accepted,
    }));
    shared.register(
        session_id,
        SessionEntry {
            client_id: client_id.clone(),
            outbox: outbox.clone(),
            conn: stream.try_clone()?,
        },
    );
    info!("client {client_id:?} connected (session {session_id}, keep-alive {}s)", connect.keep_alive_s);

    let idle_limit = (connect.keep_alive_s > 0)
        .then(|| Duration::from_millis(connect.keep_alive_s as u64 * 1500));
    stream.set_read_timeout(idle_limit)?;

    loop {
        let (packet, raw) = match reader.next() {
            Ok(p) => p,
            Err(ReadError::Idle) => {
                info!("client {client_id:?} idle past 1.5x keep-alive, closing");
                shared.stats.sessions_expired.fetch_add(1, Ordering::Relaxed);
                return Ok(());
            }
            Err(ReadError::Closed) => {
                debug!("client {client_id:?} closed the connection");
                return Ok(());
            }
            Err(e) => return Err(describe(e)),
        };
        match packet {
            Packet::Publish(p) => {
                let mut raw = raw;
                // Forwarded copies never carry RETAIN.
                raw[0] &= !0x01;
                debug!(
                    "publish from {client_id:?} to {:?} ({} payload bytes)",
                    p.topic,
                    p.payload.len()
                );
                shared.route_publish(&p.topic, raw.into());
            }
            Packet::Subscribe(s) => {
                let granted = s
                    .filters
                    .iter()
                    .map(|(filter, _qos)| match TopicFilter::new(filter.as_str()) {
                        Ok(f) => {
                            info!("client {client_id:?} subscribed to {f}");
                            shared.subscribe(session_id, f);
                            SubackCode::Granted(0)
                        }
                        Err(e) => {
                            warn!("client {client_id:?} sent invalid filter: {e}");
                            SubackCode::Failure
                        }
                    })
                    .collect();
                outbox.control(&Packet::Suback(Suback {
                    packet_id: s.packet_id,
                    granted,
                }));
            }
            Packet::Pingreq => {
                outbox.control(&Packet::Pingresp);
            }
            Packet::Disconnect => {
                info!("client {client_id:?} disconnected");
                return Ok(());
            }
            other => {
                warn!("client {client_id:?} sent unexpected {}, closing", other.kind());
                shared.stats.protocol_violations.fetch_add(1, Ordering::Relaxed);
                return Ok(());
            }
        }
    }
}

fn describe(e: ReadError) -> io::Error {
    match e {
        ReadError::Closed => io::Error::new(io::ErrorKind::UnexpectedEof, "closed"),
        ReadError::Idle => io::Error::new(io::ErrorKind::TimedOut, "no CONNECT in time"),
        ReadError::Io(e) => e,
        ReadError::Codec(e) => io::Error::new(io::ErrorKind::InvalidData, e),
    }
}
