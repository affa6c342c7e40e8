// Licensed under the Apache-2.0 license

//! Embedded QoS 0 broker.
//!
//! One thread per connection reads packets in arrival order; a second thread
//! per connection drains that session's outbound queue, so routing a publish
//! never waits on a slow subscriber. A session whose queue holds more than
//! [`BrokerConfig::max_outbound_bytes`] has new frames dropped.

mod session;
mod table;

use std::collections::HashMap;
use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{info, warn};

use session::SessionEntry;
pub use table::{SessionId, SubscriptionTable};

use crate::mqtt::TopicFilter;

pub const DEFAULT_BIND: &str = "127.0.0.1";
pub const DEFAULT_MAX_OUTBOUND_BYTES: usize = 8 * 1024 * 1024;
pub const DEFAULT_MAX_PACKET_SIZE: usize = 32 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub bind: String,
    pub port: u16,
    pub max_outbound_bytes: usize,
    pub max_packet_size: usize,
    /// How long a new connection may take to send CONNECT.
    pub connect_timeout: Duration,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.to_string(),
            port: crate::keystore::DEFAULT_PORT,
            max_outbound_bytes: DEFAULT_MAX_OUTBOUND_BYTES,
            max_packet_size: DEFAULT_MAX_PACKET_SIZE,
            connect_timeout: Duration::from_secs(10),
        }
    }
}

impl BrokerConfig {
    pub fn new(bind: impl Into<String>, port: u16) -> Self {
        Self {
            bind: bind.into(),
            port,
            ..Self::default()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BrokerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BrokerStats {
    pub connections_accepted: u64,
    pub sessions_live: u64,
    pub publishes_received: u64,
    pub deliveries: u64,
    pub dropped_deliveries: u64,
    pub sessions_superseded: u64,
    pub sessions_expired: u64,
    pub protocol_violations: u64,
}

#[derive(Default)]
struct Counters {
    connections_accepted: AtomicU64,
    publishes_received: AtomicU64,
    deliveries: AtomicU64,
    dropped_deliveries: AtomicU64,
    sessions_superseded: AtomicU64,
    sessions_expired: AtomicU64,
    protocol_violations: AtomicU64,
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<SessionId, SessionEntry>,
    by_client: HashMap<String, SessionId>,
    table: SubscriptionTable,
}

pub(crate) struct Shared {
    config: BrokerConfig,
    registry: RwLock<Registry>,
    stats: Counters,
    shutdown: AtomicBool,
    connections: Mutex<HashMap<SessionId, TcpStream>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl Shared {
    fn register(&self, id: SessionId, entry: SessionEntry) {
        let mut reg = self.registry.write().unwrap();
        let client_id = entry.client_id.clone();
        if let Some(old) = reg.by_client.insert(client_id.clone(), id) {
            if let Some(prev) = reg.sessions.remove(&old) {
                info!("client {client_id:?} reconnected, terminating session {old}");
                let _ = prev.conn.shutdown(Shutdown::Both);
                self.stats.sessions_superseded.fetch_add(1, Ordering::Relaxed);
            }
            reg.table.remove_session(old);
        }
        reg.sessions.insert(id, entry);
    }

    fn unregister(&self, id: SessionId) {
        let mut reg = self.registry.write().unwrap();
        if let Some(entry) = reg.sessions.remove(&id) {
            if reg.by_client.get(&entry.client_id) == Some(&id) {
                reg.by_client.remove(&entry.client_id);
            }
        }
        reg.table.remove_session(id);
    }

    fn subscribe(&self, id: SessionId, filter: TopicFilter) {
        let mut reg = self.registry.write().unwrap();
        if reg.sessions.contains_key(&id) {
            reg.table.subscribe(id, filter);
        }
    }

    fn route_publish(&self, topic: &str, raw: Arc<[u8]>) {
        self.stats.publishes_received.fetch_add(1, Ordering::Relaxed);
        let reg = self.registry.read().unwrap();
        for id in reg.table.route(topic) {
            let Some(entry) = reg.sessions.get(&id) else {
                continue;
            };
            if entry.outbox.offer(raw.clone()) {
                self.stats.deliveries.fetch_add(1, Ordering::Relaxed);
            } else {
                self.stats.dropped_deliveries.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    fn forget_connection(&self, id: SessionId) {
        self.connections.lock().unwrap().remove(&id);
    }

    fn snapshot(&self) -> BrokerStats {
        let s = &self.stats;
        BrokerStats {
            connections_accepted: s.connections_accepted.load(Ordering::Relaxed),
            sessions_live: self.registry.read().unwrap().sessions.len() as u64,
            publishes_received: s.publishes_received.load(Ordering::Relaxed),
            deliveries: s.deliveries.load(Ordering::Relaxed),
            dropped_deliveries: s.dropped_deliveries.load(Ordering::Relaxed),
            sessions_superseded: s.sessions_superseded.load(Ordering::Relaxed),
            sessions_expired: s.sessions_expired.load(Ordering::Relaxed),
            protocol_violations: s.protocol_violations.load(Ordering::Relaxed),
        }
    }
}

/// A running broker. Dropping the handle shuts it down.
pub struct BrokerHandle {
    local_addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
}

impl BrokerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn port(&self) -> u16 {
        self.local_addr.port()
    }

    pub fn stats(&self) -> BrokerStats {
        self.shared.snapshot()
    }

    /// Client ids of live sessions, sorted.
    pub fn client_ids(&self) -> Vec<String> {
        let reg = self.shared.registry.read().unwrap();
        let mut ids: Vec<_> = reg.by_client.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Number of live sessions holding at least one subscription.
    pub fn subscribed_sessions(&self) -> usize {
        self.shared.registry.read().unwrap().table.sessions().len()
    }

    pub fn shutdown(mut self) -> BrokerStats {
        self.stop();
        self.shared.snapshot()
    }

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        if let Some(acceptor) = self.acceptor.take() {
            let _ = acceptor.join();
        }
        for conn in self.shared.connections.lock().unwrap().values() {
            let _ = conn.shutdown(Shutdown::Both);
        }
        let workers: Vec<_> = self.shared.workers.lock().unwrap().drain(..).collect();
        for w in workers {
            let _ = w.join();
        }
    }
}

impl Drop for BrokerHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop();
        }
    }
}

/// Binds the listener and starts accepting connections. Port 0 picks a free port.
pub fn serve(config: BrokerConfig) -> Result<BrokerHandle, BrokerError> {
    let addr = format!("{}:{}", config.bind, config.port);
    let listener = TcpListener::bind(&addr).map_err(|source| BrokerError::Bind {
        addr: addr.clone(),
        source,
    })?;
    let bind_err = |source| BrokerError::Bind {
        addr: addr.clone(),
        source,
    };
    let local_addr = listener.local_addr().map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    info!("broker listening on {local_addr}");

    let shared = Arc::new(Shared {
        config,
        registry: RwLock::new(Registry::default()),
        stats: Counters::default(),
        shutdown: AtomicBool::new(false),
        connections: Mutex::new(HashMap::new()),
        workers: Mutex::new(Vec::new()),
    });

    let acceptor = {
        let shared = shared.clone();
        thread::Builder::new()
            .name("broker-accept".into())
            .spawn(move || accept_loop(listener, shared))
            .map_err(bind_err)?
    };

    Ok(BrokerHandle {
        local_addr,
        shared,
        acceptor: Some(acceptor),
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut next_id: SessionId = 1;
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                shared.stats.connections_accepted.fetch_add(1, Ordering::Relaxed);
                if let Err(e) = start_connection(&shared, id, stream) {
                    warn!("dropping connection from {peer}: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

fn start_connection(shared: &Arc<Shared>, id: SessionId, stream: TcpStream) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    shared
        .connections
        .lock()
        .unwrap()
        .insert(id, stream.try_clone()?);
    let worker_shared = shared.clone();
    let handle = thread::Builder::new()
        .name(format!("broker-conn-{id}"))
        .spawn(move || session::handle_connection(worker_shared, id, stream))?;
    let mut workers = shared.workers.lock().unwrap();
    workers.retain(|w| !w.is_finished());
    workers.push(handle);
    Ok(())
}
