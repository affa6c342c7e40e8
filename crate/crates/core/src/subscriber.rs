// Licensed under the Apache-2.0 license

//! Headless stream consumer: subscribes, decodes payloads, writes each frame
//! to a numbered file and reports delivery statistics.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, TrySendError};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use crate::mqtt::{ClientError, ConnectOptions, MqttClient, Packet, SubackCode};
use crate::pipeline::{
    decode_payload, frame_digest, measure_fps, Frame, FrameDigest, StreamBound,
};

/// Frames that may wait for the disk writer before new ones are dropped.
pub const SINK_QUEUE_FRAMES: usize = 64;

const RECV_SLICE: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeliveryReport {
    pub frames_received: u64,
    /// Offsets from the moment the subscription was acknowledged.
    pub first_at: Option<Duration>,
    pub last_at: Option<Duration>,
    /// `None` with fewer than two frames.
    pub measured_fps: Option<f64>,
    /// Frames whose embedded index was not greater than the previous one.
    pub out_of_order_count: u64,
    pub decode_failure_count: u64,
    /// Frames decoded but not written because the sink queue was full.
    pub sink_drops: u64,
    pub sink_errors: u64,
    pub digests: Vec<FrameDigest>,
    pub indices: Vec<u64>,
}

impl fmt::Display for DeliveryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = |d: Option<Duration>| d.map_or("n/a".to_string(), |d| format!("{:.3}", d.as_secs_f64()));
        writeln!(f, "frames_received: {}", self.frames_received)?;
        writeln!(f, "first_s: {}", secs(self.first_at))?;
        writeln!(f, "last_s: {}", secs(self.last_at))?;
        match self.measured_fps {
            Some(v) => writeln!(f, "measured_fps: {v:.3}")?,
            None => writeln!(f, "measured_fps: n/a")?,
        }
        writeln!(f, "out_of_order_count: {}", self.out_of_order_count)?;
        writeln!(f, "decode_failure_count: {}", self.decode_failure_count)?;
        writeln!(f, "sink_drops: {}", self.sink_drops)?;
        writeln!(f, "sink_errors: {}", self.sink_errors)?;
        for (i, d) in self.digests.iter().enumerate() {
            writeln!(f, "frame.{i:06}.sha256: {}", hex::encode(d))?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SubscribeError {
    #[error("cannot connect to broker: {0}")]
    Connect(#[source] ClientError),
    #[error("broker rejected subscription to {0:?}")]
    Rejected(String),
    #[error("cannot create sink directory {path}: {source}")]
    Sink {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stream interrupted: {0}")]
    Interrupted(#[source] ClientError),
}

pub fn frame_file_name(ordinal: u64) -> String {
    format!("frame_{ordinal:06}.bin")
}

pub struct Subscriber {
    client: MqttClient,
    filter: String,
    subscribed_at: Instant,
}

impl Subscriber {
    /// Connects and subscribes, returning once the broker acknowledges.
    pub fn connect(host: &str, port: u16, filter: &str, client_id: &str) -> Result<Self, SubscribeError> {
        let opts = ConnectOptions::new(client_id);
        let mut client =
            MqttClient::connect((host, port), &opts).map_err(SubscribeError::Connect)?;
        let granted = client.subscribe(&[filter]).map_err(SubscribeError::Connect)?;
        if granted.first() != Some(&SubackCode::Granted(0)) {
            return Err(SubscribeError::Rejected(filter.to_string()));
        }
        info!("subscribed to {filter:?} on {host}:{port}");
        Ok(Self {
            client,
            filter: filter.to_string(),
            subscribed_at: Instant::now(),
        })
    }

    pub fn filter(&self) -> &str {
        &self.filter
    }

    /// Receives until `bound` (counted in frames, timed from the subscription)
    /// or until `stop` is set.
    pub fn collect(
        mut self,
        bound: StreamBound,
        sink: Option<&Path>,
        stop: Option<&AtomicBool>,
    ) -> Result<DeliveryReport, SubscribeError> {
        if let Some(dir) = sink {
            std::fs::create_dir_all(dir).map_err(|source| SubscribeError::Sink {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        let deadline = bound.duration.map(|d| self.subscribed_at + d);
        let mut report = DeliveryReport::default();
        let mut offsets = Vec::new();
        let mut last_index: Option<u64> = None;

        let result = thread::scope(|scope| {
            let writer = sink.map(|dir| {
                let (tx, rx) = mpsc::sync_channel::<(u64, Vec<u8>)>(SINK_QUEUE_FRAMES);
                let handle = scope.spawn(move || write_frames(dir, rx));
                (tx, handle)
            });

            let outcome = loop {
                if bound.frames.is_some_and(|n| report.frames_received >= n)
                    || stop.is_some_and(|s| s.load(Ordering::SeqCst))
                {
                    break Ok(());
                }
                let mut wait = RECV_SLICE;
                if let Some(d) = deadline {
                    let now = Instant::now();
                    if now >= d {
                        break Ok(());
                    }
                    wait = wait.min(d - now);
                }
                if let Err(e) = self.client.keep_alive_tick() {
                    break Err(e);
                }
                let publish = match self.client.recv(Some(wait)) {
                    Ok(Some(Packet::Publish(p))) => p,
                    Ok(Some(other)) => {
                        debug!("ignoring {}", other.kind());
                        continue;
                    }
                    Ok(None) => continue,
                    Err(e) => break Err(e),
                };
                let at = self.subscribed_at.elapsed();
                let bytes = match decode_payload(&publish.payload) {
                    Ok(b) => b,
                    Err(e) => {
                        warn!("undecodable payload on {:?}: {e}", publish.topic);
                        report.decode_failure_count += 1;
                        continue;
                    }
                };
                let ordinal = report.frames_received;
                report.frames_received += 1;
                offsets.push(at);
                report.first_at.get_or_insert(at);
                report.last_at = Some(at);
                report.digests.push(frame_digest(&bytes));
                if let Some(index) = Frame::embedded_index(&bytes) {
                    if last_index.is_some_and(|prev| index <= prev) {
                        report.out_of_order_count += 1;
                    }
                    last_index = Some(index);
                    report.indices.push(index);
                }
                if let Some((tx, _)) = &writer {
                    match tx.try_send((ordinal, bytes)) {
                        Ok(()) => {}
                        Err(TrySendError::Full(_)) => report.sink_drops += 1,
                        Err(TrySendError::Disconnected(_)) => report.sink_errors += 1,
                    }
                }
            };

            if let Some((tx, handle)) = writer {
                drop(tx);
                report.sink_errors += handle.join().unwrap_or(1);
            }
            outcome
        });

        report.measured_fps = measure_fps(&offsets).ok();
        let _ = self.client.disconnect();
        match result {
            Ok(()) => Ok(report),
            Err(ClientError::Closed) => {
                info!("broker closed the connection");
                Ok(report)
            }
            Err(e) => Err(SubscribeError::Interrupted(e)),
        }
    }
}

fn write_frames(dir: &Path, rx: mpsc::Receiver<(u64, Vec<u8>)>) -> u64 {
    let mut errors = 0;
    for (ordinal, bytes) in rx {
        let path = dir.join(frame_file_name(ordinal));
        if let Err(e) = std::fs::write(&path, &bytes) {
            warn!("cannot write {}: {e}", path.display());
            errors += 1;
        }
    }
    errors
}

/// Connects, subscribes to `filter` and collects until `bound`.
pub fn subscribe_and_collect(
    host: &str,
    port: u16,
    filter: &str,
    bound: StreamBound,
    sink: Option<&Path>,
) -> Result<DeliveryReport, SubscribeError> {
    let client_id = format!("edgegate-sub-{}", std::process::id());
    Subscriber::connect(host, port, filter, &client_id)?.collect(bound, sink, None)
}
