// Licensed under the Apache-2.0 license

//! Authenticated frame publisher.
//!
//! [`publish_stream`] authenticates the candidate key once, and only on an
//! authorized verdict opens the broker connection and starts sending frames.
//! A producer thread acquires and encodes frames while the caller's thread
//! paces and publishes them.

mod payload;
mod source;
mod throttle;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};

pub use payload::{
    decode_payload, encode_bytes, encode_payload, frame_digest, FrameDigest, FramePayload,
};
pub use source::{DirectorySource, Frame, FrameSource, SourceError, SyntheticSource, INDEX_BYTES};
pub use throttle::{measure_fps, measure_fps_instants, MeasureError, Pacer, ThrottleStats};

use crate::driver::{authenticate, AuthVerdict, DriverError};
use crate::enclave::Enclave;
use crate::keystore::{CandidateKey, GatewayConfig};
use crate::mqtt::{ClientError, ConnectOptions, MqttClient};

const STOP_POLL: Duration = Duration::from_millis(20);

/// When a stream ends. With neither field set it runs until stopped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamBound {
    pub frames: Option<u64>,
    pub duration: Option<Duration>,
}

impl StreamBound {
    pub fn frames(n: u64) -> Self {
        Self {
            frames: Some(n),
            duration: None,
        }
    }

    pub fn duration(d: Duration) -> Self {
        Self {
            frames: None,
            duration: Some(d),
        }
    }

    pub fn unbounded() -> Self {
        Self::default()
    }

    /// Whether frame `index`, due `offset` after the start, is still inside the bound.
    pub fn admits(&self, index: u64, offset: Duration) -> bool {
        self.frames.is_none_or(|n| index < n) && self.duration.is_none_or(|d| offset < d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub verdict: AuthVerdict,
    pub throttle: ThrottleStats,
    /// SHA-256 of every published frame, in send order.
    pub digests: Vec<FrameDigest>,
    pub payload_bytes: u64,
}

impl std::fmt::Display for StreamReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let t = &self.throttle;
        writeln!(f, "authorized: {}", self.verdict.authorized)?;
        writeln!(f, "auth_cycles: {}", self.verdict.cycles)?;
        writeln!(f, "auth_ns: {}", self.verdict.elapsed_ns)?;
        writeln!(f, "target_fps: {:.3}", t.target_fps)?;
        writeln!(f, "measured_fps: {:.3}", t.measured_fps)?;
        writeln!(f, "frames_sent: {}", t.frames_sent)?;
        writeln!(f, "window_s: {:.3}", t.window_duration.as_secs_f64())?;
        writeln!(f, "payload_bytes: {}", self.payload_bytes)?;
        for (i, d) in self.digests.iter().enumerate() {
            writeln!(f, "frame.{i:06}.sha256: {}", hex::encode(d))?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("authentication failed: {0}")]
    Auth(#[from] DriverError),
    #[error("authorization refused")]
    AuthorizationRefused { verdict: AuthVerdict },
    #[error("frame source: {0}")]
    Source(#[from] SourceError),
    #[error("cannot connect to broker: {0}")]
    Connect(#[source] ClientError),
    #[error("stream aborted after {} frames: {source}", report.throttle.frames_sent)]
    StreamAborted {
        report: Box<StreamReport>,
        #[source]
        source: ClientError,
    },
}

struct Encoded {
    payload: FramePayload,
    digest: FrameDigest,
}

/// Authenticates, then streams frames to `config.mqtt.topic` until `bound`.
pub fn publish_stream(
    config: &GatewayConfig,
    enclave: &mut Enclave,
    candidate: &CandidateKey,
    bound: StreamBound,
) -> Result<StreamReport, PipelineError> {
    publish_stream_until(config, enclave, candidate, bound, None)
}

/// [`publish_stream`] that also ends early once `stop` is set.
pub fn publish_stream_until(
    config: &GatewayConfig,
    enclave: &mut Enclave,
    candidate: &CandidateKey,
    bound: StreamBound,
    stop: Option<&AtomicBool>,
) -> Result<StreamReport, PipelineError> {
    let verdict = authenticate(enclave, candidate)?;
    if !verdict.authorized {
        warn!("candidate key refused after {} cycles", verdict.cycles);
        return Err(PipelineError::AuthorizationRefused { verdict });
    }
    info!("candidate key authorized after {} cycles", verdict.cycles);

    let source = FrameSource::from_config(&config.camera)?;
    let mqtt = &config.mqtt;
    let opts = ConnectOptions::new(mqtt.client_id.clone());
    let mut client = MqttClient::connect((mqtt.host.as_str(), mqtt.port), &opts)
        .map_err(PipelineError::Connect)?;
    info!(
        "streaming {}x{} frames to {}:{} topic {:?} at {} fps",
        config.camera.width, config.camera.height, mqtt.host, mqtt.port, mqtt.topic, config.camera.fps
    );

    let fps = config.camera.fps as f64;
    let stopped = || stop.is_some_and(|s| s.load(Ordering::SeqCst));

    let producer_stop = AtomicBool::new(false);
    let outcome = thread::scope(|scope| {
        // Rendezvous hand-off: one frame being sent, one being prepared.
        let (tx, rx) = mpsc::sync_channel::<Result<Encoded, SourceError>>(0);
        let producer_stop = &producer_stop;
        scope.spawn(move || produce(source, tx, producer_stop));

        let mut digests = Vec::new();
        let mut payload_bytes = 0u64;
        let mut pacer: Option<Pacer> = None;
        let mut last_send = None;
        let mut failure = None;

        for index in 0u64.. {
            if stopped() || !bound.admits(index, Duration::from_secs_f64(index as f64 / fps)) {
                break;
            }
            let encoded = match rx.recv() {
                Ok(Ok(e)) => e,
                Ok(Err(e)) => {
                    failure = Some(Err(PipelineError::Source(e)));
                    break;
                }
                Err(_) => break,
            };
            let p = *pacer.get_or_insert_with(|| Pacer::new(Instant::now(), fps));
            if !wait_until(p.deadline(index), stop) {
                break;
            }
            if let Err(e) = client.publish(&mqtt.topic, encoded.payload.as_bytes()) {
                failure = Some(Ok(e));
                break;
            }
            last_send = Some(Instant::now());
            payload_bytes += encoded.payload.text.len() as u64;
            digests.push(encoded.digest);
        }
        producer_stop.store(true, Ordering::SeqCst);
        drop(rx);

        let window = match (pacer, last_send) {
            (Some(p), Some(end)) => end.duration_since(p.start()),
            _ => Duration::ZERO,
        };
        let report = StreamReport {
            verdict,
            throttle: ThrottleStats::new(fps, digests.len() as u64, window),
            digests,
            payload_bytes,
        };
        match failure {
            None => Ok(report),
            Some(Err(e)) => Err(e),
            Some(Ok(source)) => Err(PipelineError::StreamAborted {
                report: Box::new(report),
                source,
            }),
        }
    });

    if outcome.is_ok() {
        if let Err(e) = client.disconnect() {
            warn!("disconnect failed: {e}");
        }
    }
    if let Ok(report) = &outcome {
        let t = &report.throttle;
        info!(
            "sent {} frames in {:.3} s ({:.2} fps)",
            t.frames_sent,
            t.window_duration.as_secs_f64(),
            t.measured_fps
        );
    }
    outcome
}

fn produce(
    mut source: FrameSource,
    tx: mpsc::SyncSender<Result<Encoded, SourceError>>,
    stop: &AtomicBool,
) {
    while !stop.load(Ordering::SeqCst) {
        let item = source.next_frame().map(|frame| Encoded {
            payload: encode_payload(&frame),
            digest: frame_digest(&frame.bytes),
        });
        let failed = item.is_err();
        if tx.send(item).is_err() || failed {
            return;
        }
    }
}

/// Sleeps until `deadline`. Returns false if `stop` was raised first.
fn wait_until(deadline: Instant, stop: Option<&AtomicBool>) -> bool {
    loop {
        if stop.is_some_and(|s| s.load(Ordering::SeqCst)) {
            return false;
        }
        let now = Instant::now();
        if now >= deadline {
            return true;
        }
        let left = deadline - now;
        thread::sleep(if stop.is_some() { left.min(STOP_POLL) } else { left });
    }
}
