// Licensed under the Apache-2.0 license

use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MeasureError {
    #[error("need at least two timestamps, got {0}")]
    TooFewSamples(usize),
    #[error("timestamps span zero time")]
    ZeroSpan,
}

/// Frames per second over a window of delivery times: `(count - 1) / (last - first)`.
pub fn measure_fps(timestamps: &[Duration]) -> Result<f64, MeasureError> {
    let (Some(first), Some(last)) = (timestamps.first(), timestamps.last()) else {
        return Err(MeasureError::TooFewSamples(timestamps.len()));
    };
    if timestamps.len() < 2 {
        return Err(MeasureError::TooFewSamples(timestamps.len()));
    }
    let span = last.saturating_sub(*first).as_secs_f64();
    if span <= 0.0 {
        return Err(MeasureError::ZeroSpan);
    }
    Ok((timestamps.len() - 1) as f64 / span)
}

/// [`measure_fps`] over `Instant`s.
pub fn measure_fps_instants(instants: &[Instant]) -> Result<f64, MeasureError> {
    let Some(origin) = instants.first() else {
        return Err(MeasureError::TooFewSamples(0));
    };
    let offsets: Vec<Duration> = instants.iter().map(|t| t.duration_since(*origin)).collect();
    measure_fps(&offsets)
}

/// Absolute send schedule: frame `i` is due at `start + i / fps`.
///
/// Deadlines are derived from the frame number, never from the previous send,
/// so a late frame does not push back the ones after it.
#[derive(Debug, Clone, Copy)]
pub struct Pacer {
    start: Instant,
    fps: f64,
}

impl Pacer {
    pub fn new(start: Instant, fps: f64) -> Self {
        assert!(fps > 0.0, "fps must be positive");
        Self { start, fps }
    }

    pub fn start(&self) -> Instant {
        self.start
    }

    pub fn deadline(&self, frame: u64) -> Instant {
        self.start + self.offset(frame)
    }

    pub fn offset(&self, frame: u64) -> Duration {
        Duration::from_secs_f64(frame as f64 / self.fps)
    }

    /// Sleeps until frame `frame` is due.
    pub fn wait_for(&self, frame: u64) {
        let due = self.deadline(frame);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrottleStats {
    pub target_fps: f64,
    /// `frames_sent / window_duration`.
    pub measured_fps: f64,
    pub frames_sent: u64,
    /// From the first frame's deadline to the completion of the last send.
    pub window_duration: Duration,
}

impl ThrottleStats {
    pub fn new(target_fps: f64, frames_sent: u64, window_duration: Duration) -> Self {
        let secs = window_duration.as_secs_f64();
        let measured_fps = if secs > 0.0 {
            frames_sent as f64 / secs
        } else {
            0.0
        };
        Self {
            target_fps,
            measured_fps,
            frames_sent,
            window_duration,
        }
    }
}
