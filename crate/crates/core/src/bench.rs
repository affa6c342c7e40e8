// Licensed under the Apache-2.0 license

//! Desk-scale benchmark: the labelled authentication suite, compare latency in
//! both pipeline modes, and loopback streaming at several frame rates.

use std::fmt;
use std::thread;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::broker::{serve, BrokerConfig};
use crate::driver::{authenticate, run_attempt_suite, AttemptSummary};
use crate::enclave::{Enclave, LatencyModel, PipelineMode, SecretKeyImage, SECRET_KEY_BYTES};
use crate::keystore::{CandidateKey, GatewayConfig, KeyLabel};
use crate::pipeline::{publish_stream, StreamBound};
use crate::subscriber::Subscriber;

/// Attempts per label in the authentication suite.
pub const SUITE_COUNTS: [(KeyLabel, usize); 5] = [
    (KeyLabel::Correct, 10),
    (KeyLabel::Invalid, 5),
    (KeyLabel::Incomplete, 7),
    (KeyLabel::Empty, 4),
    (KeyLabel::Wrong, 6),
];

pub const DEFAULT_FPS_TARGETS: [u32; 3] = [6, 14, 30];

/// Relative deviation from the target frame rate still counted as on target.
pub const FPS_TOLERANCE: f64 = 0.10;

/// Builds the labelled candidate list for `secret`.
///
/// Incomplete candidates are truncations of the secret to 1..=31 bytes. Only
/// lengths whose dropped tail contains a nonzero byte are used, since the
/// driver zero-pads and a zero tail would make the truncation authenticate.
pub fn generate_attempt_suite<R: RngCore>(
    secret: &[u8; SECRET_KEY_BYTES],
    rng: &mut R,
) -> Vec<CandidateKey> {
    let candidate = |bytes: Vec<u8>, label| {
        CandidateKey::new(bytes, label).expect("suite candidates are at most 32 bytes")
    };
    let mut suite = Vec::new();
    for (label, count) in SUITE_COUNTS {
        for _ in 0..count {
            let key = match label {
                KeyLabel::Correct => candidate(secret.to_vec(), label),
                KeyLabel::Invalid => {
                    let mut bytes = secret.to_vec();
                    let bit = rng.gen_range(0..SECRET_KEY_BYTES * 8);
                    bytes[bit / 8] ^= 1 << (bit % 8);
                    candidate(bytes, label)
                }
                KeyLabel::Incomplete => {
                    let lengths: Vec<usize> = (1..SECRET_KEY_BYTES)
                        .filter(|&n| secret[n..].iter().any(|&b| b != 0))
                        .collect();
                    let n = lengths.choose(rng).copied().unwrap_or(1);
                    candidate(secret[..n].to_vec(), label)
                }
                KeyLabel::Empty => CandidateKey::empty(),
                KeyLabel::Wrong | KeyLabel::Unlabeled => {
                    let mut bytes = [0u8; SECRET_KEY_BYTES];
                    loop {
                        rng.fill_bytes(&mut bytes);
                        if &bytes != secret {
                            break;
                        }
                    }
                    candidate(bytes.to_vec(), KeyLabel::Wrong)
                }
            };
            suite.push(key);
        }
    }
    suite
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub seed: u64,
    /// Pipeline mode used for the authentication suite.
    pub pipelined: bool,
    pub latency_samples: usize,
    pub fps_targets: Vec<u32>,
    pub fps_run: Duration,
    pub width: u32,
    pub height: u32,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            pipelined: true,
            latency_samples: 100,
            fps_targets: DEFAULT_FPS_TARGETS.to_vec(),
            fps_run: Duration::from_secs(5),
            width: crate::keystore::DEFAULT_WIDTH,
            height: crate::keystore::DEFAULT_HEIGHT,
        }
    }
}

impl BenchOptions {
    pub fn from_config(config: &GatewayConfig, seed: u64) -> Self {
        Self {
            seed,
            pipelined: config.pipelined,
            width: config.camera.width,
            height: config.camera.height,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyResult {
    pub mode: PipelineMode,
    pub samples: usize,
    pub min_cycles: u64,
    pub max_cycles: u64,
    pub min_ns: u64,
    pub max_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FpsStatus {
    Ok,
    OutOfTolerance,
    Failed(String),
}

impl fmt::Display for FpsStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FpsStatus::Ok => f.write_str("ok"),
            FpsStatus::OutOfTolerance => f.write_str("out_of_tolerance"),
            FpsStatus::Failed(why) => write!(f, "failed ({why})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpsRun {
    pub target: u32,
    pub publisher_fps: Option<f64>,
    pub subscriber_fps: Option<f64>,
    pub frames_sent: u64,
    pub frames_received: u64,
    pub status: FpsStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub seed: u64,
    pub auth_mode: PipelineMode,
    pub auth_suite: Result<AttemptSummary, String>,
    pub latency: Vec<Result<LatencyResult, String>>,
    pub fps_runs: Vec<FpsRun>,
    pub frame_size: (u32, u32),
}

impl BenchReport {
    /// True when no sub-benchmark failed or fell outside tolerance.
    pub fn all_ok(&self) -> bool {
        self.auth_suite.is_ok()
            && self.latency.iter().all(Result::is_ok)
            && self.fps_runs.iter().all(|r| r.status == FpsStatus::Ok)
    }
}

fn opt_fps(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed: {}", self.seed)?;
        writeln!(f, "auth_suite.mode: {}", self.auth_mode)?;
        match &self.auth_suite {
            Ok(s) => {
                writeln!(f, "auth_suite.attempts: {}", s.attempts())?;
                writeln!(f, "auth_suite.successes: {}", s.successes)?;
                writeln!(f, "auth_suite.failures: {}", s.failures)?;
                for (label, _) in SUITE_COUNTS {
                    let c = s.label(label);
                    writeln!(
                        f,
                        "auth_suite.{label}: attempts={} successes={} failures={}",
                        c.attempts,
                        c.successes,
                        c.failures()
                    )?;
                }
            }
            Err(e) => writeln!(f, "auth_suite.status: failed ({e})")?,
        }
        for (i, lat) in self.latency.iter().enumerate() {
            match lat {
                Ok(l) => {
                    let key = format!("latency.{}", l.mode);
                    writeln!(f, "{key}.samples: {}", l.samples)?;
                    writeln!(f, "{key}.min_cycles: {}", l.min_cycles)?;
                    writeln!(f, "{key}.max_cycles: {}", l.max_cycles)?;
                    writeln!(f, "{key}.min_ns: {}", l.min_ns)?;
                    writeln!(f, "{key}.max_ns: {}", l.max_ns)?;
                }
                Err(e) => writeln!(f, "latency.{i}.status: failed ({e})")?,
            }
        }
        for run in &self.fps_runs {
            let key = format!("fps.{}", run.target);
            writeln!(f, "{key}.target: {}", run.target)?;
            writeln!(f, "{key}.publisher: {}", opt_fps(run.publisher_fps))?;
            writeln!(f, "{key}.subscriber: {}", opt_fps(run.subscriber_fps))?;
            writeln!(f, "{key}.frames_sent: {}", run.frames_sent)?;
            writeln!(f, "{key}.frames_received: {}", run.frames_received)?;
            writeln!(f, "{key}.status: {}", run.status)?;
        }
        writeln!(f, "env.frame: {}x{} luma8", self.frame_size.0, self.frame_size.1)?;
        writeln!(f, "env.os: {}", std::env::consts::OS)?;
        writeln!(f, "env.arch: {}", std::env::consts::ARCH)?;
        writeln!(f, "env.transport: loopback tcp, embedded broker")
    }
}

fn measure_latency(
    secret: &SecretKeyImage,
    model: LatencyModel,
    samples: usize,
    rng: &mut impl RngCore,
) -> Result<LatencyResult, String> {
    let mut enclave = Enclave::provision(secret.clone(), model);
    let mut range: Option<(u64, u64)> = None;
    for _ in 0..samples {
        let mut bytes = [0u8; SECRET_KEY_BYTES];
        rng.fill_bytes(&mut bytes);
        let key = CandidateKey::new(bytes.to_vec(), KeyLabel::Unlabeled).map_err(|e| e.to_string())?;
        let v = authenticate(&mut enclave, &key).map_err(|e| e.to_string())?;
        range = Some(range.map_or((v.cycles, v.cycles), |(lo, hi)| {
            (lo.min(v.cycles), hi.max(v.cycles))
        }));
    }
    let (min_cycles, max_cycles) = range.ok_or("no samples")?;
    Ok(LatencyResult {
        mode: model.mode,
        samples,
        min_cycles,
        max_cycles,
        min_ns: model.cycles_to_ns(min_cycles),
        max_ns: model.cycles_to_ns(max_cycles),
    })
}

/// Runs one loopback stream through a fresh embedded broker.
pub fn run_fps_loopback(
    secret: &SecretKeyImage,
    target: u32,
    run: Duration,
    width: u32,
    height: u32,
) -> FpsRun {
    let mut result = FpsRun {
        target,
        publisher_fps: None,
        subscriber_fps: None,
        frames_sent: 0,
        frames_received: 0,
        status: FpsStatus::Ok,
    };
    let fail = |mut r: FpsRun, why: String| {
        r.status = FpsStatus::Failed(why);
        r
    };
    let broker = match serve(BrokerConfig::new("127.0.0.1", 0)) {
        Ok(b) => b,
        Err(e) => return fail(result, e.to_string()),
    };
    let port = broker.port();
    let topic = format!("bench/fps/{target}");

    let mut config = GatewayConfig::default();
    config.mqtt.host = "127.0.0.1".into();
    config.mqtt.port = port;
    config.mqtt.topic = topic.clone();
    config.camera.width = width;
    config.camera.height = height;
    config.camera.fps = target;

    let bound = StreamBound::duration(run);
    let expected = (0u64..)
        .take_while(|&i| bound.admits(i, Duration::from_secs_f64(i as f64 / target as f64)))
        .count() as u64;

    let subscriber = match Subscriber::connect("127.0.0.1", port, &topic, "bench-subscriber") {
        Ok(s) => s,
        Err(e) => return fail(result, e.to_string()),
    };
    let collector = thread::spawn(move || {
        subscriber.collect(
            StreamBound {
                frames: Some(expected),
                duration: Some(run + Duration::from_secs(5)),
            },
            None,
            None,
        )
    });

    let mut enclave = Enclave::provision(secret.clone(), LatencyModel::pipelined());
    let correct = CandidateKey::new(secret.expose_bytes().to_vec(), KeyLabel::Correct)
        .expect("32-byte key");
    let published = publish_stream(&config, &mut enclave, &correct, bound);
    let delivered = collector.join();
    drop(broker);

    match published {
        Ok(report) => {
            result.frames_sent = report.throttle.frames_sent;
            result.publisher_fps = Some(report.throttle.measured_fps);
        }
        Err(e) => return fail(result, format!("publisher: {e}")),
    }
    match delivered {
        Ok(Ok(report)) => {
            result.frames_received = report.frames_received;
            result.subscriber_fps = report.measured_fps;
        }
        Ok(Err(e)) => return fail(result, format!("subscriber: {e}")),
        Err(_) => return fail(result, "subscriber thread panicked".into()),
    }
    let within = |v: Option<f64>| {
        v.is_some_and(|v| (v - target as f64).abs() <= FPS_TOLERANCE * target as f64)
    };
    if !(within(result.publisher_fps) && within(result.subscriber_fps)) {
        result.status = FpsStatus::OutOfTolerance;
    }
    result
}

pub fn run_bench(options: &BenchOptions) -> BenchReport {
    let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
    let secret = SecretKeyImage::generate(&mut rng);
    let auth_model = LatencyModel::from_pipelined(options.pipelined);

    let suite = generate_attempt_suite(secret.expose_bytes(), &mut rng);
    let mut enclave = Enclave::provision(secret.clone(), auth_model);
    let auth_suite = run_attempt_suite(&mut enclave, &suite).map_err(|e| e.to_string());

    let latency = [LatencyModel::pipelined(), LatencyModel::unpipelined()]
        .into_iter()
        .map(|model| measure_latency(&secret, model, options.latency_samples, &mut rng))
        .collect();

    let fps_runs = options
        .fps_targets
        .iter()
        .map(|&target| {
            run_fps_loopback(&secret, target, options.fps_run, options.width, options.height)
        })
        .collect();

    BenchReport {
        seed: options.seed,
        auth_mode: auth_model.mode,
        auth_suite,
        latency,
        fps_runs,
        frame_size: (options.width, options.height),
    }
}
