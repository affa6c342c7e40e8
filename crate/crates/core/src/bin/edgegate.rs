// Licensed under the Apache-2.0 license

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::error;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use edgegate::bench::{run_bench, BenchOptions};
use edgegate::broker::{serve, BrokerConfig};
use edgegate::driver::authenticate;
use edgegate::enclave::{Enclave, LatencyModel, SecretKeyImage};
use edgegate::keystore::{format_credentials, load_config, read_credentials_file, GatewayConfig};
use edgegate::pipeline::{publish_stream_until, PipelineError, StreamBound};
use edgegate::subscriber::Subscriber;

const EXIT_REFUSED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "edgegate", version, about = "Authenticated MQTT camera gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the credentials file against a provisioned enclave.
    Auth(GatewayArgs),
    /// Authenticate, then publish frames to the broker.
    Stream(StreamArgs),
    /// Subscribe to the stream and write frames to disk.
    Subscribe(SubscribeArgs),
    /// Run the embedded broker.
    Broker(BrokerArgs),
    /// Run the authentication, latency and frame-rate benchmark.
    Bench(BenchArgs),
    /// Create a provisioning image and a matching credentials file.
    Keygen(KeygenArgs),
}

#[derive(Args)]
struct GatewayArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Credentials file; overrides credentials.path.
    #[arg(long)]
    credentials: Option<PathBuf>,
    /// Provisioning image holding the 32-byte secret.
    #[arg(long)]
    provision: PathBuf,
    #[arg(long, overrides_with = "no_pipelined")]
    pipelined: bool,
    #[arg(long, overrides_with = "pipelined")]
    no_pipelined: bool,
}

#[derive(Args)]
struct BrokerTarget {
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    topic: Option<String>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    frames: Option<u64>,
    /// Seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct StreamArgs {
    #[command(flatten)]
    gateway: GatewayArgs,
    #[command(flatten)]
    target: BrokerTarget,
    #[command(flatten)]
    bound: BoundArgs,
    #[arg(long)]
    fps: Option<u32>,
    /// Write the stream report here as well as to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SubscribeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    target: BrokerTarget,
    #[command(flatten)]
    bound: BoundArgs,
    /// Directory receiving one file per frame.
    #[arg(long)]
    sink: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BrokerArgs {
    #[arg(long, default_value = edgegate::broker::DEFAULT_BIND)]
    bind: String,
    #[arg(long, default_value_t = edgegate::keystore::DEFAULT_PORT)]
    port: u16,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Length of each frame-rate run, in seconds.
    #[arg(long, default_value_t = 5.0)]
    duration: f64,
    /// Run a single frame-rate target instead of 6, 14 and 30.
    #[arg(long)]
    fps: Option<u32>,
    #[arg(long, overrides_with = "no_pipelined")]
    pipelined: bool,
    #[arg(long, overrides_with = "pipelined")]
    no_pipelined: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct KeygenArgs {
    /// Provisioning image to create.
    #[arg(long)]
    provision: PathBuf,
    /// Also write a matching credentials file.
    #[arg(long)]
    credentials: Option<PathBuf>,
    /// Derive the key from a seed instead of the OS generator.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Refused,
    Runtime(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn pipelined_flag(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

fn load_gateway(path: Option<&Path>) -> Result<GatewayConfig, Failure> {
    match path {
        Some(p) => load_config(p).map_err(Failure::usage),
        None => Ok(GatewayConfig::default()),
    }
}

fn apply_target(config: &mut GatewayConfig, target: &BrokerTarget) -> Result<(), Failure> {
    if let Some(h) = &target.host {
        config.mqtt.host = h.clone();
    }
    if let Some(p) = target.port {
        config.mqtt.port = p;
    }
    if let Some(t) = &target.topic {
        config.mqtt.topic = t.clone();
    }
    Ok(())
}

fn stream_bound(args: &BoundArgs) -> Result<StreamBound, Failure> {
    let duration = args
        .duration
        .map(|s| Duration::try_from_secs_f64(s).map_err(|e| Failure::Usage(format!("--duration: {e}"))))
        .transpose()?;
    Ok(StreamBound {
        frames: args.frames,
        duration,
    })
}

/// Provisions the enclave and loads the candidate key.
fn prepare(
    args: &GatewayArgs,
) -> Result<(GatewayConfig, Enclave, edgegate::keystore::CandidateKey), Failure> {
    let mut config = load_gateway(args.config.as_deref())?;
    if let Some(p) = pipelined_flag(args.pipelined, args.no_pipelined) {
        config.pipelined = p;
    }
    let image = SecretKeyImage::read_file(&args.provision).map_err(Failure::usage)?;
    let enclave = Enclave::provision(image, LatencyModel::from_pipelined(config.pipelined));
    let creds = args.credentials.as_ref().unwrap_or(&config.credentials_path);
    let candidate = read_credentials_file(creds).map_err(Failure::usage)?;
    Ok((config, enclave, candidate))
}

fn stop_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    flag
}

fn emit(report: &str, path: Option<&Path>) -> Result<(), Failure> {
    print!("{report}");
    if let Some(p) = path {
        std::fs::write(p, report).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn cmd_auth(args: GatewayArgs) -> Result<(), Failure> {
    let (_, mut enclave, candidate) = prepare(&args)?;
    let verdict = authenticate(&mut enclave, &candidate).map_err(Failure::runtime)?;
    println!("authorized: {}", verdict.authorized);
    println!("cycles: {}", verdict.cycles);
    println!("elapsed_ns: {}", verdict.elapsed_ns);
    if verdict.authorized {
        Ok(())
    } else {
        Err(Failure::Refused)
    }
}

fn cmd_stream(args: StreamArgs) -> Result<(), Failure> {
    let (mut config, mut enclave, candidate) = prepare(&args.gateway)?;
    apply_target(&mut config, &args.target)?;
    if let Some(fps) = args.fps {
        if fps == 0 {
            return Err(Failure::Usage("--fps must be positive".into()));
        }
        config.camera.fps = fps;
    }
    let bound = stream_bound(&args.bound)?;
    let stop = stop_flag();
    match publish_stream_until(&config, &mut enclave, &candidate, bound, Some(&stop)) {
        Ok(report) => emit(&report.to_string(), args.report.as_deref()),
        Err(PipelineError::AuthorizationRefused { verdict }) => {
            println!("authorized: false");
            println!("cycles: {}", verdict.cycles);
            Err(Failure::Refused)
        }
        Err(PipelineError::StreamAborted { report, source }) => {
            emit(&report.to_string(), args.report.as_deref())?;
            Err(Failure::runtime(source))
        }
        Err(e) => Err(Failure::runtime(e)),
    }
}

fn cmd_subscribe(args: SubscribeArgs) -> Result<(), Failure> {
    let mut config = load_gateway(args.config.as_deref())?;
    apply_target(&mut config, &args.target)?;
    let bound = stream_bound(&args.bound)?;
    let stop = stop_flag();
    let client_id = format!("edgegate-sub-{}", std::process::id());
    let sub = Subscriber::connect(&config.mqtt.host, config.mqtt.port, &config.mqtt.topic, &client_id)
        .map_err(Failure::runtime)?;
    let report = sub
        .collect(bound, args.sink.as_deref(), Some(&stop))
        .map_err(Failure::runtime)?;
    emit(&report.to_string(), args.report.as_deref())
}

fn cmd_broker(args: BrokerArgs) -> Result<(), Failure> {
    let stop = stop_flag();
    let broker = serve(BrokerConfig::new(args.bind, args.port)).map_err(Failure::runtime)?;
    println!("listening: {}", broker.local_addr());
    while !stop.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(100));
    }
    let s = broker.shutdown();
    println!("connections_accepted: {}", s.connections_accepted);
    println!("publishes_received: {}", s.publishes_received);
    println!("deliveries: {}", s.deliveries);
    println!("dropped_deliveries: {}", s.dropped_deliveries);
    println!("sessions_superseded: {}", s.sessions_superseded);
    println!("sessions_expired: {}", s.sessions_expired);
    println!("protocol_violations: {}", s.protocol_violations);
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let config = load_gateway(args.config.as_deref())?;
    let mut options = BenchOptions::from_config(&config, args.seed);
    if let Some(p) = pipelined_flag(args.pipelined, args.no_pipelined) {
        options.pipelined = p;
    }
    options.fps_run = Duration::try_from_secs_f64(args.duration)
        .map_err(|e| Failure::Usage(format!("--duration: {e}")))?;
    if let Some(fps) = args.fps {
        options.fps_targets = vec![fps];
    }
    let report = run_bench(&options);
    emit(&report.to_string(), args.report.as_deref())
}

fn cmd_keygen(args: KeygenArgs) -> Result<(), Failure> {
    let image = match args.seed {
        Some(seed) => SecretKeyImage::generate(&mut ChaCha20Rng::seed_from_u64(seed)),
        None => SecretKeyImage::generate(&mut rand::rngs::OsRng),
    };
    image
        .write_file(&args.provision)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", args.provision.display())))?;
    println!("provision: {}", args.provision.display());
    if let Some(path) = &args.credentials {
        let text = format_credentials(image.expose_bytes());
        std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        println!("credentials: {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Auth(a) => cmd_auth(a),
        Command::Stream(a) => cmd_stream(a),
        Command::Subscribe(a) => cmd_subscribe(a),
        Command::Broker(a) => cmd_broker(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Keygen(a) => cmd_keygen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Refused) => ExitCode::from(EXIT_REFUSED),
        Err(Failure::Usage(msg)) => {
            error!("{msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            error!("{msg}");
            ExitCode::from(EXIT_REFUSED)
        }
    }
}
