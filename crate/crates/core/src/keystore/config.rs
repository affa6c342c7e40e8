// Licensed under the Apache-2.0 license

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::mqtt::validate_topic_name;

pub const DEFAULT_HOST: &str = "localhost";
pub const DEFAULT_PORT: u16 = 1883;
pub const DEFAULT_WIDTH: u32 = 1920;
pub const DEFAULT_HEIGHT: u32 = 1080;
pub const DEFAULT_FPS: u32 = 14;
pub const DEFAULT_TOPIC: &str = "camera/stream";
pub const DEFAULT_CLIENT_ID: &str = "edgegate-publisher";
pub const DEFAULT_CREDENTIALS_PATH: &str = "credentials.hex";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameSourceSpec {
    Synthetic,
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CameraConfig {
    pub source: FrameSourceSpec,
    pub width: u32,
    pub height: u32,
    pub fps: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MqttConfig {
    pub host: String,
    pub port: u16,
    pub topic: String,
    pub client_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayConfig {
    pub camera: CameraConfig,
    pub mqtt: MqttConfig,
    pub credentials_path: PathBuf,
    pub pipelined: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            camera: CameraConfig {
                source: FrameSourceSpec::Synthetic,
                width: DEFAULT_WIDTH,
                height: DEFAULT_HEIGHT,
                fps: DEFAULT_FPS,
            },
            mqtt: MqttConfig {
                host: DEFAULT_HOST.to_string(),
                port: DEFAULT_PORT,
                topic: DEFAULT_TOPIC.to_string(),
                client_id: DEFAULT_CLIENT_ID.to_string(),
            },
            credentials_path: PathBuf::from(DEFAULT_CREDENTIALS_PATH),
            pipelined: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigErrorKind {
    #[error("expected `key = value`")]
    Malformed,
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config line {line}: {kind}")]
pub struct ConfigError {
    pub line: usize,
    pub kind: ConfigErrorKind,
}

const KEYS: [&str; 10] = [
    "camera.source",
    "camera.width",
    "camera.height",
    "camera.fps",
    "mqtt.host",
    "mqtt.port",
    "mqtt.topic",
    "mqtt.client_id",
    "credentials.path",
    "enclave.pipelined",
];

fn invalid(key: &str, reason: impl Into<String>) -> ConfigErrorKind {
    ConfigErrorKind::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn positive(key: &str, value: &str) -> Result<u32, ConfigErrorKind> {
    match value.parse::<u32>() {
        Ok(0) => Err(invalid(key, "must be greater than zero")),
        Ok(n) => Ok(n),
        Err(e) => Err(invalid(key, e.to_string())),
    }
}

fn non_empty(key: &str, value: &str) -> Result<String, ConfigErrorKind> {
    if value.is_empty() {
        Err(invalid(key, "must not be empty"))
    } else {
        Ok(value.to_string())
    }
}

impl GatewayConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigErrorKind> {
        match key {
            "camera.source" => {
                self.camera.source = match value {
                    "" => return Err(invalid(key, "must not be empty")),
                    "synthetic" => FrameSourceSpec::Synthetic,
                    path => FrameSourceSpec::Directory(PathBuf::from(path)),
                }
            }
            "camera.width" => self.camera.width = positive(key, value)?,
            "camera.height" => self.camera.height = positive(key, value)?,
            "camera.fps" => self.camera.fps = positive(key, value)?,
            "mqtt.host" => self.mqtt.host = non_empty(key, value)?,
            "mqtt.port" => {
                self.mqtt.port = match value.parse::<u32>() {
                    Ok(p @ 1..=65535) => p as u16,
                    Ok(_) => return Err(invalid(key, "must be in 1-65535")),
                    Err(e) => return Err(invalid(key, e.to_string())),
                }
            }
            "mqtt.topic" => {
                validate_topic_name(value).map_err(|e| invalid(key, e.to_string()))?;
                self.mqtt.topic = value.to_string();
            }
            "mqtt.client_id" => self.mqtt.client_id = non_empty(key, value)?,
            "credentials.path" => self.credentials_path = PathBuf::from(non_empty(key, value)?),
            "enclave.pipelined" => {
                self.pipelined = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(invalid(key, "expected `true` or `false`")),
                }
            }
            other => return Err(ConfigErrorKind::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Makes relative paths relative to `base` (normally the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        if self.credentials_path.is_relative() {
            self.credentials_path = base.join(&self.credentials_path);
        }
        if let FrameSourceSpec::Directory(dir) = &mut self.camera.source {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
    }
}

/// Parses the line-oriented `key = value` config format.
///
/// Blank lines and lines starting with `#` are ignored. Keys not present
/// keep their defaults; unknown or repeated keys are errors.
pub fn parse_config(text: &str) -> Result<GatewayConfig, ConfigError> {
    let mut config = GatewayConfig::default();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |kind| ConfigError { line, kind };
        let (key, value) = trimmed
            .split_once('=')
            .ok_or(err(ConfigErrorKind::Malformed))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(err(ConfigErrorKind::Malformed));
        }
        if !KEYS.contains(&key) {
            return Err(err(ConfigErrorKind::UnknownKey(key.to_string())));
        }
        if !seen.insert(key.to_string()) {
            return Err(err(ConfigErrorKind::DuplicateKey(key.to_string())));
        }
        config.apply(key, value).map_err(err)?;
    }
    Ok(config)
}

impl FromStr for GatewayConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_config(s)
    }
}

/// Serializes every key in a fixed order. `parse_config` reads it back unchanged.
impl fmt::Display for GatewayConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = match &self.camera.source {
            FrameSourceSpec::Synthetic => "synthetic".to_string(),
            FrameSourceSpec::Directory(p) => p.display().to_string(),
        };
        writeln!(f, "camera.source = {source}")?;
        writeln!(f, "camera.width = {}", self.camera.width)?;
        writeln!(f, "camera.height = {}", self.camera.height)?;
        writeln!(f, "camera.fps = {}", self.camera.fps)?;
        writeln!(f, "mqtt.host = {}", self.mqtt.host)?;
        writeln!(f, "mqtt.port = {}", self.mqtt.port)?;
        writeln!(f, "mqtt.topic = {}", self.mqtt.topic)?;
        writeln!(f, "mqtt.client_id = {}", self.mqtt.client_id)?;
        writeln!(f, "credentials.path = {}", self.credentials_path.display())?;
        writeln!(f, "enclave.pipelined = {}", self.pipelined)
    }
}
