// Licensed under the Apache-2.0 license

//! On-device configuration and credentials files.

mod config;
mod credentials;

use std::path::Path;

pub use config::{
    parse_config, CameraConfig, ConfigError, ConfigErrorKind, FrameSourceSpec, GatewayConfig,
    MqttConfig, DEFAULT_CLIENT_ID, DEFAULT_CREDENTIALS_PATH, DEFAULT_FPS, DEFAULT_HEIGHT,
    DEFAULT_HOST, DEFAULT_PORT, DEFAULT_TOPIC, DEFAULT_WIDTH,
};
pub use credentials::{
    format_credentials, parse_credentials, read_credentials_file, CandidateKey, CredentialsError,
    KeyLabel,
};

#[derive(Debug, thiserror::Error)]
pub enum KeystoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Config {
        path: String,
        #[source]
        source: ConfigError,
    },
    #[error("{path}: {source}")]
    Credentials {
        path: String,
        #[source]
        source: CredentialsError,
    },
}

/// Loads a config file, resolving relative paths against its directory.
pub fn load_config(path: &Path) -> Result<GatewayConfig, KeystoreError> {
    let text = std::fs::read_to_string(path).map_err(|source| KeystoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut config = parse_config(&text).map_err(|source| KeystoreError::Config {
        path: path.display().to_string(),
        source,
    })?;
    if let Some(dir) = path.parent() {
        config.resolve_paths(dir);
    }
    Ok(config)
}
