// Licensed under the Apache-2.0 license

//! Secure streaming edge gateway.
//!
//! An emulated authentication core holds a provisioned 256-bit key behind a
//! small register interface. A candidate key from the device credentials
//! file is compared inside the core, and only an authorized verdict unlocks
//! the camera stream, which is published over MQTT 3.1.1 (QoS 0) as base64
//! payloads.
//!
//! * [`enclave`]: the register-mapped authentication core and its latency model.
//! * [`driver`]: host-side access sequence and attempt suites.
//! * [`keystore`]: gateway configuration and credentials files.
//! * [`mqtt`]: packet codec, topic matching and a blocking client.
//! * [`broker`]: an embedded QoS 0 broker.
//! * [`pipeline`]: frame sources, payload encoding, pacing and the gated publisher.
//! * [`subscriber`]: a headless consumer that writes frames to disk.
//! * [`bench`]: the desk-scale benchmark behind `edgegate bench`.

pub mod bench;
pub mod broker;
pub mod driver;
pub mod enclave;
pub mod keystore;
pub mod mqtt;
pub mod pipeline;
pub mod subscriber;
