// Licensed under the Apache-2.0 license

//! Writes a gateway config and credentials file, loads them back and shows
//! how malformed input is reported.
//!
//! ```bash
//! cargo run -p edgegate --example config_files
//! ```

use edgegate::keystore::{format_credentials, load_config, parse_config, read_credentials_file};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("edgegate-config-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    std::fs::write(
        dir.join("gateway.cfg"),
        "# lab camera\n\
         camera.width = 1280\n\
         camera.height = 720\n\
         camera.fps = 6\n\
         mqtt.host = 10.0.0.7\n\
         mqtt.topic = lab/cam0\n\
         credentials.path = keys/cam0.hex\n",
    )?;
    std::fs::create_dir_all(dir.join("keys"))?;
    std::fs::write(dir.join("keys/cam0.hex"), format_credentials(&[0xAB; 20]))?;

    let config = load_config(&dir.join("gateway.cfg"))?;
    println!("{config}");
    let key = read_credentials_file(&config.credentials_path)?;
    println!("credentials: {key:?}");

    for bad in ["camera.fps = fast\n", "mqtt.port = 1883\nnonsense\n", "camera.width = 0\n"] {
        match parse_config(bad) {
            Ok(c) => println!("accepted: {c:?}"),
            Err(e) => println!("rejected: {e}"),
        }
    }

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
