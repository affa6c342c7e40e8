// Licensed under the Apache-2.0 license

//! Authenticates candidate keys through the driver in both latency models.
//!
//! ```bash
//! cargo run -p edgegate --example authenticate
//! ```

use edgegate::driver::authenticate;
use edgegate::enclave::{Enclave, LatencyModel, SecretKeyImage};
use edgegate::keystore::{parse_credentials, CandidateKey, KeyLabel};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let image = SecretKeyImage::generate(&mut ChaCha20Rng::seed_from_u64(11));
    let secret = *image.expose_bytes();

    let candidates = [
        parse_credentials(&hex::encode(secret))?.with_label(KeyLabel::Correct),
        CandidateKey::new(secret[..12].to_vec(), KeyLabel::Incomplete)?,
        CandidateKey::empty(),
        CandidateKey::new(vec![0xEE; 32], KeyLabel::Wrong)?,
    ];

    for model in [LatencyModel::pipelined(), LatencyModel::unpipelined()] {
        let mut enclave = Enclave::provision(image.clone(), model);
        println!("{} core ({} cycles):", model.mode, model.latency_cycles());
        for key in &candidates {
            let v = authenticate(&mut enclave, key)?;
            println!(
                "  {:<10} len={:<2} authorized={:<5} cycles={} elapsed_ns={}",
                key.label(),
                key.len(),
                v.authorized,
                v.cycles,
                v.elapsed_ns
            );
        }
    }
    Ok(())
}
