// Licensed under the Apache-2.0 license

//! Runs the 32-attempt credential suite against a random secret and prints
//! the per-label tally.
//!
//! ```bash
//! cargo run -p edgegate --example attempt_suite -- 7
//! ```

use edgegate::bench::generate_attempt_suite;
use edgegate::driver::run_attempt_suite;
use edgegate::enclave::{Enclave, LatencyModel, SecretKeyImage};
use edgegate::keystore::KeyLabel;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let image = SecretKeyImage::generate(&mut rng);
    let suite = generate_attempt_suite(image.expose_bytes(), &mut rng);

    let mut enclave = Enclave::provision(image, LatencyModel::pipelined());
    let summary = run_attempt_suite(&mut enclave, &suite)?;

    println!("{:<12} {:>8} {:>9} {:>8}", "label", "attempts", "successes", "failures");
    for label in KeyLabel::ALL {
        let c = summary.label(label);
        if c.attempts > 0 {
            println!("{:<12} {:>8} {:>9} {:>8}", label, c.attempts, c.successes, c.failures());
        }
    }
    println!(
        "{:<12} {:>8} {:>9} {:>8}",
        "total",
        summary.attempts(),
        summary.successes,
        summary.failures
    );
    if let Some((lo, hi)) = summary.cycle_range {
        println!("cycles per attempt: {lo}..={hi}");
    }
    Ok(())
}
