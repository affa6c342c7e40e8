// Licensed under the Apache-2.0 license

//! Short benchmark run: attempt suite, latency sweep and one loopback pacing
//! run at reduced resolution.
//!
//! ```bash
//! cargo run -p edgegate --example bench_report
//! ```

use std::time::Duration;

use edgegate::bench::{run_bench, BenchOptions};

fn main() {
    let options = BenchOptions {
        seed: 3,
        fps_targets: vec![14],
        fps_run: Duration::from_secs(2),
        width: 320,
        height: 240,
        ..BenchOptions::default()
    };
    let report = run_bench(&options);
    print!("{report}");
    println!("all within tolerance: {}", report.all_ok());
}
