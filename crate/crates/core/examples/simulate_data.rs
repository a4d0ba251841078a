//! Simulates the benchmark, writes it as CSV, reads it back and checks that
//! the generated errors sit at the requested quantile.
//!
//! Run with `cargo run --release --example simulate_data -- [rows] [tau]`.

use mqbsts::io::{read_dataset, write_dataset};
use mqbsts::simdata::{generate, SimConfig, SERIES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20_000);
    let level: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.9);
    let (data, truth) = generate(&SimConfig { n, tau: vec![level; SERIES], ..SimConfig::default() })?;

    let mut csv = Vec::new();
    write_dataset(&mut csv, &data, None)?;
    let back = read_dataset(csv.as_slice())?;
    println!("{} bytes of CSV, fingerprint {}", csv.len(), data.fingerprint().hash);
    println!("round trip identical: {}", back.fingerprint() == data.fingerprint());

    for i in 0..SERIES {
        let below = truth.errors.iter().filter(|e| e[i] <= 0.0).count() as f64 / n as f64;
        let mean = truth.errors.iter().map(|e| e[i]).sum::<f64>() / n as f64;
        println!(
            "series {}: P(error <= 0) = {below:.4} (target {level}), mean error {mean:.3} (location {:.3})",
            i + 1,
            truth.phi_eps[i]
        );
    }
    Ok(())
}
