//! Ten-step rolling one-step-ahead evaluation against the empirical-quantile baseline.
//!
//! Run with `cargo run --release --example rolling_forecast -- [tau] [seed]`.

use mqbsts::forecaster::{rolling_evaluate, RollingMode};
use mqbsts::simdata::{generate, SimConfig};
use mqbsts::trainer::McmcConfig;
use mqbsts::QuantileSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let level: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.9);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let sim = SimConfig { tau: vec![level; 3], seed, ..SimConfig::default() };
    let (data, _) = generate(&sim)?;
    let tau = QuantileSpec::new(sim.tau.clone())?;
    let config = McmcConfig { seed, ..McmcConfig::default() };

    let steps = rolling_evaluate(&data, &tau, &config, 10, RollingMode::Refit)?;
    println!("{:>4} {:>10} {:>10} {:>12} {:>12}", "row", "loss", "baseline", "cum_loss", "cum_baseline");
    for s in &steps {
        println!(
            "{:>4} {:>10.3} {:>10.3} {:>12.3} {:>12.3}",
            s.row, s.loss, s.baseline_loss, s.cumulative_loss, s.cumulative_baseline_loss
        );
    }
    Ok(())
}
