//! Recovers the sparse coefficient pattern of the synthetic benchmark.
//!
//! Run with `cargo run --release --example feature_selection -- [seed]`.

use mqbsts::simdata::{generate, SimConfig};
use mqbsts::trainer::{inclusion_probabilities, posterior_coefficient_summary, train, McmcConfig};
use mqbsts::QuantileSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let sim = SimConfig { seed, ..SimConfig::default() };
    let (data, truth) = generate(&sim)?;
    let tau = QuantileSpec::new(sim.tau.clone())?;
    let config = McmcConfig { seed, ..McmcConfig::default() };

    let started = std::time::Instant::now();
    let sample = train(&data, &tau, &config)?;
    let elapsed = started.elapsed();

    let inclusion = inclusion_probabilities(&sample)?;
    let summary = posterior_coefficient_summary(&sample, Some(&truth.beta))?;
    let selected = inclusion.selected(config.threshold_inclusion);
    println!("{:<8} {:>6} {:>9} {:>9} {:>7}", "coef", "p(in)", "mean", "truth", "picked");
    for (k, s) in summary.iter().enumerate() {
        println!(
            "{:<8} {:>6.3} {:>9.3} {:>9.3} {:>7}",
            s.label, inclusion.values[k], s.mean, truth.beta[k], selected[k]
        );
    }
    let exact = selected == truth.support();
    let signs = summary
        .iter()
        .zip(&truth.beta)
        .zip(&selected)
        .filter(|(_, sel)| **sel)
        .all(|((s, t), _)| s.mean.signum() == t.signum());
    println!("exact support: {exact}, signs agree: {signs}");
    println!("phi acceptance: {:?}", sample.phi_acceptance);
    println!("trained {} iterations in {:.1?}", config.iterations, elapsed);
    Ok(())
}
