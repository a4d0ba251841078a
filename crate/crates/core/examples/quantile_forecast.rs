//! One-step-ahead forecasts of the same series at a low and a high quantile level.
//!
//! The prediction splits into the trend-plus-regression fit, which tracks the
//! requested quantile, and the averaged error draws.
//!
//! Run with `cargo run --release --example quantile_forecast -- [seed]`.

use mqbsts::forecaster::{forecast_one_step, ForecastOptions};
use mqbsts::simdata::{generate, SimConfig};
use mqbsts::trainer::{train, McmcConfig};
use mqbsts::{QuantileSpec, Rng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let sim = SimConfig { n: 501, tau: vec![0.5; 3], seed, ..SimConfig::default() };
    let (data, _) = generate(&sim)?;
    let history = data.rows(0, 500)?;
    let next = data.predictor_row(500);
    let config = McmcConfig { seed, ..McmcConfig::default() };

    println!("realized: {:.3}", data.y().row(500));
    println!("{:>5} {:>8} {:>12} {:>12} {:>12}", "tau", "series", "prediction", "trend+reg", "error");
    for level in [0.1, 0.9] {
        let tau = QuantileSpec::uniform(3, level)?;
        let sample = train(&history, &tau, &config)?;
        let result = forecast_one_step(&sample, &next, ForecastOptions::default(), &mut Rng::new(seed))?;
        let c = &result.components;
        let fit = (&c.trend + &c.regression).row_mean();
        let error = c.error.row_mean();
        for i in 0..3 {
            println!(
                "{:>5} {:>8} {:>12.3} {:>12.3} {:>12.3}",
                level,
                data.series_names()[i],
                result.prediction[i],
                fit[i],
                error[i]
            );
        }
    }
    Ok(())
}
