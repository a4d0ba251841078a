//! Prints a per-iteration trace of the scalar parameters of one chain.
//!
//! Run with `cargo run --release --example chain_trace -- [tau] [seed] [rows]`.

use mqbsts::simdata::{generate, SimConfig};
use mqbsts::trainer::{train, McmcConfig};
use mqbsts::QuantileSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let level: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.9);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let rows: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);

    let sim = SimConfig { tau: vec![level; 3], seed, ..SimConfig::default() };
    let (data, _) = generate(&sim)?;
    let data = data.rows(0, rows)?;
    let tau = QuantileSpec::new(sim.tau.clone())?;
    let config = McmcConfig { seed, burn_in: 0, ..McmcConfig::default() };
    let sample = train(&data, &tau, &config)?;

    println!("iter W phi sigma_tau_diag sigma_mu_diag sigma_delta_diag");
    for d in &sample.draws {
        let diag = |m: &nalgebra::DMatrix<f64>| m.diagonal().iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(",");
        let (smu, sdelta) = d
            .trend
            .as_ref()
            .map(|t| (diag(t.sigma_mu.matrix()), diag(t.sigma_delta.matrix())))
            .unwrap_or_default();
        let phi: Vec<String> = d.phi.iter().map(|v| format!("{v:.3}")).collect();
        println!("{} {:.4e} {} {} {} {}", d.iteration, d.w, phi.join(","), diag(d.sigma_tau.matrix()), smu, sdelta);
    }
    Ok(())
}
