//! Synthetic three-series benchmark with a known sparse coefficient matrix.
//!
//! Every series shares the same eight predictors. The trend is deterministic
//! and starts at its fixed point, so only predictors and errors depend on the seed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_mal, Rng, SymmetricPd};
use crate::error::{Error, Result};
use crate::model::{build_link, Dataset, QuantileSpec};

pub const SERIES: usize = 3;
pub const PREDICTORS: usize = 8;

pub const LONG_RUN_SLOPE: [f64; SERIES] = [0.04, 0.05, 0.02];
pub const LEARNING_RATE: [f64; SERIES] = [0.6, 0.3, 0.1];
pub const PHI: [f64; SERIES] = [0.7, 0.6, 0.9];

/// Coefficient matrix, one array per series.
pub const COEFFICIENTS: [[f64; PREDICTORS]; SERIES] = [
    [2.0, 4.0, -3.5, -2.0, 0.0, 0.0, -1.6, 0.0],
    [3.0, 0.0, 2.5, -3.0, 0.0, -1.5, 0.0, 2.0],
    [-2.5, 0.0, -2.0, -1.0, 3.0, 2.0, 0.0, 4.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PredictorLaw {
    Normal { mean: f64, variance: f64 },
    Poisson { rate: f64 },
}

/// Laws of `x1..x8`; the fourth is read with 5 as its variance.
pub const PREDICTOR_LAWS: [PredictorLaw; PREDICTORS] = [
    PredictorLaw::Normal { mean: 5.0, variance: 25.0 },
    PredictorLaw::Poisson { rate: 10.0 },
    PredictorLaw::Poisson { rate: 5.0 },
    PredictorLaw::Normal { mean: -2.0, variance: 5.0 },
    PredictorLaw::Normal { mean: -5.0, variance: 25.0 },
    PredictorLaw::Poisson { rate: 15.0 },
    PredictorLaw::Poisson { rate: 20.0 },
    PredictorLaw::Normal { mean: 0.0, variance: 100.0 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub tau: Vec<f64>,
    pub rho: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            tau: vec![0.9; SERIES],
            rho: 0.7,
            seed: 1,
        }
    }
}

/// Everything needed to score a fit against the generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub config: SimConfig,
    /// Stacked coefficients, series-major, aligned with `Dataset::coefficient_labels`.
    pub beta: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    pub long_run_slope: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_eps: Vec<f64>,
    pub sigma_eps: Vec<Vec<f64>>,
    pub sigma_tau: Vec<Vec<f64>>,
    pub predictor_laws: Vec<PredictorLaw>,
    /// Generated errors `y - μ - Bᵀx`, one row per time step.
    pub errors: Vec<Vec<f64>>,
}

impl TruthRecord {
    pub fn support(&self) -> Vec<bool> {
        self.beta.iter().map(|b| *b != 0.0).collect()
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Stacked coefficient vector of the benchmark.
pub fn true_beta() -> DVector<f64> {
    DVector::from_iterator(SERIES * PREDICTORS, COEFFICIENTS.iter().flatten().copied())
}

/// Deterministic trend: `μ_0 = 0`, `δ_0 = D`.
pub fn trend_paths(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut mu = DMatrix::zeros(n, SERIES);
    let mut delta = DMatrix::zeros(n, SERIES);
    for i in 0..SERIES {
        let (d, lr) = (LONG_RUN_SLOPE[i], LEARNING_RATE[i]);
        let (mut level, mut slope) = (0.0, d);
        for t in 0..n {
            mu[(t, i)] = level;
            delta[(t, i)] = slope;
            level += slope;
            slope = d + lr * (slope - d);
        }
    }
    (mu, delta)
}

pub fn generate(config: &SimConfig) -> Result<(Dataset, TruthRecord)> {
    if config.n == 0 {
        return Err(Error::invalid("simulation needs at least one observation"));
    }
    if !(config.rho > -0.5 && config.rho < 1.0) {
        return Err(Error::invalid(format!(
            "ρ = {} gives a non-positive-definite equicorrelation (need -0.5 < ρ < 1)",
            config.rho
        )));
    }
    let tau = QuantileSpec::new(config.tau.clone())?;
    if tau.len() != SERIES {
        return Err(Error::invalid(format!("{} quantile levels for {SERIES} series", tau.len())));
    }
    let corr = SymmetricPd::equicorrelation(SERIES, config.rho)?;
    let link = build_link(&PHI, &tau, &corr)?;
    let n = config.n;
    let mut rng = Rng::new(config.seed);

    // predictor-major, then time
    let mut x = DMatrix::zeros(n, PREDICTORS);
    for (j, law) in PREDICTOR_LAWS.iter().enumerate() {
        for t in 0..n {
            x[(t, j)] = match *law {
                PredictorLaw::Normal { mean, variance } => rng.normal(mean, variance.sqrt()),
                PredictorLaw::Poisson { rate } => rng.poisson(rate)?,
            };
        }
    }
    let mut errors = DMatrix::zeros(n, SERIES);
    for t in 0..n {
        let e = sample_mal(&link.phi_eps, &link.sigma_eps, &mut rng)?;
        errors.set_row(t, &e.transpose());
    }

    let (mu, delta) = trend_paths(n);
    let b = DMatrix::from_fn(PREDICTORS, SERIES, |j, i| COEFFICIENTS[i][j]);
    let y = &mu + &x * &b + &errors;

    let dataset = Dataset::new(
        y,
        vec![x; SERIES],
        (1..=SERIES).map(|i| format!("y{i}")).collect(),
        vec![(1..=PREDICTORS).map(|j| format!("x{j}")).collect(); SERIES],
    )?;
    let truth = TruthRecord {
        config: config.clone(),
        beta: true_beta().iter().copied().collect(),
        mu: rows_of(&mu),
        delta: rows_of(&delta),
        long_run_slope: LONG_RUN_SLOPE.to_vec(),
        learning_rate: LEARNING_RATE.to_vec(),
        phi: PHI.to_vec(),
        phi_eps: link.phi_eps.iter().copied().collect(),
        sigma_eps: rows_of(link.sigma_eps.matrix()),
        sigma_tau: rows_of(link.sigma_tau.matrix()),
        predictor_laws: PREDICTOR_LAWS.to_vec(),
        errors: rows_of(&errors),
    };
    Ok((dataset, truth))
}
