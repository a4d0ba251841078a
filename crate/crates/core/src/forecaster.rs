//! One-step-ahead joint quantile forecasts by averaging posterior-predictive
//! simulations, and rolling pinball-loss evaluation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_exponential_unit, Rng};
use crate::error::{Error, Result};
use crate::model::{error_location, error_scale, quantile_loss, Dataset, QuantileSpec};
use crate::trainer::{train, McmcConfig, PosteriorSample};
use crate::trend::advance_trend;

/// Noise switches for the predictive simulation; both on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastOptions {
    pub trend_noise: bool,
    pub error_noise: bool,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            trend_noise: true,
            error_noise: true,
        }
    }
}

/// Per-draw components of the simulated predictions, each `draws × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastComponents {
    pub trend: DMatrix<f64>,
    pub regression: DMatrix<f64>,
    pub error: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// Zero-based row index of the forecast target.
    pub step: usize,
    /// Simulated `ỹ` for each retained draw, `draws × m`.
    pub draws: DMatrix<f64>,
    pub components: ForecastComponents,
    pub prediction: DVector<f64>,
    /// Per-series pinball loss against the realized value, when known.
    pub loss: Option<DVector<f64>>,
}

impl ForecastResult {
    /// Attaches per-series pinball losses for a realized observation.
    pub fn score(&mut self, realized: &DVector<f64>, tau: &QuantileSpec) -> Result<f64> {
        if realized.len() != self.prediction.len() {
            return Err(Error::invalid("realized vector does not match the number of series"));
        }
        let mut loss = DVector::zeros(realized.len());
        for i in 0..realized.len() {
            loss[i] = quantile_loss(realized[i] - self.prediction[i], tau.values()[i])?;
        }
        let total = loss.sum();
        self.loss = Some(loss);
        Ok(total)
    }
}

fn check_predictors(sample: &PosteriorSample, new_predictors: &[DVector<f64>]) -> Result<()> {
    if new_predictors.len() != sample.predictor_counts.len() {
        return Err(Error::invalid(format!(
            "{} predictor vectors for {} series",
            new_predictors.len(),
            sample.predictor_counts.len()
        )));
    }
    for (i, (x, k)) in new_predictors.iter().zip(&sample.predictor_counts).enumerate() {
        if x.len() != *k {
            return Err(Error::invalid(format!(
                "series {} expects {k} predictors, got {}",
                i + 1,
                x.len()
            )));
        }
    }
    Ok(())
}

/// Posterior-predictive mean at the step after the training window.
///
/// Each retained draw contributes one simulated `ỹ = μ + ξ + ε`; the
/// prediction is their arithmetic mean, summed in draw order.
pub fn forecast_one_step(
    sample: &PosteriorSample,
    new_predictors: &[DVector<f64>],
    options: ForecastOptions,
    rng: &mut Rng,
) -> Result<ForecastResult> {
    if sample.is_empty() {
        return Err(Error::invalid("posterior sample has no draws"));
    }
    check_predictors(sample, new_predictors)?;
    let m = sample.series();
    let d = sample.len();
    let hyper = &sample.config.trend;
    let tau = &sample.tau;
    let mut trend = DMatrix::zeros(d, m);
    let mut regression = DMatrix::zeros(d, m);
    let mut error = DMatrix::zeros(d, m);

    for (r, draw) in sample.draws.iter().enumerate() {
        if let Some(td) = &draw.trend {
            let (mu, delta) = td.last_state();
            let next = if options.trend_noise {
                advance_trend(&mu, &delta, hyper, &td.sigma_mu, &td.sigma_delta, rng)?.0
            } else {
                mu + delta
            };
            trend.set_row(r, &next.transpose());
        }
        let mut offset = 0;
        for (i, x) in new_predictors.iter().enumerate() {
            regression[(r, i)] = draw.beta.rows(offset, x.len()).dot(x);
            offset += x.len();
        }
        let phi_eps = error_location(&draw.phi, tau);
        let eps = if options.error_noise {
            let sigma_eps = error_scale(&draw.phi, &draw.sigma_tau)?;
            let w = sample_exponential_unit(rng);
            let e = sigma_eps.upper().tr_mul(&rng.standard_normal_vector(m));
            phi_eps * w + e * w.sqrt()
        } else {
            DVector::zeros(m)
        };
        error.set_row(r, &eps.transpose());
    }

    let draws = &trend + &regression + &error;
    let mut prediction = DVector::zeros(m);
    for row in draws.row_iter() {
        prediction += row.transpose();
    }
    prediction /= d as f64;
    Ok(ForecastResult {
        step: sample.fingerprint.rows,
        draws,
        components: ForecastComponents {
            trend,
            regression,
            error,
        },
        prediction,
        loss: None,
    })
}

/// How the rolling evaluation treats the training window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RollingMode {
    /// Retrain on the expanding window before every step.
    #[default]
    Refit,
    /// Train once on the first window; later steps reuse those draws with the
    /// trend propagated forward without conditioning on newer observations.
    Fixed,
}

/// Per-step losses of the rolling evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingStep {
    /// Zero-based row index of the forecast target.
    pub row: usize,
    pub prediction: Vec<f64>,
    pub realized: Vec<f64>,
    pub baseline: Vec<f64>,
    pub loss: f64,
    pub cumulative_loss: f64,
    pub baseline_loss: f64,
    pub cumulative_baseline_loss: f64,
}

/// Rolls one-step-ahead forecasts over the last `steps` rows of `dataset`.
///
/// Step `h` (1-based) trains on rows `0..n₀+h-1` with `n₀ = n - steps` and
/// scores row `n₀+h-1`. The seed for step `h` is `config.seed + h - 1`.
pub fn rolling_evaluate(
    dataset: &Dataset,
    tau: &QuantileSpec,
    config: &McmcConfig,
    steps: usize,
    mode: RollingMode,
) -> Result<Vec<RollingStep>> {
    if steps == 0 {
        return Ok(Vec::new());
    }
    let n = dataset.n();
    if n < steps + 2 {
        return Err(Error::invalid(format!(
            "{n} rows leave no training window for {steps} evaluation steps"
        )));
    }
    let start = n - steps;
    let mut out = Vec::with_capacity(steps);
    let (mut cumulative, mut cumulative_base) = (0.0, 0.0);
    let mut fixed: Option<PosteriorSample> = None;
    let mut rng = Rng::with_stream(config.seed, u64::MAX);

    for h in 0..steps {
        let row = start + h;
        let window = dataset.rows(0, row)?;
        let result = match mode {
            RollingMode::Refit => {
                let cfg = McmcConfig {
                    seed: config.seed.wrapping_add(h as u64),
                    ..config.clone()
                };
                let sample = train(&window, tau, &cfg)?;
                let mut step_rng = Rng::with_stream(cfg.seed, 1);
                forecast_one_step(&sample, &dataset.predictor_row(row), ForecastOptions::default(), &mut step_rng)?
            }
            RollingMode::Fixed => {
                if fixed.is_none() {
                    fixed = Some(train(&window, tau, config)?);
                }
                let sample = fixed.as_mut().expect("trained above");
                let result =
                    forecast_one_step(sample, &dataset.predictor_row(row), ForecastOptions::default(), &mut rng)?;
                propagate_trend(sample, &mut rng)?;
                result
            }
        };
        let realized = dataset.y().row(row).transpose();
        let baseline = baseline_empirical_quantile(&window.y().clone(), tau)?;
        let mut loss = 0.0;
        let mut base_loss = 0.0;
        for i in 0..dataset.m() {
            let p = tau.values()[i];
            loss += quantile_loss(realized[i] - result.prediction[i], p)?;
            base_loss += quantile_loss(realized[i] - baseline[i], p)?;
        }
        cumulative += loss;
        cumulative_base += base_loss;
        out.push(RollingStep {
            row,
            prediction: result.prediction.iter().copied().collect(),
            realized: realized.iter().copied().collect(),
            baseline: baseline.iter().copied().collect(),
            loss,
            cumulative_loss: cumulative,
            baseline_loss: base_loss,
            cumulative_baseline_loss: cumulative_base,
        });
    }
    Ok(out)
}

/// Appends one unconditional trend step to every retained path, so the next
/// forecast starts one row later.
pub fn propagate_trend(sample: &mut PosteriorSample, rng: &mut Rng) -> Result<()> {
    let hyper = sample.config.trend.clone();
    for draw in &mut sample.draws {
        if let Some(td) = &mut draw.trend {
            let (mu, delta) = td.last_state();
            let (mu_next, delta_next) = advance_trend(&mu, &delta, &hyper, &td.sigma_mu, &td.sigma_delta, rng)?;
            let n = td.mu.nrows();
            let m = td.mu.ncols();
            td.mu = td.mu.clone().resize_vertically(n + 1, 0.0);
            td.delta = td.delta.clone().resize_vertically(n + 1, 0.0);
            for i in 0..m {
                td.mu[(n, i)] = mu_next[i];
                td.delta[(n, i)] = delta_next[i];
            }
        }
    }
    sample.fingerprint.rows += 1;
    Ok(())
}

/// Per-series `τ_i` empirical quantile, linear interpolation between order
/// statistics at position `(n - 1)τ` (zero-based).
pub fn baseline_empirical_quantile(targets: &DMatrix<f64>, tau: &QuantileSpec) -> Result<DVector<f64>> {
    let (n, m) = targets.shape();
    if n == 0 {
        return Err(Error::invalid("empirical quantile of an empty window"));
    }
    if tau.len() != m {
        return Err(Error::invalid(format!("{} quantile levels for {m} series", tau.len())));
    }
    let mut out = DVector::zeros(m);
    for i in 0..m {
        let mut col: Vec<f64> = targets.column(i).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        let pos = (n - 1) as f64 * tau.values()[i];
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        out[i] = col[lo] + frac * (col[hi] - col[lo]);
    }
    Ok(out)
}
