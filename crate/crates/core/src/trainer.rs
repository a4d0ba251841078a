//! The Gibbs loop: trend, trend covariances, SSVS, coefficients, `Σ_τ`,
//! `Φ` and `W`, in that order, with post-burn-in draw storage.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_inverse_wishart, Rng, SymmetricPd};
use crate::error::{Error, Result};
use crate::model::{
    assemble_block_x, error_scale, regression_fit, vectorize_by_series, Dataset, DatasetFingerprint,
    QuantileSpec,
};
use crate::sampler::{
    decorrelate, draw_beta, draw_gamma_ssvs, draw_phi_mh, draw_sigma_tau, draw_w, ErrorState, SlabPrior,
    WExponent,
};
use crate::trend::{draw_trend_covariances, draw_trend_states, TrendHyper};

/// Iterations between step-size updates of the `Φ` random walk during burn-in.
const ADAPT_WINDOW: usize = 20;
const TARGET_ACCEPTANCE: (f64, f64) = (0.30, 0.45);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub threshold_inclusion: f64,
    /// Initial diagonal of `Φ`; empty means 0.1 for every series.
    pub phi_init: Vec<f64>,
    /// Initial random-walk scale on `log φ_i`; 0 holds `Φ` fixed.
    pub phi_step: f64,
    /// Tune the `Φ` step toward the target acceptance band during burn-in.
    pub adapt_phi_step: bool,
    /// Prior inclusion probability `π`, shared by every coefficient.
    pub inclusion_prior: f64,
    /// Per-coefficient override of `inclusion_prior`.
    pub inclusion_prior_per_coefficient: Vec<f64>,
    pub slab_mean: f64,
    pub kappa: f64,
    pub r_squared: f64,
    pub v0: f64,
    /// Degrees of freedom of the trend covariance prior.
    pub nu_alpha: f64,
    /// Diagonal scale of the trend covariance prior, also the initial value.
    pub v_alpha: f64,
    pub w_exponent: WExponent,
    pub trend: TrendHyper,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            burn_in: 200,
            seed: 1,
            threshold_inclusion: 0.8,
            phi_init: Vec::new(),
            phi_step: 0.05,
            adapt_phi_step: true,
            inclusion_prior: 0.5,
            inclusion_prior_per_coefficient: Vec::new(),
            slab_mean: 0.0,
            kappa: 0.01,
            r_squared: 0.8,
            v0: 5.0,
            nu_alpha: 0.01,
            v_alpha: 0.01,
            w_exponent: WExponent::Joint,
            trend: TrendHyper::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self, m: usize, k: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold_inclusion) {
            return Err(Error::invalid("inclusion threshold must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.inclusion_prior) {
            return Err(Error::invalid("prior inclusion probability must lie in [0, 1]"));
        }
        if !self.inclusion_prior_per_coefficient.is_empty() && self.inclusion_prior_per_coefficient.len() != k {
            return Err(Error::invalid(format!(
                "{} prior inclusion probabilities for {k} coefficients",
                self.inclusion_prior_per_coefficient.len()
            )));
        }
        if !self.phi_init.is_empty() && self.phi_init.len() != m {
            return Err(Error::invalid(format!("{} initial Φ values for {m} series", self.phi_init.len())));
        }
        if self.phi_init.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("initial Φ must be strictly positive"));
        }
        if !(self.phi_step >= 0.0 && self.phi_step.is_finite()) {
            return Err(Error::invalid("Φ step size must be non-negative"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("κ must be positive"));
        }
        if !(0.0..1.0).contains(&self.r_squared) {
            return Err(Error::invalid("R² must lie in [0, 1)"));
        }
        if !(self.v0 > (m + 1) as f64) {
            return Err(Error::invalid(format!(
                "v0 = {} must exceed m + 1 = {} for a proper prior scale",
                self.v0,
                m + 1
            )));
        }
        if !(self.v_alpha > 0.0) || !(self.nu_alpha > 0.0) {
            return Err(Error::invalid("trend covariance prior needs ν_α > 0 and V_α > 0"));
        }
        self.trend.resolve(m)?;
        Ok(())
    }

    fn phi_start(&self, m: usize) -> DVector<f64> {
        if self.phi_init.is_empty() {
            DVector::from_element(m, 0.1)
        } else {
            DVector::from_column_slice(&self.phi_init)
        }
    }

    fn inclusion_priors(&self, k: usize) -> Vec<f64> {
        if self.inclusion_prior_per_coefficient.is_empty() {
            vec![self.inclusion_prior; k]
        } else {
            self.inclusion_prior_per_coefficient.clone()
        }
    }
}

/// Latent trend paths and innovation covariances of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendDraw {
    pub mu: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub sigma_mu: SymmetricPd,
    pub sigma_delta: SymmetricPd,
}

impl TrendDraw {
    /// Level and slope at the last observed time.
    pub fn last_state(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.mu.nrows();
        (self.mu.row(n - 1).transpose(), self.delta.row(n - 1).transpose())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcDraw {
    pub iteration: usize,
    pub trend: Option<TrendDraw>,
    pub gamma: Vec<bool>,
    pub beta: DVector<f64>,
    pub sigma_tau: SymmetricPd,
    pub phi: DVector<f64>,
    pub w: f64,
}

impl McmcDraw {
    fn check(&self) -> Result<()> {
        let finite = self.beta.iter().all(|v| v.is_finite())
            && self.phi.iter().all(|v| v.is_finite() && *v > 0.0)
            && self.sigma_tau.matrix().iter().all(|v| v.is_finite())
            && self.w.is_finite()
            && self.w > 0.0;
        if !finite {
            return Err(Error::numerical("draw check", format!("non-finite draw at iteration {}", self.iteration)));
        }
        if self.gamma.iter().zip(self.beta.iter()).any(|(g, b)| !*g && *b != 0.0) {
            return Err(Error::numerical("draw check", "coefficient outside the active set"));
        }
        Ok(())
    }
}

/// Retained draws plus enough context to forecast and to report.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub draws: Vec<McmcDraw>,
    pub config: McmcConfig,
    pub tau: QuantileSpec,
    pub fingerprint: DatasetFingerprint,
    pub coefficient_labels: Vec<String>,
    pub series_names: Vec<String>,
    pub predictor_counts: Vec<usize>,
    /// Post-burn-in acceptance rate of each `Φ` coordinate.
    pub phi_acceptance: Vec<f64>,
    /// Random-walk scales in use after burn-in.
    pub phi_steps: Vec<f64>,
}

impl PosteriorSample {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn series(&self) -> usize {
        self.series_names.len()
    }
}

/// Runs one chain seeded from `config.seed`.
pub fn train(dataset: &Dataset, tau: &QuantileSpec, config: &McmcConfig) -> Result<PosteriorSample> {
    let mut rng = Rng::new(config.seed);
    train_with_rng(dataset, tau, config, &mut rng)
}

/// Runs `chains` independent chains concurrently; chain `c` uses stream `c` of `config.seed`.
pub fn train_chains(
    dataset: &Dataset,
    tau: &QuantileSpec,
    config: &McmcConfig,
    chains: usize,
) -> Result<Vec<PosteriorSample>> {
    if chains == 0 {
        return Err(Error::invalid("at least one chain is required"));
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| {
                scope.spawn(move || {
                    let mut rng = Rng::with_stream(config.seed, c as u64);
                    train_with_rng(dataset, tau, config, &mut rng)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::numerical("chain", "worker thread panicked"))))
            .collect()
    })
}

/// `V₀ = (v₀ - m - 1)(1 - R²) Σ_y`.
pub fn sigma_tau_prior_scale(dataset: &Dataset, config: &McmcConfig) -> Result<SymmetricPd> {
    let m = dataset.m();
    let weight = (config.v0 - m as f64 - 1.0) * (1.0 - config.r_squared);
    SymmetricPd::symmetrized(dataset.target_covariance() * weight)
        .map_err(|e| Error::data(format!("target covariance is not positive definite: {e}")))
}

fn kernel<T>(name: &'static str, iteration: usize, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::Kernel {
        kernel: name,
        iteration,
        source: Box::new(e),
    })
}

/// Fixed prior pieces of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPriors {
    pub slab: SlabPrior,
    /// Prior inclusion probability of each coefficient.
    pub inclusion: Vec<f64>,
    pub v0: f64,
    pub v0_scale: SymmetricPd,
    pub nu_alpha: f64,
    pub v_alpha: SymmetricPd,
    pub w_exponent: WExponent,
    /// Resolved to one entry per series.
    pub trend: TrendHyper,
}

impl ChainPriors {
    /// Priors implied by `config` on `dataset`; `V₀` comes from the target covariance.
    pub fn from_config(dataset: &Dataset, config: &McmcConfig) -> Result<Self> {
        let (m, k) = (dataset.m(), dataset.total_predictors());
        config.validate(m, k)?;
        let x = assemble_block_x(dataset);
        Ok(Self {
            slab: SlabPrior::from_design(&x, dataset.n(), config.kappa, config.slab_mean)?,
            inclusion: config.inclusion_priors(k),
            v0: config.v0,
            v0_scale: sigma_tau_prior_scale(dataset, config)?,
            nu_alpha: config.nu_alpha,
            v_alpha: SymmetricPd::scaled_identity(m, config.v_alpha)?,
            w_exponent: config.w_exponent,
            trend: config.trend.resolve(m)?,
        })
    }
}

/// Everything one Gibbs sweep reads and rewrites.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub gamma: Vec<bool>,
    pub beta: DVector<f64>,
    pub err: ErrorState,
    /// Present exactly when the trend component is on.
    pub trend: Option<TrendDraw>,
}

impl ChainState {
    /// Empty support, zero coefficients, `W = 1`, `Σ_τ` from its prior, flat
    /// zero trend paths with covariances at `V_α`.
    pub fn initial(n: usize, priors: &ChainPriors, phi: DVector<f64>, rng: &mut Rng) -> Result<Self> {
        let m = phi.len();
        let k = priors.inclusion.len();
        let sigma_tau = sample_inverse_wishart(priors.v0, &priors.v0_scale, rng)?;
        Ok(Self {
            gamma: vec![false; k],
            beta: DVector::zeros(k),
            err: ErrorState { phi, sigma_tau, w: 1.0 },
            trend: priors.trend.enabled.then(|| TrendDraw {
                mu: DMatrix::zeros(n, m),
                delta: DMatrix::zeros(n, m),
                sigma_mu: priors.v_alpha.clone(),
                sigma_delta: priors.v_alpha.clone(),
            }),
        })
    }
}

/// One full sweep: trend paths, trend covariances, SSVS, `β`, `Σ_τ`, `Φ`, `W`.
///
/// `x` is the block design of `dataset`. Returns the `Φ` acceptance flags.
/// Failures carry the kernel name and `iteration`.
#[allow(clippy::too_many_arguments)]
pub fn gibbs_sweep(
    dataset: &Dataset,
    x: &DMatrix<f64>,
    tau: &QuantileSpec,
    priors: &ChainPriors,
    state: &mut ChainState,
    phi_steps: &[f64],
    iteration: usize,
    rng: &mut Rng,
) -> Result<Vec<bool>> {
    let n = dataset.n();
    let y = dataset.y();
    let err = &mut state.err;

    if let Some(trend) = state.trend.as_mut() {
        let xi = regression_fit(dataset.predictors(), &state.beta);
        let phi_eps = err.phi.component_mul(&tau.location_weights());
        let sigma_eps = kernel("trend_states", iteration, error_scale(&err.phi, &err.sigma_tau))?;
        let (mu, delta) = kernel(
            "trend_states",
            iteration,
            draw_trend_states(
                y,
                &xi,
                &phi_eps,
                &sigma_eps,
                err.w,
                &priors.trend,
                &trend.sigma_mu,
                &trend.sigma_delta,
                rng,
            ),
        )?;
        let (sigma_mu, sigma_delta) = kernel(
            "trend_covariances",
            iteration,
            draw_trend_covariances(&mu, &delta, &priors.trend, err.w, priors.nu_alpha, &priors.v_alpha, rng),
        )?;
        *trend = TrendDraw { mu, delta, sigma_mu, sigma_delta };
    }

    let z = match &state.trend {
        Some(trend) => y - &trend.mu,
        None => y.clone(),
    };
    let z_tilde = vectorize_by_series(&z);
    let sys = kernel("decorrelate", iteration, decorrelate(&z_tilde, x, n, err, tau))?;
    let moments = sys.moments();
    kernel(
        "ssvs",
        iteration,
        draw_gamma_ssvs(&moments, &mut state.gamma, &priors.inclusion, err.w, &priors.slab, rng),
    )?;
    state.beta = kernel("beta", iteration, draw_beta(&moments, &state.gamma, err.w, &priors.slab, rng))?;

    let fit = regression_fit(dataset.predictors(), &state.beta);
    err.sigma_tau = kernel(
        "sigma_tau",
        iteration,
        draw_sigma_tau(&z, &fit, err, tau, priors.v0, &priors.v0_scale, rng),
    )?;

    let resid = &z - &fit;
    let accepted = kernel(
        "phi",
        iteration,
        draw_phi_mh(&mut err.phi, &resid, &err.sigma_tau, tau, err.w, phi_steps, rng),
    )?;

    let sys = kernel("decorrelate", iteration, decorrelate(&z_tilde, x, n, err, tau))?;
    err.w = kernel("w", iteration, draw_w(&sys, &state.beta, priors.w_exponent, rng))?;
    Ok(accepted)
}

pub fn train_with_rng(
    dataset: &Dataset,
    tau: &QuantileSpec,
    config: &McmcConfig,
    rng: &mut Rng,
) -> Result<PosteriorSample> {
    let (n, m) = (dataset.n(), dataset.m());
    if tau.len() != m {
        return Err(Error::invalid(format!("{} quantile levels for {m} series", tau.len())));
    }
    let priors = ChainPriors::from_config(dataset, config)?;
    if priors.trend.enabled && n < 2 {
        return Err(Error::invalid("the trend component needs at least two observations"));
    }
    let x = assemble_block_x(dataset);
    let mut state = kernel("init", 0, ChainState::initial(n, &priors, config.phi_start(m), rng))?;

    let mut steps = vec![config.phi_step; m];
    let mut window_accepts = vec![0usize; m];
    let mut retained_accepts = vec![0usize; m];
    let mut draws = Vec::with_capacity(config.iterations - config.burn_in);

    for iter in 0..config.iterations {
        let accepted = gibbs_sweep(dataset, &x, tau, &priors, &mut state, &steps, iter, rng)?;

        if iter < config.burn_in {
            for (count, acc) in window_accepts.iter_mut().zip(&accepted) {
                *count += usize::from(*acc);
            }
            if config.adapt_phi_step && (iter + 1) % ADAPT_WINDOW == 0 {
                for (step, count) in steps.iter_mut().zip(window_accepts.iter_mut()) {
                    let rate = *count as f64 / ADAPT_WINDOW as f64;
                    if rate < TARGET_ACCEPTANCE.0 {
                        *step *= 0.7;
                    } else if rate > TARGET_ACCEPTANCE.1 {
                        *step *= 1.4;
                    }
                    *count = 0;
                }
            }
            continue;
        }

        for (count, acc) in retained_accepts.iter_mut().zip(&accepted) {
            *count += usize::from(*acc);
        }
        let draw = McmcDraw {
            iteration: iter,
            trend: state.trend.clone(),
            gamma: state.gamma.clone(),
            beta: state.beta.clone(),
            sigma_tau: state.err.sigma_tau.clone(),
            phi: state.err.phi.clone(),
            w: state.err.w,
        };
        kernel("store", iter, draw.check())?;
        draws.push(draw);
    }

    let kept = draws.len().max(1) as f64;
    Ok(PosteriorSample {
        draws,
        config: McmcConfig {
            trend: priors.trend.clone(),
            ..config.clone()
        },
        tau: tau.clone(),
        fingerprint: dataset.fingerprint(),
        coefficient_labels: dataset.coefficient_labels(),
        series_names: dataset.series_names().to_vec(),
        predictor_counts: dataset.predictor_counts(),
        phi_acceptance: retained_accepts.iter().map(|c| *c as f64 / kept).collect(),
        phi_steps: steps,
    })
}

/// Inclusion frequencies with their coefficient labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionProbabilities {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl InclusionProbabilities {
    /// Coordinates with frequency at or above `threshold`.
    pub fn selected(&self, threshold: f64) -> Vec<bool> {
        self.values.iter().map(|p| *p >= threshold).collect()
    }
}

pub fn inclusion_probabilities(sample: &PosteriorSample) -> Result<InclusionProbabilities> {
    if sample.is_empty() {
        return Err(Error::invalid("posterior sample has no draws"));
    }
    let k = sample.coefficient_labels.len();
    let mut counts = vec![0usize; k];
    for draw in &sample.draws {
        for (c, g) in counts.iter_mut().zip(&draw.gamma) {
            *c += usize::from(*g);
        }
    }
    let total = sample.len() as f64;
    Ok(InclusionProbabilities {
        labels: sample.coefficient_labels.clone(),
        values: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    /// `|(mean - truth) / truth|`, present only for a nonzero truth.
    pub normalized_error: Option<f64>,
}

/// Posterior mean and standard deviation (over retained draws, zeros included) per coefficient.
pub fn posterior_coefficient_summary(
    sample: &PosteriorSample,
    truth: Option<&[f64]>,
) -> Result<Vec<CoefficientSummary>> {
    if sample.is_empty() {
        return Err(Error::invalid("posterior sample has no draws"));
    }
    let k = sample.coefficient_labels.len();
    if let Some(t) = truth {
        if t.len() != k {
            return Err(Error::invalid(format!("{} true coefficients for {k} estimates", t.len())));
        }
    }
    let total = sample.len() as f64;
    Ok((0..k)
        .map(|j| {
            let mean = sample.draws.iter().map(|d| d.beta[j]).sum::<f64>() / total;
            let var = sample.draws.iter().map(|d| (d.beta[j] - mean).powi(2)).sum::<f64>() / total;
            let normalized_error = truth
                .map(|t| t[j])
                .filter(|t| *t != 0.0)
                .map(|t| ((mean - t) / t).abs());
            CoefficientSummary {
                label: sample.coefficient_labels[j].clone(),
                mean,
                sd: var.sqrt(),
                normalized_error,
            }
        })
        .collect())
}
