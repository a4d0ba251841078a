//! Local linear trend with mean-reverting slope.
//!
//! State per series: level `μ_t` and slope `δ_t` with
//! `μ_{t+1} = μ_t + δ_t + u_t` and `δ_{t+1} = D + λ(δ_t - D) + v_t`.
//! Latent paths are drawn with the Durbin-Koopman simulation smoother,
//! built on a Kalman filter and a Rauch-Tung-Striebel mean smoother.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_inverse_wishart, sample_mvn, Rng, SymmetricPd};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendHyper {
    pub enabled: bool,
    /// Long-run slope `D`; empty means zero for every series.
    pub long_run_slope: Vec<f64>,
    /// Slope learning rate `λ` in `[0, 1]`; empty means one for every series.
    pub learning_rate: Vec<f64>,
    /// Variance of the diffuse prior on the first state.
    pub initial_variance: f64,
    /// Divide the residual cross-product by `W` in the trend covariance update.
    ///
    /// The state noise is not `W`-scaled, so with this on the update no longer
    /// matches the smoother's model and the covariances inflate whenever `W < 1`.
    pub scale_by_w: bool,
}

impl Default for TrendHyper {
    fn default() -> Self {
        Self {
            enabled: true,
            long_run_slope: Vec::new(),
            learning_rate: Vec::new(),
            initial_variance: 1e6,
            scale_by_w: false,
        }
    }
}

impl TrendHyper {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// Fills defaults for `m` series and validates lengths and ranges.
    pub fn resolve(&self, m: usize) -> Result<Self> {
        let fill = |v: &Vec<f64>, default: f64, name: &str| -> Result<Vec<f64>> {
            match v.len() {
                0 => Ok(vec![default; m]),
                l if l == m => Ok(v.clone()),
                l => Err(Error::invalid(format!("{name} has {l} entries for {m} series"))),
            }
        };
        let long_run_slope = fill(&self.long_run_slope, 0.0, "long-run slope")?;
        let learning_rate = fill(&self.learning_rate, 1.0, "learning rate")?;
        if let Some(bad) = learning_rate.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::invalid(format!("learning rate {bad} is outside [0, 1]")));
        }
        if !(self.initial_variance > 0.0) {
            return Err(Error::invalid("initial state variance must be positive"));
        }
        Ok(Self {
            long_run_slope,
            learning_rate,
            ..self.clone()
        })
    }

    fn slope_target(&self, delta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(delta.len(), |i, _| {
            let d = self.long_run_slope[i];
            d + self.learning_rate[i] * (delta[i] - d)
        })
    }
}

/// Latent trend paths (`n × m`) and their innovation covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendState {
    pub mu: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub sigma_mu: SymmetricPd,
    pub sigma_delta: SymmetricPd,
}

/// Linear-Gaussian model with observation matrix `[I_m 0]`.
struct StateSpace {
    m: usize,
    transition: DMatrix<f64>,
    intercept: DVector<f64>,
    state_cov: DMatrix<f64>,
    obs_cov: DMatrix<f64>,
    init_mean: DVector<f64>,
    init_cov: DMatrix<f64>,
}

impl StateSpace {
    fn new(
        hyper: &TrendHyper,
        sigma_mu: &SymmetricPd,
        sigma_delta: &SymmetricPd,
        obs_cov: DMatrix<f64>,
        first_obs: DVector<f64>,
    ) -> Self {
        let m = sigma_mu.dim();
        let s = 2 * m;
        let mut transition = DMatrix::zeros(s, s);
        let mut intercept = DVector::zeros(s);
        for i in 0..m {
            transition[(i, i)] = 1.0;
            transition[(i, m + i)] = 1.0;
            transition[(m + i, m + i)] = hyper.learning_rate[i];
            intercept[m + i] = (1.0 - hyper.learning_rate[i]) * hyper.long_run_slope[i];
        }
        let mut state_cov = DMatrix::zeros(s, s);
        state_cov.view_mut((0, 0), (m, m)).copy_from(sigma_mu.matrix());
        state_cov.view_mut((m, m), (m, m)).copy_from(sigma_delta.matrix());
        let mut init_mean = DVector::zeros(s);
        init_mean.rows_mut(0, m).copy_from(&first_obs);
        init_mean
            .rows_mut(m, m)
            .copy_from(&DVector::from_column_slice(&hyper.long_run_slope));
        Self {
            m,
            transition,
            intercept,
            state_cov,
            obs_cov,
            init_mean,
            init_cov: DMatrix::identity(s, s) * hyper.initial_variance,
        }
    }

    /// Smoothed state means `E[x_t | y_1..y_n]` (rows of `obs` are `y_t`).
    fn smoothed_means(&self, obs: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
        let n = obs.nrows();
        let m = self.m;
        let mut pred_mean = Vec::with_capacity(n);
        let mut pred_cov = Vec::with_capacity(n);
        let mut filt_mean: Vec<DVector<f64>> = Vec::with_capacity(n);
        let mut filt_cov: Vec<DMatrix<f64>> = Vec::with_capacity(n);

        let mut a = self.init_mean.clone();
        let mut p = self.init_cov.clone();
        for t in 0..n {
            let innovation = obs.row(t).transpose() - a.rows(0, m);
            let p_obs = p.rows(0, m).into_owned();
            let f = p.view((0, 0), (m, m)) + &self.obs_cov;
            let f = SymmetricPd::symmetrized(f).map_err(|e| {
                Error::numerical("trend filter", format!("innovation covariance at t = {t}: {e}"))
            })?;
            // gain transposed: F⁻¹ P[μ, :]
            let gain_t = f.solve(&p_obs);
            let a_f = &a + gain_t.tr_mul(&innovation);
            let p_f = &p - gain_t.tr_mul(&p_obs);
            let p_f = (&p_f + p_f.transpose()) * 0.5;

            pred_mean.push(a);
            pred_cov.push(p);
            a = &self.transition * &a_f + &self.intercept;
            p = &self.transition * &p_f * self.transition.transpose() + &self.state_cov;
            filt_mean.push(a_f);
            filt_cov.push(p_f);
        }

        let mut smoothed = vec![DVector::zeros(2 * m); n];
        smoothed[n - 1] = filt_mean[n - 1].clone();
        for t in (0..n - 1).rev() {
            let next_cov = SymmetricPd::symmetrized(pred_cov[t + 1].clone()).map_err(|e| {
                Error::numerical("trend smoother", format!("predicted covariance at t = {}: {e}", t + 1))
            })?;
            // J = P_t Tᵀ P_{t+1|t}⁻¹, so Jᵀ = P_{t+1|t}⁻¹ T P_t
            let gain_t = next_cov.solve(&(&self.transition * &filt_cov[t]));
            let diff = &smoothed[t + 1] - &pred_mean[t + 1];
            smoothed[t] = &filt_mean[t] + gain_t.tr_mul(&diff);
        }
        Ok(smoothed)
    }
}

/// Joint draw of the level and slope paths given everything else.
///
/// The observation equation is `y_t - ξ_t - φ_ε W = μ_t + √W e_t`, `e_t ~ N(0, Σ_ε)`.
#[allow(clippy::too_many_arguments)]
pub fn draw_trend_states(
    y: &DMatrix<f64>,
    xi: &DMatrix<f64>,
    phi_eps: &DVector<f64>,
    sigma_eps: &SymmetricPd,
    w: f64,
    hyper: &TrendHyper,
    sigma_mu: &SymmetricPd,
    sigma_delta: &SymmetricPd,
    rng: &mut Rng,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, m) = y.shape();
    if xi.shape() != (n, m) || phi_eps.len() != m || sigma_eps.dim() != m {
        return Err(Error::invalid("trend inputs have inconsistent dimensions"));
    }
    if sigma_mu.dim() != m || sigma_delta.dim() != m {
        return Err(Error::invalid("trend covariances do not match the number of series"));
    }
    if !(w > 0.0) {
        return Err(Error::invalid(format!("mixing weight W = {w} must be positive")));
    }
    if n == 0 {
        return Ok((DMatrix::zeros(0, m), DMatrix::zeros(0, m)));
    }
    let hyper = hyper.resolve(m)?;
    let mut target = y - xi;
    for mut row in target.row_iter_mut() {
        row -= (phi_eps * w).transpose();
    }
    let obs_cov = sigma_eps.matrix() * w;
    let obs_noise = SymmetricPd::symmetrized(obs_cov.clone())?;
    let model = StateSpace::new(
        &hyper,
        sigma_mu,
        sigma_delta,
        obs_cov,
        target.row(0).transpose(),
    );

    // unconditional draw from the zero-mean version of the model
    let s = 2 * m;
    let zero_m = DVector::zeros(m);
    let mut x_plus = Vec::with_capacity(n);
    let mut y_plus = DMatrix::zeros(n, m);
    let mut x = rng.standard_normal_vector(s) * hyper.initial_variance.sqrt();
    for t in 0..n {
        if t > 0 {
            let u = sample_mvn(&zero_m, sigma_mu, rng)?;
            let v = sample_mvn(&zero_m, sigma_delta, rng)?;
            let mut next = &model.transition * &x;
            {
                let mut level = next.rows_mut(0, m);
                level += &u;
            }
            {
                let mut slope = next.rows_mut(m, m);
                slope += &v;
            }
            x = next;
        }
        let e = sample_mvn(&zero_m, &obs_noise, rng)?;
        y_plus.set_row(t, &(x.rows(0, m) + e).transpose());
        x_plus.push(x.clone());
    }

    let smoothed = model.smoothed_means(&(&target - &y_plus))?;
    let mut mu = DMatrix::zeros(n, m);
    let mut delta = DMatrix::zeros(n, m);
    for t in 0..n {
        let state = &x_plus[t] + &smoothed[t];
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("trend smoother", format!("non-finite state at t = {t}")));
        }
        mu.set_row(t, &state.rows(0, m).transpose());
        delta.set_row(t, &state.rows(m, m).transpose());
    }
    Ok((mu, delta))
}

/// Innovation residuals of the level and slope recursions (`(n-1) × m` each).
pub fn trend_residuals(
    mu: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    hyper: &TrendHyper,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, m) = mu.shape();
    if delta.shape() != (n, m) {
        return Err(Error::invalid("level and slope paths differ in shape"));
    }
    let hyper = hyper.resolve(m)?;
    let rows = n.saturating_sub(1);
    let mut level = DMatrix::zeros(rows, m);
    let mut slope = DMatrix::zeros(rows, m);
    for t in 0..rows {
        let d_t = delta.row(t).transpose();
        level.set_row(t, &(mu.row(t + 1) - mu.row(t) - delta.row(t)));
        slope.set_row(t, &(delta.row(t + 1).transpose() - hyper.slope_target(&d_t)).transpose());
    }
    Ok((level, slope))
}

/// Conditional inverse-Wishart draws of `(Σ_μ, Σ_δ)`.
///
/// Scale is `V_α + AᵀA / W` (or `V_α + AᵀA` when `scale_by_w` is off) and the
/// degrees of freedom grow by the number of observed increments, `n - 1`.
pub fn draw_trend_covariances(
    mu: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    hyper: &TrendHyper,
    w: f64,
    nu_alpha: f64,
    v_alpha: &SymmetricPd,
    rng: &mut Rng,
) -> Result<(SymmetricPd, SymmetricPd)> {
    let (level, slope) = trend_residuals(mu, delta, hyper)?;
    if v_alpha.dim() != mu.ncols() {
        return Err(Error::invalid("trend prior scale does not match the number of series"));
    }
    let weight = if hyper.scale_by_w { 1.0 / w } else { 1.0 };
    let df = nu_alpha + level.nrows() as f64;
    let mut draw = |a: &DMatrix<f64>| -> Result<SymmetricPd> {
        let scale = SymmetricPd::symmetrized(v_alpha.matrix() + a.tr_mul(a) * weight)?;
        sample_inverse_wishart(df, &scale, rng)
    };
    let sigma_mu = draw(&level)?;
    let sigma_delta = draw(&slope)?;
    Ok((sigma_mu, sigma_delta))
}

/// One step of the trend recursion with fresh innovations.
pub fn advance_trend(
    mu: &DVector<f64>,
    delta: &DVector<f64>,
    hyper: &TrendHyper,
    sigma_mu: &SymmetricPd,
    sigma_delta: &SymmetricPd,
    rng: &mut Rng,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let hyper = hyper.resolve(mu.len())?;
    let zero = DVector::zeros(mu.len());
    let mu_next = mu + delta + sample_mvn(&zero, sigma_mu, rng)?;
    let delta_next = hyper.slope_target(delta) + sample_mvn(&zero, sigma_delta, rng)?;
    Ok((mu_next, delta_next))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_fills_defaults_and_validates() {
        let h = TrendHyper::default().resolve(2).unwrap();
        assert_eq!(h.long_run_slope, vec![0.0, 0.0]);
        assert_eq!(h.learning_rate, vec![1.0, 1.0]);
        let bad = TrendHyper {
            learning_rate: vec![1.5],
            ..TrendHyper::default()
        };
        assert!(bad.resolve(1).is_err());
        assert!(TrendHyper::default().resolve(2).is_ok());
        let wrong_len = TrendHyper {
            long_run_slope: vec![0.1, 0.2, 0.3],
            ..TrendHyper::default()
        };
        assert!(wrong_len.resolve(2).is_err());
    }

    #[test]
    fn residuals_vanish_on_deterministic_recursion() {
        let hyper = TrendHyper {
            long_run_slope: vec![0.04],
            learning_rate: vec![0.6],
            ..TrendHyper::default()
        };
        let n = 20;
        let mut mu = DMatrix::zeros(n, 1);
        let mut delta = DMatrix::zeros(n, 1);
        delta[(0, 0)] = 0.5;
        for t in 1..n {
            mu[(t, 0)] = mu[(t - 1, 0)] + delta[(t - 1, 0)];
            delta[(t, 0)] = 0.04 + 0.6 * (delta[(t - 1, 0)] - 0.04);
        }
        let (a, b) = trend_residuals(&mu, &delta, &hyper).unwrap();
        assert!(a.norm() < 1e-12 && b.norm() < 1e-12);
        assert_eq!(a.nrows(), n - 1);
    }

    #[test]
    fn residual_scaling_is_quadratic() {
        let hyper = TrendHyper::default();
        let mut rng = Rng::new(5);
        let mu = DMatrix::from_fn(10, 2, |_, _| rng.standard_normal());
        let delta = DMatrix::from_fn(10, 2, |_, _| rng.standard_normal());
        let (a, _) = trend_residuals(&mu, &delta, &hyper).unwrap();
        let (a3, _) = trend_residuals(&(&mu * 3.0), &(&delta * 3.0), &hyper).unwrap();
        assert!((a3.tr_mul(&a3) - a.tr_mul(&a) * 9.0).norm() < 1e-9);
    }

    #[test]
    fn rejects_nonpositive_w() {
        let mut rng = Rng::new(1);
        let id = SymmetricPd::identity(1);
        let y = DMatrix::zeros(3, 1);
        let r = draw_trend_states(
            &y,
            &y,
            &DVector::zeros(1),
            &id,
            0.0,
            &TrendHyper::default(),
            &id,
            &id,
            &mut rng,
        );
        assert!(r.is_err());
    }
}
