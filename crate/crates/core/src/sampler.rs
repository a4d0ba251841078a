//! Gibbs kernels for the quantile-regression block: decorrelation, SSVS
//! indicator sweep, coefficient draw, `Σ_τ`, the Metropolis-Hastings `Φ`
//! sweep and the GIG draw of the mixing weight `W`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_gig, sample_inverse_wishart, Rng, SymmetricPd};
use crate::error::{Error, Result};
use crate::model::{active_indices, devectorize_by_series, expand_vector, restrict_square, QuantileSpec};

/// Error-term parameters `(Φ, Σ_τ, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub phi: DVector<f64>,
    pub sigma_tau: SymmetricPd,
    pub w: f64,
}

impl ErrorState {
    pub fn validate(&self) -> Result<()> {
        if self.phi.len() != self.sigma_tau.dim() {
            return Err(Error::invalid("Φ and Σ_τ dimensions differ"));
        }
        if self.phi.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("Φ must be strictly positive"));
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::invalid(format!("W = {} must be positive", self.w)));
        }
        Ok(())
    }
}

/// Exponent used for the GIG conditional of `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WExponent {
    /// `p = 1 - mn/2`, from expanding `|W Φ Σ_τ Φ|^{-n/2}` over all `mn` observations.
    #[default]
    Joint,
    /// `p = 1 - n/2`, the exponent as printed in the original derivation.
    Literal,
}

/// The regression after the `((UΦ)⁻¹)ᵀ ⊗ I_n` transform.
#[derive(Debug, Clone, PartialEq)]
pub struct DecorrelatedSystem {
    pub n: usize,
    pub m: usize,
    pub z_hat: DVector<f64>,
    pub x_hat: DMatrix<f64>,
    pub phi_eps_hat: DVector<f64>,
}

/// Cross-products of a [`DecorrelatedSystem`] shared by the SSVS and β kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMoments {
    pub gram: DMatrix<f64>,
    pub xtz: DVector<f64>,
    pub xtphi: DVector<f64>,
}

impl DecorrelatedSystem {
    pub fn moments(&self) -> SystemMoments {
        SystemMoments {
            gram: self.x_hat.tr_mul(&self.x_hat),
            xtz: self.x_hat.tr_mul(&self.z_hat),
            xtphi: self.x_hat.tr_mul(&self.phi_eps_hat),
        }
    }

    pub fn residual(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.z_hat - &self.x_hat * beta
    }
}

/// `(UΦ)⁻¹` where `Σ_τ = UᵀU`; upper triangular.
pub fn decorrelation_factor(err: &ErrorState) -> Result<DMatrix<f64>> {
    let u = err.sigma_tau.upper();
    let m = u.nrows();
    let u_phi = DMatrix::from_fn(m, m, |i, j| u[(i, j)] * err.phi[j]);
    u_phi
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::numerical("decorrelation", "UΦ is singular"))
}

/// Applies `((UΦ)⁻¹)ᵀ ⊗ I_n` to an `mn`-vector by recombining series columns:
/// the `n × m` view `V` maps to `V (UΦ)⁻¹`.
fn recombine(v: &[f64], n: usize, factor: &DMatrix<f64>) -> DMatrix<f64> {
    let m = factor.nrows();
    DMatrix::from_column_slice(n, m, v) * factor
}

pub fn decorrelate(
    z_tilde: &DVector<f64>,
    x: &DMatrix<f64>,
    n: usize,
    err: &ErrorState,
    tau: &QuantileSpec,
) -> Result<DecorrelatedSystem> {
    err.validate()?;
    let m = err.phi.len();
    if tau.len() != m || z_tilde.len() != n * m || x.nrows() != n * m {
        return Err(Error::invalid(format!(
            "decorrelation inputs disagree: n = {n}, m = {m}, |Z| = {}, X is {}x{}",
            z_tilde.len(),
            x.nrows(),
            x.ncols()
        )));
    }
    let factor = decorrelation_factor(err)?;
    let z_hat = recombine(z_tilde.as_slice(), n, &factor);
    let mut x_hat = DMatrix::zeros(n * m, x.ncols());
    for (k, col) in x.column_iter().enumerate() {
        let mapped = recombine(col.as_slice(), n, &factor);
        x_hat.set_column(k, &DVector::from_column_slice(mapped.as_slice()));
    }
    let phi_eps = err.phi.component_mul(&tau.location_weights());
    let phi_eps_mat = DMatrix::from_fn(n, m, |_, i| phi_eps[i]);
    let phi_eps_hat = phi_eps_mat * &factor;
    Ok(DecorrelatedSystem {
        n,
        m,
        z_hat: DVector::from_column_slice(z_hat.as_slice()),
        x_hat,
        phi_eps_hat: DVector::from_column_slice(phi_eps_hat.as_slice()),
    })
}

/// Slab prior `β_γ ~ N(b_γ, A_γ⁻¹)` with `A` on the full design, restricted per configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabPrior {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl SlabPrior {
    /// `A = κ XᵀX / n`, `b` constant.
    pub fn from_design(x: &DMatrix<f64>, n: usize, kappa: f64, mean: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::invalid(format!("prior weight κ = {kappa} must be positive")));
        }
        let precision = x.tr_mul(x) * (kappa / n as f64);
        Ok(Self {
            mean: DVector::from_element(x.ncols(), mean),
            precision,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Precision, mean and linear term of the active-set coefficient conditional.
#[derive(Debug, Clone)]
pub struct BetaConditional {
    pub active: Vec<usize>,
    pub precision: SymmetricPd,
    pub mean: DVector<f64>,
    /// `Ξ_γ = W⁻¹X̂ᵀẐ - X̂ᵀΦ̂_ε + A_γ b_γ`
    pub linear: DVector<f64>,
}

/// `None` when no coordinate is active.
pub fn beta_conditional(
    moments: &SystemMoments,
    gamma: &[bool],
    w: f64,
    prior: &SlabPrior,
) -> Result<Option<BetaConditional>> {
    let active = active_indices(gamma);
    if active.is_empty() {
        return Ok(None);
    }
    let a = restrict_square(&prior.precision, gamma)?;
    let g = restrict_square(&moments.gram, gamma)?;
    let b = DVector::from_iterator(active.len(), active.iter().map(|&k| prior.mean[k]));
    let linear = DVector::from_iterator(
        active.len(),
        active.iter().map(|&k| moments.xtz[k] / w - moments.xtphi[k]),
    ) + &a * &b;
    let precision = SymmetricPd::symmetrized(g / w + a)
        .map_err(|e| Error::numerical("β conditional", format!("posterior precision: {e}")))?;
    let mean = precision.solve(&DMatrix::from_column_slice(linear.len(), 1, linear.as_slice()));
    Ok(Some(BetaConditional {
        active,
        precision,
        mean: mean.column(0).into_owned(),
        linear,
    }))
}

pub fn draw_beta(
    moments: &SystemMoments,
    gamma: &[bool],
    w: f64,
    prior: &SlabPrior,
    rng: &mut Rng,
) -> Result<DVector<f64>> {
    match beta_conditional(moments, gamma, w, prior)? {
        None => Ok(DVector::zeros(gamma.len())),
        Some(cond) => {
            let z = rng.standard_normal_vector(cond.active.len());
            let dev = cond
                .precision
                .upper()
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::numerical("β draw", "singular precision factor"))?;
            expand_vector(&(cond.mean + dev), gamma)
        }
    }
}

/// Unnormalized log posterior mass of `γ` with `β` integrated out, excluding
/// the Bernoulli prior term.
///
/// `-½[bᵀAb - ΞᵀP⁻¹Ξ] + ½log|A_γ| - ½log|P_γ|` with `P = W⁻¹X̂ᵀX̂ + A`; both
/// root factors are read as determinants of the active-set matrices. A
/// configuration whose `A_γ` is not positive definite has mass zero.
pub fn log_gamma_mass(moments: &SystemMoments, gamma: &[bool], w: f64, prior: &SlabPrior) -> f64 {
    let active = active_indices(gamma);
    if active.is_empty() {
        return 0.0;
    }
    let a = match restrict_square(&prior.precision, gamma).and_then(SymmetricPd::symmetrized) {
        Ok(a) => a,
        Err(_) => return f64::NEG_INFINITY,
    };
    let cond = match beta_conditional(moments, gamma, w, prior) {
        Ok(Some(c)) => c,
        _ => return f64::NEG_INFINITY,
    };
    let b = DVector::from_iterator(active.len(), active.iter().map(|&k| prior.mean[k]));
    let prior_quad = b.dot(&(a.matrix() * &b));
    let fit_quad = cond.linear.dot(&cond.mean);
    -0.5 * (prior_quad - fit_quad) + 0.5 * a.log_det() - 0.5 * cond.precision.log_det()
}

/// One SSVS sweep over the coordinates in a fresh random order.
///
/// Coordinates with prior inclusion 0 or 1 are forced without evaluation.
pub fn draw_gamma_ssvs(
    moments: &SystemMoments,
    gamma: &mut [bool],
    prior_inclusion: &[f64],
    w: f64,
    prior: &SlabPrior,
    rng: &mut Rng,
) -> Result<()> {
    let k = gamma.len();
    if prior_inclusion.len() != k || prior.len() != k {
        return Err(Error::invalid("inclusion prior length does not match the coefficients"));
    }
    if let Some(bad) = prior_inclusion.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("inclusion probability {bad} is outside [0, 1]")));
    }
    for (g, &p) in gamma.iter_mut().zip(prior_inclusion) {
        if p == 0.0 {
            *g = false;
        } else if p == 1.0 {
            *g = true;
        }
    }
    let mut current = log_gamma_mass(moments, gamma, w, prior);
    for idx in rng.permutation(k) {
        let p = prior_inclusion[idx];
        if p == 0.0 || p == 1.0 {
            continue;
        }
        gamma[idx] = !gamma[idx];
        let flipped = log_gamma_mass(moments, gamma, w, prior);
        gamma[idx] = !gamma[idx];
        let (mass_in, mass_out) = if gamma[idx] { (current, flipped) } else { (flipped, current) };
        let log_in = mass_in + p.ln();
        let log_out = mass_out + (1.0 - p).ln();
        if log_in == f64::NEG_INFINITY && log_out == f64::NEG_INFINITY {
            return Err(Error::numerical(
                "SSVS",
                format!("both inclusion states of coordinate {idx} have zero mass"),
            ));
        }
        let prob_in = if log_in == log_out {
            0.5
        } else {
            1.0 / (1.0 + (log_out - log_in).exp())
        };
        let include = rng.uniform() < prob_in;
        if include != gamma[idx] {
            gamma[idx] = include;
            current = flipped;
        }
    }
    Ok(())
}

/// `n × m` residual `Z - X*_γ B_γ - 1 φ_εᵀ W`.
fn error_residual(z: &DMatrix<f64>, fit: &DMatrix<f64>, err: &ErrorState, tau: &QuantileSpec) -> DMatrix<f64> {
    let phi_eps = err.phi.component_mul(&tau.location_weights()) * err.w;
    let mut r = z - fit;
    for mut row in r.row_iter_mut() {
        row -= phi_eps.transpose();
    }
    r
}

/// Data part of the `Σ_τ` scale: `W⁻¹ [(R)Φ⁻¹]ᵀ[(R)Φ⁻¹]`.
pub fn sigma_tau_data_scale(
    z: &DMatrix<f64>,
    fit: &DMatrix<f64>,
    err: &ErrorState,
    tau: &QuantileSpec,
) -> Result<DMatrix<f64>> {
    if z.shape() != fit.shape() || z.ncols() != err.phi.len() || tau.len() != err.phi.len() {
        return Err(Error::invalid("Σ_τ inputs have inconsistent dimensions"));
    }
    let mut r = error_residual(z, fit, err, tau);
    for (i, mut col) in r.column_iter_mut().enumerate() {
        col /= err.phi[i];
    }
    Ok(r.tr_mul(&r) / err.w)
}

#[allow(clippy::too_many_arguments)]
pub fn draw_sigma_tau(
    z: &DMatrix<f64>,
    fit: &DMatrix<f64>,
    err: &ErrorState,
    tau: &QuantileSpec,
    v0: f64,
    v0_scale: &SymmetricPd,
    rng: &mut Rng,
) -> Result<SymmetricPd> {
    let data = sigma_tau_data_scale(z, fit, err, tau)?;
    let scale = SymmetricPd::symmetrized(v0_scale.matrix() + data)?;
    sample_inverse_wishart(v0 + z.nrows() as f64, &scale, rng)
}

/// Log conditional density of `Φ` (up to a constant), in the factored form
/// `-n Σ log φ_i - (1/2W) ‖(RΦ⁻¹ - 1ψᵀW) U⁻¹‖²_F` with `R = Z - X*_γB_γ`.
pub fn phi_log_density(
    phi: &DVector<f64>,
    resid: &DMatrix<f64>,
    sigma_tau: &SymmetricPd,
    tau: &QuantileSpec,
    w: f64,
) -> f64 {
    if phi.iter().any(|p| !(*p > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let n = resid.nrows();
    let psi = tau.location_weights();
    let d = DMatrix::from_fn(n, phi.len(), |t, i| resid[(t, i)] / phi[i] - psi[i] * w);
    let y = match sigma_tau.upper().tr_solve_upper_triangular(&d.transpose()) {
        Some(y) => y,
        None => return f64::NEG_INFINITY,
    };
    -(n as f64) * phi.iter().map(|p| p.ln()).sum::<f64>() - y.norm_squared() / (2.0 * w)
}

/// One Metropolis-Hastings sweep over the diagonal of `Φ`.
///
/// Each `φ_i` gets a Gaussian random-walk proposal on `log φ_i`; the
/// acceptance ratio carries the `φ'/φ` Jacobian of the log-scale walk.
#[allow(clippy::too_many_arguments)]
pub fn draw_phi_mh(
    phi: &mut DVector<f64>,
    resid: &DMatrix<f64>,
    sigma_tau: &SymmetricPd,
    tau: &QuantileSpec,
    w: f64,
    step_sizes: &[f64],
    rng: &mut Rng,
) -> Result<Vec<bool>> {
    let m = phi.len();
    if step_sizes.len() != m || resid.ncols() != m || sigma_tau.dim() != m {
        return Err(Error::invalid("Φ sweep inputs have inconsistent dimensions"));
    }
    let mut accepted = vec![true; m];
    let mut current = phi_log_density(phi, resid, sigma_tau, tau, w);
    for i in 0..m {
        if step_sizes[i] == 0.0 {
            // keep the random stream aligned with the non-degenerate case
            rng.standard_normal();
            rng.uniform();
            continue;
        }
        let old = phi[i];
        let proposal = old * (step_sizes[i] * rng.standard_normal()).exp();
        phi[i] = proposal;
        let candidate = phi_log_density(phi, resid, sigma_tau, tau, w);
        let log_ratio = candidate - current + proposal.ln() - old.ln();
        let u = rng.uniform_open();
        if candidate.is_finite() && proposal.is_finite() && proposal > 0.0 && u.ln() < log_ratio {
            current = candidate;
        } else {
            phi[i] = old;
            accepted[i] = false;
        }
    }
    Ok(accepted)
}

/// GIG parameters `(a, b, p)` of the `W` conditional.
pub fn w_posterior_params(
    sys: &DecorrelatedSystem,
    beta: &DVector<f64>,
    exponent: WExponent,
) -> (f64, f64, f64) {
    let r = sys.residual(beta);
    let a = 2.0 + sys.phi_eps_hat.norm_squared();
    let b = r.norm_squared();
    let p = match exponent {
        WExponent::Joint => 1.0 - (sys.n * sys.m) as f64 / 2.0,
        WExponent::Literal => 1.0 - sys.n as f64 / 2.0,
    };
    (a, b, p)
}

pub fn draw_w(
    sys: &DecorrelatedSystem,
    beta: &DVector<f64>,
    exponent: WExponent,
    rng: &mut Rng,
) -> Result<f64> {
    let (a, b, p) = w_posterior_params(sys, beta, exponent);
    if !(b > 1e-300) {
        return Err(Error::numerical(
            "W draw",
            format!("residual sum of squares {b:e} is degenerate (perfect fit)"),
        ));
    }
    sample_gig(a, b, p, rng)
}

/// Series matrix view of a stacked vector; convenience for callers holding `Z̃`.
pub fn as_series_matrix(v: &DVector<f64>, n: usize, m: usize) -> Result<DMatrix<f64>> {
    devectorize_by_series(v, n, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::vectorize_by_series;

    fn random_pd(m: usize, rng: &mut Rng) -> SymmetricPd {
        let a = DMatrix::from_fn(m, m, |_, _| rng.standard_normal());
        SymmetricPd::symmetrized(a.tr_mul(&a) + DMatrix::identity(m, m) * 0.5).unwrap()
    }

    #[test]
    fn identity_transform() {
        let mut rng = Rng::new(1);
        let n = 4;
        let z = rng.standard_normal_vector(2 * n);
        let x = DMatrix::from_fn(2 * n, 3, |_, _| rng.standard_normal());
        let err = ErrorState {
            phi: DVector::from_element(2, 1.0),
            sigma_tau: SymmetricPd::identity(2),
            w: 1.0,
        };
        let tau = QuantileSpec::uniform(2, 0.3).unwrap();
        let sys = decorrelate(&z, &x, n, &err, &tau).unwrap();
        assert_eq!(sys.z_hat, z);
        assert_eq!(sys.x_hat, x);
    }

    #[test]
    fn implied_error_covariance_is_identity() {
        let mut rng = Rng::new(2);
        for _ in 0..20 {
            let sigma = random_pd(3, &mut rng);
            let phi = DVector::from_fn(3, |_, _| 0.1 + rng.uniform() * 2.0);
            let err = ErrorState { phi: phi.clone(), sigma_tau: sigma.clone(), w: 1.0 };
            let c = decorrelation_factor(&err).unwrap();
            let s_eps = DMatrix::from_diagonal(&phi) * sigma.matrix() * DMatrix::from_diagonal(&phi);
            let implied = c.transpose() * s_eps * &c;
            assert!((implied - DMatrix::identity(3, 3)).norm() < 1e-10);
        }
    }

    #[test]
    fn empty_gamma_gives_zero_beta_and_zero_mass() {
        let mut rng = Rng::new(3);
        let x = DMatrix::from_fn(10, 2, |_, _| rng.standard_normal());
        let sys = DecorrelatedSystem {
            n: 10,
            m: 1,
            z_hat: rng.standard_normal_vector(10),
            x_hat: x.clone(),
            phi_eps_hat: DVector::zeros(10),
        };
        let prior = SlabPrior::from_design(&x, 10, 0.01, 0.0).unwrap();
        let mom = sys.moments();
        assert_eq!(draw_beta(&mom, &[false, false], 1.0, &prior, &mut rng).unwrap(), DVector::zeros(2));
        assert_eq!(log_gamma_mass(&mom, &[false, false], 1.0, &prior), 0.0);
    }

    #[test]
    fn forced_inclusion_and_exclusion() {
        let mut rng = Rng::new(4);
        let x = DMatrix::from_fn(20, 3, |_, _| rng.standard_normal());
        let sys = DecorrelatedSystem {
            n: 20,
            m: 1,
            z_hat: rng.standard_normal_vector(20),
            x_hat: x.clone(),
            phi_eps_hat: DVector::zeros(20),
        };
        let prior = SlabPrior::from_design(&x, 20, 0.01, 0.0).unwrap();
        let mom = sys.moments();
        let mut gamma = vec![true, false, true];
        for _ in 0..50 {
            draw_gamma_ssvs(&mom, &mut gamma, &[0.0, 1.0, 0.5], 1.0, &prior, &mut rng).unwrap();
            assert!(!gamma[0]);
            assert!(gamma[1]);
        }
    }

    #[test]
    fn zero_step_keeps_phi() {
        let mut rng = Rng::new(5);
        let resid = DMatrix::from_fn(30, 2, |_, _| rng.standard_normal());
        let mut phi = DVector::from_vec(vec![0.4, 1.3]);
        let tau = QuantileSpec::uniform(2, 0.7).unwrap();
        let acc = draw_phi_mh(&mut phi, &resid, &SymmetricPd::identity(2), &tau, 1.0, &[0.0, 0.0], &mut rng).unwrap();
        assert_eq!(phi.as_slice(), &[0.4, 1.3]);
        assert_eq!(acc, vec![true, true]);
    }

    #[test]
    fn phi_density_scale_covariance() {
        // scaling Φ and the residual by c leaves the quadratic form unchanged
        let mut rng = Rng::new(6);
        let resid = DMatrix::from_fn(25, 3, |_, _| rng.standard_normal());
        let sigma = random_pd(3, &mut rng);
        let tau = QuantileSpec::new(vec![0.2, 0.5, 0.9]).unwrap();
        let phi = DVector::from_vec(vec![0.5, 1.0, 2.0]);
        let c = 1.7;
        let base = phi_log_density(&phi, &resid, &sigma, &tau, 0.8);
        let scaled = phi_log_density(&(&phi * c), &(&resid * c), &sigma, &tau, 0.8);
        assert!((scaled - (base - 25.0 * 3.0 * c.ln())).abs() < 1e-9);
    }

    #[test]
    fn w_b_scales_quadratically() {
        let mut rng = Rng::new(7);
        let x = DMatrix::from_fn(12, 2, |_, _| rng.standard_normal());
        let z = rng.standard_normal_vector(12);
        let beta = DVector::from_vec(vec![0.3, -0.2]);
        let sys = DecorrelatedSystem { n: 6, m: 2, z_hat: z.clone(), x_hat: x.clone(), phi_eps_hat: DVector::zeros(12) };
        let sys3 = DecorrelatedSystem { n: 6, m: 2, z_hat: &z * 3.0, x_hat: &x * 3.0, phi_eps_hat: DVector::zeros(12) };
        let (a, b, p) = w_posterior_params(&sys, &beta, WExponent::Joint);
        let (_, b3, _) = w_posterior_params(&sys3, &beta, WExponent::Joint);
        assert!((b3 - 9.0 * b).abs() < 1e-9);
        assert_eq!(a, 2.0);
        assert_eq!(p, 1.0 - 6.0);
        assert_eq!(w_posterior_params(&sys, &beta, WExponent::Literal).2, 1.0 - 3.0);
    }

    #[test]
    fn perfect_fit_w_is_an_error() {
        let mut rng = Rng::new(8);
        let x = DMatrix::from_fn(4, 1, |_, _| rng.standard_normal());
        let beta = DVector::from_vec(vec![2.0]);
        let sys = DecorrelatedSystem { n: 4, m: 1, z_hat: &x * &beta, x_hat: x, phi_eps_hat: DVector::zeros(4) };
        assert!(draw_w(&sys, &beta, WExponent::Joint, &mut rng).is_err());
    }

    #[test]
    fn sigma_tau_trace_identity() {
        let mut rng = Rng::new(9);
        let (n, m) = (7, 3);
        let z = DMatrix::from_fn(n, m, |_, _| rng.standard_normal());
        let fit = DMatrix::from_fn(n, m, |_, _| rng.standard_normal());
        let err = ErrorState {
            phi: DVector::from_vec(vec![0.5, 0.9, 1.4]),
            sigma_tau: random_pd(m, &mut rng),
            w: 0.7,
        };
        let tau = QuantileSpec::new(vec![0.1, 0.5, 0.8]).unwrap();
        let data = sigma_tau_data_scale(&z, &fit, &err, &tau).unwrap();
        let probe = random_pd(m, &mut rng).inverse();
        // Kronecker-weighted quadratic form on the stacked residual
        let r = error_residual(&z, &fit, &err, &tau);
        let v = vectorize_by_series(&r);
        let phi_inv = DMatrix::from_diagonal(&err.phi.map(|p| 1.0 / p));
        let inner = &phi_inv * &probe * &phi_inv;
        let mut quad = 0.0;
        for i in 0..m {
            for j in 0..m {
                for t in 0..n {
                    quad += v[i * n + t] * inner[(i, j)] * v[j * n + t];
                }
            }
        }
        let trace = (data * &probe).trace() * err.w;
        assert!((quad - trace).abs() < 1e-10 * quad.abs().max(1.0));
    }
}
