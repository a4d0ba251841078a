//! Gibbs kernels against dense, undecorrelated computations.

mod common;

use common::{gaussian_log_density, mean, positive_moment, random_matrix, random_spd, softmax, variance};
use mqbsts::distributions::sample_gig;
use mqbsts::model::{assemble_block_x, vectorize_by_series};
use mqbsts::sampler::{
    beta_conditional, decorrelate, draw_gamma_ssvs, draw_w, log_gamma_mass, w_posterior_params, ErrorState,
    SlabPrior, WExponent,
};
use mqbsts::{Dataset, QuantileSpec, Rng, SymmetricPd};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

fn error_state(m: usize, w: f64, rng: &mut Rng) -> ErrorState {
    ErrorState {
        phi: DVector::from_fn(m, |_, _| 0.3 + rng.uniform()),
        sigma_tau: SymmetricPd::symmetrized(random_spd(m, rng) / m as f64).unwrap(),
        w,
    }
}

/// `((UΦ)⁻¹)ᵀ ⊗ I_n` built explicitly.
fn dense_transform(err: &ErrorState, n: usize) -> DMatrix<f64> {
    let u = err.sigma_tau.matrix().clone().cholesky().unwrap().l().transpose();
    let u_phi = u * DMatrix::from_diagonal(&err.phi);
    u_phi.try_inverse().unwrap().transpose().kronecker(&DMatrix::identity(n, n))
}

#[test]
fn decorrelation_matches_dense_kronecker_product() {
    let mut rng = Rng::new(1);
    for (n, m, k) in [(1, 2, 2), (3, 3, 4), (5, 2, 1)] {
        let err = error_state(m, 1.0, &mut rng);
        let tau = QuantileSpec::new((0..m).map(|i| 0.2 + 0.3 * i as f64).collect()).unwrap();
        let z = DVector::from_fn(n * m, |_, _| rng.standard_normal());
        let x = random_matrix(n * m, k, &mut rng);
        let sys = decorrelate(&z, &x, n, &err, &tau).unwrap();
        let t = dense_transform(&err, n);
        let loc = err.phi.component_mul(&tau.location_weights());
        let phi_vec = DVector::from_fn(n * m, |r, _| loc[r / n]);
        assert!((&sys.z_hat - &t * &z).amax() < 1e-10);
        assert!((&sys.x_hat - &t * &x).amax() < 1e-10);
        assert!((&sys.phi_eps_hat - &t * phi_vec).amax() < 1e-10);
    }
}

struct Problem {
    n: usize,
    x: DMatrix<f64>,
    z: DVector<f64>,
    err: ErrorState,
    tau: QuantileSpec,
    prior: SlabPrior,
}

impl Problem {
    fn new(n: usize, counts: &[usize], w: f64, kappa: f64, slab_mean: f64, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let m = counts.len();
        let predictors: Vec<DMatrix<f64>> = counts.iter().map(|k| random_matrix(n, *k, &mut rng)).collect();
        let y = DMatrix::from_fn(n, m, |_, _| rng.standard_normal());
        let dataset = Dataset::from_matrices(y.clone(), predictors).unwrap();
        let x = assemble_block_x(&dataset);
        Self {
            n,
            prior: SlabPrior::from_design(&x, n, kappa, slab_mean).unwrap(),
            x,
            z: vectorize_by_series(&y),
            err: error_state(m, w, &mut rng),
            tau: QuantileSpec::new((0..m).map(|i| 0.25 + 0.5 * i as f64 / m as f64).collect()).unwrap(),
        }
    }

    fn noise_cov(&self) -> DMatrix<f64> {
        let phi = DMatrix::from_diagonal(&self.err.phi);
        (&phi * self.err.sigma_tau.matrix() * &phi * self.err.w).kronecker(&DMatrix::identity(self.n, self.n))
    }

    fn shift(&self) -> DVector<f64> {
        let loc = self.err.phi.component_mul(&self.tau.location_weights()) * self.err.w;
        DVector::from_fn(self.z.len(), |r, _| loc[r / self.n])
    }
}

#[test]
fn coefficient_conditional_completes_the_square() {
    let p = Problem::new(7, &[2, 3], 0.8, 0.3, 0.4, 2);
    let k = 5;
    let gamma = vec![true; k];
    let sys = decorrelate(&p.z, &p.x, p.n, &p.err, &p.tau).unwrap();
    let cond = beta_conditional(&sys.moments(), &gamma, p.err.w, &p.prior).unwrap().unwrap();
    let cov = cond.precision.inverse();
    let omega = p.noise_cov();
    let b = DVector::from_element(k, 0.4);
    let prior_cov = p.prior.precision.clone().try_inverse().unwrap();
    let mut rng = Rng::new(3);
    let diffs: Vec<f64> = (0..100)
        .map(|_| {
            let beta = DVector::from_fn(k, |_, _| 3.0 * rng.standard_normal());
            let joint = gaussian_log_density(&p.z, &(&p.x * &beta + p.shift()), &omega)
                + gaussian_log_density(&beta, &b, &prior_cov);
            joint - gaussian_log_density(&beta, &cond.mean, &cov)
        })
        .collect();
    assert!(variance(&diffs) < 1e-16, "{}", variance(&diffs));
}

#[test]
fn tiny_data_weight_returns_the_prior_mean() {
    let mut p = Problem::new(4, &[1, 2], 1e10, 0.5, -0.7, 4);
    p.tau = QuantileSpec::uniform(2, 0.5).unwrap();
    let sys = decorrelate(&p.z, &p.x, p.n, &p.err, &p.tau).unwrap();
    let cond = beta_conditional(&sys.moments(), &[true, false, true], p.err.w, &p.prior).unwrap().unwrap();
    assert!((cond.mean.add_scalar(0.7)).amax() < 1e-6, "{}", cond.mean);
}

#[test]
fn gamma_mass_matches_marginal_likelihood_ratios() {
    let p = Problem::new(5, &[2, 2], 1.3, 1.0, 0.2, 5);
    let sys = decorrelate(&p.z, &p.x, p.n, &p.err, &p.tau).unwrap();
    let moments = sys.moments();
    let omega = p.noise_cov();
    let shift = p.shift();
    let k = 4;
    let configs: Vec<Vec<bool>> = (0..16).map(|mask| (0..k).map(|i| mask >> i & 1 == 1).collect()).collect();
    let library: Vec<f64> = configs.iter().map(|g| log_gamma_mass(&moments, g, p.err.w, &p.prior)).collect();
    let oracle: Vec<f64> = configs
        .iter()
        .map(|g| {
            let active: Vec<usize> = (0..k).filter(|i| g[*i]).collect();
            let xg = p.x.select_columns(&active);
            let mean = &shift + &xg * DVector::from_element(active.len(), 0.2);
            let cov = if active.is_empty() {
                omega.clone()
            } else {
                let a = p.prior.precision.select_rows(&active).select_columns(&active);
                &omega + &xg * a.try_inverse().unwrap() * xg.transpose()
            };
            gaussian_log_density(&p.z, &mean, &cov)
        })
        .collect();
    // equal up to a configuration-free constant
    for i in 1..16 {
        let lhs = library[i] - library[0];
        let rhs = oracle[i] - oracle[0];
        assert!((lhs - rhs).abs() < 1e-9, "config {i}: {lhs} vs {rhs}");
    }
}

#[test]
fn near_duplicate_columns_split_inclusion() {
    let n = 12;
    let mut rng = Rng::new(6);
    let base = DVector::from_fn(n, |_, _| rng.standard_normal());
    let other = DVector::from_fn(n, |_, _| rng.standard_normal());
    let twin = &base + DVector::from_fn(n, |_, _| 0.05 * rng.standard_normal());
    let x = DMatrix::from_columns(&[base.clone(), other, twin]);
    let z = &base * 1.5 + DVector::from_fn(n, |_, _| 0.8 * rng.standard_normal());
    let err = ErrorState { phi: dvector![0.6], sigma_tau: SymmetricPd::identity(1), w: 1.0 };
    let tau = QuantileSpec::uniform(1, 0.5).unwrap();
    let prior = SlabPrior::from_design(&x, n, 0.5, 0.0).unwrap();
    let moments = decorrelate(&z, &x, n, &err, &tau).unwrap().moments();

    let log_post: Vec<f64> = (0..8)
        .map(|mask| {
            let g: Vec<bool> = (0..3).map(|i| mask >> i & 1 == 1).collect();
            log_gamma_mass(&moments, &g, 1.0, &prior) + 3.0 * 0.5f64.ln()
        })
        .collect();
    let post = softmax(&log_post);
    let marginal = |i: usize| (0..8).filter(|m| m >> i & 1 == 1).map(|m| post[m]).sum::<f64>();
    let union: f64 = (0..8).filter(|m| m & 0b101 != 0).map(|m| post[m]).sum();
    assert!(marginal(0) > 0.05 && marginal(2) > 0.05, "{} {}", marginal(0), marginal(2));
    assert!(union >= marginal(0).max(marginal(2)));
    assert!(union > 0.95);

    // the sweep visits the enumerated posterior
    let mut gamma = vec![false; 3];
    let mut seen = [0usize; 8];
    let sweeps = 100_000;
    for _ in 0..sweeps {
        draw_gamma_ssvs(&moments, &mut gamma, &[0.5; 3], 1.0, &prior, &mut rng).unwrap();
        seen[gamma.iter().enumerate().fold(0, |a, (i, g)| a | usize::from(*g) << i)] += 1;
    }
    for (mask, count) in seen.iter().enumerate() {
        assert!((*count as f64 / sweeps as f64 - post[mask]).abs() < 0.01, "config {mask}");
    }
}

#[test]
fn w_draw_delegates_to_the_gig_sampler() {
    let p = Problem::new(6, &[1, 1], 1.0, 1.0, 0.0, 7);
    let sys = decorrelate(&p.z, &p.x, p.n, &p.err, &p.tau).unwrap();
    let beta = dvector![0.3, -0.2];
    for exponent in [WExponent::Joint, WExponent::Literal] {
        let (a, b, q) = w_posterior_params(&sys, &beta, exponent);
        let mut r1 = Rng::new(8);
        let mut r2 = Rng::new(8);
        for _ in 0..100 {
            assert_eq!(draw_w(&sys, &beta, exponent, &mut r1).unwrap(), sample_gig(a, b, q, &mut r2).unwrap());
        }
    }
    let (_, _, joint) = w_posterior_params(&sys, &beta, WExponent::Joint);
    let (_, _, literal) = w_posterior_params(&sys, &beta, WExponent::Literal);
    assert_eq!(joint, 1.0 - 6.0);
    assert_eq!(literal, 1.0 - 3.0);
}

#[test]
fn w_mean_matches_quadrature_for_a_four_row_toy() {
    let n = 4;
    let x = dmatrix![0.5; -1.2; 0.3; 2.0];
    let z = dvector![1.1, -0.4, 0.9, 3.2];
    let beta = dvector![1.2];
    let (phi, sigma, level) = (0.7, 1.4, 0.35);
    let err = ErrorState { phi: dvector![phi], sigma_tau: SymmetricPd::new(dmatrix![sigma]).unwrap(), w: 1.0 };
    let tau = QuantileSpec::uniform(1, level).unwrap();
    let psi = (1.0 - 2.0 * level) / (level * (1.0 - level));
    let resid: Vec<f64> = (0..n).map(|t| z[t] - x[(t, 0)] * beta[0]).collect();
    let log_f = |w: f64| {
        -w - 0.5 * n as f64 * w.ln()
            - resid.iter().map(|r| (r - phi * psi * w).powi(2)).sum::<f64>() / (2.0 * w * phi * phi * sigma)
    };
    let oracle = positive_moment(log_f, 1.0, -25.0, 8.0);
    let sys = decorrelate(&z, &x, n, &err, &tau).unwrap();
    let mut rng = Rng::new(9);
    let xs: Vec<f64> = (0..100_000).map(|_| draw_w(&sys, &beta, WExponent::Joint, &mut rng).unwrap()).collect();
    assert!((mean(&xs) / oracle - 1.0).abs() < 0.01, "{} vs {oracle}", mean(&xs));
}
