//! Simulation-smoother draws against a dense joint-Gaussian conditional.

mod common;

use common::{gaussian_condition, mean, sample_covariance};
use mqbsts::trend::{draw_trend_covariances, draw_trend_states, trend_residuals, TrendHyper};
use mqbsts::{Rng, SymmetricPd};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

struct ScalarTrend {
    obs: Vec<f64>,
    long_run_slope: f64,
    learning_rate: f64,
    initial_variance: f64,
    level_var: f64,
    slope_var: f64,
    obs_var: f64,
}

impl ScalarTrend {
    /// States are `shift + load · ζ` with independent `ζ` of variances `var`
    /// (initial deviation, then level and slope innovations).
    fn states(&self) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let n = self.obs.len();
        let (d, l) = (self.long_run_slope, self.learning_rate);
        let s = 2 * n;
        let mut shift = DVector::zeros(s);
        let mut load = DMatrix::zeros(s, s);
        let mut var = DVector::zeros(s);
        var[0] = self.initial_variance;
        var[1] = self.initial_variance;
        for t in 1..n {
            var[2 * t] = self.level_var;
            var[2 * t + 1] = self.slope_var;
        }
        shift[0] = self.obs[0];
        shift[1] = d;
        load[(0, 0)] = 1.0;
        load[(1, 1)] = 1.0;
        for t in 1..n {
            let (pm, pd) = (2 * (t - 1), 2 * (t - 1) + 1);
            shift[2 * t] = shift[pm] + shift[pd];
            shift[2 * t + 1] = d + l * (shift[pd] - d);
            for j in 0..s {
                load[(2 * t, j)] = load[(pm, j)] + load[(pd, j)];
                load[(2 * t + 1, j)] = l * load[(pd, j)];
            }
            load[(2 * t, 2 * t)] += 1.0;
            load[(2 * t + 1, 2 * t + 1)] += 1.0;
        }
        (shift, load, var)
    }

    /// Conditional mean and covariance of `(μ_1, δ_1, …)`, in information
    /// form so the diffuse start never meets a large subtraction.
    fn posterior(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.obs.len();
        let (shift, load, var) = self.states();
        let obs_load = DMatrix::from_fn(n, 2 * n, |t, j| load[(2 * t, j)]);
        let obs_shift = DVector::from_fn(n, |t, _| shift[2 * t]);
        let o = DVector::from_vec(self.obs.clone());
        let precision = DMatrix::from_diagonal(&var.map(|v| 1.0 / v)) + obs_load.tr_mul(&obs_load) / self.obs_var;
        let cov_noise = precision.try_inverse().expect("posterior precision is invertible");
        let mean_noise = &cov_noise * obs_load.tr_mul(&(o - obs_shift)) / self.obs_var;
        (shift + &load * mean_noise, &load * cov_noise * load.transpose())
    }

    /// The same conditional by partitioning the joint covariance of states and observations.
    fn posterior_by_partition(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.obs.len();
        let (shift, load, var) = self.states();
        let state_cov = &load * DMatrix::from_diagonal(&var) * load.transpose();
        let mut mean = DVector::zeros(3 * n);
        let mut cov = DMatrix::zeros(3 * n, 3 * n);
        mean.rows_mut(0, 2 * n).copy_from(&shift);
        cov.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&state_cov);
        for t in 0..n {
            mean[2 * n + t] = shift[2 * t];
            for j in 0..2 * n {
                cov[(2 * n + t, j)] = state_cov[(2 * t, j)];
                cov[(j, 2 * n + t)] = state_cov[(j, 2 * t)];
            }
            for u in 0..n {
                cov[(2 * n + t, 2 * n + u)] = state_cov[(2 * t, 2 * u)];
            }
            cov[(2 * n + t, 2 * n + t)] += self.obs_var;
        }
        let observed: Vec<usize> = (2 * n..3 * n).collect();
        gaussian_condition(&mean, &cov, &observed, &DVector::from_vec(self.obs.clone()))
    }
}

/// Draws stacked as `(μ_1, δ_1, …)` from the library smoother with `ξ = 0`.
fn smoother_draws(case: &ScalarTrend, w: f64, phi_eps: f64, draws: usize, seed: u64) -> Vec<DVector<f64>> {
    let n = case.obs.len();
    // o_t = y_t - φ_ε W, Σ_ε W = obs_var
    let y = DMatrix::from_fn(n, 1, |t, _| case.obs[t] + phi_eps * w);
    let xi = DMatrix::zeros(n, 1);
    let sigma_eps = SymmetricPd::new(dmatrix![case.obs_var / w]).unwrap();
    let hyper = TrendHyper {
        long_run_slope: vec![case.long_run_slope],
        learning_rate: vec![case.learning_rate],
        initial_variance: case.initial_variance,
        ..TrendHyper::default()
    };
    let sigma_mu = SymmetricPd::new(dmatrix![case.level_var]).unwrap();
    let sigma_delta = SymmetricPd::new(dmatrix![case.slope_var]).unwrap();
    let mut rng = Rng::new(seed);
    (0..draws)
        .map(|_| {
            let (mu, delta) = draw_trend_states(
                &y,
                &xi,
                &dvector![phi_eps],
                &sigma_eps,
                w,
                &hyper,
                &sigma_mu,
                &sigma_delta,
                &mut rng,
            )
            .unwrap();
            DVector::from_fn(2 * n, |i, _| if i % 2 == 0 { mu[(i / 2, 0)] } else { delta[(i / 2, 0)] })
        })
        .collect()
}

fn check_against_dense(case: &ScalarTrend, w: f64, phi_eps: f64, seed: u64) {
    let draws = 100_000;
    let (oracle_mean, oracle_cov) = case.posterior();
    let samples = smoother_draws(case, w, phi_eps, draws, seed);
    let dim = oracle_mean.len();
    let emp_mean = samples.iter().fold(DVector::zeros(dim), |a, s| a + s) / draws as f64;
    let emp_cov = sample_covariance(&samples);
    for i in 0..dim {
        let se = (oracle_cov[(i, i)] / draws as f64).sqrt();
        assert!(
            (emp_mean[i] - oracle_mean[i]).abs() < 3.0 * se,
            "coordinate {i}: {} vs {} (se {se})",
            emp_mean[i],
            oracle_mean[i]
        );
        for j in 0..=i {
            // Gaussian sampling variance of a covariance entry
            let se = ((oracle_cov[(i, i)] * oracle_cov[(j, j)] + oracle_cov[(i, j)].powi(2)) / draws as f64).sqrt();
            assert!(
                (emp_cov[(i, j)] - oracle_cov[(i, j)]).abs() < 3.0 * se,
                "covariance ({i}, {j}): {} vs {} (se {se})",
                emp_cov[(i, j)],
                oracle_cov[(i, j)]
            );
        }
    }
}

#[test]
fn two_oracle_forms_agree_away_from_the_diffuse_limit() {
    let case = ScalarTrend {
        obs: vec![0.3, 1.1, 1.6],
        long_run_slope: 0.4,
        learning_rate: 0.5,
        initial_variance: 4.0,
        level_var: 0.2,
        slope_var: 0.1,
        obs_var: 0.5,
    };
    let (m1, c1) = case.posterior();
    let (m2, c2) = case.posterior_by_partition();
    assert!((m1 - m2).amax() < 1e-10);
    assert!((c1 - c2).amax() < 1e-10);
}

#[test]
fn three_step_draws_match_dense_conditional() {
    let case = ScalarTrend {
        obs: vec![0.3, 1.1, 1.6],
        long_run_slope: 0.4,
        learning_rate: 0.5,
        initial_variance: 4.0,
        level_var: 0.2,
        slope_var: 0.1,
        obs_var: 0.5,
    };
    check_against_dense(&case, 1.0, 0.0, 1);
    // the W shift and scale enter only through the observation equation
    check_against_dense(&case, 0.6, 0.8, 2);
}

#[test]
fn diffuse_start_matches_dense_conditional() {
    let case = ScalarTrend {
        obs: vec![-1.0, 0.2, 0.9, 2.5, 2.7],
        long_run_slope: 0.0,
        learning_rate: 1.0,
        initial_variance: 1e6,
        level_var: 0.3,
        slope_var: 0.05,
        obs_var: 0.4,
    };
    check_against_dense(&case, 1.0, 0.0, 3);
}

#[test]
fn negligible_state_noise_gives_straight_lines() {
    let n = 30;
    let mut rng = Rng::new(4);
    let y = DMatrix::from_fn(n, 1, |t, _| 0.5 * t as f64 + 10.0 * rng.standard_normal());
    let hyper = TrendHyper {
        long_run_slope: vec![0.2],
        learning_rate: vec![0.7],
        ..TrendHyper::default()
    };
    let tiny = SymmetricPd::new(dmatrix![1e-10]).unwrap();
    let loud = SymmetricPd::new(dmatrix![1e6]).unwrap();
    for _ in 0..20 {
        let (mu, delta) = draw_trend_states(
            &y,
            &DMatrix::zeros(n, 1),
            &dvector![0.0],
            &loud,
            1.0,
            &hyper,
            &tiny,
            &tiny,
            &mut rng,
        )
        .unwrap();
        let (level, slope) = trend_residuals(&mu, &delta, &hyper).unwrap();
        assert!(level.amax() < 1e-3, "level increments {}", level.amax());
        assert!(slope.amax() < 1e-3, "slope increments {}", slope.amax());
    }
}

#[test]
fn relabeled_series_give_relabeled_paths() {
    let n = 6;
    let mut rng = Rng::new(5);
    let y = DMatrix::from_fn(n, 2, |t, i| (i as f64 + 1.0) * t as f64 + rng.standard_normal());
    let swap = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), 2, |t, i| m[(t, 1 - i)]);
    let hyper = TrendHyper {
        long_run_slope: vec![0.5, 1.5],
        learning_rate: vec![0.9, 0.4],
        initial_variance: 9.0,
        ..TrendHyper::default()
    };
    let swapped_hyper = TrendHyper {
        long_run_slope: vec![1.5, 0.5],
        learning_rate: vec![0.4, 0.9],
        ..hyper.clone()
    };
    let sigma_eps = SymmetricPd::new(dmatrix![1.0, 0.3; 0.3, 2.0]).unwrap();
    let sigma_eps_swapped = SymmetricPd::new(dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap();
    let s_mu = SymmetricPd::new(dmatrix![0.2, 0.05; 0.05, 0.1]).unwrap();
    let s_mu_swapped = SymmetricPd::new(dmatrix![0.1, 0.05; 0.05, 0.2]).unwrap();
    let s_delta = SymmetricPd::new(dmatrix![0.05, 0.0; 0.0, 0.02]).unwrap();
    let s_delta_swapped = SymmetricPd::new(dmatrix![0.02, 0.0; 0.0, 0.05]).unwrap();
    let phi = dvector![0.3, -0.2];
    let phi_swapped = dvector![-0.2, 0.3];

    let draws = 40_000;
    let mut a = Vec::with_capacity(draws);
    let mut b = Vec::with_capacity(draws);
    let xi = DMatrix::zeros(n, 2);
    for _ in 0..draws {
        let (mu, _) =
            draw_trend_states(&y, &xi, &phi, &sigma_eps, 0.8, &hyper, &s_mu, &s_delta, &mut rng).unwrap();
        a.push(mu);
        let (mu, _) = draw_trend_states(
            &swap(&y),
            &xi,
            &phi_swapped,
            &sigma_eps_swapped,
            0.8,
            &swapped_hyper,
            &s_mu_swapped,
            &s_delta_swapped,
            &mut rng,
        )
        .unwrap();
        b.push(swap(&mu));
    }
    for t in 0..n {
        for i in 0..2 {
            let xa: Vec<f64> = a.iter().map(|m| m[(t, i)]).collect();
            let xb: Vec<f64> = b.iter().map(|m| m[(t, i)]).collect();
            let se = ((common::variance(&xa) + common::variance(&xb)) / draws as f64).sqrt();
            assert!((mean(&xa) - mean(&xb)).abs() < 4.0 * se, "t={t} i={i}");
        }
    }
}

#[test]
fn covariance_draw_matches_inverse_gamma_mean() {
    let n = 40;
    let mut rng = Rng::new(6);
    let hyper = TrendHyper {
        long_run_slope: vec![0.1],
        learning_rate: vec![0.5],
        ..TrendHyper::default()
    };
    let mu = DMatrix::from_fn(n, 1, |t, _| t as f64 * 0.1 + 0.3 * rng.standard_normal());
    let delta = DMatrix::from_fn(n, 1, |_, _| 0.1 + 0.2 * rng.standard_normal());
    // residual sums of squares computed directly from the recursions
    let (mut s_level, mut s_slope) = (0.0, 0.0);
    for t in 0..n - 1 {
        s_level += (mu[(t + 1, 0)] - mu[(t, 0)] - delta[(t, 0)]).powi(2);
        s_slope += (delta[(t + 1, 0)] - 0.1 - 0.5 * (delta[(t, 0)] - 0.1)).powi(2);
    }
    let (nu, v) = (0.01, 0.01);
    let prior = SymmetricPd::new(dmatrix![v]).unwrap();
    let draws = 100_000;
    let (mut level, mut slope) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for _ in 0..draws {
        let (a, b) = draw_trend_covariances(&mu, &delta, &hyper, 1.0, nu, &prior, &mut rng).unwrap();
        level.push(a.matrix()[(0, 0)]);
        slope.push(b.matrix()[(0, 0)]);
    }
    // n - 1 increments enter the degrees of freedom
    let df = nu + (n - 1) as f64;
    let expect_level = (v + s_level) / (df - 2.0);
    let expect_slope = (v + s_slope) / (df - 2.0);
    assert!((mean(&level) / expect_level - 1.0).abs() < 0.01);
    assert!((mean(&slope) / expect_slope - 1.0).abs() < 0.01);
}

#[test]
fn zero_residuals_leave_the_prior() {
    let hyper = TrendHyper::default();
    let mu = dmatrix![0.0; 1.0; 2.0; 3.0];
    let delta = dmatrix![1.0; 1.0; 1.0; 1.0];
    let (level, slope) = trend_residuals(&mu, &delta, &hyper).unwrap();
    assert_eq!(level.amax(), 0.0);
    assert_eq!(slope.amax(), 0.0);
    let prior = SymmetricPd::new(dmatrix![2.0]).unwrap();
    let draws = 100_000;
    let mut rng = Rng::new(7);
    let xs: Vec<f64> = (0..draws)
        .map(|_| draw_trend_covariances(&mu, &delta, &hyper, 1.0, 8.0, &prior, &mut rng).unwrap().0.matrix()[(0, 0)])
        .collect();
    // IW(8 + 3, 2): mean 2 / (11 - 2)
    assert!((mean(&xs) / (2.0 / 9.0) - 1.0).abs() < 0.01);
}
