//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the library's linear algebra or samplers, so a
//! bug there cannot cancel out against its own check.

#![allow(dead_code)]

use mqbsts::Rng;
use nalgebra::{DMatrix, DVector};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Monte Carlo standard error of the mean of independent draws.
pub fn iid_se(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Batch-means standard error for an autocorrelated chain.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    (variance(&means) / batches as f64).sqrt()
}

pub fn sample_covariance(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let centre = rows.iter().fold(DVector::zeros(dim), |acc, r| acc + r) / n;
    rows.iter()
        .fold(DMatrix::zeros(dim, dim), |acc, r| {
            let d = r - &centre;
            acc + &d * d.transpose()
        })
        / (n - 1.0)
}

/// Composite Simpson rule with an even number of intervals.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let mut total = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        total += w * f(lo + i as f64 * h);
    }
    total * h / 3.0
}

/// `E[X^k]` for a positive variable with unnormalized log density `log_f`,
/// integrated on `x = e^s` over `s ∈ [s_lo, s_hi]`.
pub fn positive_moment(log_f: impl Fn(f64) -> f64, k: f64, s_lo: f64, s_hi: f64) -> f64 {
    let grid = 20_000;
    let peak = (0..=grid)
        .map(|i| {
            let s = s_lo + (s_hi - s_lo) * i as f64 / grid as f64;
            log_f(s.exp()) + s
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let weight = |s: f64, power: f64| (log_f(s.exp()) + s - peak + power * s).exp();
    let num = simpson(|s| weight(s, k), s_lo, s_hi, grid);
    let den = simpson(|s| weight(s, 0.0), s_lo, s_hi, grid);
    num / den
}

/// Mean and covariance of the unobserved coordinates of `N(mean, cov)` given
/// the `observed` coordinates equal `values`.
pub fn gaussian_condition(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    observed: &[usize],
    values: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let free: Vec<usize> = (0..mean.len()).filter(|i| !observed.contains(i)).collect();
    let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| cov[(rows[i], cols[j])]);
    let s_ff = pick(&free, &free);
    let s_fo = pick(&free, observed);
    let s_oo = pick(observed, observed);
    let s_oo_inv = s_oo.try_inverse().expect("observed block is invertible");
    let mu_f = DVector::from_iterator(free.len(), free.iter().map(|&i| mean[i]));
    let mu_o = DVector::from_iterator(observed.len(), observed.iter().map(|&i| mean[i]));
    let gain = &s_fo * &s_oo_inv;
    let cond_mean = mu_f + &gain * (values - mu_o);
    let cond_cov = s_ff - &gain * s_fo.transpose();
    (cond_mean, cond_cov)
}

/// Log density of `N(mean, cov)` from an explicit inverse and LU determinant.
pub fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x - mean;
    let inv = cov.clone().try_inverse().expect("covariance is invertible");
    let quad = (d.transpose() * inv * &d)[(0, 0)];
    let log_det = cov.clone().lu().determinant().ln();
    -0.5 * (quad + log_det + x.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Normalizes log weights into probabilities.
pub fn softmax(log_w: &[f64]) -> Vec<f64> {
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Well-conditioned random SPD matrix `G Gᵀ + dim·I`.
pub fn random_spd(dim: usize, rng: &mut Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.standard_normal());
    &g * g.transpose() + DMatrix::identity(dim, dim) * dim as f64
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

/// Relative Frobenius distance `‖a - b‖ / ‖b‖`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
