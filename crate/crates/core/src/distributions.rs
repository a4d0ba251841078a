//! Seeded samplers for the handful of distributions the Gibbs sampler needs.
//!
//! Every sampler is a pure function of its parameters and the state of the
//! caller-owned [`Rng`]; nothing here keeps global state.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Relative tolerance used for both the symmetry check and the smallest
/// admissible Cholesky pivot.
pub const PD_TOLERANCE: f64 = 1e-12;

/// Deterministic random number generator (ChaCha8 keyed by a 64-bit seed).
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream derived from the same seed, used for parallel chains.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits in [0, 1)
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    pub fn poisson(&mut self, rate: f64) -> Result<f64> {
        let dist = Poisson::new(rate)
            .map_err(|e| Error::invalid(format!("poisson rate {rate}: {e}")))?;
        Ok(dist.sample(&mut self.inner))
    }

    pub fn chi_squared(&mut self, df: f64) -> Result<f64> {
        let dist = ChiSquared::new(df)
            .map_err(|e| Error::invalid(format!("chi-squared df {df}: {e}")))?;
        Ok(dist.sample(&mut self.inner))
    }

    pub fn standard_normal_vector(&mut self, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| self.standard_normal())
    }

    /// Fisher-Yates shuffle of `0..len`.
    pub fn permutation(&mut self, len: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            let j = (self.inner.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        order
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// A symmetric positive definite matrix together with its upper Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPd {
    matrix: DMatrix<f64>,
    upper: DMatrix<f64>,
}

impl SymmetricPd {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::invalid(format!(
                "expected a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.norm();
        let dim = matrix.nrows();
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > PD_TOLERANCE * scale {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let upper = cholesky_upper(&matrix)?;
        Ok(Self { matrix, upper })
    }

    /// Symmetrizes `(M + Mᵀ)/2` before validating; used for freshly computed posterior scales.
    pub fn symmetrized(matrix: DMatrix<f64>) -> Result<Self> {
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Self::new(sym)
    }

    pub fn identity(dim: usize) -> Self {
        let eye = DMatrix::identity(dim, dim);
        Self {
            matrix: eye.clone(),
            upper: eye,
        }
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * scale)
    }

    /// Equicorrelation matrix with unit diagonal and constant off-diagonal `rho`.
    pub fn equicorrelation(dim: usize, rho: f64) -> Result<Self> {
        let m = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho });
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Upper-triangular `U` with `UᵀU = self`.
    pub fn upper(&self) -> &DMatrix<f64> {
        &self.upper
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.upper.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `self⁻¹ b` via two triangular solves.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .upper
            .tr_solve_upper_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.upper
            .solve_upper_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let inv = self.solve(&DMatrix::identity(dim, dim));
        (&inv + inv.transpose()) * 0.5
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

impl TryFrom<DMatrix<f64>> for SymmetricPd {
    type Error = Error;

    fn try_from(value: DMatrix<f64>) -> Result<Self> {
        SymmetricPd::new(value)
    }
}

impl From<SymmetricPd> for DMatrix<f64> {
    fn from(value: SymmetricPd) -> Self {
        value.matrix
    }
}

/// Upper Cholesky factor `U` with `UᵀU = sigma`.
///
/// A pivot no larger than `1e-12 * ‖sigma‖_F` is reported as a decomposition
/// failure naming the pivot index.
pub fn cholesky_upper(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::invalid("cholesky of a non-square matrix"));
    }
    let tol = PD_TOLERANCE * sigma.norm();
    let mut u = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = sigma[(j, j)];
        for k in 0..j {
            pivot -= u[(k, j)] * u[(k, j)];
        }
        if !(pivot > tol) {
            return Err(Error::Decomposition { pivot: j, value: pivot });
        }
        let ujj = pivot.sqrt();
        u[(j, j)] = ujj;
        for i in (j + 1)..n {
            let mut s = sigma[(j, i)];
            for k in 0..j {
                s -= u[(k, j)] * u[(k, i)];
            }
            u[(j, i)] = s / ujj;
        }
    }
    Ok(u)
}

pub fn sample_mvn(mean: &DVector<f64>, cov: &SymmetricPd, rng: &mut Rng) -> Result<DVector<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::invalid(format!(
            "mean has dimension {} but covariance is {}x{}",
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let z = rng.standard_normal_vector(mean.len());
    Ok(mean + cov.upper().tr_mul(&z))
}

/// Inverse-Wishart draw by the Bartlett decomposition of the Wishart on the inverted scale.
///
/// With `scale = CᵀC` and Bartlett factor `A` of a `W(df, I)` draw, the
/// result is `(A⁻¹C)ᵀ(A⁻¹C)`, which avoids ever inverting `scale`.
pub fn sample_inverse_wishart(df: f64, scale: &SymmetricPd, rng: &mut Rng) -> Result<SymmetricPd> {
    let dim = scale.dim();
    if !(df > dim as f64 - 1.0) {
        return Err(Error::invalid(format!(
            "inverse-Wishart needs df > dim - 1 (df = {df}, dim = {dim})"
        )));
    }
    let mut bartlett = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        bartlett[(i, i)] = rng.chi_squared(df - i as f64)?.sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.standard_normal();
        }
    }
    let t = bartlett
        .solve_lower_triangular(scale.upper())
        .ok_or_else(|| Error::numerical("inverse-Wishart", "singular Bartlett factor"))?;
    SymmetricPd::symmetrized(t.tr_mul(&t))
}

pub fn sample_exponential_unit(rng: &mut Rng) -> f64 {
    loop {
        let w: f64 = Exp1.sample(rng);
        if w > 0.0 {
            return w;
        }
    }
}

/// Multivariate asymmetric Laplace draw `phi·w + √w·e`, `w ~ Exp(1)`, `e ~ N(0, sigma)`.
pub fn sample_mal(phi: &DVector<f64>, sigma: &SymmetricPd, rng: &mut Rng) -> Result<DVector<f64>> {
    if phi.len() != sigma.dim() {
        return Err(Error::invalid(format!(
            "location has dimension {} but scale is {}x{}",
            phi.len(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    let w = sample_exponential_unit(rng);
    let e = sample_mvn(&DVector::zeros(phi.len()), sigma, rng)?;
    Ok(phi * w + e * w.sqrt())
}

/// Generalized inverse Gaussian draw with density `∝ x^(p-1) exp(-(a x + b/x)/2)`.
///
/// Works on the standardized two-parameter form `GIG(λ, ω)` with `ω = √(ab)`
/// and rescales by `√(b/a)`. Negative `λ` uses `1/X ~ GIG(-λ, ω)`. The
/// generator follows Hörmann & Leydold (2014): ratio-of-uniforms with mode
/// shift for large `λ` or `ω`, plain ratio-of-uniforms in the middle range,
/// and a three-piece rejection hat for the non-T-concave corner.
pub fn sample_gig(a: f64, b: f64, p: f64, rng: &mut Rng) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) || !p.is_finite() {
        return Err(Error::invalid(format!(
            "GIG needs finite a > 0, b > 0 and finite p (a = {a}, b = {b}, p = {p})"
        )));
    }
    let omega = (a * b).sqrt();
    let lambda = p.abs();
    let y = if lambda > 2.0 || omega > 3.0 {
        gig_rou_shift(lambda, omega, rng)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        gig_rou_noshift(lambda, omega, rng)
    } else {
        gig_concave_hat(lambda, omega, rng)
    };
    let y = if p < 0.0 { 1.0 / y } else { y };
    Ok((b / a).sqrt() * y)
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0).powi(2) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

fn gig_rou_noshift(lambda: f64, omega: f64, rng: &mut Rng) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.uniform_open();
        let v = rng.uniform_open();
        let x = u / v;
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn gig_rou_shift(lambda: f64, omega: f64, rng: &mut Rng) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // extremes of (x - xm)·√f(x) are roots of a depressed cubic
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    let arg = (-q / (2.0 * (-p * p * p / 27.0).sqrt())).clamp(-1.0, 1.0);
    let fi = arg.acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
    let log_sqrt_f = |y: f64| t * y.ln() - s * (y + 1.0 / y) - nc;
    let uplus = (y1 - xm) * log_sqrt_f(y1).exp();
    let uminus = (y2 - xm) * log_sqrt_f(y2).exp();
    loop {
        let u = uminus + rng.uniform() * (uplus - uminus);
        let v = rng.uniform_open();
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= log_sqrt_f(x) {
            return x;
        }
    }
}

/// Rejection from a constant / power / exponential hat; valid for `0 <= λ < 1`.
fn gig_concave_hat(lambda: f64, omega: f64, rng: &mut Rng) -> f64 {
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.uniform();
        let (x, hx) = if v <= a0 {
            (x0 * v / a0, k0)
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    let x = omega * (omega.exp() * v).exp();
                    (x, k1 / x)
                } else {
                    let x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    (x, k1 * x.powf(lambda - 1.0))
                }
            } else {
                v -= a1;
                let start = x0.max(2.0 / omega);
                let x = -2.0 / omega * ((-omega / 2.0 * start).exp() - omega / (2.0 * k2) * v).ln();
                (x, k2 * (-omega / 2.0 * x).exp())
            }
        };
        if !(x > 0.0 && x.is_finite()) {
            continue;
        }
        let u = rng.uniform_open() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}
