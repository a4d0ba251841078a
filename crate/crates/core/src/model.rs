//! Domain types, the asymmetric-Laplace quantile link, the pinball loss and
//! the stacked matrix form of the regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::SymmetricPd;
use crate::error::{Error, Result};

/// Per-series target quantiles, each strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileSpec {
    tau: Vec<f64>,
}

impl TryFrom<Vec<f64>> for QuantileSpec {
    type Error = Error;

    fn try_from(tau: Vec<f64>) -> Result<Self> {
        Self::new(tau)
    }
}

impl From<QuantileSpec> for Vec<f64> {
    fn from(spec: QuantileSpec) -> Self {
        spec.tau
    }
}

impl QuantileSpec {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::invalid("quantile vector is empty"));
        }
        if let Some(bad) = tau.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::invalid(format!("quantile {bad} is outside (0, 1)")));
        }
        Ok(Self { tau })
    }

    pub fn uniform(m: usize, tau: f64) -> Result<Self> {
        Self::new(vec![tau; m])
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.tau
    }

    /// Location weights `ψ_i = (1 - 2τ_i) / (τ_i (1 - τ_i))`.
    ///
    /// With this sign the mixture `ξ + φψw + φ√(2/(τ(1-τ)))·√w·e` puts
    /// exactly mass `τ` at or below `ξ`.
    pub fn location_weights(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.tau.len(),
            self.tau.iter().map(|t| (1.0 - 2.0 * t) / (t * (1.0 - t))),
        )
    }

    /// Diagonal of `Ψ_τ`, `√(2 / (τ_i (1 - τ_i)))`.
    pub fn scale_weights(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.tau.len(),
            self.tau.iter().map(|t| (2.0 / (t * (1.0 - t))).sqrt()),
        )
    }
}

/// Target matrix plus one predictor pool per series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
    predictors: Vec<DMatrix<f64>>,
    series_names: Vec<String>,
    predictor_names: Vec<Vec<String>>,
}

impl Dataset {
    pub fn new(
        y: DMatrix<f64>,
        predictors: Vec<DMatrix<f64>>,
        series_names: Vec<String>,
        predictor_names: Vec<Vec<String>>,
    ) -> Result<Self> {
        let (n, m) = y.shape();
        if n == 0 || m == 0 {
            return Err(Error::data("dataset needs at least one row and one series"));
        }
        if predictors.len() != m {
            return Err(Error::data(format!(
                "{} predictor pools for {m} series",
                predictors.len()
            )));
        }
        if series_names.len() != m || predictor_names.len() != m {
            return Err(Error::data("name lists do not match the number of series"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("target values must be finite (missing values are not supported)"));
        }
        for (i, x) in predictors.iter().enumerate() {
            if x.nrows() != n {
                return Err(Error::data(format!(
                    "predictor pool of series `{}` has {} rows, expected {n}",
                    series_names[i],
                    x.nrows()
                )));
            }
            if predictor_names[i].len() != x.ncols() {
                return Err(Error::data(format!(
                    "series `{}` has {} predictor columns but {} names",
                    series_names[i],
                    x.ncols(),
                    predictor_names[i].len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "predictors of series `{}` must be finite",
                    series_names[i]
                )));
            }
        }
        Ok(Self {
            y,
            predictors,
            series_names,
            predictor_names,
        })
    }

    /// Unnamed dataset; series are `y1..ym` and predictors `x1..xk`.
    pub fn from_matrices(y: DMatrix<f64>, predictors: Vec<DMatrix<f64>>) -> Result<Self> {
        let series_names = (1..=y.ncols()).map(|i| format!("y{i}")).collect();
        let predictor_names = predictors
            .iter()
            .map(|x| (1..=x.ncols()).map(|j| format!("x{j}")).collect())
            .collect();
        Self::new(y, predictors, series_names, predictor_names)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn predictors(&self) -> &[DMatrix<f64>] {
        &self.predictors
    }

    pub fn series_names(&self) -> &[String] {
        &self.series_names
    }

    pub fn predictor_names(&self) -> &[Vec<String>] {
        &self.predictor_names
    }

    pub fn predictor_counts(&self) -> Vec<usize> {
        self.predictors.iter().map(|x| x.ncols()).collect()
    }

    pub fn total_predictors(&self) -> usize {
        self.predictors.iter().map(|x| x.ncols()).sum()
    }

    /// `series.predictor` labels in stacked coefficient order.
    pub fn coefficient_labels(&self) -> Vec<String> {
        self.series_names
            .iter()
            .zip(&self.predictor_names)
            .flat_map(|(s, names)| names.iter().map(move |p| format!("{s}.{p}")))
            .collect()
    }

    /// Rows `start..end` as a new dataset.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n() {
            return Err(Error::invalid(format!(
                "row range {start}..{end} is invalid for {} rows",
                self.n()
            )));
        }
        let len = end - start;
        Self::new(
            self.y.rows(start, len).into_owned(),
            self.predictors.iter().map(|x| x.rows(start, len).into_owned()).collect(),
            self.series_names.clone(),
            self.predictor_names.clone(),
        )
    }

    /// Per-series predictor rows at time index `t`.
    pub fn predictor_row(&self, t: usize) -> Vec<DVector<f64>> {
        self.predictors
            .iter()
            .map(|x| x.row(t).transpose().into_owned())
            .collect()
    }

    /// Sample covariance of the target series (divisor `n - 1`).
    pub fn target_covariance(&self) -> DMatrix<f64> {
        let n = self.n();
        let mean = self.y.row_mean();
        let mut centered = self.y.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
        centered.tr_mul(&centered) / denom
    }

    pub fn fingerprint(&self) -> DatasetFingerprint {
        let mut hasher = Sha256::new();
        for name in &self.series_names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        for names in &self.predictor_names {
            for name in names {
                hasher.update(name.as_bytes());
                hasher.update([0u8]);
            }
        }
        for v in self.y.iter() {
            hasher.update(v.to_le_bytes());
        }
        for x in &self.predictors {
            for v in x.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        DatasetFingerprint {
            rows: self.n(),
            series: self.m(),
            predictors: self.predictor_counts(),
            hash: hex::encode(hasher.finalize()),
        }
    }
}

/// Shape and content hash of the dataset a posterior sample was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub rows: usize,
    pub series: usize,
    pub predictors: Vec<usize>,
    pub hash: String,
}

/// Location and scale of the asymmetric-Laplace error implied by `(Φ, τ, Σ_corr)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub phi: DVector<f64>,
    pub location_weights: DVector<f64>,
    pub scale_weights: DVector<f64>,
    pub sigma_corr: SymmetricPd,
    pub phi_eps: DVector<f64>,
    pub sigma_eps: SymmetricPd,
    pub sigma_tau: SymmetricPd,
}

pub fn build_link(phi: &[f64], tau: &QuantileSpec, sigma_corr: &SymmetricPd) -> Result<LinkParams> {
    let m = tau.len();
    if phi.len() != m || sigma_corr.dim() != m {
        return Err(Error::invalid(format!(
            "link dimensions disagree: {} scales, {m} quantiles, {}x{} correlation",
            phi.len(),
            sigma_corr.dim(),
            sigma_corr.dim()
        )));
    }
    if let Some(bad) = phi.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::invalid(format!("scale {bad} must be positive")));
    }
    for i in 0..m {
        if (sigma_corr.matrix()[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "correlation matrix has diagonal entry {} at {i}",
                sigma_corr.matrix()[(i, i)]
            )));
        }
    }
    let scale_weights = tau.scale_weights();
    let psi = DMatrix::from_diagonal(&scale_weights);
    let sigma_tau = SymmetricPd::symmetrized(&psi * sigma_corr.matrix() * &psi)?;
    let phi_vec = DVector::from_column_slice(phi);
    Ok(LinkParams {
        phi_eps: error_location(&phi_vec, tau),
        sigma_eps: error_scale(&phi_vec, &sigma_tau)?,
        phi: phi_vec,
        location_weights: tau.location_weights(),
        scale_weights,
        sigma_corr: sigma_corr.clone(),
        sigma_tau,
    })
}

/// `φ_ε = Φ ψ_τ`.
pub fn error_location(phi: &DVector<f64>, tau: &QuantileSpec) -> DVector<f64> {
    phi.component_mul(&tau.location_weights())
}

/// `Σ_ε = Φ Σ_τ Φ`.
pub fn error_scale(phi: &DVector<f64>, sigma_tau: &SymmetricPd) -> Result<SymmetricPd> {
    let s = sigma_tau.matrix();
    SymmetricPd::symmetrized(DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        phi[i] * s[(i, j)] * phi[j]
    }))
}

/// Pinball loss `(|u| + (2p - 1)u) / 2`.
pub fn quantile_loss(u: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("quantile {p} is outside (0, 1)")));
    }
    Ok((u.abs() + (2.0 * p - 1.0) * u) / 2.0)
}

/// Block-diagonal `mn × K` design with `X_i` as the i-th block.
pub fn assemble_block_x(dataset: &Dataset) -> DMatrix<f64> {
    let n = dataset.n();
    let m = dataset.m();
    let k = dataset.total_predictors();
    let mut x = DMatrix::zeros(n * m, k);
    let mut col = 0;
    for (i, block) in dataset.predictors().iter().enumerate() {
        x.view_mut((i * n, col), block.shape()).copy_from(block);
        col += block.ncols();
    }
    x
}

/// Series-major stacking: entry `i·n + t` is `Z[t, i]`.
pub fn vectorize_by_series(z: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra storage is column-major, which is exactly series-major here
    DVector::from_column_slice(z.as_slice())
}

pub fn devectorize_by_series(v: &DVector<f64>, n: usize, m: usize) -> Result<DMatrix<f64>> {
    if v.len() != n * m {
        return Err(Error::invalid(format!(
            "vector of length {} cannot be reshaped to {n}x{m}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(n, m, v.as_slice()))
}

/// Positions of the active coordinates.
pub fn active_indices(gamma: &[bool]) -> Vec<usize> {
    gamma.iter().enumerate().filter(|(_, g)| **g).map(|(k, _)| k).collect()
}

pub fn restrict_vector(v: &DVector<f64>, gamma: &[bool]) -> Result<DVector<f64>> {
    check_len(v.len(), gamma)?;
    let idx = active_indices(gamma);
    Ok(DVector::from_iterator(idx.len(), idx.iter().map(|&k| v[k])))
}

pub fn restrict_columns(x: &DMatrix<f64>, gamma: &[bool]) -> Result<DMatrix<f64>> {
    check_len(x.ncols(), gamma)?;
    Ok(x.select_columns(&active_indices(gamma)))
}

/// Rows and columns of a `K × K` matrix.
pub fn restrict_square(a: &DMatrix<f64>, gamma: &[bool]) -> Result<DMatrix<f64>> {
    check_len(a.ncols(), gamma)?;
    check_len(a.nrows(), gamma)?;
    let idx = active_indices(gamma);
    Ok(a.select_rows(&idx).select_columns(&idx))
}

/// Scatter restricted coordinates back into a length-`K` vector of zeros.
pub fn expand_vector(active: &DVector<f64>, gamma: &[bool]) -> Result<DVector<f64>> {
    let idx = active_indices(gamma);
    if idx.len() != active.len() {
        return Err(Error::invalid(format!(
            "{} active coordinates but {} values",
            idx.len(),
            active.len()
        )));
    }
    let mut full = DVector::zeros(gamma.len());
    for (v, &k) in active.iter().zip(&idx) {
        full[k] = *v;
    }
    Ok(full)
}

fn check_len(len: usize, gamma: &[bool]) -> Result<()> {
    if len != gamma.len() {
        return Err(Error::invalid(format!(
            "indicator vector has length {} but object has {len} coordinates",
            gamma.len()
        )));
    }
    Ok(())
}

/// Inclusion indicators and coefficients in stacked order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionState {
    pub gamma: Vec<bool>,
    pub beta: DVector<f64>,
}

impl RegressionState {
    pub fn empty(k: usize) -> Self {
        Self {
            gamma: vec![false; k],
            beta: DVector::zeros(k),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.gamma.len() == self.beta.len()
            && self.gamma.iter().zip(self.beta.iter()).all(|(g, b)| *g || *b == 0.0)
    }
}

/// `n × m` regression fit, column `i` equal to `X_i β_i`.
pub fn regression_fit(predictors: &[DMatrix<f64>], beta: &DVector<f64>) -> DMatrix<f64> {
    let n = predictors.first().map_or(0, |x| x.nrows());
    let mut fit = DMatrix::zeros(n, predictors.len());
    let mut offset = 0;
    for (i, x) in predictors.iter().enumerate() {
        let k = x.ncols();
        let b = beta.rows(offset, k);
        fit.set_column(i, &(x * b));
        offset += k;
    }
    fit
}
