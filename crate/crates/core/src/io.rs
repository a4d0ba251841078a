//! Flat-file formats: the wide dataset CSV, the draws table with its JSON
//! metadata, result tables and `key = value` run configuration files.
//!
//! Dataset CSV: a header row, column `t` (integer time index, strictly
//! increasing) first, then `y.<series>` target columns and
//! `x.<series>.<predictor>` predictor columns. Series names may not contain
//! `.`; predictor names may. Cells must be finite decimal numbers.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::SymmetricPd;
use crate::error::{Error, Result};
use crate::forecaster::{ForecastResult, RollingStep};
use crate::model::{Dataset, DatasetFingerprint, QuantileSpec};
use crate::trainer::{CoefficientSummary, InclusionProbabilities, McmcConfig, McmcDraw, PosteriorSample, TrendDraw};

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(reader)
}

fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}

/// Parsed dataset CSV; targets may be absent (predictor-only input for forecasting).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time: Vec<i64>,
    pub series: Vec<String>,
    pub y: Option<DMatrix<f64>>,
    pub predictors: Vec<DMatrix<f64>>,
    pub predictor_names: Vec<Vec<String>>,
}

impl Frame {
    pub fn rows(&self) -> usize {
        self.time.len()
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        let y = self
            .y
            .ok_or_else(|| Error::data("the file has no `y.<series>` target columns"))?;
        Dataset::new(y, self.predictors, self.series, self.predictor_names)
    }

    /// Per-series predictor vectors at row `t`.
    pub fn predictor_row(&self, t: usize) -> Vec<DVector<f64>> {
        self.predictors.iter().map(|x| x.row(t).transpose()).collect()
    }
}

fn series_index(name: &str, series: &mut Vec<String>, has_target: &mut Vec<bool>, names: &mut Vec<Vec<String>>) -> usize {
    series.iter().position(|s| s == name).unwrap_or_else(|| {
        series.push(name.to_string());
        has_target.push(false);
        names.push(Vec::new());
        series.len() - 1
    })
}

enum Column {
    Target(usize),
    Predictor(usize, usize),
}

fn parse_cell(value: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::data(format!("row {row}, column `{column}`: `{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::data(format!("row {row}, column `{column}`: non-finite value `{value}`")));
    }
    Ok(v)
}

pub fn read_frame<R: Read>(reader: R) -> Result<Frame> {
    let mut rdr = csv_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(Error::data(format!(
            "first column must be `t`, found `{}`",
            header.first().cloned().unwrap_or_default()
        )));
    }
    let mut series: Vec<String> = Vec::new();
    let mut has_target: Vec<bool> = Vec::new();
    let mut predictor_names: Vec<Vec<String>> = Vec::new();
    let mut columns = Vec::with_capacity(header.len() - 1);
    let mut seen = std::collections::HashSet::new();
    for col in &header[1..] {
        if !seen.insert(col.clone()) {
            return Err(Error::data(format!("duplicate column `{col}`")));
        }
        if let Some(name) = col.strip_prefix("y.") {
            if name.is_empty() || name.contains('.') {
                return Err(Error::data(format!("column `{col}`: series names must be non-empty and free of `.`")));
            }
            let i = series_index(name, &mut series, &mut has_target, &mut predictor_names);
            has_target[i] = true;
            columns.push(Column::Target(i));
        } else if let Some(rest) = col.strip_prefix("x.") {
            let (name, pred) = rest
                .split_once('.')
                .filter(|(s, p)| !s.is_empty() && !p.is_empty())
                .ok_or_else(|| Error::data(format!("column `{col}` is not of the form `x.<series>.<predictor>`")))?;
            let i = series_index(name, &mut series, &mut has_target, &mut predictor_names);
            predictor_names[i].push(pred.to_string());
            columns.push(Column::Predictor(i, predictor_names[i].len() - 1));
        } else {
            return Err(Error::data(format!("column `{col}` is neither `y.<series>` nor `x.<series>.<predictor>`")));
        }
    }
    if series.is_empty() {
        return Err(Error::data("no series columns found"));
    }
    let targets = has_target.iter().filter(|h| **h).count();
    if targets != 0 && targets != series.len() {
        let missing = series
            .iter()
            .zip(&has_target)
            .find(|(_, h)| !**h)
            .map(|(s, _)| s.clone())
            .unwrap_or_default();
        return Err(Error::data(format!("predictor columns for series `{missing}` but no column `y.{missing}`")));
    }

    let mut time = Vec::new();
    let mut y_rows: Vec<Vec<f64>> = Vec::new();
    let mut x_rows: Vec<Vec<Vec<f64>>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::data(format!("row {row} has {} cells, expected {}", record.len(), header.len())));
        }
        let t: i64 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("row {row}, column `t`: `{}` is not an integer", &record[0])))?;
        if let Some(prev) = time.last() {
            if t <= *prev {
                return Err(Error::data(format!("row {row}, column `t`: time index {t} does not increase")));
            }
        }
        time.push(t);
        let mut y = vec![0.0; series.len()];
        let mut x: Vec<Vec<f64>> = predictor_names.iter().map(|p| vec![0.0; p.len()]).collect();
        for (c, column) in columns.iter().enumerate() {
            let v = parse_cell(&record[c + 1], row, &header[c + 1])?;
            match *column {
                Column::Target(i) => y[i] = v,
                Column::Predictor(i, j) => x[i][j] = v,
            }
        }
        y_rows.push(y);
        x_rows.push(x);
    }
    let n = time.len();
    if n == 0 {
        return Err(Error::data("the file has no data rows"));
    }
    let y = (targets > 0).then(|| DMatrix::from_fn(n, series.len(), |t, i| y_rows[t][i]));
    let predictors = predictor_names
        .iter()
        .enumerate()
        .map(|(i, names)| DMatrix::from_fn(n, names.len(), |t, j| x_rows[t][i][j]))
        .collect();
    Ok(Frame {
        time,
        series,
        y,
        predictors,
        predictor_names,
    })
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    read_frame(reader)?.into_dataset()
}

/// Writes `dataset` with time index `1..=n`, or `time` when given.
pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset, time: Option<&[i64]>) -> Result<()> {
    if let Some(t) = time {
        if t.len() != dataset.n() {
            return Err(Error::invalid("time index length does not match the dataset"));
        }
    }
    let mut w = csv_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend(dataset.series_names().iter().map(|s| format!("y.{s}")));
    for (s, names) in dataset.series_names().iter().zip(dataset.predictor_names()) {
        header.extend(names.iter().map(|p| format!("x.{s}.{p}")));
    }
    w.write_record(&header)?;
    for t in 0..dataset.n() {
        let mut row = vec![time.map_or((t + 1) as i64, |tt| tt[t]).to_string()];
        row.extend(dataset.y().row(t).iter().map(|v| v.to_string()));
        for x in dataset.predictors() {
            row.extend(x.row(t).iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar describing a draws table; together they reconstruct a [`PosteriorSample`]
/// whose trend paths are reduced to their last state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub config: McmcConfig,
    pub tau: QuantileSpec,
    pub fingerprint: DatasetFingerprint,
    pub coefficient_labels: Vec<String>,
    pub series_names: Vec<String>,
    pub predictor_counts: Vec<usize>,
    pub phi_acceptance: Vec<f64>,
    pub phi_steps: Vec<f64>,
    pub columns: Vec<String>,
}

impl DrawsMeta {
    pub fn from_sample(sample: &PosteriorSample) -> Self {
        Self {
            config: sample.config.clone(),
            tau: sample.tau.clone(),
            fingerprint: sample.fingerprint.clone(),
            coefficient_labels: sample.coefficient_labels.clone(),
            series_names: sample.series_names.clone(),
            predictor_counts: sample.predictor_counts.clone(),
            phi_acceptance: sample.phi_acceptance.clone(),
            phi_steps: sample.phi_steps.clone(),
            columns: draws_header(sample.series(), &sample.coefficient_labels, sample.config.trend.enabled),
        }
    }
}

fn vech_labels(prefix: &str, m: usize) -> impl Iterator<Item = String> + '_ {
    (0..m).flat_map(move |j| (j..m).map(move |i| format!("{prefix}_{}_{}", i + 1, j + 1)))
}

fn vech(s: &SymmetricPd) -> impl Iterator<Item = f64> + '_ {
    let m = s.dim();
    (0..m).flat_map(move |j| (j..m).map(move |i| s.matrix()[(i, j)]))
}

fn unvech(values: &[f64], m: usize) -> Result<SymmetricPd> {
    let mut out = DMatrix::zeros(m, m);
    let mut it = values.iter();
    for j in 0..m {
        for i in j..m {
            let v = *it.next().ok_or_else(|| Error::data("truncated covariance columns"))?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    SymmetricPd::new(out).map_err(|e| Error::data(format!("stored covariance is not positive definite: {e}")))
}

/// Column order: iteration, W, Phi, vech(Sigma_tau), gamma, beta, then with a
/// trend vech(Sigma_mu), vech(Sigma_delta), last-state mu and delta.
pub fn draws_header(m: usize, labels: &[String], trend: bool) -> Vec<String> {
    let mut h = vec!["iteration".to_string(), "W".to_string()];
    h.extend((1..=m).map(|i| format!("Phi_{i}")));
    h.extend(vech_labels("Sigma_tau", m));
    h.extend(labels.iter().map(|l| format!("gamma_{l}")));
    h.extend(labels.iter().map(|l| format!("beta_{l}")));
    if trend {
        h.extend(vech_labels("Sigma_mu", m));
        h.extend(vech_labels("Sigma_delta", m));
        h.extend((1..=m).map(|i| format!("mu_last_{i}")));
        h.extend((1..=m).map(|i| format!("delta_last_{i}")));
    }
    h
}

pub fn write_draws<W: Write>(writer: W, sample: &PosteriorSample) -> Result<()> {
    let mut w = csv_writer(writer);
    let m = sample.series();
    w.write_record(draws_header(m, &sample.coefficient_labels, sample.config.trend.enabled))?;
    for d in &sample.draws {
        let mut row = vec![d.iteration.to_string(), d.w.to_string()];
        row.extend(d.phi.iter().map(|v| v.to_string()));
        row.extend(vech(&d.sigma_tau).map(|v| v.to_string()));
        row.extend(d.gamma.iter().map(|g| u8::from(*g).to_string()));
        row.extend(d.beta.iter().map(|v| v.to_string()));
        if sample.config.trend.enabled {
            let td = d
                .trend
                .as_ref()
                .ok_or_else(|| Error::invalid("trend is enabled but a draw has no trend state"))?;
            let (mu, delta) = td.last_state();
            row.extend(vech(&td.sigma_mu).map(|v| v.to_string()));
            row.extend(vech(&td.sigma_delta).map(|v| v.to_string()));
            row.extend(mu.iter().map(|v| v.to_string()));
            row.extend(delta.iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_draws<R: Read>(reader: R, meta: &DrawsMeta) -> Result<PosteriorSample> {
    let m = meta.series_names.len();
    let k = meta.coefficient_labels.len();
    let trend = meta.config.trend.enabled;
    let expected = draws_header(m, &meta.coefficient_labels, trend);
    let mut rdr = csv_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        let at = header.iter().zip(&expected).position(|(a, b)| a != b).unwrap_or(header.len().min(expected.len()));
        return Err(Error::data(format!(
            "draws table header differs from its metadata at column {} (`{}` vs `{}`)",
            at + 1,
            header.get(at).cloned().unwrap_or_default(),
            expected.get(at).cloned().unwrap_or_default()
        )));
    }
    let nv = m * (m + 1) / 2;
    let mut draws = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let values: Vec<f64> = record
            .iter()
            .enumerate()
            .map(|(c, v)| parse_cell(v, r + 1, &header[c]))
            .collect::<Result<_>>()?;
        let mut pos = 0;
        let mut take = |len: usize| {
            let s = &values[pos..pos + len];
            pos += len;
            s.to_vec()
        };
        let iteration = take(1)[0] as usize;
        let w = take(1)[0];
        let phi = DVector::from_vec(take(m));
        let sigma_tau = unvech(&take(nv), m)?;
        let gamma: Vec<bool> = take(k).iter().map(|g| *g != 0.0).collect();
        let beta = DVector::from_vec(take(k));
        let trend_draw = if trend {
            let sigma_mu = unvech(&take(nv), m)?;
            let sigma_delta = unvech(&take(nv), m)?;
            let mu = DMatrix::from_row_slice(1, m, &take(m));
            let delta = DMatrix::from_row_slice(1, m, &take(m));
            Some(TrendDraw {
                mu,
                delta,
                sigma_mu,
                sigma_delta,
            })
        } else {
            None
        };
        draws.push(McmcDraw {
            iteration,
            trend: trend_draw,
            gamma,
            beta,
            sigma_tau,
            phi,
            w,
        });
    }
    Ok(PosteriorSample {
        draws,
        config: meta.config.clone(),
        tau: meta.tau.clone(),
        fingerprint: meta.fingerprint.clone(),
        coefficient_labels: meta.coefficient_labels.clone(),
        series_names: meta.series_names.clone(),
        predictor_counts: meta.predictor_counts.clone(),
        phi_acceptance: meta.phi_acceptance.clone(),
        phi_steps: meta.phi_steps.clone(),
    })
}

pub fn write_inclusion<W: Write>(writer: W, inclusion: &InclusionProbabilities, threshold: f64) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(["coefficient", "inclusion_probability", "selected"])?;
    for (label, p) in inclusion.labels.iter().zip(&inclusion.values) {
        w.write_record([label.clone(), p.to_string(), u8::from(*p >= threshold).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coefficients<W: Write>(writer: W, summary: &[CoefficientSummary]) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(["coefficient", "mean", "sd", "normalized_error"])?;
    for s in summary {
        w.write_record([
            s.label.clone(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.normalized_error.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (step, series); loss columns only when every result was scored.
pub fn write_forecasts<W: Write>(writer: W, series: &[String], results: &[(i64, ForecastResult, Option<DVector<f64>>)]) -> Result<()> {
    let scored = results.iter().all(|(_, r, y)| r.loss.is_some() && y.is_some());
    let mut w = csv_writer(writer);
    let mut header = vec!["step", "series", "prediction"];
    if scored {
        header.extend(["realized", "step_loss", "cumulative_loss"]);
    }
    w.write_record(&header)?;
    let mut cumulative = vec![0.0; series.len()];
    for (t, r, realized) in results {
        for (i, name) in series.iter().enumerate() {
            let mut row = vec![t.to_string(), name.clone(), r.prediction[i].to_string()];
            if scored {
                let loss = r.loss.as_ref().expect("scored")[i];
                cumulative[i] += loss;
                row.push(realized.as_ref().expect("scored")[i].to_string());
                row.push(loss.to_string());
                row.push(cumulative[i].to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_evaluation<W: Write>(writer: W, series: &[String], steps: &[RollingStep], time: &[i64]) -> Result<()> {
    let mut w = csv_writer(writer);
    let mut header: Vec<String> = ["step", "t", "loss", "cumulative_loss", "baseline_loss", "cumulative_baseline_loss"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["prediction", "realized", "baseline"] {
        header.extend(series.iter().map(|s| format!("{prefix}_{s}")));
    }
    w.write_record(&header)?;
    for (h, s) in steps.iter().enumerate() {
        let mut row = vec![
            (h + 1).to_string(),
            time.get(s.row).map_or((s.row + 1) as i64, |t| *t).to_string(),
            s.loss.to_string(),
            s.cumulative_loss.to_string(),
            s.baseline_loss.to_string(),
            s.cumulative_baseline_loss.to_string(),
        ];
        for values in [&s.prediction, &s.realized, &s.baseline] {
            row.extend(values.iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped
/// and `_` in keys is read as `-`.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::invalid(format!("config line {}: empty key or value", i + 1)));
        }
        if out.insert(key.clone(), value.to_string()).is_some() {
            return Err(Error::invalid(format!("config line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}
