//! NARX regressors and the two prediction architectures.
//!
//! A regressor for target index `k` is
//! `[u(k−1), …, u(k−n_u), y(k−1), …, y(k−n_y)]`: all input lags first, newest
//! first, then all output lags, newest first. One-step-ahead prediction
//! (OSAP) fills the output lags from measurements; multi-step-ahead
//! prediction (MSAP) feeds its own predictions back in.

use std::collections::VecDeque;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::elm::{Dataset, ElmModel, Label};
use crate::error::{ElmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NarxConfig {
    pub input_lags: usize,
    pub output_lags: usize,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl NarxConfig {
    pub fn new(input_lags: usize, output_lags: usize, input_dim: usize, output_dim: usize) -> Result<Self> {
        if input_lags == 0 || output_lags == 0 || input_dim == 0 || output_dim == 0 {
            return Err(ElmError::invalid(format!(
                "NARX orders and dimensions must be positive (n_u={input_lags}, n_y={output_lags}, u_d={input_dim}, y_d={output_dim})"
            )));
        }
        Ok(Self {
            input_lags,
            output_lags,
            input_dim,
            output_dim,
        })
    }

    /// `u_d·n_u + y_d·n_y`.
    pub fn regressor_dim(&self) -> usize {
        self.input_dim * self.input_lags + self.output_dim * self.output_lags
    }

    pub fn max_lag(&self) -> usize {
        self.input_lags.max(self.output_lags)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Cycle index of the target.
    pub index: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub label: Option<Label>,
}

/// Ordered samples with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleStream {
    samples: Vec<Sample>,
}

impl SampleStream {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.windows(2).any(|w| w[1].index <= w[0].index) {
            return Err(ElmError::invalid("sample indices must be strictly increasing"));
        }
        if let Some(first) = samples.first() {
            let (n, d) = (first.x.len(), first.y.len());
            if samples.iter().any(|s| s.x.len() != n || s.y.len() != d) {
                return Err(ElmError::invalid("all samples must share input and target dimensions"));
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    /// Replaces every target with its label as a `±1` scalar.
    pub fn with_label_targets(self) -> Result<Self> {
        let samples = self
            .samples
            .into_iter()
            .map(|mut s| {
                let l = s
                    .label
                    .ok_or_else(|| ElmError::invalid("sample has no label"))?;
                s.y = DVector::from_element(1, l.value());
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }

    /// Samples in `range` stacked into a [`Dataset`]; labels are kept only if
    /// every sample has one.
    pub fn to_dataset(&self, range: Range<usize>) -> Result<Dataset> {
        let slice = self
            .samples
            .get(range.clone())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                ElmError::invalid(format!("sample range {range:?} invalid for stream of {}", self.len()))
            })?;
        let n = slice[0].x.len();
        let d = slice[0].y.len();
        let inputs = DMatrix::from_fn(slice.len(), n, |i, j| slice[i].x[j]);
        let targets = DMatrix::from_fn(slice.len(), d, |i, j| slice[i].y[j]);
        let labels: Option<Vec<Label>> = slice.iter().map(|s| s.label).collect();
        Dataset::new(inputs, targets, labels)
    }
}

impl<'a> IntoIterator for &'a SampleStream {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Anything that maps a regressor to an output vector.
pub trait Predictor {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

impl Predictor for ElmModel {
    fn input_dim(&self) -> usize {
        ElmModel::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        ElmModel::output_dim(self)
    }

    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ElmModel::predict(self, x)
    }
}

/// Concatenates input rows then output rows, each given newest first.
fn assemble<'a, U, Y>(config: &NarxConfig, u_newest_first: U, y_newest_first: Y) -> DVector<f64>
where
    U: Iterator<Item = &'a [f64]>,
    Y: Iterator<Item = &'a [f64]>,
{
    let mut x = Vec::with_capacity(config.regressor_dim());
    for row in u_newest_first.take(config.input_lags) {
        x.extend_from_slice(row);
    }
    for row in y_newest_first.take(config.output_lags) {
        x.extend_from_slice(row);
    }
    DVector::from_vec(x)
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn check_model<P: Predictor + ?Sized>(model: &P, config: &NarxConfig) -> Result<()> {
    if model.input_dim() != config.regressor_dim() {
        return Err(ElmError::shape("model input vs NARX regressor", config.regressor_dim(), model.input_dim()));
    }
    if model.output_dim() != config.output_dim {
        return Err(ElmError::shape("model output vs NARX output", config.output_dim, model.output_dim()));
    }
    Ok(())
}

fn build(
    u_series: &DMatrix<f64>,
    y_series: &DMatrix<f64>,
    labels: Option<&[Label]>,
    config: &NarxConfig,
) -> Result<SampleStream> {
    if u_series.ncols() != config.input_dim {
        return Err(ElmError::shape("input series columns", config.input_dim, u_series.ncols()));
    }
    if y_series.ncols() != config.output_dim {
        return Err(ElmError::shape("output series columns", config.output_dim, y_series.ncols()));
    }
    if u_series.nrows() != y_series.nrows() {
        return Err(ElmError::shape("series lengths", u_series.nrows(), y_series.nrows()));
    }
    if let Some(l) = labels {
        if l.len() != u_series.nrows() {
            return Err(ElmError::shape("label series length", u_series.nrows(), l.len()));
        }
    }
    let t = u_series.nrows();
    let lag = config.max_lag();
    if t <= lag {
        return Err(ElmError::invalid(format!(
            "series of length {t} too short for maximum lag {lag}"
        )));
    }
    let u_rows = rows_of(u_series);
    let y_rows = rows_of(y_series);
    let samples = (lag..t)
        .map(|k| Sample {
            index: k,
            x: assemble(
                config,
                (1..=config.input_lags).map(|l| u_rows[k - l].as_slice()),
                (1..=config.output_lags).map(|l| y_rows[k - l].as_slice()),
            ),
            y: DVector::from_row_slice(&y_rows[k]),
            label: labels.map(|l| l[k]),
        })
        .collect();
    SampleStream::new(samples)
}

/// Unrolls `T` cycles into `T − max(n_u, n_y)` regressor/target pairs.
pub fn build_regressors(u_series: &DMatrix<f64>, y_series: &DMatrix<f64>, config: &NarxConfig) -> Result<SampleStream> {
    build(u_series, y_series, None, config)
}

/// As [`build_regressors`], attaching `labels[k]` to the sample for cycle `k`.
pub fn build_regressors_labeled(
    u_series: &DMatrix<f64>,
    y_series: &DMatrix<f64>,
    labels: &[Label],
    config: &NarxConfig,
) -> Result<SampleStream> {
    build(u_series, y_series, Some(labels), config)
}

/// Predicts `y(k+1)` from measured histories whose last rows are `u(k)` and
/// `y(k)`.
pub fn osap_predict<P: Predictor + ?Sized>(
    model: &P,
    u_history: &DMatrix<f64>,
    y_history: &DMatrix<f64>,
    config: &NarxConfig,
) -> Result<DVector<f64>> {
    check_model(model, config)?;
    if u_history.ncols() != config.input_dim || y_history.ncols() != config.output_dim {
        return Err(ElmError::shape(
            "history columns",
            format!("{}/{}", config.input_dim, config.output_dim),
            format!("{}/{}", u_history.ncols(), y_history.ncols()),
        ));
    }
    if u_history.nrows() < config.input_lags || y_history.nrows() < config.output_lags {
        return Err(ElmError::invalid(format!(
            "history too short: need {} input and {} output rows, got {} and {}",
            config.input_lags,
            config.output_lags,
            u_history.nrows(),
            y_history.nrows()
        )));
    }
    let u_rows = rows_of(u_history);
    let y_rows = rows_of(y_history);
    let x = assemble(
        config,
        u_rows.iter().rev().map(Vec::as_slice),
        y_rows.iter().rev().map(Vec::as_slice),
    );
    model.predict(&x)
}

/// Recurrent prediction over `horizon` cycles.
///
/// `u_sequence` holds `u(k−n_u+1), …, u(k+horizon−1)` (the known control
/// sequence, oldest first) and `y_seed` ends with the measured `y(k)`. Row
/// `s` of the result is `ŷ(k+1+s)`.
pub fn msap_predict<P: Predictor + ?Sized>(
    model: &P,
    u_sequence: &DMatrix<f64>,
    y_seed: &DMatrix<f64>,
    horizon: usize,
    config: &NarxConfig,
) -> Result<DMatrix<f64>> {
    check_model(model, config)?;
    if horizon == 0 {
        return Err(ElmError::invalid("horizon must be at least 1"));
    }
    if u_sequence.ncols() != config.input_dim || y_seed.ncols() != config.output_dim {
        return Err(ElmError::shape(
            "sequence columns",
            format!("{}/{}", config.input_dim, config.output_dim),
            format!("{}/{}", u_sequence.ncols(), y_seed.ncols()),
        ));
    }
    let needed = config.input_lags + horizon - 1;
    if u_sequence.nrows() < needed {
        return Err(ElmError::invalid(format!(
            "input sequence covers {} rows, horizon {horizon} needs {needed}",
            u_sequence.nrows()
        )));
    }
    if y_seed.nrows() < config.output_lags {
        return Err(ElmError::invalid(format!(
            "seed history has {} rows, need {}",
            y_seed.nrows(),
            config.output_lags
        )));
    }
    let u_rows = rows_of(u_sequence);
    let mut y_window: VecDeque<Vec<f64>> = rows_of(y_seed)
        .into_iter()
        .rev()
        .take(config.output_lags)
        .collect();
    let mut out = DMatrix::zeros(horizon, config.output_dim);
    for s in 0..horizon {
        let newest = s + config.input_lags - 1;
        let x = assemble(
            config,
            (0..config.input_lags).map(|l| u_rows[newest - l].as_slice()),
            y_window.iter().map(Vec::as_slice),
        );
        let y_hat = model.predict(&x)?;
        out.set_row(s, &RowDVector::from_iterator(y_hat.len(), y_hat.iter().copied()));
        y_window.push_front(y_hat.iter().copied().collect());
        y_window.truncate(config.output_lags);
    }
    Ok(out)
}
