//! Channel normalization, normalized RMSE and imbalance-aware classification
//! metrics.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::elm::Label;
use crate::error::{ElmError, Result};

/// Per-channel affine map of `[min, max]` onto `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Normalizer {
    /// Fits min/max per column. Out-of-range values are never clipped later.
    pub fn fit(data: &DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(ElmError::invalid("cannot fit a normalizer on empty data"));
        }
        let mut min = Vec::with_capacity(data.ncols());
        let mut max = Vec::with_capacity(data.ncols());
        for (j, col) in data.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(ElmError::NonFinite("normalizer data"));
            }
            let lo = col.min();
            let hi = col.max();
            if hi <= lo {
                return Err(ElmError::invalid(format!("channel {j} is constant ({lo})")));
            }
            min.push(lo);
            max.push(hi);
        }
        Ok(Self { min, max })
    }

    pub fn from_bounds(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(ElmError::shape("normalizer bounds", min.len(), max.len()));
        }
        if let Some(j) = (0..min.len()).find(|&j| !min[j].is_finite() || !max[j].is_finite() || max[j] <= min[j]) {
            return Err(ElmError::invalid(format!("channel {j} has an empty range")));
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    #[inline]
    fn forward(&self, j: usize, v: f64) -> f64 {
        2.0 * (v - self.min[j]) / (self.max[j] - self.min[j]) - 1.0
    }

    #[inline]
    fn backward(&self, j: usize, v: f64) -> f64 {
        (v + 1.0) * 0.5 * (self.max[j] - self.min[j]) + self.min[j]
    }

    fn check_cols(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(ElmError::shape("normalizer channels", self.dim(), n));
        }
        Ok(())
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_cols(data.ncols())?;
        Ok(DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| self.forward(j, data[(i, j)])))
    }

    pub fn invert(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_cols(data.ncols())?;
        Ok(DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| self.backward(j, data[(i, j)])))
    }

    pub fn apply_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_cols(v.len())?;
        Ok(DVector::from_fn(v.len(), |j, _| self.forward(j, v[j])))
    }

    pub fn invert_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_cols(v.len())?;
        Ok(DVector::from_fn(v.len(), |j, _| self.backward(j, v[j])))
    }

    /// Channels `range` as their own normalizer.
    pub fn select(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > self.dim() {
            return Err(ElmError::invalid(format!("channel range {range:?} out of bounds")));
        }
        Ok(Self {
            min: self.min[range.clone()].to_vec(),
            max: self.max[range].to_vec(),
        })
    }
}

/// `sqrt((1/n) Σ_i Σ_j (a_ij − b_ij)²)` on values already in normalized units.
pub fn rmse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(ElmError::shape("rmse operands", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    if a.nrows() == 0 {
        return Err(ElmError::invalid("rmse of zero samples"));
    }
    Ok(((a - b).norm_squared() / a.nrows() as f64).sqrt())
}

/// Normalizes both operands with `normalizer` and sums squared errors over
/// output channels inside the per-sample mean.
pub fn normalized_rmse(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>, normalizer: &Normalizer) -> Result<f64> {
    if y_true.shape() != y_pred.shape() {
        return Err(ElmError::shape(
            "normalized_rmse operands",
            format!("{:?}", y_true.shape()),
            format!("{:?}", y_pred.shape()),
        ));
    }
    rmse(&normalizer.apply(y_true)?, &normalizer.apply(y_pred)?)
}

/// Confusion counts with `+1` as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_pairs<I: IntoIterator<Item = (Label, Label)>>(pairs: I) -> Self {
        let mut c = Self::default();
        for (truth, predicted) in pairs {
            c.record(truth, predicted);
        }
        c
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Positive, Label::Negative) => self.fn_ += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
            (Label::Negative, Label::Positive) => self.fp += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// `N⁺ = TP + FN`.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// `N⁻ = TN + FP`.
    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceMetrics {
    pub tpr: f64,
    pub tnr: f64,
    pub gm: f64,
    pub ta: f64,
}

pub fn imbalance_metrics(counts: &ConfusionCounts) -> Result<ImbalanceMetrics> {
    let (np, nn) = (counts.positives(), counts.negatives());
    if np == 0 || nn == 0 {
        return Err(ElmError::invalid(format!(
            "metrics undefined with an empty class (N+={np}, N-={nn})"
        )));
    }
    let tpr = counts.tp as f64 / np as f64;
    let tnr = counts.tn as f64 / nn as f64;
    Ok(ImbalanceMetrics {
        tpr,
        tnr,
        gm: (tpr * tnr).sqrt(),
        ta: 0.5 * (tpr + tnr),
    })
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Ordered flat `key=value` report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a metric rendered with 6 significant digits.
    pub fn metric(&mut self, key: &str, value: f64) -> &mut Self {
        self.entries.push((key.to_string(), format_significant(value, 6)));
        self
    }

    pub fn text(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn normalizer_midpoint_and_endpoints() {
        let n = Normalizer::fit(&dmatrix![0.0; 2.0]).unwrap();
        assert_eq!(n.min(), &[0.0]);
        assert_eq!(n.max(), &[2.0]);
        assert_eq!(n.apply(&dmatrix![1.0]).unwrap(), dmatrix![0.0]);
        assert_eq!(n.apply(&dmatrix![0.0; 2.0]).unwrap(), dmatrix![-1.0; 1.0]);
    }

    #[test]
    fn normalizer_constant_channel_named() {
        match Normalizer::fit(&dmatrix![1.0, 3.0; 2.0, 3.0]) {
            Err(ElmError::InvalidArgument(msg)) => assert!(msg.contains("channel 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn normalizer_does_not_clip() {
        let n = Normalizer::fit(&dmatrix![0.0; 1.0]).unwrap();
        assert_eq!(n.apply(&dmatrix![2.0]).unwrap(), dmatrix![3.0]);
    }

    #[test]
    fn rmse_examples() {
        let n = Normalizer::from_bounds(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let y = dmatrix![0.3, -0.2; 0.1, 0.9];
        assert_eq!(normalized_rmse(&y, &y, &n).unwrap(), 0.0);

        let n1 = Normalizer::from_bounds(vec![-1.0], vec![1.0]).unwrap();
        let r = normalized_rmse(&dmatrix![0.5], &dmatrix![-0.5], &n1).unwrap();
        assert!((r - 1.0).abs() < 1e-12);

        let r = normalized_rmse(&dmatrix![1.0, 0.0; 0.0, 1.0], &dmatrix![0.0, 0.0; 0.0, 0.0], &n).unwrap();
        assert!((r - 1.0).abs() < 1e-12);

        assert!(normalized_rmse(&dmatrix![1.0, 0.0], &dmatrix![1.0], &n).is_err());
    }

    #[test]
    fn imbalance_examples() {
        let perfect = ConfusionCounts { tp: 9, tn: 1, fp: 0, fn_: 0 };
        let m = imbalance_metrics(&perfect).unwrap();
        assert_eq!((m.tpr, m.tnr, m.gm, m.ta), (1.0, 1.0, 1.0, 1.0));

        let all_pos = ConfusionCounts { tp: 9, tn: 0, fp: 1, fn_: 0 };
        let m = imbalance_metrics(&all_pos).unwrap();
        assert_eq!((m.tpr, m.tnr, m.gm, m.ta), (1.0, 0.0, 0.0, 0.5));

        let c = ConfusionCounts { tp: 3, fn_: 1, tn: 8, fp: 2 };
        let m = imbalance_metrics(&c).unwrap();
        assert_eq!(m.tpr, 0.75);
        assert_eq!(m.tnr, 0.8);
        assert!((m.gm - 0.6f64.sqrt()).abs() < 1e-12);
        assert!((m.gm - 0.77460).abs() < 1e-5);
        assert!((m.ta - 0.775).abs() < 1e-12);

        assert!(imbalance_metrics(&ConfusionCounts { tp: 3, ..Default::default() }).is_err());
    }

    #[test]
    fn streaming_counts_merge() {
        let pairs = [
            (Label::Positive, Label::Positive),
            (Label::Negative, Label::Positive),
            (Label::Negative, Label::Negative),
            (Label::Positive, Label::Negative),
            (Label::Positive, Label::Positive),
        ];
        let whole = ConfusionCounts::from_pairs(pairs);
        let mut a = ConfusionCounts::from_pairs(pairs[..2].iter().copied());
        a.merge(&ConfusionCounts::from_pairs(pairs[2..].iter().copied()));
        assert_eq!(a, whole);
        assert_eq!(whole, ConfusionCounts { tp: 2, tn: 1, fp: 1, fn_: 1 });
    }

    #[test]
    fn significant_formatting() {
        assert_eq!(format_significant(0.0, 6), "0");
        assert_eq!(format_significant(1.0, 6), "1");
        assert_eq!(format_significant(0.7745966692, 6), "0.774597");
        assert_eq!(format_significant(123456.7, 6), "123457");
        assert_eq!(format_significant(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_significant(0.000012345678, 6), "1.23457e-05");
        assert_eq!(format_significant(-2.5, 6), "-2.5");
    }

    #[test]
    fn report_rendering() {
        let mut r = Report::new();
        r.metric("gm", 0.6f64.sqrt()).text("task", "envelope");
        assert_eq!(r.render(), "gm=0.774597\ntask=envelope\n");
        assert_eq!(r.get("task"), Some("envelope"));
    }
}
