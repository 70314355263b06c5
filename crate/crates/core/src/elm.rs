//! The extreme learning machine hypothesis class.
//!
//! A [`HiddenLayer`] is a frozen random map `φ(x) = ψ(W_rᵀ x + b_r)`; only the
//! output weights of an [`ElmModel`] are ever learned. Training in batch form
//! reduces to a regularized linear least-squares solve, see [`solve_ridge`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ElmError, Result};

/// Largest condition number accepted for the regularized normal matrix.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Hidden-layer activation function ψ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Sigmoid,
    Sine,
    RadialBasis,
    /// Identity activation. Only used for the linear least-squares baseline,
    /// where the random layer is replaced by an (affine) identity map.
    Linear,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            ActivationKind::Sine => z.sin(),
            ActivationKind::RadialBasis => (-z * z).exp(),
            ActivationKind::Linear => z,
        }
    }

    /// Closed range containing every output of the activation.
    pub fn range(self) -> (f64, f64) {
        match self {
            ActivationKind::Sigmoid => (0.0, 1.0),
            ActivationKind::Sine => (-1.0, 1.0),
            ActivationKind::RadialBasis => (0.0, 1.0),
            ActivationKind::Linear => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Sine => "sine",
            ActivationKind::RadialBasis => "rbf",
            ActivationKind::Linear => "linear",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = ElmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "sine" | "sin" => Ok(ActivationKind::Sine),
            "rbf" | "radial-basis" | "radial_basis" => Ok(ActivationKind::RadialBasis),
            "linear" | "identity" => Ok(ActivationKind::Linear),
            other => Err(ElmError::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// Frozen input layer `(W_r, b_r, ψ)`.
///
/// `weights` is `n × n_h`, so feature `j` is `ψ(W_r[:, j] · x + b_r[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
    activation: ActivationKind,
    seed: u64,
}

impl HiddenLayer {
    /// Draws `W_r` (row-major) and then `b_r` uniformly on `[-1, 1]` from a
    /// ChaCha8 stream seeded with `seed`.
    pub fn new(input_dim: usize, hidden_dim: usize, activation: ActivationKind, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(ElmError::invalid(format!(
                "hidden layer dimensions must be positive (input_dim={input_dim}, hidden_dim={hidden_dim})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..input_dim * hidden_dim)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let b: Vec<f64> = (0..hidden_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Ok(Self {
            weights: DMatrix::from_row_slice(input_dim, hidden_dim, &w),
            bias: DVector::from_vec(b),
            activation,
            seed,
        })
    }

    /// Builds a layer from explicit parameters. The seed is recorded as 0.
    pub fn from_parts(weights: DMatrix<f64>, bias: DVector<f64>, activation: ActivationKind) -> Result<Self> {
        Self::from_parts_with_seed(weights, bias, activation, 0)
    }

    pub fn from_parts_with_seed(
        weights: DMatrix<f64>,
        bias: DVector<f64>,
        activation: ActivationKind,
        seed: u64,
    ) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(ElmError::invalid("hidden layer weights must be non-empty"));
        }
        if bias.len() != weights.ncols() {
            return Err(ElmError::shape("hidden layer bias", weights.ncols(), bias.len()));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(ElmError::NonFinite("hidden layer parameters"));
        }
        Ok(Self {
            weights,
            bias,
            activation,
            seed,
        })
    }

    /// `φ(x) = x`.
    pub fn identity(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(ElmError::invalid("identity layer needs input_dim >= 1"));
        }
        Self::from_parts(
            DMatrix::identity(input_dim, input_dim),
            DVector::zeros(input_dim),
            ActivationKind::Linear,
        )
    }

    /// `φ(x) = [x; 1]`, the feature map of an affine least-squares model.
    pub fn affine(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(ElmError::invalid("affine layer needs input_dim >= 1"));
        }
        let weights = DMatrix::identity(input_dim, input_dim + 1);
        let mut bias = DVector::zeros(input_dim + 1);
        bias[input_dim] = 1.0;
        Self::from_parts(weights, bias, ActivationKind::Linear)
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    /// Feature vector `φ(x)` of length `n_h`.
    pub fn map(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(ElmError::shape("hidden_map input", self.input_dim(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ElmError::NonFinite("hidden_map input"));
        }
        let mut z = self.weights.tr_mul(x);
        z += &self.bias;
        let act = self.activation;
        z.apply(|v| *v = act.apply(*v));
        Ok(z)
    }

    /// Hidden output matrix `H` (`N × n_h`), row `i` is `φ(x_i)ᵀ`.
    pub fn feature_matrix(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(ElmError::shape("feature_matrix inputs", self.input_dim(), inputs.ncols()));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(ElmError::NonFinite("feature_matrix inputs"));
        }
        let mut h = inputs * &self.weights;
        for mut row in h.row_iter_mut() {
            row += self.bias.transpose();
        }
        let act = self.activation;
        h.apply(|v| *v = act.apply(*v));
        Ok(h)
    }
}

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    /// Sign rule with `sgn(0) = +1`.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn from_i64(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(ElmError::invalid(format!("label must be +1 or -1, got {other}"))),
        }
    }
}

/// Training set: `N × n` inputs, `N × y_d` targets, optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    labels: Option<Vec<Label>>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, labels: Option<Vec<Label>>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(ElmError::invalid("dataset must contain at least one row"));
        }
        if inputs.nrows() != targets.nrows() {
            return Err(ElmError::shape("dataset targets rows", inputs.nrows(), targets.nrows()));
        }
        if let Some(l) = &labels {
            if l.len() != inputs.nrows() {
                return Err(ElmError::shape("dataset labels", inputs.nrows(), l.len()));
            }
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(ElmError::NonFinite("dataset"));
        }
        Ok(Self {
            inputs,
            targets,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    /// Rows `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(ElmError::invalid(format!(
                "row range {start}..{end} invalid for dataset of {} rows",
                self.len()
            )));
        }
        Dataset::new(
            self.inputs.rows(start, end - start).into_owned(),
            self.targets.rows(start, end - start).into_owned(),
            self.labels.as_ref().map(|l| l[start..end].to_vec()),
        )
    }
}

/// Per-sample weighting for imbalanced classification: majority rows weigh 1,
/// minority rows weigh `r · f_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub imbalance_ratio: f64,
    pub scale_factor: f64,
    pub minority: Label,
}

impl WeightSpec {
    pub fn new(imbalance_ratio: f64, scale_factor: f64, minority: Label) -> Result<Self> {
        if !(imbalance_ratio.is_finite() && imbalance_ratio >= 0.0) {
            return Err(ElmError::invalid("imbalance ratio must be finite and nonnegative"));
        }
        if !(scale_factor.is_finite() && scale_factor > 0.0) {
            return Err(ElmError::invalid("scale factor must be positive"));
        }
        if imbalance_ratio * scale_factor <= 0.0 {
            return Err(ElmError::invalid("minority weight r * f_s must be positive"));
        }
        Ok(Self {
            imbalance_ratio,
            scale_factor,
            minority,
        })
    }

    /// Uses `r = #majority / #minority` counted over `labels`.
    pub fn from_labels(labels: &[Label], scale_factor: f64, minority: Label) -> Result<Self> {
        let n_min = labels.iter().filter(|&&l| l == minority).count();
        let n_maj = labels.len() - n_min;
        if n_min == 0 || n_maj == 0 {
            return Err(ElmError::invalid(
                "imbalance ratio needs at least one sample of each class",
            ));
        }
        Self::new(n_maj as f64 / n_min as f64, scale_factor, minority)
    }

    pub fn weight(&self, label: Label) -> f64 {
        if label == self.minority {
            self.imbalance_ratio * self.scale_factor
        } else {
            1.0
        }
    }
}

/// Hidden layer plus trained output weights `W` (`n_h × y_d`).
#[derive(Debug, Clone, PartialEq)]
pub struct ElmModel {
    hidden: HiddenLayer,
    output_weights: DMatrix<f64>,
}

impl ElmModel {
    pub fn new(hidden: HiddenLayer, output_weights: DMatrix<f64>) -> Result<Self> {
        if output_weights.nrows() != hidden.hidden_dim() {
            return Err(ElmError::shape(
                "output weights rows",
                hidden.hidden_dim(),
                output_weights.nrows(),
            ));
        }
        if output_weights.ncols() == 0 {
            return Err(ElmError::invalid("output dimension must be positive"));
        }
        if output_weights.iter().any(|v| !v.is_finite()) {
            return Err(ElmError::NonFinite("output weights"));
        }
        Ok(Self {
            hidden,
            output_weights,
        })
    }

    pub fn zeros(hidden: HiddenLayer, output_dim: usize) -> Result<Self> {
        let w = DMatrix::zeros(hidden.hidden_dim(), output_dim);
        Self::new(hidden, w)
    }

    pub fn hidden(&self) -> &HiddenLayer {
        &self.hidden
    }

    pub fn output_weights(&self) -> &DMatrix<f64> {
        &self.output_weights
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output_weights.ncols()
    }

    pub fn weight_norm(&self) -> f64 {
        self.output_weights.norm()
    }

    /// Replaces `W`; rejects a wrong shape or non-finite entries.
    pub fn set_output_weights(&mut self, w: DMatrix<f64>) -> Result<()> {
        if w.shape() != self.output_weights.shape() {
            return Err(ElmError::shape(
                "output weights",
                format!("{:?}", self.output_weights.shape()),
                format!("{:?}", w.shape()),
            ));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(ElmError::NonFinite("output weights"));
        }
        self.output_weights = w;
        Ok(())
    }

    pub(crate) fn weights_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.output_weights
    }

    pub fn features(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.hidden.map(x)
    }

    /// `Wᵀ φ` for a precomputed feature vector.
    pub fn predict_features(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        if phi.len() != self.hidden_dim() {
            return Err(ElmError::shape("feature vector", self.hidden_dim(), phi.len()));
        }
        Ok(self.output_weights.tr_mul(phi))
    }

    /// Regression output `Wᵀ φ(x)`.
    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let phi = self.features(x)?;
        let y = self.output_weights.tr_mul(&phi);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ElmError::NonFinite("prediction"));
        }
        Ok(y)
    }

    /// Raw scalar score for a single-output model.
    pub fn score(&self, x: &DVector<f64>) -> Result<f64> {
        if self.output_dim() != 1 {
            return Err(ElmError::invalid(format!(
                "classification needs output_dim 1, model has {}",
                self.output_dim()
            )));
        }
        Ok(self.predict(x)?[0])
    }

    /// `sgn(Wᵀ φ(x))` with ties going to the positive class.
    pub fn predict_class(&self, x: &DVector<f64>) -> Result<Label> {
        self.score(x).map(Label::from_score)
    }
}

/// Solves `(Hᵀ Γ H + λ I) W = Hᵀ Γ Y` by Cholesky, with `Γ = diag(weights)`
/// or the identity when `weights` is `None`.
pub fn solve_ridge(
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ridge: f64,
    weights: Option<&[f64]>,
) -> Result<DMatrix<f64>> {
    if h.nrows() == 0 {
        return Err(ElmError::invalid("empty design matrix"));
    }
    if h.nrows() != y.nrows() {
        return Err(ElmError::shape("ridge targets rows", h.nrows(), y.nrows()));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(ElmError::invalid(format!("ridge must be finite and nonnegative, got {ridge}")));
    }
    let (normal, rhs) = match weights {
        None => (h.tr_mul(h), h.tr_mul(y)),
        Some(w) => {
            if w.len() != h.nrows() {
                return Err(ElmError::shape("sample weights", h.nrows(), w.len()));
            }
            if w.iter().any(|&g| !(g.is_finite() && g > 0.0)) {
                return Err(ElmError::invalid("sample weights must be positive"));
            }
            let mut gh = h.clone();
            for (mut row, &g) in gh.row_iter_mut().zip(w) {
                row *= g;
            }
            (h.tr_mul(&gh), gh.tr_mul(y))
        }
    };
    let mut a = normal;
    for i in 0..a.nrows() {
        a[(i, i)] += ridge;
    }
    let condition = condition_estimate(&a);
    if condition.is_nan() || condition > CONDITION_LIMIT {
        return Err(ElmError::IllConditioned {
            condition,
            threshold: CONDITION_LIMIT,
        });
    }
    let chol = a.cholesky().ok_or(ElmError::IllConditioned {
        condition,
        threshold: CONDITION_LIMIT,
    })?;
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ElmError::NonFinite("ridge solution"));
    }
    Ok(w)
}

/// Spectral condition number of a symmetric matrix; infinite when it is not
/// positive definite.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Batch ELM: `W = (HᵀH + λI)⁻¹ HᵀY`.
pub fn batch_train(dataset: &Dataset, layer: &HiddenLayer, ridge: f64) -> Result<ElmModel> {
    let h = layer.feature_matrix(dataset.inputs())?;
    let w = solve_ridge(&h, dataset.targets(), ridge, None)?;
    ElmModel::new(layer.clone(), w)
}

/// Cost-sensitive batch ELM: `W = (HᵀΓH + λI)⁻¹ HᵀΓY`.
pub fn batch_train_weighted(
    dataset: &Dataset,
    layer: &HiddenLayer,
    ridge: f64,
    spec: &WeightSpec,
) -> Result<ElmModel> {
    let labels = dataset
        .labels()
        .ok_or_else(|| ElmError::invalid("weighted training requires labels"))?;
    let weights: Vec<f64> = labels.iter().map(|&l| spec.weight(l)).collect();
    let h = layer.feature_matrix(dataset.inputs())?;
    let w = solve_ridge(&h, dataset.targets(), ridge, Some(&weights))?;
    ElmModel::new(layer.clone(), w)
}
