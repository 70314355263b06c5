//! Sequential trainers for the ELM output layer.
//!
//! [`OselmState`] is recursive least squares over the output weights with a
//! propagated covariance `M`. [`SgelmState`] is the per-sample gradient law
//! `W ← W + Γ φ e`, gated at construction by [`check_stability`]. The
//! Lyapunov helpers ([`lyapunov_value`], [`StabilityMonitor`]) instrument the
//! gradient learner for tests and reports.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::elm::{solve_ridge, Dataset, ElmModel, HiddenLayer, Label};
use crate::error::{ElmError, Result};

/// Tolerance used when checking that a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Common surface of the two streaming trainers.
pub trait OnlineTrainer {
    /// Consumes one sample and returns the a-priori prediction error
    /// `y − Wᵀφ` (computed before the update).
    fn observe(&mut self, x: &DVector<f64>, y: &DVector<f64>, label: Option<Label>) -> Result<DVector<f64>>;

    fn model(&self) -> &ElmModel;

    fn samples_seen(&self) -> u64;
}

fn ensure_finite(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ElmError::NonFinite(what))
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    (0..n).all(|i| (i + 1..n).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= SYMMETRY_TOL * scale))
}

// ---------------------------------------------------------------------------
// OS-ELM
// ---------------------------------------------------------------------------

/// Recursive least-squares state.
#[derive(Debug, Clone, PartialEq)]
pub struct OselmState {
    model: ElmModel,
    covariance: DMatrix<f64>,
    samples_seen: u64,
}

impl OselmState {
    /// Initialization step on the first `N₀` rows: `K₀ = H₀ᵀH₀ + λI`,
    /// `W₀ = K₀⁻¹H₀ᵀY₀`, `M₀ = K₀⁻¹`.
    pub fn init(chunk: &Dataset, layer: &HiddenLayer, ridge: f64) -> Result<Self> {
        let h0 = layer.feature_matrix(chunk.inputs())?;
        Self::init_from_features(layer.clone(), &h0, chunk.targets(), ridge)
    }

    /// Same as [`OselmState::init`] but from a precomputed `H₀`.
    pub fn init_from_features(
        layer: HiddenLayer,
        h0: &DMatrix<f64>,
        y0: &DMatrix<f64>,
        ridge: f64,
    ) -> Result<Self> {
        if h0.nrows() == 0 {
            return Err(ElmError::invalid("OS-ELM initialization chunk is empty"));
        }
        if h0.ncols() != layer.hidden_dim() {
            return Err(ElmError::shape("initial feature matrix columns", layer.hidden_dim(), h0.ncols()));
        }
        let w0 = solve_ridge(h0, y0, ridge, None)?;
        let mut k0 = h0.tr_mul(h0);
        for i in 0..k0.nrows() {
            k0[(i, i)] += ridge;
        }
        let mut covariance = k0
            .cholesky()
            .ok_or(ElmError::IllConditioned {
                condition: f64::INFINITY,
                threshold: crate::elm::CONDITION_LIMIT,
            })?
            .inverse();
        symmetrize(&mut covariance);
        Ok(Self {
            model: ElmModel::new(layer, w0)?,
            covariance,
            samples_seen: h0.nrows() as u64,
        })
    }

    /// Resumes from explicit parts (e.g. a checkpoint).
    pub fn from_parts(model: ElmModel, covariance: DMatrix<f64>, samples_seen: u64) -> Result<Self> {
        let n = model.hidden_dim();
        if covariance.shape() != (n, n) {
            return Err(ElmError::shape("covariance", format!("{n}x{n}"), format!("{:?}", covariance.shape())));
        }
        if !is_symmetric(&covariance) {
            return Err(ElmError::invalid("covariance must be symmetric"));
        }
        Ok(Self {
            model,
            covariance,
            samples_seen,
        })
    }

    pub fn model(&self) -> &ElmModel {
        &self.model
    }

    pub fn into_model(self) -> ElmModel {
        self.model
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn update(&mut self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_finite(x, "OS-ELM input")?;
        ensure_finite(y, "OS-ELM target")?;
        let phi = self.model.features(x)?;
        self.update_features(&phi, y)
    }

    /// One-row recursion with `H = φᵀ`:
    /// `M' = M − M φ (1 + φᵀ M φ)⁻¹ φᵀ M` and `W' = W + M' φ (yᵀ − φᵀ W)`.
    ///
    /// `M' φ` equals `M φ / (1 + φᵀ M φ)`, which is what gets applied to `W`.
    /// The state is left untouched if anything non-finite comes out.
    pub fn update_features(&mut self, phi: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let nh = self.model.hidden_dim();
        if phi.len() != nh {
            return Err(ElmError::shape("OS-ELM feature vector", nh, phi.len()));
        }
        if y.len() != self.model.output_dim() {
            return Err(ElmError::shape("OS-ELM target", self.model.output_dim(), y.len()));
        }
        ensure_finite(phi, "OS-ELM features")?;
        ensure_finite(y, "OS-ELM target")?;

        let m_phi = &self.covariance * phi;
        let denom = 1.0 + phi.dot(&m_phi);
        let mut covariance = self.covariance.clone();
        covariance.ger(-1.0 / denom, &m_phi, &m_phi, 1.0);
        symmetrize(&mut covariance);

        let error = y - self.model.output_weights().tr_mul(phi);
        let gain = m_phi / denom;
        let mut w = self.model.output_weights().clone();
        w.ger(1.0, &gain, &error, 1.0);

        if covariance.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(ElmError::NonFinite("OS-ELM update"));
        }
        self.covariance = covariance;
        self.model.set_output_weights(w)?;
        self.samples_seen += 1;
        Ok(error)
    }
}

impl OnlineTrainer for OselmState {
    fn observe(&mut self, x: &DVector<f64>, y: &DVector<f64>, _label: Option<Label>) -> Result<DVector<f64>> {
        self.update(x, y)
    }

    fn model(&self) -> &ElmModel {
        &self.model
    }

    fn samples_seen(&self) -> u64 {
        self.samples_seen
    }
}

// ---------------------------------------------------------------------------
// Stability classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    /// `0 < λ_max < 1`: bounded parameters and square-summable error.
    Convergent,
    /// `1 ≤ λ_max < 2`: bounded parameters only.
    Bounded,
    /// `λ_max ≥ 2` or `λ_max ≤ 0`.
    Violating,
}

impl StabilityClass {
    pub fn from_max_eigenvalue(max_eigenvalue: f64) -> Self {
        if max_eigenvalue > 0.0 && max_eigenvalue < 1.0 {
            StabilityClass::Convergent
        } else if (1.0..2.0).contains(&max_eigenvalue) {
            StabilityClass::Bounded
        } else {
            StabilityClass::Violating
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StabilityClass::Convergent => "convergent",
            StabilityClass::Bounded => "bounded",
            StabilityClass::Violating => "violating",
        }
    }
}

impl fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub class: StabilityClass,
    pub max_eigenvalue: f64,
}

impl StabilityVerdict {
    fn from_max(max_eigenvalue: f64) -> Self {
        Self {
            class: StabilityClass::from_max_eigenvalue(max_eigenvalue),
            max_eigenvalue,
        }
    }
}

/// Classifies a symmetric step matrix by its largest eigenvalue.
pub fn check_stability(step_matrix: &DMatrix<f64>) -> Result<StabilityVerdict> {
    if !step_matrix.is_square() || step_matrix.nrows() == 0 {
        return Err(ElmError::invalid("step matrix must be square and non-empty"));
    }
    if step_matrix.iter().any(|v| !v.is_finite()) {
        return Err(ElmError::NonFinite("step matrix"));
    }
    if !is_symmetric(step_matrix) {
        return Err(ElmError::invalid("step matrix must be symmetric"));
    }
    let eig = SymmetricEigen::new(step_matrix.clone());
    Ok(StabilityVerdict::from_max(eig.eigenvalues.max()))
}

/// Gain matrix `Γ_SG`, either `γ·I` or a full symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum StepMatrix {
    Scalar(f64),
    Full(DMatrix<f64>),
}

impl StepMatrix {
    pub fn verdict(&self) -> Result<StabilityVerdict> {
        match self {
            StepMatrix::Scalar(g) if g.is_finite() => Ok(StabilityVerdict::from_max(*g)),
            StepMatrix::Scalar(_) => Err(ElmError::NonFinite("step size")),
            StepMatrix::Full(m) => check_stability(m),
        }
    }

    fn min_eigenvalue(&self) -> f64 {
        match self {
            StepMatrix::Scalar(g) => *g,
            StepMatrix::Full(m) => SymmetricEigen::new(m.clone()).eigenvalues.min(),
        }
    }

    /// Dense `n × n` form.
    pub fn to_matrix(&self, n: usize) -> DMatrix<f64> {
        match self {
            StepMatrix::Scalar(g) => DMatrix::identity(n, n) * *g,
            StepMatrix::Full(m) => m.clone(),
        }
    }

    /// `Γ v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            StepMatrix::Scalar(g) => v * *g,
            StepMatrix::Full(m) => m * v,
        }
    }

    /// `φᵀ Γ φ`, the per-sample gain whose bound `< 2` makes V non-increasing.
    pub fn quadratic_form(&self, phi: &DVector<f64>) -> f64 {
        match self {
            StepMatrix::Scalar(g) => g * phi.norm_squared(),
            StepMatrix::Full(m) => phi.dot(&(m * phi)),
        }
    }
}

// ---------------------------------------------------------------------------
// SG-ELM
// ---------------------------------------------------------------------------

/// Construction options for [`SgelmState`].
#[derive(Debug, Clone, PartialEq)]
pub struct SgelmConfig {
    pub step: StepMatrix,
    /// `f_s` in the minority weight `r · f_s`.
    pub scale_factor: f64,
    pub minority: Label,
    /// Accept a violating-class step matrix (negative controls only).
    pub allow_violating: bool,
}

impl SgelmConfig {
    pub fn scalar(gamma: f64) -> Self {
        Self {
            step: StepMatrix::Scalar(gamma),
            scale_factor: 1.0,
            minority: Label::Negative,
            allow_violating: false,
        }
    }
}

/// Stochastic-gradient learner state.
#[derive(Debug, Clone, PartialEq)]
pub struct SgelmState {
    model: ElmModel,
    step: StepMatrix,
    verdict: StabilityVerdict,
    scale_factor: f64,
    minority: Label,
    majority_count: u64,
    minority_count: u64,
    samples_seen: u64,
}

impl SgelmState {
    pub fn new(model: ElmModel, config: SgelmConfig) -> Result<Self> {
        if !(config.scale_factor.is_finite() && config.scale_factor > 0.0) {
            return Err(ElmError::invalid(format!(
                "scale factor must be positive, got {}",
                config.scale_factor
            )));
        }
        if let StepMatrix::Full(m) = &config.step {
            let n = model.hidden_dim();
            if m.shape() != (n, n) {
                return Err(ElmError::shape("step matrix", format!("{n}x{n}"), format!("{:?}", m.shape())));
            }
        }
        let verdict = config.step.verdict()?;
        let min_eig = config.step.min_eigenvalue();
        if min_eig <= 0.0 {
            return Err(ElmError::NotPositiveDefinite(min_eig));
        }
        if verdict.class == StabilityClass::Violating && !config.allow_violating {
            return Err(ElmError::Unstable(format!(
                "largest eigenvalue {} is outside (0, 2)",
                verdict.max_eigenvalue
            )));
        }
        Ok(Self {
            model,
            step: config.step,
            verdict,
            scale_factor: config.scale_factor,
            minority: config.minority,
            majority_count: 0,
            minority_count: 0,
            samples_seen: 0,
        })
    }

    /// Seeds the running class counters (e.g. with the initialization chunk).
    pub fn with_counts(mut self, majority: u64, minority: u64) -> Self {
        self.majority_count = majority;
        self.minority_count = minority;
        self
    }

    pub fn with_samples_seen(mut self, n: u64) -> Self {
        self.samples_seen = n;
        self
    }

    pub fn model(&self) -> &ElmModel {
        &self.model
    }

    pub fn into_model(self) -> ElmModel {
        self.model
    }

    pub fn step(&self) -> &StepMatrix {
        &self.step
    }

    pub fn verdict(&self) -> StabilityVerdict {
        self.verdict
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    pub fn minority(&self) -> Label {
        self.minority
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.majority_count, self.minority_count)
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    /// Running `r = #majority / #minority`; `#majority` while no minority
    /// sample has been seen.
    pub fn imbalance_ratio(&self) -> f64 {
        self.majority_count as f64 / self.minority_count.max(1) as f64
    }

    pub fn update(&mut self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_finite(x, "SG-ELM input")?;
        ensure_finite(y, "SG-ELM target")?;
        let phi = self.model.features(x)?;
        self.apply_gradient(&phi, y, 1.0)
    }

    /// `e = y − Wᵀφ`, then `W ← W + Γ φ e`.
    pub fn update_features(&mut self, phi: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_finite(phi, "SG-ELM features")?;
        ensure_finite(y, "SG-ELM target")?;
        self.apply_gradient(phi, y, 1.0)
    }

    pub fn update_weighted(&mut self, x: &DVector<f64>, y: &DVector<f64>, label: Label) -> Result<DVector<f64>> {
        ensure_finite(x, "SG-ELM input")?;
        ensure_finite(y, "SG-ELM target")?;
        let phi = self.model.features(x)?;
        self.update_weighted_features(&phi, y, label)
    }

    /// Cost-sensitive variant: minority samples move `W` by `r · f_s` times
    /// the plain step. Counters absorb the arriving label before `r` is read.
    pub fn update_weighted_features(
        &mut self,
        phi: &DVector<f64>,
        y: &DVector<f64>,
        label: Label,
    ) -> Result<DVector<f64>> {
        ensure_finite(phi, "SG-ELM features")?;
        ensure_finite(y, "SG-ELM target")?;
        let (maj, min) = (self.majority_count, self.minority_count);
        let multiplier = if label == self.minority {
            self.minority_count += 1;
            self.imbalance_ratio() * self.scale_factor
        } else {
            self.majority_count += 1;
            1.0
        };
        let out = self.apply_gradient(phi, y, multiplier);
        if out.is_err() {
            self.majority_count = maj;
            self.minority_count = min;
        }
        out
    }

    fn apply_gradient(&mut self, phi: &DVector<f64>, y: &DVector<f64>, multiplier: f64) -> Result<DVector<f64>> {
        let nh = self.model.hidden_dim();
        if phi.len() != nh {
            return Err(ElmError::shape("SG-ELM feature vector", nh, phi.len()));
        }
        if y.len() != self.model.output_dim() {
            return Err(ElmError::shape("SG-ELM target", self.model.output_dim(), y.len()));
        }
        let error = y - self.model.output_weights().tr_mul(phi);
        let direction = self.step.apply(phi);
        let mut w = self.model.output_weights().clone();
        w.ger(multiplier, &direction, &error, 1.0);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(ElmError::NonFinite("SG-ELM update"));
        }
        *self.model.weights_mut() = w;
        self.samples_seen += 1;
        Ok(error)
    }
}

impl OnlineTrainer for SgelmState {
    /// Uses the weighted law whenever a label is supplied.
    fn observe(&mut self, x: &DVector<f64>, y: &DVector<f64>, label: Option<Label>) -> Result<DVector<f64>> {
        match label {
            Some(l) => self.update_weighted(x, y, l),
            None => self.update(x, y),
        }
    }

    fn model(&self) -> &ElmModel {
        &self.model
    }

    fn samples_seen(&self) -> u64 {
        self.samples_seen
    }
}

// ---------------------------------------------------------------------------
// Lyapunov instrumentation
// ---------------------------------------------------------------------------

/// `V(W̃) = tr(W̃ᵀ Γ⁻¹ W̃)` with `W̃ = W* − W`.
pub fn lyapunov_value(w_est: &DMatrix<f64>, w_star: &DMatrix<f64>, step_matrix: &DMatrix<f64>) -> Result<f64> {
    if w_est.shape() != w_star.shape() {
        return Err(ElmError::shape(
            "lyapunov parameters",
            format!("{:?}", w_star.shape()),
            format!("{:?}", w_est.shape()),
        ));
    }
    if step_matrix.shape() != (w_est.nrows(), w_est.nrows()) {
        return Err(ElmError::shape(
            "lyapunov step matrix",
            format!("{0}x{0}", w_est.nrows()),
            format!("{:?}", step_matrix.shape()),
        ));
    }
    let err = w_star - w_est;
    let chol = step_matrix
        .clone()
        .cholesky()
        .ok_or_else(|| ElmError::invalid("step matrix is singular or not positive definite"))?;
    let scaled = chol.solve(&err);
    Ok(err.dot(&scaled).max(0.0))
}

/// Scalar-step shortcut: `‖W* − W‖²_F / γ`.
fn lyapunov_scalar(w_est: &DMatrix<f64>, w_star: &DMatrix<f64>, gamma: f64) -> f64 {
    (w_star - w_est).norm_squared() / gamma
}

/// Per-step trace of a gradient learner: `‖e‖`, `‖W‖_F` and, when a teacher
/// `W*` is known, the Lyapunov value.
#[derive(Debug, Clone)]
pub struct StabilityMonitor {
    w_star: Option<DMatrix<f64>>,
    step: StepMatrix,
    lyapunov: Vec<f64>,
    error_norms: Vec<f64>,
    weight_norms: Vec<f64>,
}

impl StabilityMonitor {
    /// Without a teacher only error and weight norms are tracked.
    pub fn new(step: StepMatrix, w_star: Option<DMatrix<f64>>) -> Self {
        Self {
            w_star,
            step,
            lyapunov: Vec::new(),
            error_norms: Vec::new(),
            weight_norms: Vec::new(),
        }
    }

    fn value(&self, w: &DMatrix<f64>) -> Result<Option<f64>> {
        match &self.w_star {
            None => Ok(None),
            Some(ws) => {
                if ws.shape() != w.shape() {
                    return Err(ElmError::shape(
                        "monitor teacher",
                        format!("{:?}", ws.shape()),
                        format!("{:?}", w.shape()),
                    ));
                }
                Ok(Some(match &self.step {
                    StepMatrix::Scalar(g) => lyapunov_scalar(w, ws, *g),
                    StepMatrix::Full(m) => lyapunov_value(w, ws, m)?,
                }))
            }
        }
    }

    /// Records the starting point (before any update).
    pub fn start(&mut self, w: &DMatrix<f64>) -> Result<()> {
        if let Some(v) = self.value(w)? {
            self.lyapunov.push(v);
        }
        self.weight_norms.push(w.norm());
        Ok(())
    }

    /// Records the state after an update that produced `error`.
    pub fn record(&mut self, w: &DMatrix<f64>, error: &DVector<f64>) -> Result<()> {
        if let Some(v) = self.value(w)? {
            self.lyapunov.push(v);
        }
        self.error_norms.push(error.norm());
        self.weight_norms.push(w.norm());
        Ok(())
    }

    pub fn lyapunov(&self) -> &[f64] {
        &self.lyapunov
    }

    pub fn error_norms(&self) -> &[f64] {
        &self.error_norms
    }

    pub fn weight_norms(&self) -> &[f64] {
        &self.weight_norms
    }

    /// Number of steps with `V_{i+1} > V_i + tol · V_0`.
    pub fn lyapunov_increases(&self, tol: f64) -> usize {
        let Some(&v0) = self.lyapunov.first() else {
            return 0;
        };
        self.lyapunov
            .windows(2)
            .filter(|w| w[1] > w[0] + tol * v0)
            .count()
    }

    pub fn max_weight_norm(&self) -> f64 {
        self.weight_norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.lyapunov
            .iter()
            .chain(&self.error_norms)
            .chain(&self.weight_norms)
            .all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elm::ActivationKind;
    use nalgebra::{dmatrix, dvector};

    fn identity_model(n: usize, w: DMatrix<f64>) -> ElmModel {
        ElmModel::new(HiddenLayer::identity(n).unwrap(), w).unwrap()
    }

    #[test]
    fn oselm_init_identity_chunk() {
        let layer = HiddenLayer::identity(2).unwrap();
        let h0 = DMatrix::identity(2, 2);
        let y0 = dmatrix![1.0; 1.0];
        let s = OselmState::init_from_features(layer.clone(), &h0, &y0, 0.0).unwrap();
        assert_eq!(s.model().output_weights(), &dmatrix![1.0; 1.0]);
        assert_eq!(s.covariance(), &DMatrix::identity(2, 2));

        let s = OselmState::init_from_features(layer.clone(), &h0, &y0, 1.0).unwrap();
        assert!((s.model().output_weights() - dmatrix![0.5; 0.5]).amax() < 1e-15);
        assert!((s.covariance() - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);

        let empty = DMatrix::<f64>::zeros(0, 2);
        assert!(matches!(
            OselmState::init_from_features(layer, &empty, &DMatrix::zeros(0, 1), 1.0),
            Err(ElmError::InvalidArgument(_))
        ));
    }

    #[test]
    fn oselm_scalar_update() {
        let model = identity_model(1, dmatrix![0.0]);
        let mut s = OselmState::from_parts(model, dmatrix![1.0], 1).unwrap();
        s.update_features(&dvector![1.0], &dvector![1.0]).unwrap();
        assert!((s.covariance()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((s.model().output_weights()[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(s.samples_seen(), 2);
    }

    #[test]
    fn oselm_zero_row_is_noop() {
        let model = identity_model(2, dmatrix![0.3; -0.1]);
        let m = dmatrix![2.0, 0.1; 0.1, 1.0];
        let mut s = OselmState::from_parts(model, m.clone(), 0).unwrap();
        s.update_features(&dvector![0.0, 0.0], &dvector![5.0]).unwrap();
        assert_eq!(s.covariance(), &m);
        assert_eq!(s.model().output_weights(), &dmatrix![0.3; -0.1]);
    }

    #[test]
    fn oselm_rejects_non_finite() {
        let model = identity_model(2, dmatrix![0.0; 0.0]);
        let mut s = OselmState::from_parts(model, DMatrix::identity(2, 2), 0).unwrap();
        let before = s.clone();
        assert!(matches!(
            s.update(&dvector![f64::NAN, 0.0], &dvector![1.0]),
            Err(ElmError::NonFinite(_))
        ));
        assert!(s.update(&dvector![1.0, 0.0], &dvector![f64::INFINITY]).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn sgelm_zero_error_no_change() {
        let model = identity_model(2, dmatrix![1.0; 2.0]);
        let mut s = SgelmState::new(model, SgelmConfig::scalar(0.5)).unwrap();
        let e = s.update_features(&dvector![1.0, 1.0], &dvector![3.0]).unwrap();
        assert_eq!(e, dvector![0.0]);
        assert_eq!(s.model().output_weights(), &dmatrix![1.0; 2.0]);
    }

    #[test]
    fn sgelm_single_and_double_step() {
        let model = identity_model(2, dmatrix![0.0; 0.0]);
        let mut s = SgelmState::new(model, SgelmConfig::scalar(0.5)).unwrap();
        s.update_features(&dvector![1.0, 0.0], &dvector![1.0]).unwrap();
        assert_eq!(s.model().output_weights(), &dmatrix![0.5; 0.0]);
        s.update_features(&dvector![1.0, 0.0], &dvector![1.0]).unwrap();
        assert_eq!(s.model().output_weights(), &dmatrix![0.75; 0.0]);
    }

    #[test]
    fn sgelm_rejects_non_finite() {
        let model = identity_model(2, dmatrix![0.0; 0.0]);
        let mut s = SgelmState::new(model, SgelmConfig::scalar(0.5)).unwrap().with_counts(3, 1);
        let before = s.clone();
        assert!(s.update(&dvector![1.0, f64::NAN], &dvector![1.0]).is_err());
        assert!(s
            .update_weighted(&dvector![1.0, 0.0], &dvector![f64::NAN], Label::Negative)
            .is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn weighted_majority_matches_plain() {
        let model = identity_model(2, dmatrix![0.1; -0.2]);
        let mut a = SgelmState::new(model.clone(), SgelmConfig::scalar(0.3)).unwrap().with_counts(2, 1);
        let mut b = a.clone();
        a.update_weighted_features(&dvector![0.4, 0.9], &dvector![1.0], Label::Positive)
            .unwrap();
        b.update_features(&dvector![0.4, 0.9], &dvector![1.0]).unwrap();
        assert_eq!(a.model().output_weights(), b.model().output_weights());
        assert_eq!(a.counts(), (3, 1));
    }

    #[test]
    fn weighted_minority_uses_running_ratio() {
        let model = identity_model(2, dmatrix![0.0; 0.0]);
        let mut s = SgelmState::new(model, SgelmConfig::scalar(0.5)).unwrap().with_counts(4, 0);
        s.update_weighted_features(&dvector![1.0, 0.0], &dvector![1.0], Label::Negative)
            .unwrap();
        assert_eq!(s.counts(), (4, 1));
        assert_eq!(s.imbalance_ratio(), 4.0);
        assert_eq!(s.model().output_weights(), &dmatrix![2.0; 0.0]);
    }

    #[test]
    fn scale_factor_must_be_positive() {
        let model = identity_model(2, dmatrix![0.0; 0.0]);
        let mut cfg = SgelmConfig::scalar(0.5);
        cfg.scale_factor = 0.0;
        assert!(matches!(SgelmState::new(model, cfg), Err(ElmError::InvalidArgument(_))));
    }

    #[test]
    fn stability_classes() {
        for (g, class) in [
            (0.5, StabilityClass::Convergent),
            (1.5, StabilityClass::Bounded),
            (2.5, StabilityClass::Violating),
        ] {
            let v = check_stability(&(DMatrix::identity(3, 3) * g)).unwrap();
            assert_eq!(v.class, class);
            assert!((v.max_eigenvalue - g).abs() < 1e-12);
        }
        assert_eq!(StabilityClass::from_max_eigenvalue(1.0), StabilityClass::Bounded);
        assert_eq!(StabilityClass::from_max_eigenvalue(2.0), StabilityClass::Violating);
        assert_eq!(StabilityClass::from_max_eigenvalue(0.0), StabilityClass::Violating);
        assert!(check_stability(&dmatrix![1.0, 0.5; 0.0, 1.0]).is_err());
    }

    #[test]
    fn violating_step_needs_override() {
        let model = identity_model(2, dmatrix![0.0; 0.0]);
        assert!(matches!(
            SgelmState::new(model.clone(), SgelmConfig::scalar(2.5)),
            Err(ElmError::Unstable(_))
        ));
        let mut cfg = SgelmConfig::scalar(2.5);
        cfg.allow_violating = true;
        let s = SgelmState::new(model.clone(), cfg).unwrap();
        assert_eq!(s.verdict().class, StabilityClass::Violating);

        let mut cfg = SgelmConfig::scalar(-0.5);
        cfg.allow_violating = true;
        assert!(matches!(SgelmState::new(model, cfg), Err(ElmError::NotPositiveDefinite(_))));
    }

    #[test]
    fn lyapunov_examples() {
        let g = DMatrix::identity(2, 2) * 0.5;
        let w = dmatrix![0.3; 0.7];
        assert_eq!(lyapunov_value(&w, &w, &g).unwrap(), 0.0);
        let v = lyapunov_value(&dmatrix![0.0; 0.0], &dmatrix![1.0; 0.0], &g).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        let a = lyapunov_value(&w, &dmatrix![-0.4; 1.9], &g).unwrap();
        let b = lyapunov_value(&w, &dmatrix![-0.4; 1.9], &(&g * 2.0)).unwrap();
        assert!((b - 0.5 * a).abs() < 1e-14 * a);
        assert!(lyapunov_value(&w, &w, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn full_step_matrix_matches_scalar() {
        let layer = HiddenLayer::new(2, 4, ActivationKind::Sigmoid, 5).unwrap();
        let model = ElmModel::zeros(layer, 1).unwrap();
        let mut a = SgelmState::new(model.clone(), SgelmConfig::scalar(0.2)).unwrap();
        let mut cfg = SgelmConfig::scalar(0.2);
        cfg.step = StepMatrix::Full(DMatrix::identity(4, 4) * 0.2);
        let mut b = SgelmState::new(model, cfg).unwrap();
        for i in 0..10 {
            let x = dvector![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()];
            let y = dvector![(i as f64).sin()];
            a.update(&x, &y).unwrap();
            b.update(&x, &y).unwrap();
        }
        assert!((a.model().output_weights() - b.model().output_weights()).amax() < 1e-15);
    }
}
