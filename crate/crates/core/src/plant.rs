//! Deterministic synthetic data: A-PRBS excitation, a two-output nonlinear
//! plant with a latching dropout regime, stability labels, and a realizable
//! teacher stream.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::elm::{HiddenLayer, Label};
use crate::error::{ElmError, Result};
use crate::narx::{Sample, SampleStream};

pub const INPUT_CHANNELS: usize = 3;
pub const OUTPUT_CHANNELS: usize = 2;

/// Trailing window (cycles) of the `y₂` variability label.
pub const VARIABILITY_WINDOW: usize = 5;

const DROPOUT_U1: f64 = 0.25;
const DROPOUT_Y1: f64 = 0.1;
const DROPOUT_LEVEL: f64 = -1.2;
const DROPOUT_COUPLING: f64 = -0.8;

/// Amplitude-modulated pseudo-random binary sequence settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AprbsConfig {
    /// Per-channel lower amplitude bound.
    pub lo: Vec<f64>,
    /// Per-channel upper amplitude bound.
    pub hi: Vec<f64>,
    pub hold_min: usize,
    pub hold_max: usize,
    pub length: usize,
    pub seed: u64,
}

impl AprbsConfig {
    /// Three channels on `[0, 1]`, holds of 5 to 40 cycles.
    pub fn unit(length: usize, seed: u64) -> Self {
        Self {
            lo: vec![0.0; INPUT_CHANNELS],
            hi: vec![1.0; INPUT_CHANNELS],
            hold_min: 5,
            hold_max: 40,
            length,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(ElmError::invalid("amplitude bounds need one lo/hi pair per channel"));
        }
        if self.hold_min < 1 || self.hold_max < self.hold_min {
            return Err(ElmError::invalid(format!(
                "hold bounds must satisfy 1 <= h_min <= h_max (got {}..{})",
                self.hold_min, self.hold_max
            )));
        }
        for (j, (lo, hi)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(ElmError::invalid(format!("channel {j}: amplitude bounds [{lo}, {hi}] invalid")));
            }
        }
        Ok(())
    }
}

/// Piecewise-constant excitation, `length × channels`. Each channel draws
/// from its own ChaCha8 stream so channels are independent.
pub fn generate_aprbs(config: &AprbsConfig) -> Result<DMatrix<f64>> {
    config.validate()?;
    let channels = config.lo.len();
    let mut out = DMatrix::zeros(config.length, channels);
    for j in 0..channels {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(j as u64);
        let (lo, hi) = (config.lo[j], config.hi[j]);
        let mut k = 0;
        while k < config.length {
            let hold = rng.random_range(config.hold_min..=config.hold_max);
            let u: f64 = rng.random();
            let level = (lo + (hi - lo) * u).min(hi);
            let end = (k + hold).min(config.length);
            for i in k..end {
                out[(i, j)] = level;
            }
            k = end;
        }
    }
    Ok(out)
}

/// Coefficients of the synthetic plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    /// Misfire-analog threshold on `y₁`.
    pub theta_mis: f64,
    /// High-variability threshold on the rolling std of `y₂`.
    pub theta_var: f64,
    pub sigma_noise: f64,
    pub noise_seed: u64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            a1: 0.6,
            a2: 0.5,
            b1: 0.9,
            b2: 0.8,
            c1: 3.0,
            c2: 2.0,
            theta_mis: -0.2,
            theta_var: 0.35,
            sigma_noise: 0.01,
            noise_seed: 0,
        }
    }
}

/// Simulated inputs, outputs and per-cycle stability labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub u: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub labels: Vec<Label>,
}

impl LabeledSeries {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn minority_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l == Label::Negative).count() as f64 / self.labels.len() as f64
    }
}

fn dropout(u1: f64, y1: f64) -> f64 {
    if u1 < DROPOUT_U1 && y1 < DROPOUT_Y1 {
        DROPOUT_LEVEL
    } else {
        0.0
    }
}

/// Population standard deviation.
fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Runs the plant from `y(0) = 0`:
///
/// ```text
/// y₁(k) = a₁ y₁(k−1) + b₁ tanh(c₁ u₁(k−1) − c₂ u₂(k−1)) + s(k−1) + w₁(k)
/// y₂(k) = a₂ y₂(k−1) + b₂ (u₃(k−1) − 0.5) − 0.8 s(k−1) + w₂(k)
/// ```
///
/// with `s(k) = −1.2` when `u₁(k) < 0.25` and `y₁(k) < 0.1`, else 0.
pub fn simulate_plant(config: &PlantConfig, u_series: &DMatrix<f64>) -> Result<LabeledSeries> {
    if u_series.ncols() != INPUT_CHANNELS {
        return Err(ElmError::shape("plant input channels", INPUT_CHANNELS, u_series.ncols()));
    }
    if u_series.iter().any(|v| !v.is_finite()) {
        return Err(ElmError::NonFinite("plant input"));
    }
    if !(config.sigma_noise.is_finite() && config.sigma_noise >= 0.0) {
        return Err(ElmError::invalid("noise level must be finite and nonnegative"));
    }
    let t = u_series.nrows();
    let mut y = DMatrix::zeros(t, OUTPUT_CHANNELS);
    let noise = Normal::new(0.0, config.sigma_noise).map_err(|e| ElmError::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.noise_seed);
    for k in 1..t {
        let (u1, u2, u3) = (u_series[(k - 1, 0)], u_series[(k - 1, 1)], u_series[(k - 1, 2)]);
        let (y1, y2) = (y[(k - 1, 0)], y[(k - 1, 1)]);
        let s = dropout(u1, y1);
        let (w1, w2) = if config.sigma_noise > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        y[(k, 0)] = config.a1 * y1 + config.b1 * (config.c1 * u1 - config.c2 * u2).tanh() + s + w1;
        y[(k, 1)] = config.a2 * y2 + config.b2 * (u3 - 0.5) + DROPOUT_COUPLING * s + w2;
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ElmError::NonFinite("plant trajectory"));
    }
    let labels = label_series(&y, config);
    Ok(LabeledSeries {
        u: u_series.clone(),
        y,
        labels,
    })
}

/// `−1` when `y₁(k) < θ_mis` or the std of `y₂` over cycles
/// `max(0, k−4)..=k` exceeds `θ_var`.
pub fn label_series(y: &DMatrix<f64>, config: &PlantConfig) -> Vec<Label> {
    let y2: Vec<f64> = y.column(1).iter().copied().collect();
    (0..y.nrows())
        .map(|k| {
            let start = (k + 1).saturating_sub(VARIABILITY_WINDOW);
            let misfire = y[(k, 0)] < config.theta_mis;
            let variable = std_dev(&y2[start..=k]) > config.theta_var;
            if misfire || variable {
                Label::Negative
            } else {
                Label::Positive
            }
        })
        .collect()
}

/// Input distribution for [`teacher_stream`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputDistribution {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
}

/// Realizable stream `y_i = W*ᵀ φ(x_i)` with i.i.d. inputs.
pub fn teacher_stream(
    layer: &HiddenLayer,
    w_star: &DMatrix<f64>,
    distribution: InputDistribution,
    length: usize,
    seed: u64,
) -> Result<SampleStream> {
    if w_star.nrows() != layer.hidden_dim() || w_star.ncols() == 0 {
        return Err(ElmError::shape("teacher weights rows", layer.hidden_dim(), w_star.nrows()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = layer.input_dim();
    let mut draw: Box<dyn FnMut(&mut ChaCha8Rng) -> f64> = match distribution {
        InputDistribution::Uniform { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ElmError::invalid("uniform bounds must satisfy lo < hi"));
            }
            Box::new(move |r: &mut ChaCha8Rng| r.random_range(lo..hi))
        }
        InputDistribution::Gaussian { mean, std } => {
            let d = Normal::new(mean, std).map_err(|e| ElmError::invalid(e.to_string()))?;
            Box::new(move |r: &mut ChaCha8Rng| d.sample(r))
        }
    };
    let mut samples = Vec::with_capacity(length);
    for i in 0..length {
        let x = DVector::from_fn(n, |_, _| draw(&mut rng));
        let phi = layer.map(&x)?;
        let y = w_star.tr_mul(&phi);
        samples.push(Sample {
            index: i,
            x,
            y,
            label: None,
        });
    }
    SampleStream::new(samples)
}
