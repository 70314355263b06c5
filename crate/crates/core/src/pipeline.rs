//! End-to-end case studies on the synthetic plant.
//!
//! *Identify*: NARX regression of `y(k)` from lagged inputs and outputs,
//! evaluated by OSAP RMSE on a held-out window and MSAP RMSE on the window
//! after it. *Envelope*: the same regressor predicts the stability label of
//! cycle `k`, evaluated by TPR/TNR/GM/TA.
//!
//! All channels are scaled to `[−1, 1]` with a normalizer fitted on the
//! training cycles only; models work entirely in normalized units.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::elm::{batch_train, batch_train_weighted, ActivationKind, Dataset, ElmModel, HiddenLayer, Label, WeightSpec};
use crate::error::{ElmError, Result};
use crate::io::{Checkpoint, TrainerState};
use crate::metrics::{imbalance_metrics, rmse, ConfusionCounts, ImbalanceMetrics, Normalizer, Report};
use crate::narx::{build_regressors_labeled, msap_predict, NarxConfig, SampleStream};
use crate::online::{OselmState, SgelmConfig, SgelmState, StabilityVerdict, StepMatrix};
use crate::plant::{generate_aprbs, simulate_plant, AprbsConfig, LabeledSeries, PlantConfig, INPUT_CHANNELS, OUTPUT_CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Identify,
    Envelope,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Identify => "identify",
            Task::Envelope => "envelope",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = ElmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "identify" => Ok(Task::Identify),
            "envelope" => Ok(Task::Envelope),
            other => Err(ElmError::invalid(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainerKind {
    Linear,
    Batch,
    Oselm,
    Sgelm,
}

impl TrainerKind {
    pub const ALL: [TrainerKind; 4] = [TrainerKind::Linear, TrainerKind::Oselm, TrainerKind::Sgelm, TrainerKind::Batch];

    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::Linear => "linear",
            TrainerKind::Batch => "batch",
            TrainerKind::Oselm => "oselm",
            TrainerKind::Sgelm => "sgelm",
        }
    }
}

impl fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainerKind {
    type Err = ElmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(TrainerKind::Linear),
            "batch" => Ok(TrainerKind::Batch),
            "oselm" => Ok(TrainerKind::Oselm),
            "sgelm" => Ok(TrainerKind::Sgelm),
            other => Err(ElmError::invalid(format!("unknown trainer '{other}'"))),
        }
    }
}

/// Synthetic data generation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub cycles: usize,
    pub aprbs: AprbsConfig,
    pub plant: PlantConfig,
}

impl DataConfig {
    /// Excitation and noise streams are both derived from `seed`.
    pub fn new(cycles: usize, seed: u64) -> Self {
        let mut aprbs = AprbsConfig::unit(cycles, seed);
        aprbs.lo[0] = 0.2;
        Self {
            cycles,
            aprbs,
            plant: PlantConfig {
                noise_seed: seed.wrapping_add(0x9E37_79B9_7F4A_7C15),
                ..PlantConfig::default()
            },
        }
    }
}

pub fn generate_data(config: &DataConfig) -> Result<LabeledSeries> {
    let mut aprbs = config.aprbs.clone();
    aprbs.length = config.cycles;
    let u = generate_aprbs(&aprbs)?;
    simulate_plant(&config.plant, &u)
}

/// Model, trainer and evaluation-window settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub task: Task,
    pub trainer: TrainerKind,
    pub hidden_dim: usize,
    pub activation: ActivationKind,
    pub ridge: f64,
    pub gamma: f64,
    pub scale_factor: f64,
    /// Cost-sensitive training on the envelope task.
    pub weighted: bool,
    pub allow_unstable: bool,
    pub init_rows: usize,
    pub input_lags: usize,
    pub output_lags: usize,
    pub layer_seed: u64,
    /// Cycles `[0, train_cycles)` are used for training.
    pub train_cycles: usize,
    /// First evaluated cycle.
    pub eval_offset: usize,
    /// Length of the OSAP / classification window.
    pub eval_cycles: usize,
    /// First cycle of the MSAP window; `None` starts it right after the
    /// OSAP window.
    pub msap_offset: Option<usize>,
    pub horizon: usize,
}

impl PipelineConfig {
    /// Desk-scale defaults; `scale` multiplies the window lengths.
    pub fn for_task(task: Task, trainer: TrainerKind, scale: f64) -> Self {
        let scaled = |n: f64| ((n * scale).round() as usize).max(1);
        let (hidden_dim, gamma, train, eval) = match task {
            Task::Identify => (100, 0.0008, 11_000.0, 5_100.0),
            Task::Envelope => (10, 0.001, 14_300.0, 6_200.0),
        };
        let train_cycles = scaled(train);
        Self {
            task,
            trainer,
            hidden_dim,
            activation: ActivationKind::Sigmoid,
            ridge: 1e-3,
            gamma,
            scale_factor: 1.0,
            weighted: task == Task::Envelope,
            allow_unstable: false,
            init_rows: 800,
            input_lags: 1,
            output_lags: 1,
            layer_seed: 1,
            train_cycles,
            eval_offset: train_cycles,
            eval_cycles: scaled(eval),
            msap_offset: None,
            horizon: match task {
                Task::Identify => scaled(600.0),
                Task::Envelope => 0,
            },
        }
    }

    /// Cycles needed to hold training and both evaluation windows.
    pub fn total_cycles(&self) -> usize {
        (self.eval_offset + self.eval_cycles).max(self.msap_start() + self.horizon)
    }

    pub fn msap_start(&self) -> usize {
        self.msap_offset.unwrap_or(self.eval_offset + self.eval_cycles)
    }

    /// Regressors always use both outputs; only the target differs by task.
    pub fn narx(&self) -> Result<NarxConfig> {
        NarxConfig::new(self.input_lags, self.output_lags, INPUT_CHANNELS, OUTPUT_CHANNELS)
    }

    fn model_output_dim(&self) -> usize {
        match self.task {
            Task::Identify => OUTPUT_CHANNELS,
            Task::Envelope => 1,
        }
    }

    fn cost_sensitive(&self) -> bool {
        self.task == Task::Envelope && self.weighted
    }

    fn meta(&self) -> Vec<(String, String)> {
        vec![
            ("task".into(), self.task.to_string()),
            ("trainer".into(), self.trainer.to_string()),
            ("input_lags".into(), self.input_lags.to_string()),
            ("output_lags".into(), self.output_lags.to_string()),
        ]
    }
}

/// Normalized series and regressor stream.
struct Prepared {
    normalizer: Normalizer,
    stream: SampleStream,
}

fn data_matrix(series: &LabeledSeries) -> DMatrix<f64> {
    let t = series.len();
    DMatrix::from_fn(t, INPUT_CHANNELS + OUTPUT_CHANNELS, |i, j| {
        if j < INPUT_CHANNELS {
            series.u[(i, j)]
        } else {
            series.y[(i, j - INPUT_CHANNELS)]
        }
    })
}

fn normalized_stream(series: &LabeledSeries, normalizer: &Normalizer, cfg: &PipelineConfig) -> Result<SampleStream> {
    let scaled = normalizer.apply(&data_matrix(series))?;
    let u = scaled.columns(0, INPUT_CHANNELS).into_owned();
    let y = scaled.columns(INPUT_CHANNELS, OUTPUT_CHANNELS).into_owned();
    let stream = build_regressors_labeled(&u, &y, &series.labels, &cfg.narx()?)?;
    match cfg.task {
        Task::Identify => Ok(stream),
        Task::Envelope => stream.with_label_targets(),
    }
}

fn prepare(series: &LabeledSeries, cfg: &PipelineConfig) -> Result<Prepared> {
    if cfg.train_cycles > series.len() {
        return Err(ElmError::invalid(format!(
            "training window of {} cycles exceeds the {} cycles available",
            cfg.train_cycles,
            series.len()
        )));
    }
    let train = data_matrix(series).rows(0, cfg.train_cycles).into_owned();
    let normalizer = Normalizer::fit(&train)?;
    let stream = normalized_stream(series, &normalizer, cfg)?;
    Ok(Prepared { normalizer, stream })
}

/// Indices into the stream whose target cycle lies in `[start, end)`.
fn window(stream: &SampleStream, start: usize, end: usize) -> std::ops::Range<usize> {
    let s = stream.samples();
    let lo = s.partition_point(|x| x.index < start);
    let hi = s.partition_point(|x| x.index < end);
    lo..hi
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub train_seconds: f64,
    pub weight_norm: f64,
    pub verdict: Option<StabilityVerdict>,
    /// Largest `φᵀΓφ` met while streaming (SG-ELM only).
    pub max_step_gain: Option<f64>,
    /// Deterministic part of the training report.
    pub report: Report,
}

fn layer_for(cfg: &PipelineConfig, input_dim: usize) -> Result<HiddenLayer> {
    match cfg.trainer {
        TrainerKind::Linear => HiddenLayer::affine(input_dim),
        _ => HiddenLayer::new(input_dim, cfg.hidden_dim, cfg.activation, cfg.layer_seed),
    }
}

fn fit_batch(ds: &Dataset, layer: &HiddenLayer, cfg: &PipelineConfig) -> Result<ElmModel> {
    if cfg.cost_sensitive() {
        let labels = ds.labels().ok_or_else(|| ElmError::invalid("weighted training requires labels"))?;
        let spec = WeightSpec::from_labels(labels, cfg.scale_factor, Label::Negative)?;
        batch_train_weighted(ds, layer, cfg.ridge, &spec)
    } else {
        batch_train(ds, layer, cfg.ridge)
    }
}

/// Trains the configured learner on cycles `[0, train_cycles)`.
///
/// Online learners are initialized by batch ELM on the first `init_rows`
/// samples and then consume the remainder one sample at a time.
pub fn train(series: &LabeledSeries, cfg: &PipelineConfig) -> Result<TrainOutcome> {
    let prepared = prepare(series, cfg)?;
    let stream = &prepared.stream;
    let train_range = window(stream, 0, cfg.train_cycles);
    let n_train = train_range.len();
    if n_train == 0 {
        return Err(ElmError::invalid("training window contains no samples"));
    }
    let online = matches!(cfg.trainer, TrainerKind::Oselm | TrainerKind::Sgelm);
    if online && n_train < cfg.init_rows + 1 {
        return Err(ElmError::invalid(format!(
            "online training needs more than init_rows={} samples, training window has {n_train}",
            cfg.init_rows
        )));
    }
    if cfg.init_rows == 0 && online {
        return Err(ElmError::invalid("init_rows must be at least 1"));
    }
    let layer = layer_for(cfg, cfg.narx()?.regressor_dim())?;
    let samples = &stream.samples()[train_range.clone()];

    let started = Instant::now();
    let mut verdict = None;
    let mut max_step_gain = None;
    let (model, state) = match cfg.trainer {
        TrainerKind::Linear | TrainerKind::Batch => {
            let ds = stream.to_dataset(train_range.clone())?;
            let model = fit_batch(&ds, &layer, cfg)?;
            let state = if cfg.trainer == TrainerKind::Linear {
                TrainerState::Linear
            } else {
                TrainerState::Batch
            };
            (model, state)
        }
        TrainerKind::Oselm => {
            let init = stream.to_dataset(train_range.start..train_range.start + cfg.init_rows)?;
            let mut st = OselmState::init(&init, &layer, cfg.ridge)?;
            for s in &samples[cfg.init_rows..] {
                st.update(&s.x, &s.y)?;
            }
            let state = TrainerState::Oselm {
                covariance: st.covariance().clone(),
                samples_seen: st.samples_seen(),
            };
            (st.into_model(), state)
        }
        TrainerKind::Sgelm => {
            let init = stream.to_dataset(train_range.start..train_range.start + cfg.init_rows)?;
            let w0 = fit_batch(&init, &layer, cfg)?;
            let sg_cfg = SgelmConfig {
                step: StepMatrix::Scalar(cfg.gamma),
                scale_factor: cfg.scale_factor,
                minority: Label::Negative,
                allow_violating: cfg.allow_unstable,
            };
            let (maj, min) = init.labels().map_or((0, 0), |l| {
                let min = l.iter().filter(|&&x| x == Label::Negative).count() as u64;
                (l.len() as u64 - min, min)
            });
            let mut st = SgelmState::new(w0, sg_cfg)?
                .with_counts(maj, min)
                .with_samples_seen(cfg.init_rows as u64);
            let mut gain: f64 = 0.0;
            for s in &samples[cfg.init_rows..] {
                let phi = st.model().features(&s.x)?;
                gain = gain.max(st.step().quadratic_form(&phi));
                match (cfg.cost_sensitive(), s.label) {
                    (true, Some(l)) => st.update_weighted_features(&phi, &s.y, l)?,
                    _ => st.update_features(&phi, &s.y)?,
                };
            }
            verdict = Some(st.verdict());
            max_step_gain = Some(gain);
            let (majority_count, minority_count) = st.counts();
            let state = TrainerState::Sgelm {
                step: st.step().clone(),
                scale_factor: st.scale_factor(),
                minority: st.minority(),
                majority_count,
                minority_count,
                samples_seen: st.samples_seen(),
            };
            (st.into_model(), state)
        }
    };
    let train_seconds = started.elapsed().as_secs_f64();

    let weight_norm = model.weight_norm();
    let mut report = Report::new();
    report
        .text("task", cfg.task)
        .text("trainer", cfg.trainer)
        .text("hidden_dim", model.hidden_dim())
        .text("train_samples", n_train)
        .text("init_samples", if online { cfg.init_rows } else { n_train })
        .metric("weight_norm", weight_norm);
    if let Some(v) = verdict {
        report
            .text("stability", v.class)
            .metric("max_eigenvalue", v.max_eigenvalue)
            .metric("max_step_gain", max_step_gain.unwrap_or(0.0));
    }
    if cfg.task == Task::Envelope {
        let neg = samples.iter().filter(|s| s.label == Some(Label::Negative)).count();
        report.metric("train_minority_fraction", neg as f64 / n_train as f64);
    }

    let checkpoint = Checkpoint {
        model,
        state,
        normalizer: Some(prepared.normalizer),
        meta: cfg.meta(),
    };
    Ok(TrainOutcome {
        checkpoint,
        train_seconds,
        weight_norm,
        verdict,
        max_step_gain,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionScores {
    pub osap_rmse: f64,
    pub msap_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: Report,
    /// Per-cycle predictions, CSV text.
    pub predictions: String,
    pub regression: Option<RegressionScores>,
    pub classification: Option<ImbalanceMetrics>,
}

fn check_compatible(cp: &Checkpoint, cfg: &PipelineConfig) -> Result<()> {
    let narx = cfg.narx()?;
    if cp.model.input_dim() != narx.regressor_dim() {
        return Err(ElmError::shape("checkpoint input dimension", narx.regressor_dim(), cp.model.input_dim()));
    }
    if cp.model.output_dim() != cfg.model_output_dim() {
        return Err(ElmError::shape("checkpoint output dimension", cfg.model_output_dim(), cp.model.output_dim()));
    }
    if let Some(n) = &cp.normalizer {
        if n.dim() != INPUT_CHANNELS + OUTPUT_CHANNELS {
            return Err(ElmError::shape("checkpoint normalizer channels", INPUT_CHANNELS + OUTPUT_CHANNELS, n.dim()));
        }
    }
    if let Some(task) = cp.meta("task") {
        if task != cfg.task.name() {
            return Err(ElmError::shape("checkpoint task", cfg.task.name(), task));
        }
    }
    Ok(())
}

/// Evaluates a frozen checkpoint on `series`.
pub fn evaluate(series: &LabeledSeries, cp: &Checkpoint, cfg: &PipelineConfig) -> Result<EvalOutcome> {
    check_compatible(cp, cfg)?;
    let normalizer = cp
        .normalizer
        .clone()
        .ok_or_else(|| ElmError::invalid("checkpoint carries no normalizer"))?;
    let stream = normalized_stream(series, &normalizer, cfg)?;
    let osap_end = cfg.eval_offset + cfg.eval_cycles;
    if osap_end > series.len() {
        return Err(ElmError::invalid(format!(
            "evaluation window ends at cycle {osap_end} but data has {} cycles",
            series.len()
        )));
    }
    let range = window(&stream, cfg.eval_offset, osap_end);
    if range.is_empty() {
        return Err(ElmError::invalid("evaluation window contains no samples"));
    }
    let samples = &stream.samples()[range];
    let model = &cp.model;
    let mut report = Report::new();
    report
        .text("task", cfg.task)
        .text("trainer", cp.state.name())
        .text("eval_samples", samples.len());

    match cfg.task {
        Task::Identify => {
            let y_norm = normalizer.select(INPUT_CHANNELS..INPUT_CHANNELS + OUTPUT_CHANNELS)?;
            let mut csv = String::from("cycle,window,y1,y2,y1_hat,y2_hat\n");
            let n = samples.len();
            let mut truth = DMatrix::zeros(n, OUTPUT_CHANNELS);
            let mut pred = DMatrix::zeros(n, OUTPUT_CHANNELS);
            for (i, s) in samples.iter().enumerate() {
                let y_hat = model.predict(&s.x)?;
                truth.set_row(i, &s.y.transpose());
                pred.set_row(i, &y_hat.transpose());
                push_prediction(&mut csv, s.index, "osap", &y_norm, &s.y, &y_hat)?;
            }
            let osap_rmse = rmse(&truth, &pred)?;
            report.metric("osap_rmse", osap_rmse);

            let msap_rmse = if cfg.horizon > 0 {
                let (r, rows) = msap_window(series, &normalizer, model, cfg, cfg.msap_start())?;
                csv.push_str(&rows);
                report.text("msap_horizon", cfg.horizon).metric("msap_rmse", r);
                r
            } else {
                f64::NAN
            };
            Ok(EvalOutcome {
                report,
                predictions: csv,
                regression: Some(RegressionScores { osap_rmse, msap_rmse }),
                classification: None,
            })
        }
        Task::Envelope => {
            let mut csv = String::from("cycle,label,score,predicted\n");
            let mut counts = ConfusionCounts::default();
            for s in samples {
                let truth = s.label.ok_or_else(|| ElmError::invalid("envelope sample without label"))?;
                let score = model.score(&s.x)?;
                let predicted = Label::from_score(score);
                counts.record(truth, predicted);
                csv.push_str(&format!("{},{},{},{}\n", s.index, truth.as_i8(), score, predicted.as_i8()));
            }
            let m = imbalance_metrics(&counts)?;
            report
                .text("tp", counts.tp)
                .text("tn", counts.tn)
                .text("fp", counts.fp)
                .text("fn", counts.fn_)
                .metric("tpr", m.tpr)
                .metric("tnr", m.tnr)
                .metric("ta", m.ta)
                .metric("gm", m.gm);
            Ok(EvalOutcome {
                report,
                predictions: csv,
                regression: None,
                classification: Some(m),
            })
        }
    }
}

fn push_prediction(
    csv: &mut String,
    cycle: usize,
    tag: &str,
    y_norm: &Normalizer,
    y: &DVector<f64>,
    y_hat: &DVector<f64>,
) -> Result<()> {
    let y = y_norm.invert_vec(y)?;
    let y_hat = y_norm.invert_vec(y_hat)?;
    csv.push_str(&format!("{cycle},{tag},{},{},{},{}\n", y[0], y[1], y_hat[0], y_hat[1]));
    Ok(())
}

/// MSAP over cycles `[start, start + horizon)`, seeded with the measurements
/// up to `start − 1` and driven by the recorded inputs.
fn msap_window(
    series: &LabeledSeries,
    normalizer: &Normalizer,
    model: &ElmModel,
    cfg: &PipelineConfig,
    start: usize,
) -> Result<(f64, String)> {
    let narx = cfg.narx()?;
    let end = start + cfg.horizon;
    if end > series.len() {
        return Err(ElmError::invalid(format!(
            "MSAP window ends at cycle {end} but data has {} cycles",
            series.len()
        )));
    }
    if start < narx.max_lag() {
        return Err(ElmError::invalid("MSAP window starts before enough history"));
    }
    let scaled = normalizer.apply(&data_matrix(series))?;
    let u_first = start - narx.input_lags;
    let u_seq = scaled
        .view((u_first, 0), (narx.input_lags + cfg.horizon - 1, INPUT_CHANNELS))
        .into_owned();
    let y_seed = scaled
        .view((start - narx.output_lags, INPUT_CHANNELS), (narx.output_lags, OUTPUT_CHANNELS))
        .into_owned();
    let pred = msap_predict(model, &u_seq, &y_seed, cfg.horizon, &narx)?;
    let truth = scaled.view((start, INPUT_CHANNELS), (cfg.horizon, OUTPUT_CHANNELS)).into_owned();
    let y_norm = normalizer.select(INPUT_CHANNELS..INPUT_CHANNELS + OUTPUT_CHANNELS)?;
    let mut csv = String::new();
    for i in 0..cfg.horizon {
        push_prediction(
            &mut csv,
            start + i,
            "msap",
            &y_norm,
            &truth.row(i).transpose(),
            &pred.row(i).transpose(),
        )?;
    }
    Ok((rmse(&truth, &pred)?, csv))
}

/// One row of a comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub trainer: TrainerKind,
    pub train_seconds: f64,
    pub weight_norm: f64,
    pub regression: Option<RegressionScores>,
    pub classification: Option<ImbalanceMetrics>,
}

/// Trains and evaluates every trainer in `trainers` on the same data.
pub fn compare(series: &LabeledSeries, base: &PipelineConfig, trainers: &[TrainerKind]) -> Result<Vec<ComparisonRow>> {
    trainers
        .iter()
        .map(|&trainer| {
            let cfg = PipelineConfig {
                trainer,
                ..base.clone()
            };
            let trained = train(series, &cfg)?;
            let eval = evaluate(series, &trained.checkpoint, &cfg)?;
            Ok(ComparisonRow {
                trainer,
                train_seconds: trained.train_seconds,
                weight_norm: trained.weight_norm,
                regression: eval.regression,
                classification: eval.classification,
            })
        })
        .collect()
}

/// Fixed-width comparison table (training time, then task metrics).
pub fn render_table(task: Task, rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    match task {
        Task::Identify => {
            out.push_str(&format!(
                "{:<8} {:>12} {:>10} {:>10} {:>10}\n",
                "model", "train_time_s", "osap_rmse", "msap_rmse", "norm_W"
            ));
            for r in rows {
                let s = r.regression.clone().unwrap_or(RegressionScores {
                    osap_rmse: f64::NAN,
                    msap_rmse: f64::NAN,
                });
                out.push_str(&format!(
                    "{:<8} {:>12.4} {:>10.4} {:>10.4} {:>10.4}\n",
                    r.trainer.name(),
                    r.train_seconds,
                    s.osap_rmse,
                    s.msap_rmse,
                    r.weight_norm
                ));
            }
        }
        Task::Envelope => {
            out.push_str(&format!(
                "{:<8} {:>12} {:>8} {:>8} {:>8} {:>8}\n",
                "model", "train_time_s", "tpr", "tnr", "ta", "gm"
            ));
            for r in rows {
                let m = r.classification.unwrap_or(ImbalanceMetrics {
                    tpr: f64::NAN,
                    tnr: f64::NAN,
                    gm: f64::NAN,
                    ta: f64::NAN,
                });
                out.push_str(&format!(
                    "{:<8} {:>12.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                    r.trainer.name(),
                    r.train_seconds,
                    m.tpr,
                    m.tnr,
                    m.ta,
                    m.gm
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: Task, trainer: TrainerKind) -> (LabeledSeries, PipelineConfig) {
        let mut cfg = PipelineConfig::for_task(task, trainer, 0.1);
        cfg.init_rows = 200;
        cfg.hidden_dim = 20;
        let data = generate_data(&DataConfig::new(cfg.total_cycles(), 3)).unwrap();
        (data, cfg)
    }

    #[test]
    fn identify_runs_for_every_trainer() {
        for trainer in TrainerKind::ALL {
            let (data, cfg) = small(Task::Identify, trainer);
            let t = train(&data, &cfg).unwrap();
            let e = evaluate(&data, &t.checkpoint, &cfg).unwrap();
            let r = e.regression.unwrap();
            assert!(r.osap_rmse.is_finite() && r.msap_rmse.is_finite(), "{trainer}");
            assert_eq!(e.predictions.lines().count(), 1 + cfg.eval_cycles + cfg.horizon);
        }
    }

    #[test]
    fn envelope_zero_model_scores_zero_gm() {
        let (data, cfg) = small(Task::Envelope, TrainerKind::Sgelm);
        let mut t = train(&data, &cfg).unwrap();
        let zero = ElmModel::zeros(t.checkpoint.model.hidden().clone(), 1).unwrap();
        t.checkpoint.model = zero;
        let e = evaluate(&data, &t.checkpoint, &cfg).unwrap();
        let m = e.classification.unwrap();
        assert_eq!(m.tpr, 1.0);
        assert_eq!(m.gm, 0.0);
        assert_eq!(e.report.get("gm"), Some("0"));
    }

    #[test]
    fn one_step_msap_matches_osap_on_same_window() {
        let (data, mut cfg) = small(Task::Identify, TrainerKind::Batch);
        cfg.eval_cycles = 1;
        cfg.horizon = 1;
        cfg.msap_offset = Some(cfg.eval_offset);
        let t = train(&data, &cfg).unwrap();
        let r = evaluate(&data, &t.checkpoint, &cfg).unwrap().regression.unwrap();
        assert_eq!(r.osap_rmse.to_bits(), r.msap_rmse.to_bits());
    }

    #[test]
    fn online_trainers_need_init_rows() {
        let (data, mut cfg) = small(Task::Identify, TrainerKind::Oselm);
        cfg.init_rows = cfg.train_cycles + 5;
        assert!(matches!(train(&data, &cfg), Err(ElmError::InvalidArgument(_))));
    }

    #[test]
    fn checkpoint_mismatch_is_shape_error() {
        let (data, cfg) = small(Task::Identify, TrainerKind::Batch);
        let t = train(&data, &cfg).unwrap();
        let other = PipelineConfig {
            input_lags: 2,
            ..cfg.clone()
        };
        assert!(matches!(evaluate(&data, &t.checkpoint, &other), Err(ElmError::Shape { .. })));
    }

    #[test]
    fn violating_gamma_rejected_without_override() {
        let (data, mut cfg) = small(Task::Identify, TrainerKind::Sgelm);
        cfg.gamma = 3.0;
        assert!(matches!(train(&data, &cfg), Err(ElmError::Unstable(_))));
    }
}
