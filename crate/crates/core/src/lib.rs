//! Streaming extreme learning machines.
//!
//! * [`elm`]: random hidden layer, batch and cost-sensitive batch training.
//! * [`online`]: OS-ELM (recursive least squares) and SG-ELM (stochastic
//!   gradient with a Lyapunov-certified step matrix).
//! * [`narx`]: lagged regressors, one-step and multi-step prediction.
//! * [`metrics`]: normalization, RMSE and imbalance metrics.
//! * [`plant`]: synthetic excitation, plant and teacher data.
//! * [`io`]: model/checkpoint text format and the data CSV.
//! * [`pipeline`]: the identification and envelope case studies end to end.

pub mod elm;
pub mod error;
pub mod io;
pub mod metrics;
pub mod narx;
pub mod online;
pub mod pipeline;
pub mod plant;

pub use elm::{
    batch_train, batch_train_weighted, solve_ridge, ActivationKind, Dataset, ElmModel, HiddenLayer, Label, WeightSpec,
};
pub use error::{ElmError, Result};
pub use metrics::{imbalance_metrics, normalized_rmse, ConfusionCounts, ImbalanceMetrics, Normalizer, Report};
pub use narx::{build_regressors, msap_predict, osap_predict, NarxConfig, Predictor, Sample, SampleStream};
pub use online::{
    check_stability, lyapunov_value, OnlineTrainer, OselmState, SgelmConfig, SgelmState, StabilityClass,
    StabilityMonitor, StabilityVerdict, StepMatrix,
};
pub use plant::{generate_aprbs, simulate_plant, teacher_stream, AprbsConfig, LabeledSeries, PlantConfig};
