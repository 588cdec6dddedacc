//! Adam, the epoch loop and classification metrics.

mod adam;
mod fit;
mod metrics;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fit::{
    batch_gradient, evaluate, fit, fit_prepared, mean_loss, predict_classes, prepare, EpochRecord,
    History, PreparedData, TrainConfig,
};
pub use metrics::{compute_metrics, ClassMetrics, Metrics};
