//! Optimisation loop, RAdam, and the evaluation metrics.

mod metrics;
mod radam;
mod trainer;

pub use crate::model::{mixup, MixPlan};
pub use metrics::{argmax, average_precision, compute_metrics, roc_auc, EventMetrics, MetricsReport};
pub use radam::Radam;
pub use trainer::{evaluate, loss_log_text, train, LossRecord};
