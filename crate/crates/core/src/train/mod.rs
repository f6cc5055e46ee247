//! Training loops, early stopping, checkpoints and run reports.

mod checkpoint;
mod config;
mod graph_task;
mod node_task;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParameterEntry};
pub use config::{ConfigOverrides, ModelKind, StoppingMetric, TrainConfig};
pub use graph_task::{
    evaluate_graph_classifier, prepare_tu, stratified_folds, train_graph_classifier, train_graph_classifier_on,
    GraphModel, GraphRunSummary,
};
pub use node_task::{
    evaluate_node_classifier, train_node_classifier, train_node_classifier_on, NodeModel, TrainedModel,
};

use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation accuracy.
    pub val_metric: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seed: u64,
    pub wall_seconds: f64,
    pub history: Vec<EpochRecord>,
    pub config: TrainConfig,
}

/// Tracks the best validation epoch and decides when to stop.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    metric: StoppingMetric,
    patience: usize,
    best: Option<(f64, f64)>,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(metric: StoppingMetric, patience: usize) -> Self {
        Self {
            metric,
            patience,
            best: None,
            best_epoch: 0,
        }
    }

    /// Records an epoch and reports whether it is the new best.
    pub fn observe(&mut self, epoch: usize, accuracy: f64, loss: f64) -> bool {
        let better = match self.best {
            None => true,
            Some((best_acc, best_loss)) => match self.metric {
                StoppingMetric::Loss => loss < best_loss,
                StoppingMetric::AccuracyLossTiebreak => {
                    accuracy > best_acc || (accuracy == best_acc && loss < best_loss)
                }
            },
        };
        if better {
            self.best = Some((accuracy, loss));
            self.best_epoch = epoch;
        }
        better
    }

    /// True once `patience` epochs have passed without a new best.
    pub fn should_stop(&self, epoch: usize) -> bool {
        self.best.is_some() && epoch - self.best_epoch >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Fraction of `rows` whose argmax matches the label.
pub fn accuracy<T: Element>(logits: &Tensor<T>, labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let pred = logits.argmax_rows();
    let correct = rows.iter().filter(|&&r| pred[r] == labels[r]).count();
    correct as f64 / rows.len() as f64
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
