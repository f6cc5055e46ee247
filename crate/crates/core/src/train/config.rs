//! Run configuration, per-model default recipes and layered overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gcn,
    Gat,
    Sgc,
    Appnp,
    MeanMaxPool,
}

impl ModelKind {
    pub fn is_node_model(self) -> bool {
        self != ModelKind::MeanMaxPool
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase().replace('-', "_"))).map_err(|_| {
            Error::invalid(format!(
                "unknown model {s:?}; expected gcn, gat, sgc, appnp or mean_max_pool"
            ))
        })
    }
}

/// What "better" means for early stopping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingMetric {
    /// Lower validation loss.
    Loss,
    /// Higher validation accuracy; equal accuracy with lower loss also counts.
    AccuracyLossTiebreak,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dataset: String,
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    /// Attention heads of hidden GAT layers.
    pub heads: usize,
    /// Attention heads of the GAT output layer, averaged.
    pub output_heads: usize,
    pub attention_dropout: f64,
    /// Propagation steps for SGC and APPNP.
    pub k: usize,
    /// APPNP teleport probability.
    pub alpha: f64,
    pub improved_fill: f64,
    pub batch_size: usize,
    pub folds: usize,
    pub stopping: StoppingMetric,
    pub deterministic: bool,
}

impl TrainConfig {
    /// Default hyperparameters for `model`.
    pub fn recipe(model: ModelKind, dataset: &str) -> Self {
        let base = Self {
            model,
            dataset: dataset.to_string(),
            data_dir: None,
            seed: 0,
            epochs: 200,
            patience: 10,
            learning_rate: 0.01,
            hidden_dim: 16,
            dropout: 0.5,
            weight_decay: 5e-4,
            heads: 8,
            output_heads: 1,
            attention_dropout: 0.0,
            k: 2,
            alpha: 0.1,
            improved_fill: 1.0,
            batch_size: 32,
            folds: 10,
            stopping: StoppingMetric::Loss,
            deterministic: false,
        };
        match model {
            ModelKind::Gcn => base,
            ModelKind::Gat => Self {
                epochs: 1000,
                patience: 100,
                learning_rate: 0.005,
                hidden_dim: 8,
                dropout: 0.6,
                attention_dropout: 0.6,
                stopping: StoppingMetric::AccuracyLossTiebreak,
                ..base
            },
            ModelKind::Sgc => Self {
                epochs: 100,
                patience: 100,
                learning_rate: 0.2,
                dropout: 0.0,
                weight_decay: 5e-6,
                k: 2,
                ..base
            },
            ModelKind::Appnp => Self {
                epochs: 1000,
                patience: 100,
                hidden_dim: 64,
                k: 10,
                alpha: 0.1,
                stopping: StoppingMetric::AccuracyLossTiebreak,
                ..base
            },
            ModelKind::MeanMaxPool => Self {
                epochs: 200,
                patience: 20,
                learning_rate: 0.001,
                hidden_dim: 64,
                dropout: 0.5,
                weight_decay: 0.0,
                stopping: StoppingMetric::AccuracyLossTiebreak,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.patience == 0 {
            return fail("patience must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, rate) in [("dropout", self.dropout), ("attention dropout", self.attention_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return fail(format!("{name} must lie in [0, 1), got {rate}"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.weight_decay < 0.0 {
            return fail(format!("weight decay must be nonnegative, got {}", self.weight_decay));
        }
        if self.hidden_dim == 0 || self.heads == 0 || self.output_heads == 0 {
            return fail("hidden size and head counts must be positive".into());
        }
        if self.folds < 2 {
            return fail(format!("need at least 2 folds, got {}", self.folds));
        }
        Ok(())
    }
}

/// Partial configuration. Unset fields leave the base value alone.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub model: Option<ModelKind>,
    pub dataset: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden_dim: Option<usize>,
    pub dropout: Option<f64>,
    pub weight_decay: Option<f64>,
    pub heads: Option<usize>,
    pub output_heads: Option<usize>,
    pub attention_dropout: Option<f64>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub improved_fill: Option<f64>,
    pub batch_size: Option<usize>,
    pub folds: Option<usize>,
    pub stopping: Option<StoppingMetric>,
    pub deterministic: Option<bool>,
}

impl ConfigOverrides {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// `other`'s set fields win over `self`'s.
    pub fn merged(self, other: ConfigOverrides) -> ConfigOverrides {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigOverrides { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            model,
            dataset,
            data_dir,
            seed,
            epochs,
            patience,
            learning_rate,
            hidden_dim,
            dropout,
            weight_decay,
            heads,
            output_heads,
            attention_dropout,
            k,
            alpha,
            improved_fill,
            batch_size,
            folds,
            stopping,
            deterministic
        )
    }

    /// Starts from the recipe of the chosen model and applies every set field.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let model = self
            .model
            .ok_or_else(|| Error::invalid("no model given; pass --model or set \"model\" in the config file"))?;
        let dataset = self
            .dataset
            .clone()
            .ok_or_else(|| Error::invalid("no dataset given; pass --dataset or set \"dataset\" in the config file"))?;
        let mut c = TrainConfig::recipe(model, &dataset);
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        apply!(
            seed,
            epochs,
            patience,
            learning_rate,
            hidden_dim,
            dropout,
            weight_decay,
            heads,
            output_heads,
            attention_dropout,
            k,
            alpha,
            improved_fill,
            batch_size,
            folds,
            stopping,
            deterministic
        );
        if self.data_dir.is_some() {
            c.data_dir = self.data_dir.clone();
        }
        c.validate()?;
        Ok(c)
    }
}
