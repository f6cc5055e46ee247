//! Full-batch transductive node classification.

use std::rc::Rc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{accuracy, EarlyStopping, EpochRecord, ModelKind, RunReport, TrainConfig};
use crate::datasets::{data_root, load_node_dataset, NodeDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::graph::{Graph, NormConfig};
use crate::layers::{sgc_propagate, Activation, AppnpLayer, Dense, GatLayer, GcnLayer, HeadMode};
use crate::tensor::optim::Adam;
use crate::tensor::{Element, ExecMode, ParameterStore, Tape, Tensor, Var};

/// Architecture of a node classifier. Parameters live in a separate store.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeModel {
    Gcn {
        hidden: GcnLayer,
        output: GcnLayer,
    },
    Gat {
        hidden: GatLayer,
        output: GatLayer,
    },
    /// A linear layer over features propagated once before training.
    Sgc {
        linear: Dense,
        k: usize,
        norm: NormConfig,
    },
    Appnp {
        layer: AppnpLayer,
    },
}

impl NodeModel {
    pub fn build<T: Element, R: Rng + ?Sized>(
        config: &TrainConfig,
        in_dim: usize,
        num_classes: usize,
        store: &mut ParameterStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        let norm = NormConfig {
            renorm: true,
            improved_fill: config.improved_fill,
        };
        let hid = config.hidden_dim;
        Ok(match config.model {
            ModelKind::Gcn => {
                let mut hidden = GcnLayer::build(store, "gcn0", in_dim, hid, Some(Activation::Relu), rng)?;
                let mut output = GcnLayer::build(store, "gcn1", hid, num_classes, None, rng)?;
                hidden.norm = norm;
                output.norm = norm;
                NodeModel::Gcn { hidden, output }
            }
            ModelKind::Gat => {
                let hidden = GatLayer::build(
                    store,
                    "gat0",
                    in_dim,
                    hid,
                    config.heads,
                    HeadMode::Concat,
                    Some(Activation::Elu),
                    rng,
                )?
                .with_attention_dropout(config.attention_dropout);
                let output = GatLayer::build(
                    store,
                    "gat1",
                    hidden.output_dim(),
                    num_classes,
                    config.output_heads,
                    HeadMode::Average,
                    None,
                    rng,
                )?
                .with_attention_dropout(config.attention_dropout);
                NodeModel::Gat { hidden, output }
            }
            ModelKind::Sgc => NodeModel::Sgc {
                linear: Dense::build(store, "sgc", in_dim, num_classes, true, rng)?,
                k: config.k,
                norm,
            },
            ModelKind::Appnp => {
                let mut layer = AppnpLayer::build(
                    store,
                    "mlp",
                    &[in_dim, hid, num_classes],
                    config.alpha,
                    config.k,
                    config.dropout,
                    rng,
                )?;
                layer.norm = norm;
                NodeModel::Appnp { layer }
            }
            ModelKind::MeanMaxPool => {
                return Err(Error::invalid("mean_max_pool is a graph classifier; use train-graph"))
            }
        })
    }

    /// Optimizer with this architecture's weight-decay groups.
    pub fn optimizer(&self, config: &TrainConfig) -> Result<Adam> {
        let adam = Adam::new(config.learning_rate)?;
        let wd = config.weight_decay;
        Ok(match self {
            NodeModel::Gcn { hidden, .. } => adam.with_decay(hidden.dense.kernel_name(), wd),
            NodeModel::Gat { .. } | NodeModel::Sgc { .. } => adam.with_decay("*", wd),
            NodeModel::Appnp { layer } => adam.with_decay(layer.mlp[0].kernel_name(), wd),
        })
    }

    /// Features fed to [`NodeModel::forward`]: the raw features, or for SGC
    /// the propagated ones.
    pub fn input_features<T: Element>(&self, graph: &Graph<T>, mode: ExecMode) -> Result<Tensor<T>> {
        match self {
            NodeModel::Sgc { k, norm, .. } => {
                let tape = Tape::with_mode(mode);
                let x = tape.constant(graph.x().clone());
                Ok(sgc_propagate(&x, graph, *k, *norm)?.value().clone())
            }
            _ => Ok(graph.x().clone()),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<'t, T: Element, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape<T>,
        store: &ParameterStore<T>,
        x: &Var<'t, T>,
        graph: &Graph<T>,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t, T>> {
        match self {
            NodeModel::Gcn { hidden, output } => {
                let h = x.dropout(dropout, training, rng)?;
                let h = hidden.forward(tape, store, &h, graph)?;
                let h = h.dropout(dropout, training, rng)?;
                output.forward(tape, store, &h, graph)
            }
            NodeModel::Gat { hidden, output } => {
                let h = x.dropout(dropout, training, rng)?;
                let h = hidden.forward(tape, store, &h, graph, training, rng)?;
                let h = h.dropout(dropout, training, rng)?;
                output.forward(tape, store, &h, graph, training, rng)
            }
            NodeModel::Sgc { linear, .. } => {
                let h = x.dropout(dropout, training, rng)?;
                linear.forward(tape, store, &h)
            }
            NodeModel::Appnp { layer } => layer.forward(tape, store, x, graph, training, rng),
        }
    }
}

/// Parameters and architecture after training, restored to the best epoch.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub num_features: usize,
    pub num_classes: usize,
    pub store: ParameterStore<f32>,
    /// Graph indices of the fold this model was trained on (graph tasks).
    pub graph_split: Option<SplitSpec>,
}

fn node_labels(graph: &Graph<f32>) -> Result<Vec<usize>> {
    let y = graph
        .y()
        .ok_or_else(|| Error::invalid("node classification needs node labels"))?;
    Ok(y.iter().map(|&v| v.max(0) as usize).collect())
}

fn evaluate<R: Rng + ?Sized>(
    model: &NodeModel,
    store: &ParameterStore<f32>,
    features: &Rc<Tensor<f32>>,
    graph: &Graph<f32>,
    mode: ExecMode,
    rng: &mut R,
) -> Result<Tensor<f32>> {
    let tape = Tape::with_mode(mode);
    let x = tape.constant_shared(Rc::clone(features));
    let logits = model.forward(&tape, store, &x, graph, 0.0, false, rng)?;
    Ok(logits.value().clone())
}

fn split_loss(logits: &Tensor<f32>, labels: &[usize], rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let tape = Tape::<f32>::with_mode(ExecMode::Deterministic);
    let v = tape.constant(logits.clone());
    Ok(v.softmax_cross_entropy(labels, Some(rows))?.value().item() as f64)
}

/// Loads the configured dataset and trains on it.
pub fn train_node_classifier(config: &TrainConfig) -> Result<(RunReport, TrainedModel)> {
    let root = data_root(config.data_dir.as_deref());
    let dataset = load_node_dataset(&root, &config.dataset)?;
    train_node_classifier_on(&dataset, config)
}

/// Trains with masked cross-entropy on the training nodes, early-stops on
/// the validation nodes and reports test accuracy at the best epoch.
pub fn train_node_classifier_on(dataset: &NodeDataset, config: &TrainConfig) -> Result<(RunReport, TrainedModel)> {
    config.validate()?;
    let start = Instant::now();
    let mode = ExecMode::from_deterministic(config.deterministic);
    let graph = &dataset.graph;
    let labels = node_labels(graph)?;
    let split = &dataset.split;
    if split.train.is_empty() {
        return Err(Error::invalid("the training split is empty"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParameterStore::new();
    let model = NodeModel::build(config, graph.num_features(), dataset.num_classes, &mut store, &mut rng)?;
    let adam = model.optimizer(config)?;
    let features = Rc::new(model.input_features(graph, mode)?);

    let mut stopper = EarlyStopping::new(config.stopping, config.patience);
    let mut best = store.snapshot();
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        let tape = Tape::with_mode(mode);
        let x = tape.constant_shared(Rc::clone(&features));
        let logits = model.forward(&tape, &store, &x, graph, config.dropout, true, &mut rng)?;
        let loss = logits.softmax_cross_entropy(&labels, Some(&split.train))?;
        tape.backward_into(&loss, &mut store)?;
        adam.step(&mut store);

        let logits = evaluate(&model, &store, &features, graph, mode, &mut rng)?;
        let val_acc = accuracy(&logits, &labels, &split.val);
        let val_loss = split_loss(&logits, &labels, &split.val)?;
        let train_loss = loss.value().item() as f64;
        log::debug!("epoch {epoch}: train loss {train_loss:.4}, val acc {val_acc:.4}, val loss {val_loss:.4}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_metric: val_acc,
            val_loss,
        });
        if stopper.observe(epoch, val_acc, val_loss) {
            best = store.snapshot();
        }
        if stopper.should_stop(epoch) {
            break;
        }
    }
    store.restore(&best)?;

    let trained = TrainedModel {
        config: config.clone(),
        num_features: graph.num_features(),
        num_classes: dataset.num_classes,
        store,
        graph_split: None,
    };
    let test_accuracy = evaluate_node_classifier(&trained, dataset, &split.test)?;
    let report = RunReport {
        test_accuracy,
        best_epoch: stopper.best_epoch(),
        epochs_run: history.len(),
        seed: config.seed,
        wall_seconds: start.elapsed().as_secs_f64(),
        history,
        config: config.clone(),
    };
    Ok((report, trained))
}

/// Accuracy of a trained model on the labeled nodes among `rows`.
pub fn evaluate_node_classifier(trained: &TrainedModel, dataset: &NodeDataset, rows: &[usize]) -> Result<f64> {
    let graph = &dataset.graph;
    if graph.num_features() != trained.num_features || dataset.num_classes != trained.num_classes {
        return Err(Error::invalid(format!(
            "model expects {} features and {} classes, dataset has {} and {}",
            trained.num_features,
            trained.num_classes,
            graph.num_features(),
            dataset.num_classes
        )));
    }
    let mode = ExecMode::from_deterministic(trained.config.deterministic);
    // Rebuild the architecture, then swap in the trained values.
    let mut store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = NodeModel::build(
        &trained.config,
        trained.num_features,
        trained.num_classes,
        &mut store,
        &mut rng,
    )?;
    store.restore(&trained.store.snapshot())?;
    if store.len() != trained.store.len() {
        return Err(Error::invalid("checkpoint parameters do not match the architecture"));
    }
    let features = Rc::new(model.input_features(graph, mode)?);
    let logits = evaluate(&model, &store, &features, graph, mode, &mut rng)?;
    let labeled: Vec<usize> = match graph.y() {
        Some(y) => rows.iter().copied().filter(|&r| y[r] >= 0).collect(),
        None => Vec::new(),
    };
    Ok(accuracy(&logits, &node_labels(graph)?, &labeled))
}
