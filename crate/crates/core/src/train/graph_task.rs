//! Mini-batched graph classification with stratified k-fold evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{accuracy, mean_std, EarlyStopping, EpochRecord, ModelKind, RunReport, TrainConfig, TrainedModel};
use crate::datasets::{data_root, degree_onehot_features, load_tu_dataset, DegreeFeatureMode, SplitSpec, TuDataset};
use crate::error::{Error, Result};
use crate::graph::{combine_graphs, BatchGraph, Graph, NormConfig};
use crate::layers::{mean_max_pool, Activation, Dense, GcnLayer};
use crate::tensor::optim::Adam;
use crate::tensor::{Element, ExecMode, ParameterStore, Tape, Tensor, Var};

/// Two GCN layers, `[mean ‖ max]` pooling per graph, then a linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphModel {
    pub gcn0: GcnLayer,
    pub gcn1: GcnLayer,
    pub classifier: Dense,
    pub dropout: f64,
}

impl GraphModel {
    pub fn build<T: Element, R: Rng + ?Sized>(
        config: &TrainConfig,
        in_dim: usize,
        num_classes: usize,
        store: &mut ParameterStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        if config.model != ModelKind::MeanMaxPool {
            return Err(Error::invalid(format!(
                "{:?} is a node classifier; use train-node",
                config.model
            )));
        }
        let hid = config.hidden_dim;
        let norm = NormConfig {
            renorm: true,
            improved_fill: config.improved_fill,
        };
        let mut gcn0 = GcnLayer::build(store, "gcn0", in_dim, hid, Some(Activation::Relu), rng)?;
        let mut gcn1 = GcnLayer::build(store, "gcn1", hid, hid, Some(Activation::Relu), rng)?;
        gcn0.norm = norm;
        gcn1.norm = norm;
        Ok(Self {
            gcn0,
            gcn1,
            classifier: Dense::build(store, "classifier", 2 * hid, num_classes, true, rng)?,
            dropout: config.dropout,
        })
    }

    /// Logits, one row per graph of the batch.
    pub fn forward<'t, T: Element, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape<T>,
        store: &ParameterStore<T>,
        batch: &BatchGraph<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t, T>> {
        let graph = batch.graph();
        let x = tape.constant(graph.x().clone());
        let h = self.gcn0.forward(tape, store, &x, graph)?;
        let h = self.gcn1.forward(tape, store, &h, graph)?;
        let pooled = mean_max_pool(&h, batch.node_graph_index(), batch.num_graphs())?;
        let pooled = pooled.dropout(self.dropout, training, rng)?;
        self.classifier.forward(tape, store, &pooled)
    }
}

/// Per-fold reports and their aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphRunSummary {
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub folds: Vec<RunReport>,
}

/// Splits `0..labels.len()` into `k` folds with every class spread as
/// evenly as possible. Deterministic in `seed`.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || labels.len() < k {
        return Err(Error::invalid(format!(
            "cannot split {} graphs into {k} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn graph_labels(graphs: &[Graph<f32>]) -> Result<Vec<usize>> {
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| match g.y() {
            Some([label]) if *label >= 0 => Ok(*label as usize),
            _ => Err(Error::invalid(format!("graph {i} has no single class label"))),
        })
        .collect()
}

fn batch_of(graphs: &[Graph<f32>], indices: &[usize]) -> Result<BatchGraph<f32>> {
    let members: Vec<&Graph<f32>> = indices.iter().map(|&i| &graphs[i]).collect();
    combine_graphs(&members)
}

/// Logits for the graphs in `indices`, evaluated in chunks.
fn predict(
    model: &GraphModel,
    store: &ParameterStore<f32>,
    graphs: &[Graph<f32>],
    indices: &[usize],
    batch_size: usize,
    mode: ExecMode,
) -> Result<Tensor<f32>> {
    let mut rows = Vec::new();
    let mut classes = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in indices.chunks(batch_size.max(1)) {
        let tape = Tape::with_mode(mode);
        let batch = batch_of(graphs, chunk)?;
        let logits = model.forward(&tape, store, &batch, false, &mut rng)?;
        classes = logits.value().cols();
        rows.extend_from_slice(logits.value().data());
    }
    Tensor::new(vec![indices.len(), classes], rows)
}

fn loss_and_accuracy(logits: &Tensor<f32>, labels: &[usize]) -> Result<(f64, f64)> {
    if labels.is_empty() {
        return Ok((0.0, 0.0));
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    let tape = Tape::<f32>::with_mode(ExecMode::Deterministic);
    let loss = tape.constant(logits.clone()).softmax_cross_entropy(labels, None)?;
    Ok((loss.value().item() as f64, accuracy(logits, labels, &all)))
}

fn train_fold(
    graphs: &[Graph<f32>],
    labels: &[usize],
    num_classes: usize,
    split: &SplitSpec,
    config: &TrainConfig,
    seed: u64,
) -> Result<(RunReport, TrainedModel)> {
    let start = Instant::now();
    let mode = ExecMode::from_deterministic(config.deterministic);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let in_dim = graphs[0].num_features();
    let model = GraphModel::build(config, in_dim, num_classes, &mut store, &mut rng)?;
    let adam = Adam::new(config.learning_rate)?.with_decay("*", config.weight_decay);
    let val_labels: Vec<usize> = split.val.iter().map(|&i| labels[i]).collect();

    let mut stopper = EarlyStopping::new(config.stopping, config.patience);
    let mut best = store.snapshot();
    let mut history = Vec::new();
    let mut order = split.train.clone();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            // A new batch graph is assembled at every step.
            let batch = batch_of(graphs, chunk)?;
            let chunk_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let tape = Tape::with_mode(mode);
            let logits = model.forward(&tape, &store, &batch, true, &mut rng)?;
            let loss = logits.softmax_cross_entropy(&chunk_labels, None)?;
            tape.backward_into(&loss, &mut store)?;
            adam.step(&mut store);
            total += loss.value().item() as f64 * chunk.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let logits = predict(&model, &store, graphs, &split.val, config.batch_size, mode)?;
        let (val_loss, val_acc) = loss_and_accuracy(&logits, &val_labels)?;
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
        num_features: in_dim,
        num_classes,
        store,
        graph_split: Some(split.clone()),
    };
    let test_accuracy = evaluate_graph_classifier(&trained, graphs, &split.test)?;
    let report = RunReport {
        test_accuracy,
        best_epoch: stopper.best_epoch(),
        epochs_run: history.len(),
        seed,
        wall_seconds: start.elapsed().as_secs_f64(),
        history,
        config: config.clone(),
    };
    Ok((report, trained))
}

/// Loads the configured TU dataset and runs k-fold cross-validation.
/// Datasets without node labels get one-hot degree features.
pub fn train_graph_classifier(config: &TrainConfig) -> Result<(GraphRunSummary, Vec<TrainedModel>)> {
    let root = data_root(config.data_dir.as_deref());
    let dataset = prepare_tu(&root, &config.dataset)?;
    train_graph_classifier_on(&dataset, config)
}

/// Loads a TU dataset with the features used for training.
pub fn prepare_tu(root: &std::path::Path, name: &str) -> Result<TuDataset> {
    let mut dataset = load_tu_dataset(root, name)?;
    let has_node_labels = root.join(name).join(format!("{name}_node_labels.txt")).exists();
    if !has_node_labels {
        dataset.graphs = degree_onehot_features(&dataset.graphs, None, DegreeFeatureMode::Replace)?;
    }
    Ok(dataset)
}

/// For fold `i`: fold `i` is the test set, one other fold drawn at random
/// is the validation set, the rest is training data.
pub fn train_graph_classifier_on(
    dataset: &TuDataset,
    config: &TrainConfig,
) -> Result<(GraphRunSummary, Vec<TrainedModel>)> {
    config.validate()?;
    let labels = graph_labels(&dataset.graphs)?;
    let folds = stratified_folds(&labels, config.folds, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_f01d);
    let mut reports = Vec::with_capacity(folds.len());
    let mut models = Vec::with_capacity(folds.len());
    for (i, test) in folds.iter().enumerate() {
        let mut val_fold = rng.random_range(0..folds.len() - 1);
        if val_fold >= i {
            val_fold += 1;
        }
        let train = (0..folds.len())
            .filter(|&f| f != i && f != val_fold)
            .flat_map(|f| folds[f].iter().copied())
            .collect();
        let split = SplitSpec {
            train,
            val: folds[val_fold].clone(),
            test: test.clone(),
        };
        let (report, model) = train_fold(
            &dataset.graphs,
            &labels,
            dataset.num_classes,
            &split,
            config,
            config.seed.wrapping_add(i as u64),
        )?;
        log::info!("fold {i}: test accuracy {:.4}", report.test_accuracy);
        reports.push(report);
        models.push(model);
    }
    let accs: Vec<f64> = reports.iter().map(|r| r.test_accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    Ok((
        GraphRunSummary {
            mean_accuracy,
            std_accuracy,
            folds: reports,
        },
        models,
    ))
}

/// Accuracy of a trained graph classifier on the graphs in `indices`.
pub fn evaluate_graph_classifier(trained: &TrainedModel, graphs: &[Graph<f32>], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let labels = graph_labels(graphs)?;
    if graphs[0].num_features() != trained.num_features {
        return Err(Error::invalid(format!(
            "model expects {} features, dataset has {}",
            trained.num_features,
            graphs[0].num_features()
        )));
    }
    let mut store = ParameterStore::new();
    let model = GraphModel::build(
        &trained.config,
        trained.num_features,
        trained.num_classes,
        &mut store,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    store.restore(&trained.store.snapshot())?;
    let mode = ExecMode::from_deterministic(trained.config.deterministic);
    let logits = predict(&model, &store, graphs, indices, trained.config.batch_size, mode)?;
    let selected: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
    let all: Vec<usize> = (0..indices.len()).collect();
    Ok(accuracy(&logits, &selected, &all))
}
