//! `seggraph`: train and evaluate graph neural networks from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use seggraph::datasets::{
    check_converted, data_root, fetch_and_cache, load_node_dataset, FetchOptions, NeutralDataset,
};
use seggraph::train::{
    evaluate_graph_classifier, evaluate_node_classifier, load_checkpoint, mean_std, prepare_tu, save_checkpoint,
    train_graph_classifier, train_node_classifier, ConfigOverrides, ModelKind, TrainConfig,
};

#[derive(Parser, Debug)]
#[command(name = "seggraph", version, about = "Graph neural network training on COO graphs")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides this.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full-batch node classification on a neutral-layout dataset.
    TrainNode(TrainArgs),
    /// k-fold graph classification on a TU dataset.
    TrainGraph(TrainArgs),
    /// Accuracy of a saved checkpoint on one split.
    Evaluate(EvalArgs),
    /// Dataset maintenance.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    /// JSON file with TrainConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gcn, gat, sgc, appnp or mean_max_pool.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[arg(long)]
    dataset: Option<String>,
    /// Data root; defaults to $SEGGRAPH_DATA_DIR, then ./data.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Use the deterministic reduction kernels.
    #[arg(long)]
    deterministic: bool,
    /// Write the run report here as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Save trained parameters (manifest path; the blob gets `.bin`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Repeat node training with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    runs: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the dataset the checkpoint was trained on.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum DatasetCommand {
    /// Download the raw files of a known dataset.
    Fetch(FetchArgs),
    /// Validate a directory in the neutral node-dataset layout.
    ConvertCheck {
        /// Directory holding meta.json, x.csv, edges.csv, y.csv and split.json.
        dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct FetchArgs {
    /// cora, citeseer, pubmed, proteins, nci1 or nci109.
    name: String,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Download from here instead of the built-in location.
    #[arg(long)]
    url: Option<String>,
    /// Expected hex SHA-256 of the download.
    #[arg(long)]
    sha256: Option<String>,
    /// Only use files already on disk.
    #[arg(long)]
    offline: bool,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    ModelKind::parse(s).map_err(|e| e.to_string())
}

impl TrainArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            model: self.model,
            dataset: self.dataset.clone(),
            data_dir: self.data_dir.clone(),
            seed: self.seed,
            epochs: self.epochs,
            patience: self.patience,
            learning_rate: self.lr,
            hidden_dim: self.hidden,
            dropout: self.dropout,
            weight_decay: self.weight_decay,
            heads: self.heads,
            k: self.k,
            alpha: self.alpha,
            batch_size: self.batch_size,
            folds: self.folds,
            deterministic: self.deterministic.then_some(true),
            ..Default::default()
        }
    }

    /// Recipe, then config file, then flags.
    fn resolve(&self, default_model: Option<ModelKind>) -> Result<TrainConfig> {
        let file = match &self.config {
            Some(path) => ConfigOverrides::from_json_file(path)?,
            None => ConfigOverrides::default(),
        };
        let mut merged = file.merged(self.overrides());
        if merged.model.is_none() {
            merged.model = default_model;
        }
        Ok(merged.resolve()?)
    }
}

fn write_json(path: &Path, value: serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(&value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

/// `dir/model.json` with tag "fold" and index 3 becomes `dir/model-fold3.json`.
fn indexed_path(path: &Path, tag: &str, index: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("json");
    path.with_file_name(format!("{stem}-{tag}{index}.{ext}"))
}

fn train_node(args: &TrainArgs) -> Result<()> {
    let base = args.resolve(None)?;
    if !base.model.is_node_model() {
        bail!("{:?} is a graph classifier; use train-graph", base.model);
    }
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let mut reports = Vec::with_capacity(args.runs);
    for run in 0..args.runs {
        let mut config = base.clone();
        config.seed = base.seed.wrapping_add(run as u64);
        let (report, trained) = train_node_classifier(&config)?;
        println!(
            "seed {}: test accuracy {:.4} (best epoch {}, {} epochs, {:.1} s)",
            report.seed, report.test_accuracy, report.best_epoch, report.epochs_run, report.wall_seconds
        );
        if let Some(path) = &args.checkpoint {
            let path = if args.runs == 1 {
                path.clone()
            } else {
                indexed_path(path, "run", run)
            };
            save_checkpoint(&path, &trained)?;
        }
        reports.push(report);
    }
    if args.runs > 1 {
        let accs: Vec<f64> = reports.iter().map(|r| r.test_accuracy).collect();
        let (mean, std) = mean_std(&accs);
        println!("mean test accuracy {mean:.4} ± {std:.4} over {} runs", args.runs);
        if let Some(out) = &args.out {
            write_json(
                out,
                json!({ "mean_accuracy": mean, "std_accuracy": std, "runs": reports }),
            )?;
        }
    } else if let Some(out) = &args.out {
        write_json(out, serde_json::to_value(&reports[0])?)?;
    }
    Ok(())
}

fn train_graph(args: &TrainArgs) -> Result<()> {
    let config = args.resolve(Some(ModelKind::MeanMaxPool))?;
    if config.model.is_node_model() {
        bail!("{:?} is a node classifier; use train-node", config.model);
    }
    let (summary, models) = train_graph_classifier(&config)?;
    for (i, fold) in summary.folds.iter().enumerate() {
        println!(
            "fold {i}: test accuracy {:.4} (best epoch {})",
            fold.test_accuracy, fold.best_epoch
        );
    }
    println!(
        "mean test accuracy {:.4} ± {:.4} over {} folds",
        summary.mean_accuracy,
        summary.std_accuracy,
        summary.folds.len()
    );
    if let Some(path) = &args.checkpoint {
        for (i, model) in models.iter().enumerate() {
            save_checkpoint(&indexed_path(path, "fold", i), model)?;
        }
    }
    if let Some(out) = &args.out {
        write_json(out, serde_json::to_value(&summary)?)?;
    }
    Ok(())
}

fn evaluate(args: &EvalArgs) -> Result<()> {
    let trained = load_checkpoint(&args.checkpoint)?;
    let name = args.dataset.clone().unwrap_or_else(|| trained.config.dataset.clone());
    let root = data_root(args.data_dir.as_deref().or(trained.config.data_dir.as_deref()));
    let accuracy = if trained.config.model.is_node_model() {
        let dataset = load_node_dataset(&root, &name)?;
        let rows = match args.split {
            Split::Train => &dataset.split.train,
            Split::Val => &dataset.split.val,
            Split::Test => &dataset.split.test,
        };
        evaluate_node_classifier(&trained, &dataset, rows)?
    } else {
        let split = trained
            .graph_split
            .as_ref()
            .context("graph checkpoint has no fold split")?;
        let rows = match args.split {
            Split::Train => &split.train,
            Split::Val => &split.val,
            Split::Test => &split.test,
        };
        let dataset = prepare_tu(&root, &name)?;
        evaluate_graph_classifier(&trained, &dataset.graphs, rows)?
    };
    let split = format!("{:?}", args.split).to_lowercase();
    println!("{name} {split} accuracy {accuracy:.4}");
    if let Some(out) = &args.out {
        write_json(out, json!({ "dataset": name, "split": split, "accuracy": accuracy }))?;
    }
    Ok(())
}

fn fetch(args: &FetchArgs) -> Result<()> {
    let root = data_root(args.data_dir.as_deref());
    let (urls, dest) = match &args.url {
        Some(url) => (vec![url.clone()], root.clone()),
        None => {
            let known = NeutralDataset::builtin(&root, &args.name)
                .with_context(|| format!("unknown dataset {:?}; pass --url", args.name))?;
            known.downloads()
        }
    };
    if args.sha256.is_some() && urls.len() > 1 {
        bail!("--sha256 needs a single download; pass --url as well");
    }
    let options = FetchOptions {
        offline: args.offline,
        ..Default::default()
    };
    for url in &urls {
        let path = fetch_and_cache(url, &dest, args.sha256.as_deref(), options)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn convert_check(dir: &Path) -> Result<()> {
    let data = check_converted(dir)?;
    let summary = json!({
        "name": data.meta.name,
        "num_nodes": data.meta.num_nodes,
        "num_features": data.meta.num_features,
        "num_classes": data.meta.num_classes,
        "num_edges": data.edges.len(),
        "train": data.split.train.len(),
        "val": data.split.val.len(),
        "test": data.split.test.len(),
    });
    println!("{summary}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::TrainNode(args) => train_node(args),
        Command::TrainGraph(args) => train_graph(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Dataset(DatasetCommand::Fetch(args)) => fetch(args),
        Command::Dataset(DatasetCommand::ConvertCheck { dir }) => convert_check(dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
