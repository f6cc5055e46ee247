//! Dataset loading, preprocessing and download.
//!
//! Node-classification datasets use the plain-text layout in [`neutral`].
//! The first load of `<root>/<name>` symmetrizes and deduplicates edges,
//! row-normalizes features and writes the result to
//! `<root>/.cache/<name>` in the same layout; later loads read that copy.
//! Graph-classification datasets use the TU text layout, see [`tu`].

mod features;
mod fetch;
pub mod neutral;
pub mod tu;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

pub use features::{degree_onehot_features, DegreeFeatureMode};
pub use fetch::{fetch_and_cache, sha256_file, FetchOptions};
pub use neutral::{check_converted, read_neutral, write_neutral, Meta, RawNodeData, SplitSpec};
pub use tu::{load_tu_dataset, TuDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    NodeClassification,
    GraphClassification,
}

const PLANETOID_SUFFIXES: [&str; 8] = ["x", "tx", "allx", "y", "ty", "ally", "graph", "test.index"];

/// A known dataset: where it lives on disk and where it can be fetched from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeutralDataset {
    pub root: PathBuf,
    pub name: String,
    pub kind: DatasetKind,
    /// Hex SHA-256 of the downloaded archive, when known.
    pub checksum: Option<String>,
    pub source_url: Option<String>,
}

impl NeutralDataset {
    /// The evaluated datasets. Node datasets come from the public
    /// citation-network split files and need the converter before loading;
    /// graph datasets come as ready-to-load TU archives.
    pub fn builtin(root: &Path, name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        let (kind, url) = match lower.as_str() {
            "cora" | "citeseer" | "pubmed" => (
                DatasetKind::NodeClassification,
                format!("https://github.com/kimiyoung/planetoid/raw/master/data/ind.{lower}.graph"),
            ),
            "proteins" | "nci1" | "nci109" => {
                let upper = lower.to_ascii_uppercase();
                (
                    DatasetKind::GraphClassification,
                    format!("https://www.chrsmrrs.com/graphkerneldatasets/{upper}.zip"),
                )
            }
            _ => return None,
        };
        let name = match kind {
            DatasetKind::NodeClassification => lower,
            DatasetKind::GraphClassification => lower.to_ascii_uppercase(),
        };
        Some(Self {
            root: root.to_path_buf(),
            name,
            kind,
            checksum: None,
            source_url: Some(url),
        })
    }

    pub fn dir(&self) -> PathBuf {
        self.root.join(&self.name)
    }

    /// Every file to download and the directory it goes to. Node datasets
    /// need all eight split files in `<dir>/raw`; TU archives unpack into
    /// their own folder under the root.
    pub fn downloads(&self) -> (Vec<String>, PathBuf) {
        let Some(url) = &self.source_url else {
            return (Vec::new(), self.dir());
        };
        match self.kind {
            DatasetKind::NodeClassification => {
                let base = url.strip_suffix(".graph").unwrap_or(url);
                let urls = PLANETOID_SUFFIXES.iter().map(|s| format!("{base}.{s}")).collect();
                (urls, self.dir().join("raw"))
            }
            DatasetKind::GraphClassification => (vec![url.clone()], self.root.clone()),
        }
    }
}

/// A loaded node-classification dataset.
#[derive(Clone, Debug)]
pub struct NodeDataset {
    pub name: String,
    /// Labels are attached; `-1` marks unlabeled nodes.
    pub graph: Graph<f32>,
    pub split: SplitSpec,
    pub num_classes: usize,
}

/// Symmetric, deduplicated, sorted edge list.
pub fn symmetrize(edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out: Vec<_> = edges.iter().flat_map(|&(s, t)| [(s, t), (t, s)]).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Scales every row with a positive sum to sum 1. Other rows are unchanged.
pub fn row_normalize(x: &mut [f32], cols: usize) {
    if cols == 0 {
        return;
    }
    for row in x.chunks_mut(cols) {
        let sum: f64 = row.iter().map(|&v| v as f64).sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v = (*v as f64 / sum) as f32);
        }
    }
}

fn preprocess(mut raw: RawNodeData) -> RawNodeData {
    raw.edges = symmetrize(&raw.edges);
    row_normalize(&mut raw.x, raw.meta.num_features);
    raw
}

/// Writes `data` to a sibling temporary directory and renames it into place,
/// so readers never observe a partial cache.
fn write_cache(dir: &Path, data: &RawNodeData) -> Result<()> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let staging = parent.join(format!(
        ".{}.tmp-{}",
        dir.file_name().and_then(|n| n.to_str()).unwrap_or("cache"),
        std::process::id()
    ));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    write_neutral(&staging, data)?;
    match fs::rename(&staging, dir) {
        Ok(()) => Ok(()),
        // Another process finished first; its copy is equivalent.
        Err(_) if dir.join("meta.json").exists() => {
            let _ = fs::remove_dir_all(&staging);
            Ok(())
        }
        Err(e) => Err(Error::io(dir, e)),
    }
}

/// Loads `<root>/<name>` in the neutral layout, using the processed cache
/// when present.
pub fn load_node_dataset(root: &Path, name: &str) -> Result<NodeDataset> {
    let cache = neutral::cache_dir(root, name);
    let data = if cache.join("meta.json").exists() {
        log::debug!("loading {name} from {}", cache.display());
        read_neutral(&cache)?
    } else {
        let source = root.join(name);
        if !source.join("meta.json").exists() {
            return Err(Error::dataset(
                &source,
                "no meta.json; convert the dataset into the neutral layout first",
            ));
        }
        let data = preprocess(read_neutral(&source)?);
        write_cache(&cache, &data)?;
        data
    };
    let RawNodeData {
        meta,
        x,
        edges,
        y,
        split,
    } = data;
    let x = Tensor::new(vec![meta.num_nodes, meta.num_features], x)?;
    let graph = Graph::new(x, &edges, None)?.with_labels(y)?;
    Ok(NodeDataset {
        name: meta.name,
        graph,
        split,
        num_classes: meta.num_classes,
    })
}

/// Resolves the data root: explicit path, then `SEGGRAPH_DATA_DIR`, then
/// `./data`.
pub fn data_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("SEGGRAPH_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> RawNodeData {
        RawNodeData {
            meta: Meta {
                name: "tiny".into(),
                num_nodes: 3,
                num_features: 2,
                num_classes: 2,
            },
            x: vec![1.0, 3.0, 0.0, 0.0, 0.5, 0.5],
            edges: vec![(1, 0), (0, 1), (2, 1)],
            y: vec![0, 1, 1],
            split: SplitSpec {
                train: vec![0],
                val: vec![1],
                test: vec![2],
            },
        }
    }

    #[test]
    fn symmetrize_dedups_and_sorts() {
        assert_eq!(
            symmetrize(&[(1, 0), (0, 1), (2, 1)]),
            vec![(0, 1), (1, 0), (1, 2), (2, 1)]
        );
    }

    #[test]
    fn zero_rows_stay_zero() {
        let mut x = vec![1.0, 3.0, 0.0, 0.0];
        row_normalize(&mut x, 2);
        assert_eq!(x, vec![0.25, 0.75, 0.0, 0.0]);
    }

    #[test]
    fn load_writes_and_reuses_cache() {
        let root = tempfile::tempdir().unwrap();
        write_neutral(&root.path().join("tiny"), &fixture()).unwrap();
        let first = load_node_dataset(root.path(), "tiny").unwrap();
        assert!(root.path().join(".cache/tiny/meta.json").exists());
        assert_eq!(first.graph.num_edges(), 4);
        assert_eq!(first.graph.x().data(), &[0.25, 0.75, 0.0, 0.0, 0.5, 0.5]);
        // The cache, not the source, is read the second time.
        fs::remove_dir_all(root.path().join("tiny")).unwrap();
        let second = load_node_dataset(root.path(), "tiny").unwrap();
        assert_eq!(first.graph, second.graph);
        assert_eq!(first.split, second.split);
    }

    #[test]
    fn node_downloads_list_all_split_files() {
        let ds = NeutralDataset::builtin(Path::new("d"), "Cora").unwrap();
        let (urls, dest) = ds.downloads();
        assert_eq!(urls.len(), 8);
        assert!(urls.iter().any(|u| u.ends_with("ind.cora.test.index")));
        assert_eq!(dest, Path::new("d/cora/raw"));
        let tu = NeutralDataset::builtin(Path::new("d"), "proteins").unwrap();
        assert_eq!(tu.downloads().1, Path::new("d"));
        assert!(NeutralDataset::builtin(Path::new("d"), "imdb").is_none());
    }

    #[test]
    fn missing_dataset_is_an_error() {
        let root = tempfile::tempdir().unwrap();
        assert!(load_node_dataset(root.path(), "nothing").is_err());
    }
}
