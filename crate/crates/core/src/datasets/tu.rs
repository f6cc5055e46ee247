//! Reader for the TU graph-benchmark text layout.
//!
//! `<root>/<NAME>/` holds `NAME_A.txt` (1-based `i, j` edge lines over all
//! graphs), `NAME_graph_indicator.txt` (graph id of node `i` on line `i`),
//! `NAME_graph_labels.txt` (one label per graph) and optionally
//! `NAME_node_labels.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct TuDataset {
    pub name: String,
    /// Each graph carries its class id as a one-element label.
    pub graphs: Vec<Graph<f32>>,
    pub num_classes: usize,
}

impl TuDataset {
    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.y().map_or(0, |y| y[0] as usize)).collect()
    }
}

fn read_ints(path: &Path) -> Result<Vec<Vec<i64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            line.split(',')
                .map(|f| {
                    f.trim().parse::<i64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("not an integer: {f:?}"),
                    })
                })
                .collect()
        })
        .collect()
}

fn read_column(path: &Path) -> Result<Vec<i64>> {
    read_ints(path)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| match row.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected one value".into(),
            }),
        })
        .collect()
}

/// Loads every graph of a TU dataset. Edges are made symmetric and
/// deduplicated. Node labels, when present, become one-hot features;
/// otherwise every node gets the single feature 1.
pub fn load_tu_dataset(root: &Path, name: &str) -> Result<TuDataset> {
    let dir = root.join(name);
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));

    let indicator = read_column(&file("graph_indicator"))?;
    let graph_labels = read_column(&file("graph_labels"))?;
    let num_graphs = graph_labels.len();
    let num_nodes = indicator.len();

    // Graph ids are 1-based and nodes of one graph are contiguous.
    let mut graph_of = Vec::with_capacity(num_nodes);
    let mut counts = vec![0usize; num_graphs];
    for (i, &g) in indicator.iter().enumerate() {
        if g < 1 || g as usize > num_graphs {
            return Err(Error::Parse {
                path: file("graph_indicator"),
                line: i + 1,
                message: format!("graph id {g} outside 1..={num_graphs}"),
            });
        }
        let g = g as usize - 1;
        if let Some(&prev) = graph_of.last() {
            if g < prev {
                return Err(Error::Parse {
                    path: file("graph_indicator"),
                    line: i + 1,
                    message: "graph ids must be nondecreasing".into(),
                });
            }
        }
        graph_of.push(g);
        counts[g] += 1;
    }
    let mut offsets = vec![0usize; num_graphs];
    for g in 1..num_graphs {
        offsets[g] = offsets[g - 1] + counts[g - 1];
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    let a_path = file("A");
    for (i, row) in read_ints(&a_path)?.into_iter().enumerate() {
        let (s, t) = match row.as_slice() {
            [s, t] if *s >= 1 && *t >= 1 && (*s as usize) <= num_nodes && (*t as usize) <= num_nodes => {
                (*s as usize - 1, *t as usize - 1)
            }
            _ => {
                return Err(Error::Parse {
                    path: a_path.clone(),
                    line: i + 1,
                    message: format!("expected two node ids in 1..={num_nodes}, got {row:?}"),
                })
            }
        };
        let g = graph_of[s];
        if graph_of[t] != g {
            return Err(Error::Parse {
                path: a_path.clone(),
                line: i + 1,
                message: format!("edge joins graphs {} and {}", g + 1, graph_of[t] + 1),
            });
        }
        edges[g].push((s - offsets[g], t - offsets[g]));
    }

    let node_labels_path = file("node_labels");
    let node_labels = if node_labels_path.exists() {
        let labels = read_column(&node_labels_path)?;
        if labels.len() != num_nodes {
            return Err(Error::dataset(
                &node_labels_path,
                format!("{} node labels for {num_nodes} nodes", labels.len()),
            ));
        }
        Some(labels)
    } else {
        None
    };
    let feature_ids: BTreeMap<i64, usize> = node_labels
        .iter()
        .flatten()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let class_ids: BTreeMap<i64, usize> = graph_labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();

    let dim = feature_ids.len().max(1);
    let graphs = (0..num_graphs)
        .map(|g| {
            let n = counts[g];
            let mut x = vec![0f32; n * dim];
            for local in 0..n {
                let col = node_labels.as_ref().map_or(0, |l| feature_ids[&l[offsets[g] + local]]);
                x[local * dim + col] = 1.0;
            }
            let x = Tensor::new(vec![n, dim], x)?;
            let edges = super::symmetrize(&edges[g]);
            Graph::new(x, &edges, None)?.with_labels(vec![class_ids[&graph_labels[g]] as i64])
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TuDataset {
        name: name.to_string(),
        graphs,
        num_classes: class_ids.len(),
    })
}
