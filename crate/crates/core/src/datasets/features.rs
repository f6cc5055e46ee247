use crate::error::Result;
use crate::graph::Graph;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DegreeFeatureMode {
    /// Use the degree one-hot as the only features.
    Replace,
    /// Append the one-hot after the existing features.
    Append,
}

/// One-hot encodes each node's undirected degree, clipped to `max_degree`.
/// Without a cap the largest degree across `graphs` is used, so every graph
/// ends up with the same feature width.
///
/// Graphs are assumed to store both directions of each undirected edge, so
/// the degree is the number of distinct neighbors (self-loops excluded).
pub fn degree_onehot_features(
    graphs: &[Graph<f32>],
    max_degree: Option<usize>,
    mode: DegreeFeatureMode,
) -> Result<Vec<Graph<f32>>> {
    let degrees: Vec<Vec<usize>> = graphs.iter().map(undirected_degrees).collect();
    let cap = max_degree.unwrap_or_else(|| degrees.iter().flatten().copied().max().unwrap_or(0));
    let width = cap + 1;
    graphs
        .iter()
        .zip(&degrees)
        .map(|(g, deg)| {
            let n = g.num_nodes();
            let keep = match mode {
                DegreeFeatureMode::Replace => 0,
                DegreeFeatureMode::Append => g.num_features(),
            };
            let cols = keep + width;
            let mut x = vec![0f32; n * cols];
            for i in 0..n {
                let row = &mut x[i * cols..(i + 1) * cols];
                row[..keep].copy_from_slice(&g.x().row(i)[..keep]);
                row[keep + deg[i].min(cap)] = 1.0;
            }
            g.with_features(Tensor::new(vec![n, cols], x)?)
        })
        .collect()
}

fn undirected_degrees(g: &Graph<f32>) -> Vec<usize> {
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); g.num_nodes()];
    for (s, t) in g.edges().filter(|(s, t)| s != t) {
        neighbors[s].push(t);
        neighbors[t].push(s);
    }
    neighbors
        .into_iter()
        .map(|mut n| {
            n.sort_unstable();
            n.dedup();
            n.len()
        })
        .collect()
}
