//! COO graphs and disjoint-union batches.
//!
//! A [`Graph`] stores node features, a directed edge list and per-edge
//! weights. Undirected graphs carry both directions of every edge. A
//! [`BatchGraph`] is the disjoint union of several graphs with node indices
//! shifted by the node count of the graphs before them, plus the owning
//! graph of each node.

mod cache;
mod norm;

use std::borrow::Borrow;

use crate::error::{Error, Result};
use crate::tensor::{concat_rows, Element, Tensor, Var};

pub use cache::{EdgeSet, GraphCache};
pub use norm::{gcn_norm_cache_key, gcn_norm_edge, NormConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
}

#[derive(Clone, Debug)]
pub struct Graph<T: Element> {
    x: Tensor<T>,
    src: Vec<usize>,
    dst: Vec<usize>,
    edge_weight: Tensor<T>,
    y: Option<Vec<i64>>,
    cache: GraphCache<T>,
}

impl<T: Element> PartialEq for Graph<T> {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x
            && self.src == other.src
            && self.dst == other.dst
            && self.edge_weight == other.edge_weight
            && self.y == other.y
    }
}

impl<T: Element> Graph<T> {
    /// `edges` are `(source, destination)` pairs. Missing weights default to 1.
    pub fn new(x: Tensor<T>, edges: &[(usize, usize)], edge_weight: Option<Tensor<T>>) -> Result<Self> {
        let (src, dst) = edges.iter().copied().unzip();
        Self::from_coo(x, src, dst, edge_weight)
    }

    pub fn from_coo(x: Tensor<T>, src: Vec<usize>, dst: Vec<usize>, edge_weight: Option<Tensor<T>>) -> Result<Self> {
        x.expect_rank("Graph", 2)?;
        let n = x.rows();
        if src.len() != dst.len() {
            return Err(Error::invalid(format!(
                "edge index rows differ in length: {} sources, {} destinations",
                src.len(),
                dst.len()
            )));
        }
        crate::tensor::check_indices("Graph source", &src, n)?;
        crate::tensor::check_indices("Graph destination", &dst, n)?;
        let edge_weight = edge_weight.unwrap_or_else(|| Tensor::ones(vec![src.len()]));
        if edge_weight.shape() != [src.len()] {
            return Err(Error::ShapeMismatch {
                op: "Graph edge weights",
                lhs: vec![src.len()],
                rhs: edge_weight.shape().to_vec(),
            });
        }
        Ok(Self {
            x,
            src,
            dst,
            edge_weight,
            y: None,
            cache: GraphCache::default(),
        })
    }

    /// Attaches labels: one per node for node tasks, one in total for a
    /// graph label.
    pub fn with_labels(mut self, y: Vec<i64>) -> Result<Self> {
        if y.len() != self.num_nodes() && y.len() != 1 {
            return Err(Error::invalid(format!(
                "{} labels for a graph with {} nodes",
                y.len(),
                self.num_nodes()
            )));
        }
        self.y = Some(y);
        Ok(self)
    }

    /// Replaces the node features. The structure and therefore the cache are
    /// kept.
    pub fn with_features(&self, x: Tensor<T>) -> Result<Self> {
        x.expect_rank("Graph::with_features", 2)?;
        if x.rows() != self.num_nodes() {
            return Err(Error::ShapeMismatch {
                op: "Graph::with_features",
                lhs: self.x.shape().to_vec(),
                rhs: x.shape().to_vec(),
            });
        }
        Ok(Self { x, ..self.clone() })
    }

    pub fn x(&self) -> &Tensor<T> {
        &self.x
    }

    pub fn src(&self) -> &[usize] {
        &self.src
    }

    pub fn dst(&self) -> &[usize] {
        &self.dst
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }

    pub fn edge_weight(&self) -> &Tensor<T> {
        &self.edge_weight
    }

    pub fn y(&self) -> Option<&[i64]> {
        self.y.as_deref()
    }

    pub fn cache(&self) -> &GraphCache<T> {
        &self.cache
    }

    pub fn num_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    /// Edge set of this graph with self-loops added where missing, cached
    /// under a key derived from `fill`.
    pub(crate) fn self_loop_edges(&self, fill: f64) -> Result<std::sync::Arc<EdgeSet<T>>> {
        let key = format!("self_loops:fill={fill:?}");
        self.cache.get_or_compute(&key, || {
            let (src, dst, w) = with_self_loops(self.num_nodes(), &self.src, &self.dst, self.edge_weight.data(), fill);
            Ok(EdgeSet {
                src,
                dst,
                weight: Tensor::vector(w),
            })
        })
    }
}

pub(crate) fn with_self_loops<T: Element>(
    n: usize,
    src: &[usize],
    dst: &[usize],
    weight: &[T],
    fill: f64,
) -> (Vec<usize>, Vec<usize>, Vec<T>) {
    let mut has_loop = vec![false; n];
    for (&s, &d) in src.iter().zip(dst) {
        if s == d {
            has_loop[s] = true;
        }
    }
    let (mut src, mut dst, mut weight) = (src.to_vec(), dst.to_vec(), weight.to_vec());
    for i in (0..n).filter(|&i| !has_loop[i]) {
        src.push(i);
        dst.push(i);
        weight.push(T::from_f64_lossy(fill));
    }
    (src, dst, weight)
}

/// Adds an `(i, i, fill)` edge for every node without a self-loop. Existing
/// edges keep their order and come first.
pub fn add_self_loops<T: Element>(graph: &Graph<T>, fill: f64) -> Graph<T> {
    let (src, dst, w) = with_self_loops(
        graph.num_nodes(),
        &graph.src,
        &graph.dst,
        graph.edge_weight.data(),
        fill,
    );
    Graph {
        x: graph.x.clone(),
        src,
        dst,
        edge_weight: Tensor::vector(w),
        y: graph.y.clone(),
        cache: GraphCache::default(),
    }
}

/// Per-node edge counts, or weight sums when `weighted`.
pub fn degrees<T: Element>(graph: &Graph<T>, direction: Direction, weighted: bool) -> Tensor<T> {
    let keys = match direction {
        Direction::In => &graph.dst,
        Direction::Out => &graph.src,
    };
    let mut deg = vec![T::zero(); graph.num_nodes()];
    for (e, &k) in keys.iter().enumerate() {
        deg[k] = deg[k]
            + if weighted {
                graph.edge_weight.data()[e]
            } else {
                T::one()
            };
    }
    Tensor::vector(deg)
}

/// Disjoint union of graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGraph<T: Element> {
    graph: Graph<T>,
    node_graph_index: Vec<usize>,
    graph_node_offsets: Vec<usize>,
}

impl<T: Element> BatchGraph<T> {
    pub fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    pub fn node_graph_index(&self) -> &[usize] {
        &self.node_graph_index
    }

    pub fn num_graphs(&self) -> usize {
        self.graph_node_offsets.len()
    }

    /// First node index of each graph.
    pub fn graph_node_offsets(&self) -> &[usize] {
        &self.graph_node_offsets
    }

    /// Builds a batch from explicit parts. Only batches whose
    /// `node_graph_index` is nondecreasing can be split again.
    pub fn from_parts(graph: Graph<T>, node_graph_index: Vec<usize>, num_graphs: usize) -> Result<Self> {
        if node_graph_index.len() != graph.num_nodes() {
            return Err(Error::invalid(format!(
                "{} graph assignments for {} nodes",
                node_graph_index.len(),
                graph.num_nodes()
            )));
        }
        crate::tensor::check_indices("BatchGraph", &node_graph_index, num_graphs)?;
        if let Some((s, d)) = graph.edges().find(|&(s, d)| node_graph_index[s] != node_graph_index[d]) {
            return Err(Error::invalid(format!("edge ({s}, {d}) joins two graphs")));
        }
        let mut offsets = vec![usize::MAX; num_graphs];
        for (node, &g) in node_graph_index.iter().enumerate().rev() {
            offsets[g] = node;
        }
        // Empty graphs start where the next graph does.
        let mut next = node_graph_index.len();
        for o in offsets.iter_mut().rev() {
            if *o == usize::MAX {
                *o = next;
            }
            next = *o;
        }
        Ok(Self {
            graph,
            node_graph_index,
            graph_node_offsets: offsets,
        })
    }
}

/// Concatenates graphs into one batch, shifting each graph's node indices by
/// the total node count of the graphs before it.
pub fn combine_graphs<T: Element, G: Borrow<Graph<T>>>(graphs: &[G]) -> Result<BatchGraph<T>> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::invalid("combine_graphs needs at least one graph"))?
        .borrow();
    let d = first.num_features();
    let labelled = first.y.is_some();
    let total_nodes: usize = graphs.iter().map(|g| g.borrow().num_nodes()).sum();
    let total_edges: usize = graphs.iter().map(|g| g.borrow().num_edges()).sum();
    let mut x = Vec::with_capacity(total_nodes * d);
    let mut src = Vec::with_capacity(total_edges);
    let mut dst = Vec::with_capacity(total_edges);
    let mut weight = Vec::with_capacity(total_edges);
    let mut y = labelled.then(Vec::new);
    let mut node_graph_index = Vec::with_capacity(total_nodes);
    let mut offsets = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for (i, g) in graphs.iter().enumerate() {
        let g = g.borrow();
        if g.num_features() != d {
            return Err(Error::ShapeMismatch {
                op: "combine_graphs",
                lhs: first.x.shape().to_vec(),
                rhs: g.x.shape().to_vec(),
            });
        }
        if g.y.is_some() != labelled {
            return Err(Error::invalid(
                "combine_graphs: some graphs have labels and some do not",
            ));
        }
        x.extend_from_slice(g.x.data());
        src.extend(g.src.iter().map(|s| s + offset));
        dst.extend(g.dst.iter().map(|t| t + offset));
        weight.extend_from_slice(g.edge_weight.data());
        if let (Some(all), Some(gy)) = (y.as_mut(), g.y.as_ref()) {
            all.extend_from_slice(gy);
        }
        node_graph_index.extend(std::iter::repeat_n(i, g.num_nodes()));
        offsets.push(offset);
        offset += g.num_nodes();
    }
    let graph = Graph {
        x: Tensor::new(vec![total_nodes, d], x)?,
        src,
        dst,
        edge_weight: Tensor::vector(weight),
        y,
        cache: GraphCache::default(),
    };
    Ok(BatchGraph {
        graph,
        node_graph_index,
        graph_node_offsets: offsets,
    })
}

/// Differentiable counterpart of the feature concatenation in
/// [`combine_graphs`]: stacks per-graph feature variables in order so
/// gradients on the batch reach each input graph.
pub fn combine_features<'t, T: Element>(parts: &[&Var<'t, T>]) -> Result<Var<'t, T>> {
    concat_rows(parts)
}

/// Inverse of [`combine_graphs`].
pub fn split_batch<T: Element>(batch: &BatchGraph<T>) -> Result<Vec<Graph<T>>> {
    let ngi = &batch.node_graph_index;
    if let Some(w) = ngi.windows(2).position(|w| w[0] > w[1]) {
        return Err(Error::invalid(format!(
            "node_graph_index decreases at node {}; only combined batches can be split",
            w + 1
        )));
    }
    let g = &batch.graph;
    let d = g.num_features();
    let num_graphs = batch.num_graphs();
    let mut bounds = batch.graph_node_offsets.clone();
    bounds.push(g.num_nodes());

    let mut edges_of: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    for (e, &s) in g.src.iter().enumerate() {
        edges_of[ngi[s]].push(e);
    }
    let graph_labels =
        g.y.as_ref()
            .is_some_and(|y| y.len() == num_graphs && y.len() != g.num_nodes());
    (0..num_graphs)
        .map(|i| {
            let (lo, hi) = (bounds[i], bounds[i + 1]);
            let x = Tensor::new(vec![hi - lo, d], g.x.data()[lo * d..hi * d].to_vec())?;
            let edges = &edges_of[i];
            let src = edges.iter().map(|&e| g.src[e] - lo).collect();
            let dst = edges.iter().map(|&e| g.dst[e] - lo).collect();
            let w = Tensor::vector(edges.iter().map(|&e| g.edge_weight.data()[e]).collect());
            let mut out = Graph::from_coo(x, src, dst, Some(w))?;
            out.y =
                g.y.as_ref()
                    .map(|y| if graph_labels { vec![y[i]] } else { y[lo..hi].to_vec() });
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize, d: usize, base: f64) -> Graph<f64> {
        let x = Tensor::new(vec![n, d], (0..n * d).map(|v| base + v as f64).collect()).unwrap();
        let edges: Vec<_> = (1..n).flat_map(|i| [(i - 1, i), (i, i - 1)]).collect();
        Graph::new(x, &edges, None).unwrap()
    }

    #[test]
    fn offsets_follow_node_counts() {
        let gs = [path(4, 2, 0.0), path(2, 2, 10.0), path(3, 2, 20.0)];
        let b = combine_graphs(&gs).unwrap();
        assert_eq!(b.graph_node_offsets(), &[0, 4, 6]);
        assert_eq!(b.node_graph_index(), &[0, 0, 0, 0, 1, 1, 2, 2, 2]);
        // Edge (0, 1) of the second graph becomes (4, 5).
        assert!(b.graph().edges().any(|e| e == (4, 5)));
        assert!(b.graph().edges().any(|e| e == (8, 7)));
    }

    #[test]
    fn combine_rejects_mismatched_features() {
        assert!(combine_graphs(&[path(2, 2, 0.0), path(2, 3, 0.0)]).is_err());
        assert!(combine_graphs::<f64, Graph<f64>>(&[]).is_err());
    }

    #[test]
    fn split_round_trip_with_graph_labels() {
        let gs = vec![
            path(3, 1, 0.0).with_labels(vec![1]).unwrap(),
            path(1, 1, 5.0).with_labels(vec![0]).unwrap(),
        ];
        let b = combine_graphs(&gs).unwrap();
        assert_eq!(split_batch(&b).unwrap(), gs);
    }

    #[test]
    fn split_rejects_unsorted_assignment() {
        let g = path(2, 1, 0.0);
        let b = BatchGraph::from_parts(Graph::new(g.x().clone(), &[], None).unwrap(), vec![1, 0], 2).unwrap();
        assert!(split_batch(&b).is_err());
    }

    #[test]
    fn from_parts_rejects_cross_edges() {
        let g = path(2, 1, 0.0);
        assert!(BatchGraph::from_parts(g, vec![0, 1], 2).is_err());
    }

    #[test]
    fn self_loops_only_where_missing() {
        let x = Tensor::<f64>::zeros(vec![3, 1]);
        let g = Graph::new(x, &[(0, 0), (0, 1)], None).unwrap();
        let looped = add_self_loops(&g, 2.0);
        assert_eq!(looped.edges().collect::<Vec<_>>(), vec![(0, 0), (0, 1), (1, 1), (2, 2)]);
        assert_eq!(looped.edge_weight().data(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(add_self_loops(&looped, 2.0), looped);
    }

    #[test]
    fn degree_directions() {
        let g = Graph::new(Tensor::<f64>::zeros(vec![3, 1]), &[(0, 1), (0, 2)], None).unwrap();
        assert_eq!(degrees(&g, Direction::Out, false).data(), &[2.0, 0.0, 0.0]);
        assert_eq!(degrees(&g, Direction::In, false).data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn invalid_edges_rejected() {
        let err = Graph::new(Tensor::<f32>::zeros(vec![2, 1]), &[(0, 2)], None).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { position: 0, .. }));
    }
}
