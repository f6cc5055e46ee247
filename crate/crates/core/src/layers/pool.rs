use crate::error::Result;
use crate::tensor::{concat, Element, Reducer, Var};

/// Per-graph `[mean ‖ max]` of node rows, `num_graphs × 2d`.
pub fn mean_max_pool<'t, T: Element>(
    x: &Var<'t, T>,
    node_graph_index: &[usize],
    num_graphs: usize,
) -> Result<Var<'t, T>> {
    let mean = x.segment_reduce(node_graph_index, num_graphs, Reducer::Mean)?;
    let max = x.segment_reduce(node_graph_index, num_graphs, Reducer::Max)?;
    concat(&[&mean, &max])
}
