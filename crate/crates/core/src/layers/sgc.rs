use super::propagate;
use crate::error::Result;
use crate::graph::{gcn_norm_edge, Graph, NormConfig};
use crate::tensor::{Element, Var};

/// `S^k · x`, with the same normalized weights as [`gcn`](super::gcn).
pub fn sgc_propagate<'t, T: Element>(
    x: &Var<'t, T>,
    graph: &Graph<T>,
    k: usize,
    norm: NormConfig,
) -> Result<Var<'t, T>> {
    let edges = gcn_norm_edge(graph, norm)?;
    let mut h = x.clone();
    for _ in 0..k {
        h = propagate(&h, &edges)?;
    }
    Ok(h)
}

/// `S^k · x · kernel`.
pub fn sgc<'t, T: Element>(
    x: &Var<'t, T>,
    graph: &Graph<T>,
    kernel: &Var<'t, T>,
    k: usize,
    norm: NormConfig,
) -> Result<Var<'t, T>> {
    sgc_propagate(x, graph, k, norm)?.matmul(kernel)
}
