use super::{activate, add_bias, propagate, Activation};
use crate::error::Result;
use crate::graph::{gcn_norm_edge, Graph, NormConfig};
use crate::tensor::{Element, Var};

#[derive(Clone, Debug)]
pub struct GcnParams<'t, T: Element> {
    pub kernel: Var<'t, T>,
    pub bias: Option<Var<'t, T>>,
}

/// `activation(S · x · W + b)` where `S` holds the normalized edge weights
/// of `graph`, taken from its cache when available.
pub fn gcn<'t, T: Element>(
    x: &Var<'t, T>,
    graph: &Graph<T>,
    params: &GcnParams<'t, T>,
    activation: Option<Activation>,
    norm: NormConfig,
) -> Result<Var<'t, T>> {
    let edges = gcn_norm_edge(graph, norm)?;
    let h = x.matmul(&params.kernel)?;
    let h = propagate(&h, &edges)?;
    activate(add_bias(h, params.bias.as_ref())?, activation)
}
