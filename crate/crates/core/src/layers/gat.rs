use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{activate, add_bias, Activation};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::map_reduce::segment_softmax;
use crate::tensor::{Element, Reducer, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    Concat,
    Average,
}

#[derive(Clone, Debug)]
pub struct GatParams<'t, T: Element> {
    /// `d_in × (heads · d_head)`, head-major columns.
    pub kernel: Var<'t, T>,
    /// `heads × d_head`, scored against the receiving node.
    pub attn_self: Var<'t, T>,
    /// `heads × d_head`, scored against the sending node.
    pub attn_neighbor: Var<'t, T>,
    /// `heads · d_head` for concatenated heads, `d_head` when averaged.
    pub bias: Option<Var<'t, T>>,
    pub heads: usize,
    pub leaky_slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GatOptions {
    pub head_mode: HeadMode,
    pub activation: Option<Activation>,
    /// Dropout on the normalized attention coefficients.
    pub attention_dropout: f64,
    pub training: bool,
}

impl Default for GatOptions {
    fn default() -> Self {
        Self {
            head_mode: HeadMode::Concat,
            activation: None,
            attention_dropout: 0.0,
            training: false,
        }
    }
}

/// Multi-head additive attention over in-edges plus one self-loop per node.
/// Edge weights of `graph` are ignored.
///
/// For an edge `j → i` and head `k` the score is
/// `leaky_relu(⟨attn_neighbor_k, h_j⟩ + ⟨attn_self_k, h_i⟩)` with
/// `h = x · kernel`; scores are normalized over the in-edges of `i`.
pub fn gat<'t, T: Element, R: Rng + ?Sized>(
    x: &Var<'t, T>,
    graph: &Graph<T>,
    params: &GatParams<'t, T>,
    options: GatOptions,
    rng: &mut R,
) -> Result<Var<'t, T>> {
    let heads = params.heads;
    let width = params.kernel.shape().get(1).copied().unwrap_or(0);
    if heads == 0 || width % heads != 0 {
        return Err(Error::invalid(format!(
            "GAT kernel width {width} is not divisible by {heads} heads"
        )));
    }
    let head_dim = width / heads;
    for (name, a) in [
        ("attn_self", &params.attn_self),
        ("attn_neighbor", &params.attn_neighbor),
    ] {
        if a.shape() != [heads, head_dim] {
            return Err(Error::invalid(format!(
                "GAT {name} has shape {:?}, expected [{heads}, {head_dim}]",
                a.shape()
            )));
        }
    }
    let edges = graph.self_loop_edges(1.0)?;
    let n = graph.num_nodes();

    let h = x.matmul(&params.kernel)?;
    let from_neighbor = h.head_dot(&params.attn_neighbor)?.gather_rows(&edges.src)?;
    let from_self = h.head_dot(&params.attn_self)?.gather_rows(&edges.dst)?;
    let scores = from_neighbor.add(&from_self)?.leaky_relu(params.leaky_slope)?;
    let alpha = segment_softmax(&scores, &edges.dst, n)?;
    let alpha = alpha.dropout(options.attention_dropout, options.training, rng)?;
    let messages = h.gather_rows(&edges.src)?.mul_heads(&alpha)?;
    let mut out = messages.segment_reduce(&edges.dst, n, Reducer::Sum)?;
    if options.head_mode == HeadMode::Average {
        out = out.head_mean(heads)?;
    }
    activate(add_bias(out, params.bias.as_ref())?, options.activation)
}
