use rand::Rng;

use super::{add_bias, propagate};
use crate::error::{Error, Result};
use crate::graph::{gcn_norm_edge, Graph, NormConfig};
use crate::tensor::{Element, Var};

#[derive(Clone, Debug)]
pub struct AppnpParams<'t, T: Element> {
    /// `(kernel, bias)` per MLP layer, applied in order.
    pub layers: Vec<(Var<'t, T>, Option<Var<'t, T>>)>,
    /// Teleport probability in `(0, 1]`.
    pub alpha: f64,
    pub k: usize,
}

/// MLP prediction `H` (relu between layers, dropout before every kernel)
/// followed by `k` steps of `Z ← (1 − α)·S·Z + α·H` starting from `Z = H`.
pub fn appnp<'t, T: Element, R: Rng + ?Sized>(
    x: &Var<'t, T>,
    graph: &Graph<T>,
    params: &AppnpParams<'t, T>,
    dropout: f64,
    training: bool,
    rng: &mut R,
    norm: NormConfig,
) -> Result<Var<'t, T>> {
    if !(params.alpha > 0.0 && params.alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1], got {}",
            params.alpha
        )));
    }
    if params.layers.is_empty() {
        return Err(Error::invalid("APPNP needs at least one MLP layer"));
    }
    let mut h = x.clone();
    for (i, (kernel, bias)) in params.layers.iter().enumerate() {
        if i > 0 {
            h = h.relu()?;
        }
        h = h.dropout(dropout, training, rng)?;
        h = add_bias(h.matmul(kernel)?, bias.as_ref())?;
    }
    if params.k == 0 {
        return Ok(h);
    }
    let edges = gcn_norm_edge(graph, norm)?;
    let teleport = h.scale(params.alpha)?;
    let mut z = h;
    for _ in 0..params.k {
        z = propagate(&z, &edges)?.scale(1.0 - params.alpha)?.add(&teleport)?;
    }
    Ok(z)
}
