//! Symmetric degree normalization of edge weights, cached per graph.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{with_self_loops, EdgeSet, Graph};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    /// Add self-loops before normalizing.
    pub renorm: bool,
    /// Weight of the added self-loops.
    pub improved_fill: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            renorm: true,
            improved_fill: 1.0,
        }
    }
}

/// Canonical cache key. `{:?}` prints the shortest string that round-trips
/// the f64, so distinct fills never share a key.
pub fn gcn_norm_cache_key(config: NormConfig) -> String {
    format!("gcn_norm:renorm={}:fill={:?}", config.renorm, config.improved_fill)
}

/// Edge list with weights `w_ij / sqrt(d_i d_j)`, where `d` is the weighted
/// in-degree (sum over incoming edges, self-loops included). Nodes of degree
/// zero contribute zero. The result is stored in the graph's cache; later
/// calls with the same configuration return the stored value.
pub fn gcn_norm_edge<T: Element>(graph: &Graph<T>, config: NormConfig) -> Result<Arc<EdgeSet<T>>> {
    let key = gcn_norm_cache_key(config);
    graph.cache().get_or_compute(&key, || {
        if let Some(pos) = graph.edge_weight().data().iter().position(|&w| w < T::zero()) {
            return Err(Error::invalid(format!(
                "gcn normalization needs nonnegative edge weights; edge {pos} has {}",
                graph.edge_weight().data()[pos]
            )));
        }
        if config.renorm && (config.improved_fill.is_nan() || config.improved_fill < 0.0) {
            return Err(Error::invalid(format!(
                "self-loop fill must be nonnegative, got {}",
                config.improved_fill
            )));
        }
        let n = graph.num_nodes();
        let (src, dst, w) = if config.renorm {
            with_self_loops(
                n,
                graph.src(),
                graph.dst(),
                graph.edge_weight().data(),
                config.improved_fill,
            )
        } else {
            (
                graph.src().to_vec(),
                graph.dst().to_vec(),
                graph.edge_weight().data().to_vec(),
            )
        };
        let mut deg = vec![T::zero(); n];
        for (&d, &wi) in dst.iter().zip(&w) {
            deg[d] = deg[d] + wi;
        }
        let inv_sqrt: Vec<T> = deg
            .iter()
            .map(|&d| if d > T::zero() { T::one() / d.sqrt() } else { T::zero() })
            .collect();
        let weight = src
            .iter()
            .zip(&dst)
            .zip(&w)
            .map(|((&s, &d), &wi)| wi * inv_sqrt[s] * inv_sqrt[d])
            .collect();
        Ok(EdgeSet {
            src,
            dst,
            weight: Tensor::vector(weight),
        })
    })
}
