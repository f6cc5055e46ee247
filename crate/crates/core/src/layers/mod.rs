//! Graph neural network layers.
//!
//! Each model exists twice. The functional form takes every parameter as an
//! argument, so callers can substitute tensors freely between calls. The
//! stateful form owns a name prefix, registers its parameters in a
//! [`ParameterStore`](crate::tensor::ParameterStore) once, and on each call
//! fetches them and delegates to the functional form.

mod appnp;
mod gat;
mod gcn;
mod pool;
mod sgc;
mod stateful;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::EdgeSet;
use crate::map_reduce::{aggregate_neighbors, AggregationPlan};
use crate::tensor::{Element, Reducer, Var};

pub use appnp::{appnp, AppnpParams};
pub use gat::{gat, GatOptions, GatParams, HeadMode};
pub use gcn::{gcn, GcnParams};
pub use pool::mean_max_pool;
pub use sgc::{sgc, sgc_propagate};
pub use stateful::{AppnpLayer, Dense, GatLayer, GcnLayer, SgcLayer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
}

impl Activation {
    pub fn apply<'t, T: Element>(self, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        match self {
            Activation::Relu => x.relu(),
            Activation::Elu => x.elu(),
        }
    }
}

pub(crate) fn activate<'t, T: Element>(x: Var<'t, T>, activation: Option<Activation>) -> Result<Var<'t, T>> {
    match activation {
        Some(a) => a.apply(&x),
        None => Ok(x),
    }
}

pub(crate) fn add_bias<'t, T: Element>(x: Var<'t, T>, bias: Option<&Var<'t, T>>) -> Result<Var<'t, T>> {
    match bias {
        Some(b) => x.add(b),
        None => Ok(x),
    }
}

/// One hop of weighted-sum message passing over a precomputed edge set.
pub(crate) fn propagate<'t, T: Element>(x: &Var<'t, T>, edges: &EdgeSet<T>) -> Result<Var<'t, T>> {
    aggregate_neighbors(
        x,
        &edges.src,
        &edges.dst,
        &edges.weight,
        &AggregationPlan::weighted(Reducer::Sum),
    )
}
