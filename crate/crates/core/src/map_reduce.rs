//! Edge-wise map, destination-keyed reduce.
//!
//! Messages flow from `src` to `dst`. Each edge produces one message row
//! from its endpoint features and weight, messages are reduced per
//! destination node, and an updater combines the result with the original
//! node features. Aggregating in the opposite direction is a matter of
//! swapping the index arrays at the call site.

use crate::error::{Error, Result};
use crate::tensor::{kernels, Element, Reducer, Tensor, Var};

/// Computes one message per edge from (source rows, destination rows, edge
/// weights). The destination rows are `None` unless the plan asks for them.
pub type Mapper<T> = Box<dyn for<'t> Fn(&Var<'t, T>, Option<&Var<'t, T>>, &Tensor<T>) -> Result<Var<'t, T>>>;

/// Combines the reduced messages with the original node features.
pub type Updater<T> = Box<dyn for<'t> Fn(&Var<'t, T>, &Var<'t, T>) -> Result<Var<'t, T>>>;

pub struct AggregationPlan<T: Element> {
    pub mapper: Mapper<T>,
    pub reducer: Reducer,
    pub updater: Updater<T>,
    /// Whether the mapper reads destination features.
    pub needs_destination: bool,
}

impl<T: Element> AggregationPlan<T> {
    pub fn new(
        mapper: impl for<'t> Fn(&Var<'t, T>, Option<&Var<'t, T>>, &Tensor<T>) -> Result<Var<'t, T>> + 'static,
        reducer: Reducer,
        updater: impl for<'t> Fn(&Var<'t, T>, &Var<'t, T>) -> Result<Var<'t, T>> + 'static,
    ) -> Self {
        Self {
            mapper: Box::new(mapper),
            reducer,
            updater: Box::new(updater),
            needs_destination: false,
        }
    }

    pub fn with_destination(mut self) -> Self {
        self.needs_destination = true;
        self
    }

    /// Messages are source rows scaled by edge weight; the reduced result is
    /// returned as is.
    pub fn weighted(reducer: Reducer) -> Self {
        Self::new(|src, _, w| src.mul_rows(w), reducer, |reduced, _| Ok(reduced.clone()))
    }
}

/// Runs `plan` over the edges `src[e] -> dst[e]` of a graph with `x.rows()`
/// nodes.
pub fn aggregate_neighbors<'t, T: Element>(
    x: &Var<'t, T>,
    src: &[usize],
    dst: &[usize],
    edge_weight: &Tensor<T>,
    plan: &AggregationPlan<T>,
) -> Result<Var<'t, T>> {
    if src.len() != dst.len() || edge_weight.shape() != [src.len()] {
        return Err(Error::invalid(format!(
            "aggregate_neighbors: {} sources, {} destinations, weight shape {:?}",
            src.len(),
            dst.len(),
            edge_weight.shape()
        )));
    }
    let n = x.value().rows();
    let from = x.gather_rows(src)?;
    let to = if plan.needs_destination {
        Some(x.gather_rows(dst)?)
    } else {
        crate::tensor::check_indices("aggregate_neighbors", dst, n)?;
        None
    };
    let messages = (plan.mapper)(&from, to.as_ref(), edge_weight)?;
    if messages.value().rows() != src.len() || messages.value().rank() != 2 {
        return Err(Error::invalid(format!(
            "mapper produced shape {:?} for {} edges",
            messages.shape(),
            src.len()
        )));
    }
    let reduced = messages.segment_reduce(dst, n, plan.reducer)?;
    (plan.updater)(&reduced, x)
}

/// Softmax over the rows that share a segment id, independently per column.
pub fn segment_softmax<'t, T: Element>(
    scores: &Var<'t, T>,
    segment_ids: &[usize],
    num_segments: usize,
) -> Result<Var<'t, T>> {
    scores.value().expect_rank("segment_softmax", 2)?;
    if segment_ids.len() != scores.value().rows() {
        return Err(Error::ShapeMismatch {
            op: "segment_softmax",
            lhs: scores.shape().to_vec(),
            rhs: vec![segment_ids.len()],
        });
    }
    crate::tensor::check_indices("segment_softmax", segment_ids, num_segments)?;
    let cols = scores.value().cols();
    // The shift cancels in the ratio, so it is treated as a constant.
    let (max, _) = kernels::segment_max(scores.value().data(), cols, segment_ids, num_segments);
    let par = scores.tape().mode().parallel();
    let shift = kernels::gather_rows(&max, cols, segment_ids, par);
    let shift = scores.tape().constant(Tensor::new(scores.shape().to_vec(), shift)?);
    let e = scores.sub(&shift)?.exp()?;
    let denom = e
        .segment_reduce(segment_ids, num_segments, Reducer::Sum)?
        .gather_rows(segment_ids)?;
    e.div(&denom)
}
