//! Row gathers and unsorted segment reductions, the two primitives every
//! message-passing layer is built from.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{kernels, Element, Tensor, Var};
use crate::error::{Error, Result};

/// How rows sharing a segment id are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    Sum,
    Mean,
    Max,
}

pub(crate) fn check_indices(op: &'static str, indices: &[usize], bound: usize) -> Result<()> {
    match indices.iter().position(|&i| i >= bound) {
        Some(position) => Err(Error::IndexOutOfRange {
            op,
            position,
            index: indices[position] as i64,
            bound,
        }),
        None => Ok(()),
    }
}

fn as_matrix<T: Element>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    t.expect_rank(op, 2)?;
    Ok((t.shape()[0], t.shape()[1]))
}

impl<'t, T: Element> Var<'t, T> {
    /// Row `i` of the result is row `indices[i]` of `self`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Var<'t, T>> {
        let (n, cols) = as_matrix("gather_rows", self.value())?;
        check_indices("gather_rows", indices, n)?;
        let par = self.mode().parallel();
        let out = kernels::gather_rows(self.value().data(), cols, indices, par);
        let out = Tensor::from_parts(vec![indices.len(), cols], out);
        let idx: Rc<[usize]> = indices.into();
        self.tape
            .record("gather_rows", Rc::new(out), &[self], move |g, _, mode| {
                let data = kernels::segment_sum(g.data(), cols, &idx, n, mode.parallel());
                vec![Some(Tensor::from_parts(vec![n, cols], data))]
            })
    }

    /// Combines rows of `self` into `num_segments` rows keyed by `ids`.
    /// Empty segments yield zero rows for every reducer.
    pub fn segment_reduce(&self, ids: &[usize], num_segments: usize, reducer: Reducer) -> Result<Var<'t, T>> {
        let (n, cols) = as_matrix("segment_reduce", self.value())?;
        if ids.len() != n {
            return Err(Error::ShapeMismatch {
                op: "segment_reduce",
                lhs: self.shape().to_vec(),
                rhs: vec![ids.len()],
            });
        }
        check_indices("segment_reduce", ids, num_segments)?;
        let par = self.mode().parallel();
        let data = self.value().data();
        let shape = vec![num_segments, cols];
        let ids: Rc<[usize]> = ids.into();
        match reducer {
            Reducer::Sum => {
                let out = kernels::segment_sum(data, cols, &ids, num_segments, par);
                self.tape.record(
                    "segment_sum",
                    Rc::new(Tensor::from_parts(shape, out)),
                    &[self],
                    move |g, _, mode| {
                        let back = kernels::gather_rows(g.data(), cols, &ids, mode.parallel());
                        vec![Some(Tensor::from_parts(vec![n, cols], back))]
                    },
                )
            }
            Reducer::Mean => {
                let counts = kernels::segment_counts(&ids, num_segments);
                let mut out = kernels::segment_sum(data, cols, &ids, num_segments, par);
                let inv: Vec<T> = counts
                    .iter()
                    .map(|&c| {
                        if c == 0 {
                            T::zero()
                        } else {
                            T::one() / T::from_usize(c).unwrap()
                        }
                    })
                    .collect();
                if cols > 0 {
                    for (row, &c) in out.chunks_mut(cols).zip(&counts) {
                        if c > 0 {
                            let c = T::from_usize(c).unwrap();
                            row.iter_mut().for_each(|v| *v = *v / c);
                        }
                    }
                }
                self.tape.record(
                    "segment_mean",
                    Rc::new(Tensor::from_parts(shape, out)),
                    &[self],
                    move |g, _, mode| {
                        let mut back = kernels::gather_rows(g.data(), cols, &ids, mode.parallel());
                        if cols > 0 {
                            for (row, &s) in back.chunks_mut(cols).zip(ids.iter()) {
                                row.iter_mut().for_each(|v| *v = *v * inv[s]);
                            }
                        }
                        vec![Some(Tensor::from_parts(vec![n, cols], back))]
                    },
                )
            }
            Reducer::Max => {
                let (out, arg) = kernels::segment_max(data, cols, &ids, num_segments);
                self.tape.record(
                    "segment_max",
                    Rc::new(Tensor::from_parts(shape, out)),
                    &[self],
                    move |g, _, _| {
                        let mut back = vec![T::zero(); n * cols];
                        for (cell, src) in arg.iter().enumerate() {
                            if let Some(r) = src {
                                let c = cell % cols;
                                back[r * cols + c] = back[r * cols + c] + g.data()[cell];
                            }
                        }
                        vec![Some(Tensor::from_parts(vec![n, cols], back))]
                    },
                )
            }
        }
    }
}

/// Non-differentiable segment reduction on plain tensors.
pub fn segment_reduce<T: Element>(
    data: &Tensor<T>,
    ids: &[usize],
    num_segments: usize,
    reducer: Reducer,
) -> Result<Tensor<T>> {
    let tape = super::Tape::with_mode(super::ExecMode::Deterministic);
    let v = tape.constant(data.clone());
    Ok(v.segment_reduce(ids, num_segments, reducer)?.value().clone())
}
