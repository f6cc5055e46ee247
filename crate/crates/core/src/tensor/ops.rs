//! Elementwise, shape and matrix operations on [`Var`].

use std::rc::Rc;

use rand::Rng;

use super::{kernels, scalar, Element, Tensor, Var};
use crate::error::{Error, Result};

fn zip_map<T: Element>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::from_parts(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn same_shape<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Splits a tensor into `rows × last-dim` for column-wise ops.
fn rows_cols<T: Element>(t: &Tensor<T>) -> (usize, usize) {
    let last = t.shape().last().copied().unwrap_or(1);
    (t.numel().checked_div(last).unwrap_or(0), last)
}

impl<'t, T: Element> Var<'t, T> {
    /// Elementwise sum. A rank-1 right operand whose length equals the
    /// column count of a rank-2 left operand is added to every row.
    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        if a.shape() == b.shape() {
            let out = zip_map(a, b, |x, y| x + y);
            return self.tape.record("add", Rc::new(out), &[self, other], |g, _, _| {
                vec![Some(g.clone()), Some(g.clone())]
            });
        }
        if a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.numel() {
            let cols = b.numel();
            let mut out = a.clone();
            for row in out.data_mut().chunks_mut(cols.max(1)) {
                for (o, &v) in row.iter_mut().zip(b.data()) {
                    *o = *o + v;
                }
            }
            return self
                .tape
                .record("add_bias", Rc::new(out), &[self, other], move |g, need, _| {
                    let gb = need[1].then(|| {
                        let mut acc = vec![T::zero(); cols];
                        for row in g.data().chunks(cols.max(1)) {
                            for (a, &v) in acc.iter_mut().zip(row) {
                                *a = *a + v;
                            }
                        }
                        Tensor::vector(acc)
                    });
                    vec![Some(g.clone()), gb]
                });
        }
        Err(Error::ShapeMismatch {
            op: "add",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_shape("sub", self.value(), other.value())?;
        let out = zip_map(self.value(), other.value(), |x, y| x - y);
        self.tape.record("sub", Rc::new(out), &[self, other], |g, _, _| {
            vec![Some(g.clone()), Some(g.map(|v| -v))]
        })
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_shape("mul", self.value(), other.value())?;
        let (a, b) = (self.value.clone(), other.value.clone());
        let out = zip_map(&a, &b, |x, y| x * y);
        self.tape
            .record("mul", Rc::new(out), &[self, other], move |g, need, _| {
                vec![
                    need[0].then(|| zip_map(g, &b, |x, y| x * y)),
                    need[1].then(|| zip_map(g, &a, |x, y| x * y)),
                ]
            })
    }

    pub fn div(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_shape("div", self.value(), other.value())?;
        let (a, b) = (self.value.clone(), other.value.clone());
        let out = zip_map(&a, &b, |x, y| x / y);
        self.tape
            .record("div", Rc::new(out), &[self, other], move |g, need, _| {
                vec![
                    need[0].then(|| zip_map(g, &b, |x, y| x / y)),
                    need[1].then(|| {
                        let num = zip_map(g, &a, |x, y| x * y);
                        zip_map(&num, &b, |x, y| -x / (y * y))
                    }),
                ]
            })
    }

    /// Multiplication by a constant.
    pub fn scale(&self, factor: f64) -> Result<Var<'t, T>> {
        let c: T = scalar(factor);
        let out = self.value().map(|v| v * c);
        self.tape.record("scale", Rc::new(out), &[self], move |g, _, _| {
            vec![Some(g.map(|v| v * c))]
        })
    }

    pub fn exp(&self) -> Result<Var<'t, T>> {
        let out = Rc::new(self.value().map(T::exp));
        let saved = out.clone();
        self.tape.record("exp", out, &[self], move |g, _, _| {
            vec![Some(zip_map(g, &saved, |x, y| x * y))]
        })
    }

    pub fn log(&self) -> Result<Var<'t, T>> {
        let a = self.value.clone();
        let out = a.map(T::ln);
        self.tape.record("log", Rc::new(out), &[self], move |g, _, _| {
            vec![Some(zip_map(g, &a, |x, y| x / y))]
        })
    }

    pub fn relu(&self) -> Result<Var<'t, T>> {
        self.leaky_relu(0.0)
    }

    /// `max(x, 0) + slope · min(x, 0)`.
    pub fn leaky_relu(&self, slope: f64) -> Result<Var<'t, T>> {
        let s: T = scalar(slope);
        let a = self.value.clone();
        let out = a.map(|v| if v > T::zero() { v } else { v * s });
        let name = if slope == 0.0 { "relu" } else { "leaky_relu" };
        self.tape.record(name, Rc::new(out), &[self], move |g, _, _| {
            vec![Some(zip_map(g, &a, |x, v| if v > T::zero() { x } else { x * s }))]
        })
    }

    /// Exponential linear unit with unit scale.
    pub fn elu(&self) -> Result<Var<'t, T>> {
        let a = self.value.clone();
        let out = a.map(|v| if v > T::zero() { v } else { v.exp_m1() });
        self.tape.record("elu", Rc::new(out), &[self], move |g, _, _| {
            vec![Some(zip_map(g, &a, |x, v| if v > T::zero() { x } else { x * v.exp() }))]
        })
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self) -> Result<Var<'t, T>> {
        let total = self.value().data().iter().copied().sum::<T>();
        let shape = self.shape().to_vec();
        self.tape
            .record("sum", Rc::new(Tensor::scalar(total)), &[self], move |g, _, _| {
                vec![Some(Tensor::full(shape.clone(), g.item()))]
            })
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t, T>> {
        let out = self.value().reshape(shape)?;
        let original = self.shape().to_vec();
        self.tape.record("reshape", Rc::new(out), &[self], move |g, _, _| {
            vec![Some(Tensor::from_parts(original.clone(), g.data().to_vec()))]
        })
    }

    /// `self (m×k) · other (k×n)`.
    pub fn matmul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value.clone(), other.value.clone());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let par = self.mode().parallel();
        let out = Tensor::from_parts(vec![m, n], kernels::matmul(a.data(), b.data(), m, k, n, par));
        self.tape
            .record("matmul", Rc::new(out), &[self, other], move |g, need, mode| {
                let par = mode.parallel();
                vec![
                    need[0]
                        .then(|| Tensor::from_parts(vec![m, k], kernels::matmul_nt(g.data(), b.data(), m, n, k, par))),
                    need[1]
                        .then(|| Tensor::from_parts(vec![k, n], kernels::matmul_tn(a.data(), g.data(), m, k, n, par))),
                ]
            })
    }

    /// Scales row `i` by the constant `weights[i]`.
    pub fn mul_rows(&self, weights: &Tensor<T>) -> Result<Var<'t, T>> {
        if weights.rank() != 1 || weights.numel() != self.value().rows() {
            return Err(Error::ShapeMismatch {
                op: "mul_rows",
                lhs: self.shape().to_vec(),
                rhs: weights.shape().to_vec(),
            });
        }
        let w = Rc::new(weights.clone());
        let scale_rows = |t: &Tensor<T>, w: &Tensor<T>| {
            let cols = t.cols();
            let mut out = t.clone();
            if cols > 0 {
                for (row, &wi) in out.data_mut().chunks_mut(cols).zip(w.data()) {
                    row.iter_mut().for_each(|v| *v = *v * wi);
                }
            }
            out
        };
        let out = scale_rows(self.value(), &w);
        self.tape.record("mul_rows", Rc::new(out), &[self], move |g, _, _| {
            vec![Some(scale_rows(g, &w))]
        })
    }

    /// Per-head inner products. `self` is `N × (H·D)` laid out head-major,
    /// `weights` is `H × D`; the result is `N × H`.
    pub fn head_dot(&self, weights: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (x, a) = (self.value.clone(), weights.value.clone());
        if x.rank() != 2 || a.rank() != 2 || x.shape()[1] != a.numel() {
            return Err(Error::ShapeMismatch {
                op: "head_dot",
                lhs: x.shape().to_vec(),
                rhs: a.shape().to_vec(),
            });
        }
        let (n, heads, dim) = (x.shape()[0], a.shape()[0], a.shape()[1]);
        let mut out = vec![T::zero(); n * heads];
        for i in 0..n {
            for h in 0..heads {
                let xs = &x.data()[i * heads * dim + h * dim..][..dim];
                let ws = &a.data()[h * dim..][..dim];
                out[i * heads + h] = xs.iter().zip(ws).fold(T::zero(), |s, (&p, &q)| s + p * q);
            }
        }
        let out = Tensor::from_parts(vec![n, heads], out);
        self.tape
            .record("head_dot", Rc::new(out), &[self, weights], move |g, need, _| {
                let gx = need[0].then(|| {
                    let mut gx = vec![T::zero(); n * heads * dim];
                    for i in 0..n {
                        for h in 0..heads {
                            let gv = g.data()[i * heads + h];
                            let dst = &mut gx[i * heads * dim + h * dim..][..dim];
                            for (o, &w) in dst.iter_mut().zip(&a.data()[h * dim..][..dim]) {
                                *o = gv * w;
                            }
                        }
                    }
                    Tensor::from_parts(vec![n, heads * dim], gx)
                });
                let ga = need[1].then(|| {
                    let mut ga = vec![T::zero(); heads * dim];
                    for i in 0..n {
                        for h in 0..heads {
                            let gv = g.data()[i * heads + h];
                            let src = &x.data()[i * heads * dim + h * dim..][..dim];
                            for (o, &v) in ga[h * dim..][..dim].iter_mut().zip(src) {
                                *o = *o + gv * v;
                            }
                        }
                    }
                    Tensor::from_parts(vec![heads, dim], ga)
                });
                vec![gx, ga]
            })
    }

    /// Scales each head block of `self` (`E × (H·D)`) by the matching column
    /// of `coef` (`E × H`).
    pub fn mul_heads(&self, coef: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (x, c) = (self.value.clone(), coef.value.clone());
        if x.rank() != 2
            || c.rank() != 2
            || x.shape()[0] != c.shape()[0]
            || c.shape()[1] == 0
            || x.shape()[1] % c.shape()[1] != 0
        {
            return Err(Error::ShapeMismatch {
                op: "mul_heads",
                lhs: x.shape().to_vec(),
                rhs: c.shape().to_vec(),
            });
        }
        let (e, heads) = (c.shape()[0], c.shape()[1]);
        let dim = x.shape()[1] / heads;
        let mut out = x.as_ref().clone();
        for i in 0..e {
            for h in 0..heads {
                let cv = c.data()[i * heads + h];
                out.data_mut()[i * heads * dim + h * dim..][..dim]
                    .iter_mut()
                    .for_each(|v| *v = *v * cv);
            }
        }
        self.tape
            .record("mul_heads", Rc::new(out), &[self, coef], move |g, need, _| {
                let gx = need[0].then(|| {
                    let mut gx = g.clone();
                    for i in 0..e {
                        for h in 0..heads {
                            let cv = c.data()[i * heads + h];
                            gx.data_mut()[i * heads * dim + h * dim..][..dim]
                                .iter_mut()
                                .for_each(|v| *v = *v * cv);
                        }
                    }
                    gx
                });
                let gc = need[1].then(|| {
                    let mut gc = vec![T::zero(); e * heads];
                    for i in 0..e {
                        for h in 0..heads {
                            let off = i * heads * dim + h * dim;
                            gc[i * heads + h] = g.data()[off..off + dim]
                                .iter()
                                .zip(&x.data()[off..off + dim])
                                .fold(T::zero(), |s, (&p, &q)| s + p * q);
                        }
                    }
                    Tensor::from_parts(vec![e, heads], gc)
                });
                vec![gx, gc]
            })
    }

    /// Averages the `heads` blocks of an `N × (H·D)` tensor into `N × D`.
    pub fn head_mean(&self, heads: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        if x.rank() != 2 || heads == 0 || !x.shape()[1].is_multiple_of(heads) {
            return Err(Error::invalid(format!(
                "head_mean: cannot split shape {:?} into {heads} heads",
                x.shape()
            )));
        }
        let n = x.shape()[0];
        let dim = x.shape()[1] / heads;
        let inv: T = scalar(1.0 / heads as f64);
        let mut out = vec![T::zero(); n * dim];
        for i in 0..n {
            for h in 0..heads {
                for d in 0..dim {
                    out[i * dim + d] = out[i * dim + d] + x.data()[i * heads * dim + h * dim + d];
                }
            }
        }
        out.iter_mut().for_each(|v| *v = *v * inv);
        let out = Tensor::from_parts(vec![n, dim], out);
        self.tape.record("head_mean", Rc::new(out), &[self], move |g, _, _| {
            let mut gx = vec![T::zero(); n * heads * dim];
            for i in 0..n {
                for h in 0..heads {
                    for d in 0..dim {
                        gx[i * heads * dim + h * dim + d] = g.data()[i * dim + d] * inv;
                    }
                }
            }
            vec![Some(Tensor::from_parts(vec![n, heads * dim], gx))]
        })
    }

    /// Inverted dropout: zero each element with probability `rate` and scale
    /// the survivors by `1 / (1 - rate)`. Identity outside training.
    pub fn dropout<R: Rng + ?Sized>(&self, rate: f64, training: bool, rng: &mut R) -> Result<Var<'t, T>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(self.clone());
        }
        let keep: T = scalar(1.0 / (1.0 - rate));
        // An element is dropped when a uniform u32 falls below rate·2³².
        let threshold = (rate * 4_294_967_296.0) as u64;
        let x = self.value();
        if !self.requires_grad {
            // Zeros stay zero under any mask, so only nonzero entries draw.
            let out: Vec<T> = x
                .data()
                .iter()
                .map(|&v| {
                    if v == T::zero() || (rng.next_u32() as u64) < threshold {
                        T::zero()
                    } else {
                        v * keep
                    }
                })
                .collect();
            return Ok(self.tape.constant(Tensor::from_parts(x.shape().to_vec(), out)));
        }
        let mask: Vec<T> = (0..x.numel())
            .map(|_| {
                if (rng.next_u32() as u64) < threshold {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let mask = Rc::new(Tensor::from_parts(x.shape().to_vec(), mask));
        let out = zip_map(x, &mask, |x, m| x * m);
        self.tape.record("dropout", Rc::new(out), &[self], move |g, _, _| {
            vec![Some(zip_map(g, &mask, |x, m| x * m))]
        })
    }
}

/// Concatenates along the last axis. All inputs share every other dimension.
pub fn concat<'t, T: Element>(parts: &[&Var<'t, T>]) -> Result<Var<'t, T>> {
    let first = parts.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
    let lead = &first.shape()[..first.shape().len().saturating_sub(1)];
    let (rows, _) = rows_cols(first.value());
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let s = p.shape();
        if s.len() != first.shape().len() || &s[..s.len().saturating_sub(1)] != lead {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: s.to_vec(),
            });
        }
        widths.push(rows_cols(p.value()).1);
    }
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for (p, &w) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.value().data()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    let out = Tensor::from_parts(shape, out);
    first.tape.record("concat", Rc::new(out), parts, move |g, need, _| {
        let mut offset = 0;
        widths
            .iter()
            .zip(need)
            .map(|(&w, &need)| {
                let start = offset;
                offset += w;
                need.then(|| {
                    let mut part = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        part.extend_from_slice(&g.data()[r * total + start..r * total + start + w]);
                    }
                    let mut shape = g.shape().to_vec();
                    *shape.last_mut().unwrap() = w;
                    Tensor::from_parts(shape, part)
                })
            })
            .collect()
    })
}

/// Stacks inputs along the first axis. Trailing dimensions must agree.
pub fn concat_rows<'t, T: Element>(parts: &[&Var<'t, T>]) -> Result<Var<'t, T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat_rows of zero tensors"))?;
    let trailing = first.shape().get(1..).unwrap_or(&[]).to_vec();
    let mut sizes = Vec::with_capacity(parts.len());
    let mut data = Vec::new();
    for p in parts {
        if p.value().rank() == 0 || p.shape()[1..] != trailing[..] {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        sizes.push(p.value().numel());
        data.extend_from_slice(p.value().data());
    }
    let rows: usize = parts.iter().map(|p| p.shape()[0]).sum();
    let mut shape = vec![rows];
    shape.extend_from_slice(&trailing);
    let row_counts: Vec<usize> = parts.iter().map(|p| p.shape()[0]).collect();
    let out = Tensor::from_parts(shape, data);
    first
        .tape
        .record("concat_rows", Rc::new(out), parts, move |g, need, _| {
            let mut offset = 0;
            sizes
                .iter()
                .zip(&row_counts)
                .zip(need)
                .map(|((&size, &r), &need)| {
                    let start = offset;
                    offset += size;
                    need.then(|| {
                        let mut shape = vec![r];
                        shape.extend_from_slice(&trailing);
                        Tensor::from_parts(shape, g.data()[start..start + size].to_vec())
                    })
                })
                .collect()
        })
}
