//! Slice-level kernels shared by the forward and backward passes.
//!
//! Every kernel takes a `parallel` flag. With the `parallel` feature the
//! flag fans work out over rayon; without it (or when the flag is false)
//! the same loop runs on the calling thread. Matrix products and gathers
//! partition work by output row, so both paths are bitwise identical.
//! [`segment_sum`] is the exception: its parallel path sums per-thread
//! partial buffers and may round differently from the sequential path.
//!
//! Indices are assumed valid here; callers validate them.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::Element;

/// Multiply-add count below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

fn for_each_row<T, F>(out: &mut [T], cols: usize, parallel: bool, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if cols == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if parallel {
        out.par_chunks_mut(cols).enumerate().for_each(|(i, r)| f(i, r));
        return;
    }
    let _ = parallel;
    out.chunks_mut(cols).enumerate().for_each(|(i, r)| f(i, r));
}

#[inline]
fn axpy<T: Element>(alpha: T, x: &[T], y: &mut [T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o = *o + alpha * v;
    }
}

/// `a (m×k) · b (k×n)`. Zero entries of `a` are skipped, which makes sparse
/// bag-of-words feature matrices cheap.
pub fn matmul<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, parallel: bool) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    let par = parallel && m * k * n >= PAR_THRESHOLD;
    for_each_row(&mut out, n, par, |i, row| {
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av != T::zero() {
                axpy(av, &b[p * n..(p + 1) * n], row);
            }
        }
    });
    out
}

/// `aᵀ · b` where `a` is stored as k×m and `b` as k×n.
pub fn matmul_tn<T: Element>(a: &[T], b: &[T], k: usize, m: usize, n: usize, parallel: bool) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    if m == 0 || n == 0 {
        return out;
    }
    let block_rows = |chunk: &mut [T], i0: usize| {
        let rows = chunk.len() / n;
        for p in 0..k {
            let ap = &a[p * m + i0..p * m + i0 + rows];
            let bp = &b[p * n..(p + 1) * n];
            for (r, &av) in ap.iter().enumerate() {
                if av != T::zero() {
                    axpy(av, bp, &mut chunk[r * n..(r + 1) * n]);
                }
            }
        }
    };
    let par = parallel && m * k * n >= PAR_THRESHOLD;
    #[cfg(feature = "parallel")]
    if par {
        let block = m.div_ceil(rayon::current_num_threads() * 4).max(8);
        out.par_chunks_mut(block * n)
            .enumerate()
            .for_each(|(bi, chunk)| block_rows(chunk, bi * block));
        return out;
    }
    let _ = par;
    block_rows(&mut out, 0);
    out
}

/// `a (m×k) · bᵀ` where `b` is stored as n×k.
pub fn matmul_nt<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, parallel: bool) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    let par = parallel && m * k * n >= PAR_THRESHOLD;
    for_each_row(&mut out, n, par, |i, row| {
        let ai = &a[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let bj = &b[j * k..(j + 1) * k];
            *o = ai.iter().zip(bj).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        }
    });
    out
}

pub fn gather_rows<T: Element>(data: &[T], cols: usize, indices: &[usize], parallel: bool) -> Vec<T> {
    let mut out = vec![T::zero(); indices.len() * cols];
    let par = parallel && indices.len() * cols >= PAR_THRESHOLD;
    for_each_row(&mut out, cols, par, |i, row| {
        let s = indices[i];
        row.copy_from_slice(&data[s * cols..(s + 1) * cols]);
    });
    out
}

/// Rows of `data` summed into `num_segments` buckets keyed by `ids`.
pub fn segment_sum<T: Element>(data: &[T], cols: usize, ids: &[usize], num_segments: usize, parallel: bool) -> Vec<T> {
    let sequential = |rows: std::ops::Range<usize>| {
        let mut out = vec![T::zero(); num_segments * cols];
        for r in rows {
            let s = ids[r];
            axpy(
                T::one(),
                &data[r * cols..(r + 1) * cols],
                &mut out[s * cols..(s + 1) * cols],
            );
        }
        out
    };
    #[cfg(feature = "parallel")]
    if parallel && ids.len() * cols >= PAR_THRESHOLD * 4 {
        let chunks = rayon::current_num_threads().min(ids.len() / 1024).max(1);
        let step = ids.len().div_ceil(chunks);
        let partials: Vec<Vec<T>> = (0..chunks)
            .into_par_iter()
            .map(|c| sequential(c * step..((c + 1) * step).min(ids.len())))
            .collect();
        let mut iter = partials.into_iter();
        let mut out = iter.next().unwrap_or_else(|| vec![T::zero(); num_segments * cols]);
        for p in iter {
            axpy(T::one(), &p, &mut out);
        }
        return out;
    }
    let _ = parallel;
    sequential(0..ids.len())
}

/// Per-segment, per-column maximum. Returns the values and, for every output
/// cell, the first row that attains the maximum (`None` for empty segments,
/// whose value is zero).
pub fn segment_max<T: Element>(
    data: &[T],
    cols: usize,
    ids: &[usize],
    num_segments: usize,
) -> (Vec<T>, Vec<Option<usize>>) {
    let mut out = vec![T::zero(); num_segments * cols];
    let mut arg: Vec<Option<usize>> = vec![None; num_segments * cols];
    for (r, &s) in ids.iter().enumerate() {
        let row = &data[r * cols..(r + 1) * cols];
        for (c, &v) in row.iter().enumerate() {
            let cell = s * cols + c;
            if arg[cell].is_none() || v > out[cell] {
                out[cell] = v;
                arg[cell] = Some(r);
            }
        }
    }
    (out, arg)
}

pub fn segment_counts(ids: &[usize], num_segments: usize) -> Vec<usize> {
    let mut counts = vec![0; num_segments];
    for &s in ids {
        counts[s] += 1;
    }
    counts
}
