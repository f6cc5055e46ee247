//! Reference implementations written with plain loops and dense matrices,
//! plus random-instance generators and a finite-difference gradient checker.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seggraph::graph::Graph;
use seggraph::tensor::{Reducer, Tape, Tensor, Var};

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn to_mat(t: &Tensor<f64>) -> Mat {
    let cols = t.cols();
    t.data().chunks(cols.max(1)).map(|r| r.to_vec()).collect()
}

pub fn from_mat(m: &Mat) -> Tensor<f64> {
    Tensor::from_rows(m).unwrap()
}

pub fn dense_matmul(a: &Mat, b: &Mat) -> Mat {
    let n = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().zip(b).map(|(&x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

pub fn add_row(m: &Mat, b: &[f64]) -> Mat {
    m.iter()
        .map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn map(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    m.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect()
}

pub fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len(), "row count");
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len(), "column count");
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

/// A directed graph on `n` nodes where each ordered pair is an edge with
/// probability `p`. Self-loops are drawn too when `loops` is set. Weights
/// are uniform in `[0.5, 1.5)`.
pub fn random_graph(rng: &mut impl Rng, n: usize, d: usize, p: f64, loops: bool) -> Graph<f64> {
    let mut edges = Vec::new();
    for s in 0..n {
        for t in 0..n {
            if (s != t || loops) && rng.random_bool(p) {
                edges.push((s, t));
            }
        }
    }
    let w = (0..edges.len()).map(|_| rng.random_range(0.5..1.5)).collect();
    let x = uniform(rng, &[n, d], -1.0, 1.0);
    Graph::new(x, &edges, Some(Tensor::vector(w))).unwrap()
}

/// Normalized propagation matrix `S` with `S[i][j]` the weight of the
/// message from `j` to `i`. Missing self-loops get weight `fill` first; the
/// degree of a node is the weight sum of its incoming edges.
pub fn dense_norm(graph: &Graph<f64>, renorm: bool, fill: f64) -> Mat {
    let n = graph.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    let mut has_loop = vec![false; n];
    for ((s, t), &w) in graph.edges().zip(graph.edge_weight().data()) {
        a[t][s] += w;
        if s == t {
            has_loop[s] = true;
        }
    }
    if renorm {
        for i in 0..n {
            if !has_loop[i] {
                a[i][i] += fill;
            }
        }
    }
    let deg: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let inv = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] * inv(deg[i]) * inv(deg[j])).collect())
        .collect()
}

pub fn dense_gcn(s: &Mat, x: &Mat, w: &Mat, b: &[f64], activation: bool) -> Mat {
    let out = add_row(&dense_matmul(s, &dense_matmul(x, w)), b);
    if activation {
        map(&out, relu)
    } else {
        out
    }
}

pub fn dense_sgc(s: &Mat, x: &Mat, w: &Mat, k: usize) -> Mat {
    let mut h = x.clone();
    for _ in 0..k {
        h = dense_matmul(s, &h);
    }
    dense_matmul(&h, w)
}

pub fn dense_appnp(s: &Mat, x: &Mat, layers: &[(Mat, Vec<f64>)], alpha: f64, k: usize) -> Mat {
    let mut h = x.clone();
    for (i, (w, b)) in layers.iter().enumerate() {
        if i > 0 {
            h = map(&h, relu);
        }
        h = add_row(&dense_matmul(&h, w), b);
    }
    let mut z = h.clone();
    for _ in 0..k {
        let sz = dense_matmul(s, &z);
        z = sz
            .iter()
            .zip(&h)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (1.0 - alpha) * p + alpha * q).collect())
            .collect();
    }
    z
}

/// Multi-head attention written per destination node. Each node attends to
/// its in-neighbors (with multiplicity) and to itself once.
#[allow(clippy::too_many_arguments)]
pub fn dense_gat(
    graph: &Graph<f64>,
    x: &Mat,
    w: &Mat,
    a_self: &Mat,
    a_nb: &Mat,
    bias: &[f64],
    heads: usize,
    average: bool,
    slope: f64,
) -> Mat {
    let n = graph.num_nodes();
    let h = dense_matmul(x, w);
    let dh = w[0].len() / heads;
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut has_loop = vec![false; n];
    for (s, t) in graph.edges() {
        incoming[t].push(s);
        has_loop[t] |= s == t;
    }
    for i in 0..n {
        if !has_loop[i] {
            incoming[i].push(i);
        }
    }
    let dot = |a: &[f64], v: &[f64]| a.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let leaky = |v: f64| if v >= 0.0 { v } else { slope * v };
    (0..n)
        .map(|i| {
            let mut per_head = Vec::new();
            for k in 0..heads {
                let block = |node: usize| &h[node][k * dh..(k + 1) * dh];
                let scores: Vec<f64> = incoming[i]
                    .iter()
                    .map(|&j| leaky(dot(&a_nb[k], block(j)) + dot(&a_self[k], block(i))))
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
                let mut out = vec![0.0; dh];
                for (&j, s) in incoming[i].iter().zip(&scores) {
                    let a = (s - m).exp() / z;
                    for (o, v) in out.iter_mut().zip(block(j)) {
                        *o += a * v;
                    }
                }
                per_head.push(out);
            }
            let row: Vec<f64> = if average {
                (0..dh)
                    .map(|c| per_head.iter().map(|o| o[c]).sum::<f64>() / heads as f64)
                    .collect()
            } else {
                per_head.concat()
            };
            row.iter().zip(bias).map(|(v, b)| v + b).collect()
        })
        .collect()
}

/// Segment reduction by direct iteration. Empty segments give zero rows.
pub fn loop_segment(data: &Mat, ids: &[usize], num_segments: usize, reducer: Reducer) -> Mat {
    let d = data.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; d]; num_segments];
    for (seg, slot) in out.iter_mut().enumerate() {
        let members: Vec<&Vec<f64>> = ids
            .iter()
            .zip(data)
            .filter(|(&id, _)| id == seg)
            .map(|(_, row)| row)
            .collect();
        if members.is_empty() {
            continue;
        }
        for c in 0..d {
            let col = members.iter().map(|r| r[c]);
            slot[c] = match reducer {
                Reducer::Sum => col.sum(),
                Reducer::Mean => col.sum::<f64>() / members.len() as f64,
                Reducer::Max => col.fold(f64::NEG_INFINITY, f64::max),
            };
        }
    }
    out
}

/// Largest norm-wise relative error between the tape's gradients and
/// central differences, over all inputs. A non-scalar output is reduced with
/// a fixed random projection first.
pub fn fd_check<F>(inputs: &[Tensor<f64>], f: F) -> f64
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> seggraph::Result<Var<'t, f64>>,
{
    const EPS: f64 = 1e-6;
    let objective = |values: &[Tensor<f64>]| -> (f64, Vec<Tensor<f64>>) {
        let tape = Tape::with_mode(seggraph::tensor::ExecMode::Deterministic);
        let vars: Vec<_> = values.iter().map(|v| tape.leaf(v.clone())).collect();
        let out = f(&tape, &vars).expect("forward");
        let mut prng = rng(0x9e37);
        let proj = uniform(&mut prng, out.shape(), -1.0, 1.0);
        let loss = out.mul(&tape.constant(proj)).unwrap().sum().unwrap();
        let grads = tape.backward(&loss).expect("backward");
        let g = vars
            .iter()
            .map(|v| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(v.shape().to_vec()))
            })
            .collect();
        (loss.value().item(), g)
    };
    let (_, analytic) = objective(inputs);
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[e] += EPS;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[e] -= EPS;
            *slot = (objective(&plus).0 - objective(&minus).0) / (2.0 * EPS);
        }
        let a = analytic[i].data();
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(diff / na.max(nn).max(1e-3));
    }
    worst
}

/// Builds `CHECKS` from the listed functions and registers each as a test.
macro_rules! register_checks {
    ($($name:ident),* $(,)?) => {
        #[allow(dead_code)]
        pub const CHECKS: &[(&str, fn())] = &[$((stringify!($name), $name)),*];

        mod checks {
            $(
                #[test]
                fn $name() {
                    super::$name()
                }
            )*
        }
    };
}
