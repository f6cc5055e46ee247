//! Finite-difference checks of every differentiable operation and of the
//! full models, in f64.

#[macro_use]
mod common;

use common::{fd_check, random_graph, rng, uniform};
use rand::Rng;
use seggraph::graph::NormConfig;
use seggraph::layers::{
    appnp, gat, gcn, mean_max_pool, sgc, Activation, AppnpParams, GatOptions, GatParams, GcnParams, HeadMode,
};
use seggraph::map_reduce::{aggregate_neighbors, segment_softmax, AggregationPlan};
use seggraph::tensor::{concat, concat_rows, Reducer};

const INSTANCES: u64 = 20;
const TOL: f64 = 1e-4;

fn assert_ok(op: &str, instance: u64, err: f64) {
    assert!(err <= TOL, "{op} instance {instance}: relative error {err:e}");
}

fn dims(r: &mut impl Rng) -> (usize, usize) {
    (r.random_range(1..6), r.random_range(1..5))
}

fn elementwise_binary() {
    for i in 0..INSTANCES {
        let mut r = rng(i);
        let (n, d) = dims(&mut r);
        let a = uniform(&mut r, &[n, d], -2.0, 2.0);
        let b = uniform(&mut r, &[n, d], 0.5, 2.0);
        let bias = uniform(&mut r, &[d], -1.0, 1.0);
        let ins = [a.clone(), b.clone()];
        assert_ok("add", i, fd_check(&ins, |_, v| v[0].add(&v[1])));
        assert_ok("sub", i, fd_check(&ins, |_, v| v[0].sub(&v[1])));
        assert_ok("mul", i, fd_check(&ins, |_, v| v[0].mul(&v[1])));
        assert_ok("div", i, fd_check(&ins, |_, v| v[0].div(&v[1])));
        assert_ok("add_bias", i, fd_check(&[a, bias], |_, v| v[0].add(&v[1])));
    }
}

fn elementwise_unary() {
    for i in 0..INSTANCES {
        let mut r = rng(100 + i);
        let (n, d) = dims(&mut r);
        let x = [uniform(&mut r, &[n, d], -2.0, 2.0)];
        let pos = [uniform(&mut r, &[n, d], 0.2, 3.0)];
        let factor = r.random_range(-2.0..2.0);
        assert_ok("scale", i, fd_check(&x, |_, v| v[0].scale(factor)));
        assert_ok("exp", i, fd_check(&x, |_, v| v[0].exp()));
        assert_ok("log", i, fd_check(&pos, |_, v| v[0].log()));
        assert_ok("relu", i, fd_check(&x, |_, v| v[0].relu()));
        assert_ok("leaky_relu", i, fd_check(&x, |_, v| v[0].leaky_relu(0.2)));
        assert_ok("elu", i, fd_check(&x, |_, v| v[0].elu()));
        assert_ok("sum", i, fd_check(&x, |_, v| v[0].sum()));
        assert_ok("reshape", i, fd_check(&x, |_, v| v[0].reshape(vec![n * d])));
        assert_ok("dropout", i, fd_check(&x, |_, v| v[0].dropout(0.4, true, &mut rng(7))));
    }
}

fn matmul_and_row_ops() {
    for i in 0..INSTANCES {
        let mut r = rng(200 + i);
        let (m, k) = dims(&mut r);
        let n = r.random_range(1..5);
        let a = uniform(&mut r, &[m, k], -1.0, 1.0);
        let b = uniform(&mut r, &[k, n], -1.0, 1.0);
        assert_ok("matmul", i, fd_check(&[a.clone(), b], |_, v| v[0].matmul(&v[1])));
        let w = uniform(&mut r, &[m], -1.0, 1.0);
        assert_ok(
            "mul_rows",
            i,
            fd_check(std::slice::from_ref(&a), |_, v| v[0].mul_rows(&w)),
        );
        let c = uniform(&mut r, &[m, n], -1.0, 1.0);
        assert_ok("concat", i, fd_check(&[a.clone(), c], |_, v| concat(&[&v[0], &v[1]])));
        let extra = r.random_range(1..4);
        let e = uniform(&mut r, &[extra, k], -1.0, 1.0);
        assert_ok("concat_rows", i, fd_check(&[a, e], |_, v| concat_rows(&[&v[0], &v[1]])));
    }
}

fn head_ops() {
    for i in 0..INSTANCES {
        let mut r = rng(300 + i);
        let (n, heads) = dims(&mut r);
        let d = r.random_range(1..4);
        let x = uniform(&mut r, &[n, heads * d], -1.0, 1.0);
        let w = uniform(&mut r, &[heads, d], -1.0, 1.0);
        let coef = uniform(&mut r, &[n, heads], -1.0, 1.0);
        assert_ok("head_dot", i, fd_check(&[x.clone(), w], |_, v| v[0].head_dot(&v[1])));
        assert_ok(
            "mul_heads",
            i,
            fd_check(&[x.clone(), coef], |_, v| v[0].mul_heads(&v[1])),
        );
        assert_ok("head_mean", i, fd_check(&[x], |_, v| v[0].head_mean(heads)));
    }
}

fn gather_and_segments() {
    for i in 0..INSTANCES {
        let mut r = rng(400 + i);
        let (n, d) = dims(&mut r);
        let x = uniform(&mut r, &[n, d], -1.0, 1.0);
        let idx: Vec<usize> = (0..r.random_range(1..8)).map(|_| r.random_range(0..n)).collect();
        assert_ok(
            "gather_rows",
            i,
            fd_check(std::slice::from_ref(&x), |_, v| v[0].gather_rows(&idx)),
        );
        let segs = r.random_range(1..5);
        let ids: Vec<usize> = (0..n).map(|_| r.random_range(0..segs)).collect();
        for reducer in [Reducer::Sum, Reducer::Mean, Reducer::Max] {
            let err = fd_check(std::slice::from_ref(&x), |_, v| {
                v[0].segment_reduce(&ids, segs, reducer)
            });
            assert_ok(&format!("segment_{reducer:?}"), i, err);
        }
        let scores = uniform(&mut r, &[n, d], -3.0, 3.0);
        assert_ok(
            "segment_softmax",
            i,
            fd_check(&[scores], |_, v| segment_softmax(&v[0], &ids, segs)),
        );
    }
}

fn cross_entropy() {
    for i in 0..INSTANCES {
        let mut r = rng(500 + i);
        let n = r.random_range(1..7);
        let c = r.random_range(2..5);
        let logits = uniform(&mut r, &[n, c], -3.0, 3.0);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let rows: Vec<usize> = (0..n).filter(|_| r.random_bool(0.6)).collect();
        let rows = if rows.is_empty() { vec![0] } else { rows };
        assert_ok(
            "softmax_cross_entropy",
            i,
            fd_check(&[logits], |_, v| v[0].softmax_cross_entropy(&labels, Some(&rows))),
        );
    }
}

fn aggregation() {
    for i in 0..INSTANCES {
        let mut r = rng(600 + i);
        let (n, d) = dims(&mut r);
        let g = random_graph(&mut r, n, d, 0.5, true);
        let x = g.x().clone();
        for reducer in [Reducer::Sum, Reducer::Mean, Reducer::Max] {
            let plan = AggregationPlan::weighted(reducer);
            let err = fd_check(std::slice::from_ref(&x), |_, v| {
                aggregate_neighbors(&v[0], g.src(), g.dst(), g.edge_weight(), &plan)
            });
            assert_ok(&format!("aggregate_{reducer:?}"), i, err);
        }
    }
}

fn layers() {
    for i in 0..INSTANCES {
        let mut r = rng(700 + i);
        let (n, d) = dims(&mut r);
        let out = r.random_range(1..4);
        let g = random_graph(&mut r, n, d, 0.4, false);
        let x = g.x().clone();
        let w = uniform(&mut r, &[d, out], -1.0, 1.0);
        let b = uniform(&mut r, &[out], -1.0, 1.0);
        let norm = NormConfig::default();

        let err = fd_check(&[x.clone(), w.clone(), b.clone()], |_, v| {
            let p = GcnParams {
                kernel: v[1].clone(),
                bias: Some(v[2].clone()),
            };
            gcn(&v[0], &g, &p, Some(Activation::Relu), norm)
        });
        assert_ok("gcn", i, err);

        let k = r.random_range(0..4);
        assert_ok(
            "sgc",
            i,
            fd_check(&[x.clone(), w.clone()], |_, v| sgc(&v[0], &g, &v[1], k, norm)),
        );

        let hidden = r.random_range(1..4);
        let w0 = uniform(&mut r, &[d, hidden], -1.0, 1.0);
        let b0 = uniform(&mut r, &[hidden], -1.0, 1.0);
        let w1 = uniform(&mut r, &[hidden, out], -1.0, 1.0);
        let alpha = r.random_range(0.05..0.9);
        let steps = r.random_range(0..6);
        let err = fd_check(&[x.clone(), w0, b0, w1, b.clone()], |_, v| {
            let p = AppnpParams {
                layers: vec![(v[1].clone(), Some(v[2].clone())), (v[3].clone(), Some(v[4].clone()))],
                alpha,
                k: steps,
            };
            appnp(&v[0], &g, &p, 0.3, true, &mut rng(5), norm)
        });
        assert_ok("appnp", i, err);

        let heads = r.random_range(1..4);
        let wg = uniform(&mut r, &[d, heads * out], -1.0, 1.0);
        let a_s = uniform(&mut r, &[heads, out], -1.0, 1.0);
        let a_n = uniform(&mut r, &[heads, out], -1.0, 1.0);
        for mode in [HeadMode::Concat, HeadMode::Average] {
            let bias_len = if mode == HeadMode::Concat { heads * out } else { out };
            let bg = uniform(&mut r, &[bias_len], -1.0, 1.0);
            let err = fd_check(&[x.clone(), wg.clone(), a_s.clone(), a_n.clone(), bg], |_, v| {
                let p = GatParams {
                    kernel: v[1].clone(),
                    attn_self: v[2].clone(),
                    attn_neighbor: v[3].clone(),
                    bias: Some(v[4].clone()),
                    heads,
                    leaky_slope: 0.2,
                };
                let options = GatOptions {
                    head_mode: mode,
                    activation: Some(Activation::Elu),
                    attention_dropout: 0.3,
                    training: true,
                };
                gat(&v[0], &g, &p, options, &mut rng(9))
            });
            assert_ok(&format!("gat_{mode:?}"), i, err);
        }

        let ngi: Vec<usize> = {
            let graphs = r.random_range(1..4);
            let mut v: Vec<usize> = (0..n).map(|_| r.random_range(0..graphs)).collect();
            v.sort_unstable();
            v
        };
        let segs = ngi.last().map_or(1, |l| l + 1);
        assert_ok(
            "mean_max_pool",
            i,
            fd_check(&[x], |_, v| mean_max_pool(&v[0], &ngi, segs)),
        );
    }
}

/// Two-layer models ending in the training loss, differentiated with
/// respect to every parameter at once.
fn full_models() {
    for i in 0..INSTANCES {
        let mut r = rng(800 + i);
        let n = r.random_range(2..7);
        let d = r.random_range(1..5);
        let (hidden, classes) = (r.random_range(1..4), r.random_range(2..4));
        let g = random_graph(&mut r, n, d, 0.4, false);
        let x = g.x().clone();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let train: Vec<usize> = (0..n).step_by(2).collect();
        let norm = NormConfig::default();
        let p = |r: &mut rand_chacha::ChaCha8Rng, shape: &[usize]| uniform(r, shape, -1.0, 1.0);

        let ins = [
            x.clone(),
            p(&mut r, &[d, hidden]),
            p(&mut r, &[hidden]),
            p(&mut r, &[hidden, classes]),
            p(&mut r, &[classes]),
        ];
        let err = fd_check(&ins, |_, v| {
            let mut drop = rng(1);
            let h = v[0].dropout(0.5, true, &mut drop)?;
            let l0 = GcnParams {
                kernel: v[1].clone(),
                bias: Some(v[2].clone()),
            };
            let h = gcn(&h, &g, &l0, Some(Activation::Relu), norm)?;
            let h = h.dropout(0.5, true, &mut drop)?;
            let l1 = GcnParams {
                kernel: v[3].clone(),
                bias: Some(v[4].clone()),
            };
            gcn(&h, &g, &l1, None, norm)?.softmax_cross_entropy(&labels, Some(&train))
        });
        assert_ok("gcn model", i, err);

        let sgc_w = p(&mut r, &[d, classes]);
        let err = fd_check(&[x.clone(), sgc_w], |_, v| {
            sgc(&v[0], &g, &v[1], 2, norm)?.softmax_cross_entropy(&labels, Some(&train))
        });
        assert_ok("sgc model", i, err);

        let err = fd_check(&ins, |_, v| {
            let p = AppnpParams {
                layers: vec![(v[1].clone(), Some(v[2].clone())), (v[3].clone(), Some(v[4].clone()))],
                alpha: 0.1,
                k: 10,
            };
            appnp(&v[0], &g, &p, 0.5, true, &mut rng(2), norm)?.softmax_cross_entropy(&labels, Some(&train))
        });
        assert_ok("appnp model", i, err);

        let heads = r.random_range(1..3);
        let gat_ins = [
            x.clone(),
            p(&mut r, &[d, heads * hidden]),
            p(&mut r, &[heads, hidden]),
            p(&mut r, &[heads, hidden]),
            p(&mut r, &[heads * hidden]),
            p(&mut r, &[heads * hidden, classes]),
            p(&mut r, &[1, classes]),
            p(&mut r, &[1, classes]),
            p(&mut r, &[classes]),
        ];
        let err = fd_check(&gat_ins, |_, v| {
            let mut drop = rng(3);
            let hidden_layer = GatParams {
                kernel: v[1].clone(),
                attn_self: v[2].clone(),
                attn_neighbor: v[3].clone(),
                bias: Some(v[4].clone()),
                heads,
                leaky_slope: 0.2,
            };
            let options = GatOptions {
                head_mode: HeadMode::Concat,
                activation: Some(Activation::Elu),
                attention_dropout: 0.6,
                training: true,
            };
            let h = gat(
                &v[0].dropout(0.6, true, &mut drop)?,
                &g,
                &hidden_layer,
                options,
                &mut drop,
            )?;
            let output_layer = GatParams {
                kernel: v[5].clone(),
                attn_self: v[6].clone(),
                attn_neighbor: v[7].clone(),
                bias: Some(v[8].clone()),
                heads: 1,
                leaky_slope: 0.2,
            };
            let options = GatOptions {
                head_mode: HeadMode::Average,
                activation: None,
                ..options
            };
            gat(&h.dropout(0.6, true, &mut drop)?, &g, &output_layer, options, &mut drop)?
                .softmax_cross_entropy(&labels, Some(&train))
        });
        assert_ok("gat model", i, err);

        let graphs = r.random_range(1..3);
        let mut ngi: Vec<usize> = (0..n).map(|_| r.random_range(0..graphs)).collect();
        ngi.sort_unstable();
        let segs = ngi[n - 1] + 1;
        let graph_labels: Vec<usize> = (0..segs).map(|_| r.random_range(0..classes)).collect();
        let pool_ins = [
            x,
            p(&mut r, &[d, hidden]),
            p(&mut r, &[hidden]),
            p(&mut r, &[hidden, hidden]),
            p(&mut r, &[hidden]),
            p(&mut r, &[2 * hidden, classes]),
            p(&mut r, &[classes]),
        ];
        let err = fd_check(&pool_ins, |_, v| {
            let l0 = GcnParams {
                kernel: v[1].clone(),
                bias: Some(v[2].clone()),
            };
            let l1 = GcnParams {
                kernel: v[3].clone(),
                bias: Some(v[4].clone()),
            };
            let h = gcn(&v[0], &g, &l0, Some(Activation::Relu), norm)?;
            let h = gcn(&h, &g, &l1, Some(Activation::Relu), norm)?;
            let pooled = mean_max_pool(&h, &ngi, segs)?.dropout(0.5, true, &mut rng(4))?;
            pooled
                .matmul(&v[5])?
                .add(&v[6])?
                .softmax_cross_entropy(&graph_labels, None)
        });
        assert_ok("mean_max_pool model", i, err);
    }
}

fn checker_flags_a_blocked_path() {
    let x = [uniform(&mut rng(1), &[3, 2], 0.5, 1.5)];
    // d/dx (x·x) is 2x; detaching one factor makes the tape report x.
    assert!(fd_check(&x, |_, v| v[0].detach().mul(&v[0])) > 0.1);
    assert!(fd_check(&x, |_, v| v[0].mul(&v[0])) <= TOL);
}

register_checks!(
    elementwise_binary,
    elementwise_unary,
    matmul_and_row_ops,
    head_ops,
    gather_and_segments,
    cross_entropy,
    aggregation,
    layers,
    full_models,
    checker_flags_a_blocked_path,
);
