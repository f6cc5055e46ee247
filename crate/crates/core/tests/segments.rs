//! Segment reductions against loop oracles, and segment softmax properties.

#[macro_use]
mod common;

use common::{loop_segment, rng, to_mat, uniform};
use proptest::prelude::*;
use rand::Rng;
use seggraph::map_reduce::segment_softmax;
use seggraph::tensor::{segment_reduce, ExecMode, Reducer, Tape, Tensor};

fn reductions_match_loop_oracle_exactly() {
    let mut empty_seen = 0;
    for i in 0..200u64 {
        let mut r = rng(i);
        let n = r.random_range(0..12);
        let d = r.random_range(1..5);
        // Extra segments beyond the ids in use stay empty.
        let segs = r.random_range(1..8);
        let x = uniform(&mut r, &[n, d], -5.0, 5.0);
        let ids: Vec<usize> = (0..n).map(|_| r.random_range(0..segs)).collect();
        empty_seen += (0..segs).filter(|s| !ids.contains(s)).count();
        for reducer in [Reducer::Sum, Reducer::Mean, Reducer::Max] {
            let got = segment_reduce(&x, &ids, segs, reducer).unwrap();
            let want = loop_segment(&to_mat(&x), &ids, segs, reducer);
            assert_eq!(got.shape(), &[segs, d]);
            for (s, row) in want.iter().enumerate() {
                for (c, &w) in row.iter().enumerate() {
                    assert_eq!(got.get(s, c), w, "instance {i} {reducer:?} segment {s} col {c}");
                }
            }
        }
    }
    assert!(empty_seen > 50, "too few empty segments exercised: {empty_seen}");
}

fn parallel_mode_agrees_with_deterministic() {
    let mut r = rng(99);
    let (n, d, segs) = (5000, 16, 37);
    let x = uniform(&mut r, &[n, d], -1.0, 1.0);
    let ids: Vec<usize> = (0..n).map(|_| r.random_range(0..segs)).collect();
    for reducer in [Reducer::Sum, Reducer::Mean, Reducer::Max] {
        let run = |mode| {
            let tape = Tape::with_mode(mode);
            tape.constant(x.clone())
                .segment_reduce(&ids, segs, reducer)
                .unwrap()
                .value()
                .clone()
        };
        let a = run(ExecMode::Deterministic);
        let b = run(ExecMode::Parallel);
        assert!(a.max_abs_diff(&b) <= 1e-12, "{reducer:?}");
        assert_eq!(a, run(ExecMode::Deterministic));
    }
}

fn out_of_range_id_names_position() {
    let x = Tensor::<f64>::zeros(vec![3, 1]);
    let err = segment_reduce(&x, &[0, 4, 1], 2, Reducer::Sum).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains('1') && msg.contains('4'), "{msg}");
}

fn softmax(scores: &Tensor<f64>, ids: &[usize], segs: usize) -> Tensor<f64> {
    let tape = Tape::with_mode(ExecMode::Deterministic);
    segment_softmax(&tape.constant(scores.clone()), ids, segs)
        .unwrap()
        .value()
        .clone()
}

fn segment_sums(t: &Tensor<f64>, ids: &[usize], segs: usize) -> Tensor<f64> {
    segment_reduce(t, ids, segs, Reducer::Sum).unwrap()
}

fn softmax_is_stable_at_large_logits() {
    let scores = Tensor::matrix(4, 1, vec![1000.0, 999.0, -1000.0, 1000.0]).unwrap();
    let ids = [0, 0, 1, 1];
    let p = softmax(&scores, &ids, 2);
    assert!(p.all_finite());
    let e = (-1.0f64).exp();
    assert!((p.get(0, 0) - 1.0 / (1.0 + e)).abs() < 1e-12);
    assert!((p.get(3, 0) - 1.0).abs() < 1e-12);
    assert!(p.get(2, 0) < 1e-300);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    fn softmax_sums_to_one_and_ignores_shifts(
        rows in prop::collection::vec((0usize..6, prop::collection::vec(-1000.0f64..1000.0, 3)), 1..30),
        shift in -500.0f64..500.0,
    ) {
        let segs = 6;
        let ids: Vec<usize> = rows.iter().map(|(s, _)| *s).collect();
        let data: Vec<f64> = rows.iter().flat_map(|(_, v)| v.clone()).collect();
        let scores = Tensor::matrix(rows.len(), 3, data).unwrap();
        let p = softmax(&scores, &ids, segs);
        prop_assert!(p.all_finite());
        let sums = segment_sums(&p, &ids, segs);
        for s in 0..segs {
            let used = ids.contains(&s);
            for c in 0..3 {
                let v = sums.get(s, c);
                if used {
                    prop_assert!((1.0 - 1e-6..=1.0 + 1e-6).contains(&v), "segment {} col {}: {}", s, c, v);
                } else {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
        // Adding a constant per segment leaves the result unchanged.
        let shifted = scores.map(|v| v + shift);
        let q = softmax(&shifted, &ids, segs);
        prop_assert!(p.max_abs_diff(&q) <= 1e-9);
    }

    fn sum_mean_max_agree_with_oracle_f32(
        rows in prop::collection::vec((0usize..5, -100i32..100), 0..40),
    ) {
        // Integer-valued f32 inputs make every order of summation exact.
        let ids: Vec<usize> = rows.iter().map(|(s, _)| *s).collect();
        let data: Vec<f32> = rows.iter().map(|(_, v)| *v as f32).collect();
        let x = Tensor::new(vec![rows.len(), 1], data.clone()).unwrap();
        let as_f64: Vec<Vec<f64>> = data.iter().map(|&v| vec![v as f64]).collect();
        for reducer in [Reducer::Sum, Reducer::Max] {
            let got = segment_reduce(&x, &ids, 5, reducer).unwrap();
            let want = loop_segment(&as_f64, &ids, 5, reducer);
            for s in 0..5 {
                let w = want.get(s).and_then(|r| r.first()).copied().unwrap_or(0.0);
                prop_assert_eq!(got.get(s, 0) as f64, w);
            }
        }
    }
}

register_checks!(
    reductions_match_loop_oracle_exactly,
    parallel_mode_agrees_with_deterministic,
    out_of_range_id_names_position,
    softmax_is_stable_at_large_logits,
    softmax_sums_to_one_and_ignores_shifts,
    sum_mean_max_agree_with_oracle_f32,
);
