//! Property tests for the structural invariants.

use proptest::prelude::*;

use sasr::corpus::{Token, Vocabulary};
use sasr::ctc;
use sasr::fmllr::{fmllr_apply, SpeakerTransform};
use sasr::graph::Graph;
use sasr::linalg;
use sasr::optim::TrainConfig;
use sasr::params::ParamStore;
use sasr::rng::Rng;
use sasr::tensor::Tensor;
use sasr::wer::edit_distance;

fn tensor_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    proptest::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |data| Tensor::new(vec![rows, cols], data).unwrap())
}

proptest! {
    /// Forward passes are pure: rebuilding the same graph twice gives
    /// bit-identical values.
    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let run = || {
            let mut rng = Rng::new(seed);
            let mut g = Graph::new();
            let x = g.leaf(Tensor::uniform(&[4, 6], 2.0, &mut rng), false);
            let w = g.leaf(Tensor::uniform(&[6, 3], 1.0, &mut rng), false);
            let b = g.leaf(Tensor::uniform(&[3], 1.0, &mut rng), false);
            let y = g.linear(x, w, b).unwrap();
            let r = g.relu(y);
            let s = g.softmax_rows(r);
            g.value(s).clone()
        };
        prop_assert!(run().bit_eq(&run()));
    }

    /// Softmax rows always sum to one.
    #[test]
    fn softmax_rows_normalize(t in tensor_strategy(5, 7)) {
        let mut g = Graph::new();
        let x = g.leaf(t, false);
        let s = g.softmax_rows(x);
        let v = g.value(s);
        for r in 0..v.rows() {
            let sum: f64 = v.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    /// Per-row layer norm standardizes every row (gamma=1, beta=0).
    #[test]
    fn layer_norm_standardizes(t in tensor_strategy(4, 8)) {
        let mut g = Graph::new();
        let x = g.leaf(t, false);
        let gamma = g.leaf(Tensor::new(vec![8], vec![1.0; 8]).unwrap(), false);
        let beta = g.leaf(Tensor::zeros(&[8]), false);
        let y = g.layer_norm(x, gamma, beta, 1e-10).unwrap();
        let v = g.value(y);
        for r in 0..v.rows() {
            let mean: f64 = v.row(r).iter().sum::<f64>() / 8.0;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    /// Column concat then slicing recovers both inputs exactly.
    #[test]
    fn concat_slice_roundtrip(a in tensor_strategy(3, 2), b in tensor_strategy(3, 4)) {
        let mut g = Graph::new();
        let an = g.leaf(a.clone(), false);
        let bn = g.leaf(b.clone(), false);
        let c = g.concat_cols(&[an, bn]).unwrap();
        let left = g.slice_cols(c, 0, 2).unwrap();
        let right = g.slice_cols(c, 2, 4).unwrap();
        prop_assert!(g.value(left).bit_eq(&a));
        prop_assert!(g.value(right).bit_eq(&b));
    }

    /// CTC gradient rows sum to zero: the softmax mass and the alignment
    /// posterior mass both total one per frame.
    #[test]
    fn ctc_gradient_rows_sum_to_zero(t in tensor_strategy(4, 3), tok in 0usize..2) {
        let (_, grad) = ctc::loss_and_grad(&t, &[tok], 2).unwrap();
        for r in 0..grad.rows() {
            let sum: f64 = grad.row(r).iter().sum();
            prop_assert!(sum.abs() < 1e-10, "row {r} sums to {sum}");
        }
    }

    /// Greedy decoding never emits the blank and never emits an immediate
    /// repeat (repeats require a separating blank in the frame labelling).
    #[test]
    fn greedy_decode_is_collapsed(t in tensor_strategy(6, 4)) {
        let decoded = ctc::greedy_decode(&t, 3);
        prop_assert!(decoded.iter().all(|&k| k != 3));
    }

    /// The optimizer never touches frozen parameters, whatever the config.
    #[test]
    fn frozen_params_never_drift(
        lr in 1e-5f64..1e-1,
        steps in 1usize..20,
        gval in -10.0f64..10.0,
    ) {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new(vec![3], vec![0.5, -1.5, 2.5]).unwrap()).unwrap();
        params.freeze_all();
        let before = params.get("w").unwrap().clone();
        let mut cfg = TrainConfig::desk_scale();
        cfg.peak_lr = lr;
        let mut grads = std::collections::BTreeMap::new();
        grads.insert("w".to_string(), Tensor::new(vec![3], vec![gval; 3]).unwrap());
        let mut opt = sasr::optim::AdamW::new();
        for step in 1..=steps {
            opt.step(&mut params, &grads, step, &cfg).unwrap();
        }
        prop_assert!(params.get("w").unwrap().bit_eq(&before));
    }

    /// Warmup/decay schedule: nonnegative, peaks exactly at the boundary,
    /// continuous across it.
    #[test]
    fn lr_schedule_shape(warmup in 1usize..200, extra in 1usize..500, peak in 1e-6f64..1.0) {
        let mut cfg = TrainConfig::desk_scale();
        cfg.peak_lr = peak;
        cfg.warmup_steps = warmup;
        cfg.total_steps = warmup + extra;
        prop_assert!(cfg.validate().is_ok());
        prop_assert!((cfg.lr_at(warmup) - peak).abs() < 1e-15);
        prop_assert_eq!(cfg.lr_at(cfg.total_steps), 0.0);
        let slope_in = peak / warmup as f64;
        let slope_out = peak / extra as f64;
        let before = cfg.lr_at(warmup) - cfg.lr_at(warmup.saturating_sub(1).max(1));
        let after = cfg.lr_at(warmup) - cfg.lr_at(warmup + 1);
        if warmup > 1 {
            prop_assert!((before - slope_in).abs() < 1e-12);
        }
        prop_assert!((after - slope_out).abs() < 1e-12);
        for step in [1, warmup / 2 + 1, warmup, warmup + extra / 2, warmup + extra] {
            prop_assert!(cfg.lr_at(step) >= 0.0);
        }
    }

    /// Edit distance is a metric: symmetry and the triangle inequality.
    #[test]
    fn edit_distance_is_a_metric(
        a in proptest::collection::vec(0usize..4, 0..8),
        b in proptest::collection::vec(0usize..4, 0..8),
        c in proptest::collection::vec(0usize..4, 0..8),
    ) {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert_eq!(edit_distance(&a, &a), 0);
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
    }

    /// Merged vocabularies have exactly the summed unit count.
    #[test]
    fn merge_size_is_sum(na in 1usize..60, nb in 1usize..60) {
        let a = Vocabulary::synthetic("EN", na);
        let b = Vocabulary::synthetic("DE", nb);
        let merged = Vocabulary::merge(&a, &b).unwrap();
        prop_assert_eq!(merged.units(), na + nb);
    }

    /// Applying a transform and then its analytic inverse recovers the
    /// original frames.
    #[test]
    fn fmllr_apply_roundtrip(seed in 0u64..500) {
        let mut rng = Rng::new(seed);
        let d = 4;
        let mut w = SpeakerTransform::identity("s", d);
        for v in w.w.iter_mut() {
            *v += 0.3 * rng.normal();
        }
        prop_assume!(w.det_a().abs() > 1e-6);
        let x = Tensor::uniform(&[6, d], 2.0, &mut rng);
        let y = fmllr_apply(&x, &w).unwrap();
        let a = w.a_matrix();
        let lu = linalg::Lu::factor(&a, d).unwrap();
        let bias = w.bias();
        for t in 0..x.rows() {
            let shifted: Vec<f64> = y.row(t).iter().zip(&bias).map(|(v, b)| v - b).collect();
            let back = lu.solve(&shifted);
            for (p, q) in back.iter().zip(x.row(t)) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }

    /// Vocabulary construction rejects duplicate (name, language) pairs.
    #[test]
    fn vocabulary_uniqueness(n in 1usize..20) {
        let mut tokens: Vec<Token> = (0..n)
            .map(|i| Token { name: format!("t{i}"), lang: Some("EN".into()) })
            .collect();
        prop_assert!(Vocabulary::new(tokens.clone()).is_ok());
        tokens.push(Token { name: "t0".into(), lang: Some("EN".into()) });
        prop_assert!(Vocabulary::new(tokens).is_err());
    }
}
