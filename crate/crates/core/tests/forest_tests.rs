mod common;

use microtex_core::forest::{DecisionTree, Matrix, Node, RandomForest, TrainConfig};
use microtex_core::Error;
use proptest::prelude::*;
use rand::Rng as _;

fn small(n_trees: usize, seed: u64) -> TrainConfig {
    TrainConfig { n_trees, seed, ..Default::default() }
}

/// Tree layout with thresholds dropped.
fn shape(t: &DecisionTree) -> Vec<(usize, usize, usize, Vec<u32>)> {
    t.nodes()
        .iter()
        .map(|n| match n {
            Node::Split { feature, left, right, n_samples, .. } => (*feature, *left, *right, vec![*n_samples as u32]),
            Node::Leaf { counts } => (usize::MAX, 0, 0, counts.clone()),
        })
        .collect()
}

fn xor() -> (Matrix, Vec<usize>) {
    let base = [([0.0f32, 0.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1), ([1.0, 1.0], 0)];
    let rows: Vec<[f32; 2]> = (0..50).flat_map(|_| base.iter().map(|b| b.0)).collect();
    let y = (0..50).flat_map(|_| base.iter().map(|b| b.1)).collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

/// `n` rows of `p` uniform features; label is 1 when feature 0 exceeds 0.5.
fn signal_data(seed: u64, n: usize, p: usize) -> (Matrix, Vec<usize>) {
    let mut r = common::rng(seed);
    let values: Vec<f32> = (0..n * p).map(|_| r.gen::<f32>()).collect();
    let x = Matrix::new(n, p, values).unwrap();
    let y = (0..n).map(|i| usize::from(x.get(i, 0) > 0.5)).collect();
    (x, y)
}

fn random_data(seed: u64, n: usize, p: usize, classes: usize) -> (Matrix, Vec<usize>) {
    let mut r = common::rng(seed);
    let values = (0..n * p).map(|_| r.gen_range(-3.0f32..3.0)).collect();
    let y = (0..n).map(|i| if i < classes { i } else { r.gen_range(0..classes) }).collect();
    (Matrix::new(n, p, values).unwrap(), y)
}

#[test]
fn xor_is_learned_exactly() {
    let (x, y) = xor();
    let f = RandomForest::fit(&x, &y, &small(50, 3)).unwrap();
    assert_eq!(f.predict_batch(&x).unwrap(), y);
}

#[test]
fn single_class_always_predicted() {
    let (x, _) = random_data(1, 20, 3, 2);
    let f = RandomForest::fit(&x, &[4; 20], &small(10, 0)).unwrap();
    assert!(f.predict_batch(&x).unwrap().iter().all(|&p| p == 4));
    assert!(f.predict(&[100.0, -100.0, 0.0]).unwrap() == 4);
}

#[test]
fn stump_routes_by_threshold() {
    let nodes = vec![
        Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, n_samples: 2, impurity_decrease: 0.5 },
        Node::Leaf { counts: vec![1, 0] },
        Node::Leaf { counts: vec![0, 1] },
    ];
    let tree = DecisionTree::from_nodes(nodes, 1, 2).unwrap();
    let f = RandomForest::from_trees(vec![tree], vec![10, 20], 1).unwrap();
    assert_eq!(f.predict(&[0.2]).unwrap(), 10);
    assert_eq!(f.predict(&[0.9]).unwrap(), 20);
    assert_eq!(f.feature_importances(), &[1.0]);
    assert!(matches!(f.predict(&[0.2, 0.3]), Err(Error::Argument(_))));
}

#[test]
fn only_split_feature_gets_importance() {
    let split =
        |feature| Node::Split { feature, threshold: 0.0, left: 1, right: 2, n_samples: 4, impurity_decrease: 0.25 };
    let tree = || {
        DecisionTree::from_nodes(
            vec![split(3), Node::Leaf { counts: vec![2, 0] }, Node::Leaf { counts: vec![0, 2] }],
            5,
            2,
        )
        .unwrap()
    };
    let f = RandomForest::from_trees(vec![tree(), tree()], vec![0, 1], 5).unwrap();
    assert_eq!(f.feature_importances(), &[0.0, 0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn predictions_match_vote_tally() {
    for seed in 0..10 {
        let (x, y) = random_data(seed, 40, 4, 3);
        let f = RandomForest::fit(&x, &y, &small(15, seed)).unwrap();
        let (tx, _) = random_data(seed + 100, 30, 4, 3);
        for i in 0..tx.rows() {
            let row = tx.row(i);
            let mut tally = vec![0usize; f.classes().len()];
            for t in f.trees() {
                tally[t.predict_index(row)] += 1;
            }
            assert_eq!(f.votes(row).unwrap(), tally);
            let best = *tally.iter().max().unwrap();
            let expected = f.classes()[tally.iter().position(|&v| v == best).unwrap()];
            assert_eq!(f.predict(row).unwrap(), expected);
        }
    }
}

#[test]
fn known_signal_feature_ranks_first() {
    for seed in 0..5 {
        let (x, y) = signal_data(seed, 200, 6);
        let f = RandomForest::fit(&x, &y, &small(100, seed)).unwrap();
        let imp = f.feature_importances();
        let top = (0..imp.len()).fold(0, |b, i| if imp[i] > imp[b] { i } else { b });
        assert_eq!(top, 0, "importances {imp:?}");
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(imp.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn fitting_is_deterministic() {
    let (x, y) = random_data(7, 60, 5, 3);
    let a = RandomForest::fit(&x, &y, &small(20, 11)).unwrap();
    let b = RandomForest::fit(&x, &y, &small(20, 11)).unwrap();
    assert_eq!(a, b);
    let c = RandomForest::fit(&x, &y, &small(20, 12)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn unbootstrapped_tree_fits_training_set() {
    for seed in 0..10 {
        let (x, y) = random_data(seed, 80, 3, 4);
        let cfg = TrainConfig { n_trees: 1, bootstrap: false, seed, ..Default::default() };
        let f = RandomForest::fit(&x, &y, &cfg).unwrap();
        assert_eq!(f.predict_batch(&x).unwrap(), y);
    }
}

#[test]
fn argument_and_data_errors() {
    let x = Matrix::new(2, 1, vec![0.0, 1.0]).unwrap();
    assert!(matches!(RandomForest::fit(&x, &[0], &small(1, 0)), Err(Error::Argument(_))));
    let empty = Matrix::new(0, 1, vec![]).unwrap();
    assert!(RandomForest::fit(&empty, &[], &small(1, 0)).is_err());
    let nan = Matrix::new(2, 1, vec![0.0, f32::NAN]);
    if let Ok(nan) = nan {
        assert!(matches!(RandomForest::fit(&nan, &[0, 1], &small(1, 0)), Err(Error::Data(_))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn monotone_rescaling_keeps_training_predictions(seed in 0u64..1000, a in 0.1f32..5.0, b in -3.0f32..3.0) {
        let (x, y) = random_data(seed, 30, 3, 2);
        // Rescaling keeps every column's order, so each tree picks the same
        // splits over the same samples. Thresholds move, which can reroute
        // out-of-bag rows, so predictions are compared without bootstrap.
        let scaled = Matrix::new(x.rows(), x.cols(), x.values().iter().map(|v| (a * v + b).exp().ln_1p()).collect()).unwrap();
        let bagged = small(15, seed);
        let f = RandomForest::fit(&x, &y, &bagged).unwrap();
        let g = RandomForest::fit(&scaled, &y, &bagged).unwrap();
        for (s, t) in f.trees().iter().zip(g.trees()) {
            prop_assert_eq!(shape(s), shape(t));
        }
        prop_assert_eq!(f.feature_importances(), g.feature_importances());
        let cfg = TrainConfig { bootstrap: false, features_per_split: Some(2), ..bagged };
        let p = RandomForest::fit(&x, &y, &cfg).unwrap().predict_batch(&x).unwrap();
        let q = RandomForest::fit(&scaled, &y, &cfg).unwrap().predict_batch(&scaled).unwrap();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn constant_feature_is_inert(seed in 0u64..1000, c in -5.0f32..5.0) {
        let (x, y) = random_data(seed, 30, 3, 3);
        let constant = Matrix::new(x.rows(), 1, vec![c; x.rows()]).unwrap();
        let widened = x.hstack(&constant).unwrap();
        let cfg = |p| TrainConfig { n_trees: 10, features_per_split: Some(p), seed, ..Default::default() };
        let f = RandomForest::fit(&x, &y, &cfg(3)).unwrap();
        let g = RandomForest::fit(&widened, &y, &cfg(4)).unwrap();
        prop_assert_eq!(g.feature_importances()[3], 0.0);
        let (tx, _) = random_data(seed + 1, 20, 3, 3);
        let tw = tx.hstack(&Matrix::new(20, 1, vec![c; 20]).unwrap()).unwrap();
        prop_assert_eq!(f.predict_batch(&tx).unwrap(), g.predict_batch(&tw).unwrap());
    }
}
