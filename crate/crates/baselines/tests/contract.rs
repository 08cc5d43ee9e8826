use proptest::prelude::*;
use studentgraph_baselines::{fit, ClassifierSpec, Error, ModelName};
use studentgraph_core::Matrix;

fn accuracy(a: &[u8], b: &[u8]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

/// Noisy two-class data with distinct rows.
fn noisy(n: usize, seed: u64) -> (Matrix, Vec<u8>) {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64)
    };
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let r = vec![next() * 4.0, next() * 2.0 - 1.0, (next() * 3.0).floor(), next()];
        let p = 1.0 / (1.0 + (-(r[0] - 2.0 + r[1])).exp());
        y.push(u8::from(next() < p));
        rows.push(r);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

#[test]
fn separable_logistic_regression_is_perfect_on_train() {
    let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.5], vec![0.5, 1.0], vec![3.0, 3.0], vec![4.0, 3.5], vec![3.5, 4.0]])
        .unwrap();
    let y = [0, 0, 0, 1, 1, 1];
    let m = fit(&ClassifierSpec::new(ModelName::LogisticRegression), &x, &y, 0).unwrap();
    assert_eq!(accuracy(&m.predict(&x).unwrap().labels, &y), 1.0);
}

#[test]
fn constant_label_predicts_that_label_everywhere() {
    let (x, _) = noisy(30, 1);
    for label in [0u8, 1] {
        let y = vec![label; 30];
        for name in ModelName::ALL {
            let m = fit(&ClassifierSpec::new(name), &x, &y, 0).unwrap();
            let p = m.predict(&x).unwrap();
            assert!(p.labels.iter().all(|&l| l == label), "{name}");
        }
    }
}

#[test]
fn unbounded_decision_tree_memorizes_training_set() {
    let (x, y) = noisy(300, 2);
    let m = fit(&ClassifierSpec::new(ModelName::DecisionTree), &x, &y, 0).unwrap();
    assert_eq!(accuracy(&m.predict(&x).unwrap().labels, &y), 1.0);
}

#[test]
fn one_nearest_neighbour_returns_training_labels() {
    let (x, y) = noisy(200, 3);
    let m = fit(&ClassifierSpec::new(ModelName::Knn).with("k", 1.0), &x, &y, 0).unwrap();
    assert_eq!(m.predict(&x).unwrap().labels, y);
}

#[test]
fn empty_matrix_gives_empty_prediction() {
    let (x, y) = noisy(40, 4);
    for name in ModelName::ALL {
        let m = fit(&ClassifierSpec::new(name), &x, &y, 0).unwrap();
        let p = m.predict(&Matrix::zeros(0, 4)).unwrap();
        assert!(p.labels.is_empty(), "{name}");
    }
}

#[test]
fn column_mismatch_is_an_error() {
    let (x, y) = noisy(40, 5);
    for name in ModelName::ALL {
        let m = fit(&ClassifierSpec::new(name), &x, &y, 0).unwrap();
        assert!(matches!(m.predict(&Matrix::zeros(3, 5)), Err(Error::Shape(_))), "{name}");
    }
}

#[test]
fn bad_training_inputs_rejected() {
    let spec = ClassifierSpec::new(ModelName::Lda);
    assert!(matches!(fit(&spec, &Matrix::zeros(0, 3), &[], 0), Err(Error::EmptyTrainingSet)));
    assert!(fit(&spec, &Matrix::zeros(2, 3), &[0], 0).is_err());
    assert!(matches!(fit(&spec, &Matrix::zeros(2, 1), &[0, 2], 0), Err(Error::Label(2))));
}

#[test]
fn forests_fit_training_data_closely() {
    let (x, y) = noisy(300, 6);
    let rf = fit(&ClassifierSpec::new(ModelName::RandomForest), &x, &y, 9).unwrap();
    assert!(accuracy(&rf.predict(&x).unwrap().labels, &y) >= 0.95);
    assert!(rf.fit_seconds >= 0.0);
    assert_eq!(rf.seed, 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn same_seed_same_predictions(seed in 0u64..1000, data_seed in 0u64..1000, which in 0usize..9) {
        let name = ModelName::ALL[which];
        let (x, y) = noisy(60, data_seed);
        prop_assume!(y.contains(&0) && y.contains(&1));
        let spec = match name {
            ModelName::RandomForest | ModelName::Bagging => ClassifierSpec::new(name).with("n_estimators", 5.0),
            _ => ClassifierSpec::new(name),
        };
        let a = fit(&spec, &x, &y, seed).unwrap().predict(&x).unwrap();
        let b = fit(&spec, &x, &y, seed).unwrap().predict(&x).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.labels.iter().all(|&l| l <= 1));
        if let Some(s) = &a.scores {
            prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
