use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use studentgraph_core::Matrix;
use studentgraph_gnn::{train, AdamConfig, Error, GnnConfig, GnnModel, GraphInput, ModelKind, TrainConfig};

/// Label is the sign of the first feature; pairs of nodes share a "student".
fn learnable(n: usize, seed: u64) -> GraphInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let labels = x.iter_rows().map(|r| u8::from(r[0] > 0.0)).collect();
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|v| (v, v)).collect();
    for u in (0..n - 1).step_by(2) {
        pairs.push((u, u + 1));
        pairs.push((u + 1, u));
    }
    GraphInput::new(x, labels, vec![("R-S-R".into(), pairs)])
}

fn config(kind: ModelKind) -> GnnConfig {
    GnnConfig { hidden: 8, heads: 2, ..GnnConfig::new(kind, 3) }
}

fn train_config() -> TrainConfig {
    TrainConfig { adam: AdamConfig { lr: 0.02, ..AdamConfig::default() }, max_epochs: 150, patience: 30, seed: 1 }
}

#[test]
fn training_learns_a_simple_rule() {
    let (tr, va) = (learnable(80, 1), learnable(40, 2));
    for kind in ModelKind::ALL {
        let mut model = GnnModel::new(config(kind)).unwrap();
        let before = model.loss(&va, &va.all_rows()).unwrap();
        let out = train(&mut model, &tr, &va, &train_config()).unwrap();
        let after = model.loss(&va, &va.all_rows()).unwrap();
        assert!(after < before * 0.6, "{kind}: {before} -> {after}");
        assert_eq!(after, out.best_val_loss);
        let acc = model.predict(&va).unwrap().iter().zip(va.labels.iter()).filter(|(a, b)| a == b).count();
        assert!(acc as f64 / 40.0 >= 0.85, "{kind}: accuracy {acc}/40");
    }
}

#[test]
fn training_is_reproducible_with_dropout() {
    let (tr, va) = (learnable(40, 3), learnable(20, 4));
    let cfg = GnnConfig { dropout: 0.3, ..config(ModelKind::Hgt) };
    let run = || {
        let mut m = GnnModel::new(cfg.clone()).unwrap();
        let out = train(&mut m, &tr, &va, &TrainConfig { max_epochs: 20, ..train_config() }).unwrap();
        (m, out)
    };
    let (a, oa) = run();
    let (b, ob) = run();
    assert_eq!(a, b);
    assert_eq!(oa, ob);
}

#[test]
fn epoch_cap_and_bad_learning_rate() {
    let (tr, va) = (learnable(20, 5), learnable(10, 6));
    let mut m = GnnModel::new(config(ModelKind::Han)).unwrap();
    let out = train(&mut m, &tr, &va, &TrainConfig { max_epochs: 7, ..train_config() }).unwrap();
    assert_eq!(out.epochs_run, 7);
    assert_eq!(out.history.len(), 7);
    let bad = TrainConfig { adam: AdamConfig { lr: 0.0, ..AdamConfig::default() }, ..train_config() };
    assert!(matches!(train(&mut m, &tr, &va, &bad), Err(Error::Config(_))));
}
