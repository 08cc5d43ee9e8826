//! Graph-model runs inside the harness: tuning, checkpoints, early stopping.

use studentgraph_core::synthetic::{generate, SyntheticConfig};
use studentgraph_core::FeatureCase;
use studentgraph_gnn::{checkpoint, ModelKind};
use studentgraph_harness::grid::select_best;
use studentgraph_harness::sweep::{checkpoint_path, fit_graph, GraphSplit, TuningCache};
use studentgraph_harness::{grid_search, run_sweep, Grid, GridPoint, ModelId, PointEval, RunConfig, TrainSettings, Workbench};

fn workbench() -> Workbench {
    let tables = generate(SyntheticConfig { students: 120, seed: 5, repeat_probability: 0.3 });
    Workbench::new(studentgraph_core::prepare(&tables).unwrap(), 3, 9).unwrap()
}

fn quick() -> TrainSettings {
    TrainSettings {
        max_epochs: 30,
        patience: 5,
        grid: Grid { lr: vec![1e-2], hidden: vec![8], heads: vec![2], dropout: vec![0.0] },
        tuning_day: 100,
        ..TrainSettings::default()
    }
}

#[test]
fn early_stopping_returns_best_validation_parameters() {
    let wb = workbench();
    let split = GraphSplit::new(wb.dataset(100).unwrap(), &wb.folds, FeatureCase::FULL, 0);
    let point = GridPoint { lr: 0.05, hidden: 8, heads: 2, dropout: 0.0 };
    for kind in ModelKind::ALL {
        let f = fit_graph(&split, kind, &point, &quick(), 1).unwrap();
        let min = f.outcome.history.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(f.outcome.best_val_loss, min);
        let rows = split.val.all_rows();
        let restored = f.model.loss(&split.val, &rows).unwrap();
        assert!((restored - min).abs() < 1e-12, "{kind}: {restored} vs {min}");
        assert!(f.outcome.epochs_run <= 30);
    }
}

#[test]
fn toy_grid_matches_brute_force() {
    let wb = workbench();
    let split = GraphSplit::new(wb.dataset(100).unwrap(), &wb.folds, FeatureCase::new(2).unwrap(), 1);
    let settings = quick();
    let grid = Grid { lr: vec![1e-3, 3e-2], hidden: vec![4, 8], heads: vec![2], dropout: vec![0.0] };
    let eval = |p: &GridPoint| {
        let f = fit_graph(&split, ModelKind::Hgt, p, &settings, 17)?;
        Ok(PointEval { val_f1: f.metrics.val_f1, val_loss: f.outcome.best_val_loss })
    };
    let out = grid_search(&grid, eval).unwrap();
    assert_eq!(out.evaluations.len(), 4);
    // independent re-evaluation of every point
    let mut best: Option<(GridPoint, f64, f64)> = None;
    for p in grid.points() {
        let f = fit_graph(&split, ModelKind::Hgt, &p, &settings, 17).unwrap();
        let (f1, loss) = (f.metrics.val_f1, f.outcome.best_val_loss);
        let better = match best {
            None => true,
            Some((_, bf, bl)) => f1 > bf || (f1 == bf && loss < bl),
        };
        if better {
            best = Some((p, f1, loss));
        }
    }
    assert_eq!(out.best, best.unwrap().0);
    assert_eq!(select_best(&out.evaluations), Some(out.best));
}

#[test]
fn degenerate_learning_rate_loses() {
    let wb = workbench();
    let split = GraphSplit::new(wb.dataset(60).unwrap(), &wb.folds, FeatureCase::new(1).unwrap(), 0);
    let settings = quick();
    let grid = Grid { lr: vec![0.0, 1e-2], hidden: vec![8], heads: vec![2], dropout: vec![0.0] };
    let out = grid_search(&grid, |p| {
        let f = fit_graph(&split, ModelKind::Han, p, &settings, 3)?;
        Ok(PointEval { val_f1: f.metrics.val_f1, val_loss: f.outcome.best_val_loss })
    })
    .unwrap();
    assert_eq!(out.best.lr, 1e-2);
    assert!(out.evaluations[0].eval.is_none());
}

#[test]
fn graph_sweep_writes_rows_checkpoints_and_tuning() {
    let wb = workbench();
    let dir = tempfile::tempdir().unwrap();
    let mut train = quick();
    train.grid.lr.push(5e-3);
    let cfg = RunConfig {
        output_dir: dir.path().to_path_buf(),
        models: vec![ModelId::Graph(ModelKind::Han), ModelId::Graph(ModelKind::Hgt)],
        cases: vec![1, 5],
        days: vec![20],
        folds: 3,
        train,
        ..RunConfig::default()
    };
    let table = run_sweep(&wb, &cfg, |_| {}).unwrap();
    assert_eq!(table.rows.len(), 2 * 2 * 3);
    assert!(table.rows.iter().all(|r| r.is_ok() && r.epochs.is_some()));
    let tuning = TuningCache::load(&dir.path().join("tuning.json")).unwrap();
    assert_eq!(tuning.outcomes.len(), 4);
    for r in &table.rows {
        let tuned = tuning.get(r.key.model.parse().unwrap(), FeatureCase::new(r.key.case).unwrap()).unwrap();
        assert_eq!(r.hyperparameters, tuned.as_map());
        let model = checkpoint::load(&checkpoint_path(&dir.path().join("checkpoints"), &r.key)).unwrap();
        assert_eq!(model.config.hidden, tuned.hidden);
        // the checkpoint reproduces the recorded validation metrics
        let split = GraphSplit::new(wb.dataset(20).unwrap(), &wb.folds, FeatureCase::new(r.key.case).unwrap(), r.key.fold);
        let pred = model.predict(&split.val).unwrap();
        let m = studentgraph_harness::compute_metrics(&split.val.labels, &pred).unwrap();
        assert_eq!(m.accuracy, r.metrics.unwrap().val_accuracy);
    }
}
