//! The cross-validated sweep: 9 baselines on the full feature set and the
//! graph models on every feature case, for every day and fold.
//!
//! Runs execute one after another; each run parallelizes internally. Every
//! run draws its seeds from the master seed and its key alone, so resuming a
//! sweep or running a subset reproduces the same rows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use studentgraph_baselines::{fit, ClassifierSpec, ModelName};
use studentgraph_core::graph::build_graph;
use studentgraph_core::matrix::Standardizer;
use studentgraph_core::{
    compute_metrics, ingest, prepare, FeatureCase, FoldAssignment, HeteroGraph, Prepared, SnapshotDataset, Split,
};
use studentgraph_gnn::{checkpoint, train, GnnConfig, GnnModel, GraphInput, ModelKind, TrainOutcome};

use crate::config::{ModelId, RunConfig, TrainSettings};
use crate::error::{Error, Result};
use crate::grid::{grid_search, GridPoint, PointEval, TuningOutcome};
use crate::results::{ResultRow, ResultsTable, ResultsWriter, RunKey, RunMetrics};

/// Prepared snapshots plus the fold assignment shared by every run.
pub struct Workbench {
    pub prepared: Prepared,
    pub folds: FoldAssignment,
}

impl Workbench {
    pub fn new(prepared: Prepared, k: usize, seed: u64) -> Result<Self> {
        let ds = prepared.datasets.first().ok_or_else(|| Error::Config("no snapshot datasets".into()))?;
        let folds = FoldAssignment::stratified(&ds.labels, &ds.registration_ids, k, seed)?;
        Ok(Self { prepared, folds })
    }

    pub fn load(data_dir: &Path, k: usize, seed: u64) -> Result<Self> {
        let tables = ingest::load_oula(data_dir)?;
        Self::new(prepare(&tables)?, k, seed)
    }

    pub fn dataset(&self, day: u32) -> Result<&SnapshotDataset> {
        self.prepared.dataset(day).ok_or_else(|| Error::Config(format!("no snapshot for day {day}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Job {
    Baseline { model: ModelName, day: u32, fold: usize },
    Graph { kind: ModelKind, case: FeatureCase, day: u32, fold: usize },
}

impl Job {
    pub fn key(&self) -> RunKey {
        match *self {
            Job::Baseline { model, day, fold } => {
                RunKey { model: model.short().to_string(), case: FeatureCase::FULL.id(), day, fold }
            }
            Job::Graph { kind, case, day, fold } => RunKey { model: kind.as_str().to_string(), case: case.id(), day, fold },
        }
    }
}

/// Jobs in execution order: by day, then fold, baselines before graph models.
pub fn plan(cfg: &RunConfig) -> Vec<Job> {
    let mut jobs = Vec::new();
    for day in cfg.sorted_days() {
        for fold in 0..cfg.folds {
            for m in &cfg.models {
                if let ModelId::Baseline(model) = *m {
                    jobs.push(Job::Baseline { model, day, fold });
                }
            }
            // cases outermost so consecutive graph jobs share one split
            for case in cfg.feature_cases() {
                for m in &cfg.models {
                    if let ModelId::Graph(kind) = *m {
                        jobs.push(Job::Graph { kind, case, day, fold });
                    }
                }
            }
        }
    }
    jobs
}

/// Stable per-run seed: FNV-1a over the key, mixed with the master seed.
pub fn run_seed(master: u64, key: &RunKey) -> u64 {
    let text = format!("{}|{}|{}|{}", key.model, key.case, key.day, key.fold);
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = h ^ master.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn failed_row(key: RunKey, seed: u64, seconds: f64, err: &Error) -> ResultRow {
    log::warn!("{} case {} day {} fold {} failed: {err}", key.model, key.case, key.day, key.fold);
    ResultRow {
        key,
        metrics: None,
        epochs: None,
        best_epoch: None,
        seconds,
        seed,
        hyperparameters: BTreeMap::new(),
        error: Some(err.to_string()),
    }
}

pub fn run_baseline(ds: &SnapshotDataset, folds: &FoldAssignment, model: ModelName, fold: usize, seed: u64) -> ResultRow {
    let key = Job::Baseline { model, day: ds.day, fold }.key();
    let start = Instant::now();
    let spec = ClassifierSpec::new(model);
    let outcome = (|| -> Result<RunMetrics> {
        let cols = ds.case_columns(FeatureCase::FULL);
        let (tr, va) = (folds.training_rows(fold), folds.validation_rows(fold));
        let x_tr = ds.features.select_rows(&tr).select_cols(&cols);
        let x_va = ds.features.select_rows(&va).select_cols(&cols);
        let y_tr: Vec<u8> = tr.iter().map(|&i| ds.labels[i]).collect();
        let y_va: Vec<u8> = va.iter().map(|&i| ds.labels[i]).collect();
        let fitted = fit(&spec, &x_tr, &y_tr, seed)?;
        let train = compute_metrics(&y_tr, &fitted.predict(&x_tr)?.labels)?;
        let val = compute_metrics(&y_va, &fitted.predict(&x_va)?.labels)?;
        Ok(RunMetrics {
            train_accuracy: train.accuracy,
            train_f1: train.f1_weighted,
            val_accuracy: val.accuracy,
            val_f1: val.f1_weighted,
        })
    })();
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(metrics) => ResultRow {
            key,
            metrics: Some(metrics),
            epochs: None,
            best_epoch: None,
            seconds,
            seed,
            hyperparameters: spec.name.defaults().iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            error: None,
        },
        Err(e) => failed_row(key, seed, seconds, &e),
    }
}

/// Train and validation graphs of one fold, features standardized with
/// training statistics.
pub struct GraphSplit {
    pub train: GraphInput,
    pub val: GraphInput,
}

impl GraphSplit {
    pub fn graphs(ds: &SnapshotDataset, folds: &FoldAssignment, case: FeatureCase, fold: usize) -> (HeteroGraph, HeteroGraph) {
        let train = build_graph(ds, &folds.training_rows(fold), case, Split::Train);
        let val = build_graph(ds, &folds.validation_rows(fold), case, Split::Validation);
        (train, val)
    }

    pub fn new(ds: &SnapshotDataset, folds: &FoldAssignment, case: FeatureCase, fold: usize) -> Self {
        let (train, val) = Self::graphs(ds, folds, case, fold);
        let scaler = Standardizer::fit(&train.features);
        let mut train = GraphInput::from_graph(&train);
        let mut val = GraphInput::from_graph(&val);
        train.x = scaler.transform(&train.x);
        val.x = scaler.transform(&val.x);
        Self { train, val }
    }
}

pub struct GraphFit {
    pub model: GnnModel,
    pub outcome: TrainOutcome,
    pub metrics: RunMetrics,
    pub seconds: f64,
}

pub fn fit_graph(split: &GraphSplit, kind: ModelKind, point: &GridPoint, settings: &TrainSettings, seed: u64) -> Result<GraphFit> {
    let start = Instant::now();
    let config = GnnConfig {
        hidden: point.hidden,
        heads: point.heads,
        dropout: point.dropout,
        seed,
        relations: split.train.relations.iter().map(|r| r.name.clone()).collect(),
        ..GnnConfig::new(kind, split.train.x.cols())
    };
    let mut model = GnnModel::new(config)?;
    let outcome = train(&mut model, &split.train, &split.val, &settings.train_config(point.lr, seed.wrapping_add(1)))?;
    let train_m = compute_metrics(&split.train.labels, &model.predict(&split.train)?)?;
    let val_m = compute_metrics(&split.val.labels, &model.predict(&split.val)?)?;
    Ok(GraphFit {
        model,
        outcome,
        metrics: RunMetrics {
            train_accuracy: train_m.accuracy,
            train_f1: train_m.f1_weighted,
            val_accuracy: val_m.accuracy,
            val_f1: val_m.f1_weighted,
        },
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn checkpoint_path(dir: &Path, key: &RunKey) -> PathBuf {
    dir.join(format!("{}_case{}_day{}_fold{}.json", key.model, key.case, key.day, key.fold))
}

pub fn run_graph(
    split: &GraphSplit,
    key: RunKey,
    kind: ModelKind,
    point: &GridPoint,
    settings: &TrainSettings,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> ResultRow {
    let start = Instant::now();
    let outcome = fit_graph(split, kind, point, settings, seed).and_then(|f| {
        if let Some(dir) = checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            checkpoint::save(&f.model, &checkpoint_path(dir, &key))?;
        }
        Ok(f)
    });
    match outcome {
        Ok(f) => ResultRow {
            key,
            metrics: Some(f.metrics),
            epochs: Some(f.outcome.epochs_run),
            best_epoch: Some(f.outcome.best_epoch),
            seconds: f.seconds,
            seed,
            hyperparameters: point.as_map(),
            error: None,
        },
        Err(e) => failed_row(key, seed, start.elapsed().as_secs_f64(), &e),
    }
}

/// Tuned grid points per (model, case), persisted as JSON for resumes.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TuningCache {
    pub outcomes: BTreeMap<String, TuningOutcome>,
}

impl TuningCache {
    fn key(kind: ModelKind, case: FeatureCase) -> String {
        format!("{}/case{}", kind, case.id())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn get(&self, kind: ModelKind, case: FeatureCase) -> Option<GridPoint> {
        self.outcomes.get(&Self::key(kind, case)).map(|o| o.best)
    }
}

/// Grid search for one (model, case) on the configured tuning day and fold.
pub fn tune(wb: &Workbench, cfg: &RunConfig, kind: ModelKind, case: FeatureCase) -> Result<TuningOutcome> {
    let t = &cfg.train;
    let ds = wb.dataset(t.tuning_day)?;
    let split = GraphSplit::new(ds, &wb.folds, case, t.tuning_fold);
    let key = RunKey { model: format!("{kind}-tuning"), case: case.id(), day: t.tuning_day, fold: t.tuning_fold };
    let seed = run_seed(cfg.seed, &key);
    let out = grid_search(&t.grid, |p| {
        let f = fit_graph(&split, kind, p, t, seed)?;
        Ok(PointEval { val_f1: f.metrics.val_f1, val_loss: f.outcome.best_val_loss })
    })?;
    log::info!("{kind} case {}: tuned {:?}", case.id(), out.best);
    Ok(out)
}

/// Runs every planned job whose key has no successful record yet, appending
/// each finished row to the results file. Returns the full table.
pub fn run_sweep(wb: &Workbench, cfg: &RunConfig, progress: impl FnMut(&ResultRow)) -> Result<ResultsTable> {
    run_sweep_with(wb, cfg, false, progress)
}

/// With `force`, every planned key is rerun (the new records supersede the
/// old ones) and cached tuning for the planned graph models is discarded.
pub fn run_sweep_with(wb: &Workbench, cfg: &RunConfig, force: bool, mut progress: impl FnMut(&ResultRow)) -> Result<ResultsTable> {
    cfg.validate()?;
    if wb.folds.k != cfg.folds {
        return Err(Error::Config(format!("workbench has {} folds, config {}", wb.folds.k, cfg.folds)));
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let results_path = cfg.results_path();
    let done = ResultsTable::load(&results_path)?.completed();
    let mut writer = ResultsWriter::open(&results_path)?;
    let tuning_path = cfg.output_dir.join("tuning.json");
    let mut tuning = TuningCache::load(&tuning_path)?;
    let checkpoint_dir = cfg.train.save_checkpoints.then(|| cfg.output_dir.join("checkpoints"));
    let jobs: Vec<Job> = plan(cfg).into_iter().filter(|j| force || !done.contains(&j.key())).collect();
    if force {
        for j in &jobs {
            if let Job::Graph { kind, case, .. } = j {
                tuning.outcomes.remove(&TuningCache::key(*kind, *case));
            }
        }
    }
    log::info!("{} runs planned, {} already complete", jobs.len(), done.len());
    let mut splits: Option<(u32, FeatureCase, usize, Arc<GraphSplit>)> = None;
    for job in jobs {
        let key = job.key();
        let seed = run_seed(cfg.seed, &key);
        let row = match job {
            Job::Baseline { model, day, fold } => run_baseline(wb.dataset(day)?, &wb.folds, model, fold, seed),
            Job::Graph { kind, case, day, fold } => {
                let point = match tuning.get(kind, case) {
                    Some(p) => Ok(p),
                    None if !cfg.train.tune => cfg.train.grid.first().ok_or_else(|| Error::Config("empty grid".into())),
                    None => tune(wb, cfg, kind, case).and_then(|o| {
                        let best = o.best;
                        tuning.outcomes.insert(TuningCache::key(kind, case), o);
                        tuning.save(&tuning_path)?;
                        Ok(best)
                    }),
                };
                match point {
                    Ok(point) => {
                        let split = match &splits {
                            Some((d, c, f, s)) if (*d, *c, *f) == (day, case, fold) => Arc::clone(s),
                            _ => {
                                let s = Arc::new(GraphSplit::new(wb.dataset(day)?, &wb.folds, case, fold));
                                splits = Some((day, case, fold, Arc::clone(&s)));
                                s
                            }
                        };
                        run_graph(&split, key, kind, &point, &cfg.train, seed, checkpoint_dir.as_deref())
                    }
                    Err(e) => failed_row(key, seed, 0.0, &e),
                }
            }
        };
        writer.append(&row)?;
        progress(&row);
    }
    ResultsTable::load(&results_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_cardinality() {
        let cfg = RunConfig::default();
        let jobs = plan(&cfg);
        assert_eq!(jobs.len(), 13 * 5 * (9 + 2 * 5));
        let keys: std::collections::BTreeSet<RunKey> = jobs.iter().map(Job::key).collect();
        assert_eq!(keys.len(), jobs.len());
    }

    #[test]
    fn seeds_depend_on_every_key_field() {
        let k = RunKey { model: "LR".into(), case: 5, day: 20, fold: 0 };
        let s = run_seed(1, &k);
        assert_eq!(s, run_seed(1, &k));
        assert_ne!(s, run_seed(2, &k));
        assert_ne!(s, run_seed(1, &RunKey { fold: 1, ..k.clone() }));
        assert_ne!(s, run_seed(1, &RunKey { day: 40, ..k.clone() }));
        assert_ne!(s, run_seed(1, &RunKey { case: 4, ..k.clone() }));
        assert_ne!(s, run_seed(1, &RunKey { model: "RF".into(), ..k }));
    }
}
