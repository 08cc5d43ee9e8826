//! Run configuration: one JSON document, every field optional.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use studentgraph_baselines::ModelName;
use studentgraph_core::grades::is_snapshot_day;
use studentgraph_core::{FeatureCase, SNAPSHOT_DAYS};
use studentgraph_gnn::{AdamConfig, ModelKind, TrainConfig};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// A classical baseline or a graph model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelId {
    Baseline(ModelName),
    Graph(ModelKind),
}

impl ModelId {
    pub fn all() -> Vec<ModelId> {
        let mut v: Vec<ModelId> = ModelName::ALL.into_iter().map(ModelId::Baseline).collect();
        v.extend(ModelKind::ALL.into_iter().map(ModelId::Graph));
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Baseline(m) => m.short(),
            ModelId::Graph(k) => k.as_str(),
        }
    }

    pub fn is_graph(self) -> bool {
        matches!(self, ModelId::Graph(_))
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(k) = s.parse::<ModelKind>() {
            return Ok(ModelId::Graph(k));
        }
        s.parse::<ModelName>().map(ModelId::Baseline).map_err(|_| Error::Config(format!("unknown model {s:?}")))
    }
}

impl Serialize for ModelId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModelId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub grid: Grid,
    /// Grid search runs once per (model, case) on this day and fold.
    pub tuning_day: u32,
    pub tuning_fold: usize,
    /// Without tuning the first value of every grid list is used.
    pub tune: bool,
    pub save_checkpoints: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            max_epochs: 800,
            patience: 100,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            grid: Grid::default(),
            tuning_day: 100,
            tuning_fold: 0,
            tune: true,
            save_checkpoints: true,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay },
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub models: Vec<ModelId>,
    pub cases: Vec<u8>,
    pub days: Vec<u32>,
    pub folds: usize,
    pub train: TrainSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            seed: 42,
            models: ModelId::all(),
            cases: FeatureCase::ALL.iter().map(|c| c.id()).collect(),
            days: SNAPSHOT_DAYS.iter().map(|&(d, _)| d).collect(),
            folds: 5,
            train: TrainSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|source| Error::Json { path: origin.to_path_buf(), source })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.days.is_empty() {
            return Err(Error::Config("model and day lists must be nonempty".into()));
        }
        if let Some(d) = self.days.iter().find(|&&d| !is_snapshot_day(d)) {
            return Err(Error::Config(format!("day {d} is not a snapshot day")));
        }
        for &c in &self.cases {
            FeatureCase::new(c).map_err(|_| Error::Config(format!("case {c} outside 1..5")))?;
        }
        if self.models.iter().any(|m| m.is_graph()) && self.cases.is_empty() {
            return Err(Error::Config("graph models need at least one case".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        let t = &self.train;
        if t.patience >= t.max_epochs {
            return Err(Error::Config(format!("patience {} must be below max_epochs {}", t.patience, t.max_epochs)));
        }
        if t.tuning_fold >= self.folds {
            return Err(Error::Config(format!("tuning fold {} of {} folds", t.tuning_fold, self.folds)));
        }
        if !is_snapshot_day(t.tuning_day) {
            return Err(Error::Config(format!("tuning day {} is not a snapshot day", t.tuning_day)));
        }
        t.grid.validate()?;
        self.train.train_config(1.0, 0).validate()?;
        Ok(())
    }

    pub fn feature_cases(&self) -> Vec<FeatureCase> {
        self.cases.iter().filter_map(|&c| FeatureCase::new(c).ok()).collect()
    }

    /// Days in ascending order without duplicates.
    pub fn sorted_days(&self) -> Vec<u32> {
        let mut d = self.days.clone();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join("results.jsonl")
    }
}
