//! Line-delimited result records and their fold aggregation.
//!
//! Every finished run is appended to `results.jsonl` as one JSON object and
//! flushed immediately, so an interrupted sweep loses at most the run in
//! flight. Later records for the same key supersede earlier ones.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// (model, case, day, fold)
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub model: String,
    pub case: u8,
    pub day: u32,
    pub fold: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub train_accuracy: f64,
    pub train_f1: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
}

impl RunMetrics {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::TrainAccuracy => self.train_accuracy,
            Metric::TrainF1 => self.train_f1,
            Metric::ValAccuracy => self.val_accuracy,
            Metric::ValF1 => self.val_f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    TrainAccuracy,
    TrainF1,
    ValAccuracy,
    ValF1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::TrainAccuracy, Metric::TrainF1, Metric::ValAccuracy, Metric::ValF1];

    pub fn label(self) -> &'static str {
        match self {
            Metric::TrainAccuracy => "Train Accuracy",
            Metric::TrainF1 => "Train F1",
            Metric::ValAccuracy => "Val Accuracy",
            Metric::ValF1 => "Val F1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(flatten)]
    pub key: RunKey,
    /// `None` marks a failed run.
    pub metrics: Option<RunMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    /// Wall-clock seconds for fitting and predicting this fold.
    pub seconds: f64,
    pub seed: u64,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.metrics.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    /// Reads a record file. A missing file is an empty table; unparsable
    /// lines (typically a torn final write) are skipped with a warning.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let reader = BufReader::new(File::open(path)?);
        let mut rows = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ResultRow>(&line) {
                Ok(r) => rows.push(r),
                Err(e) => log::warn!("{}:{}: skipping unreadable record: {e}", path.display(), n + 1),
            }
        }
        Ok(Self { rows })
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Latest record per key, in key order.
    pub fn latest(&self) -> BTreeMap<RunKey, &ResultRow> {
        let mut m = BTreeMap::new();
        for r in &self.rows {
            m.insert(r.key.clone(), r);
        }
        m
    }

    /// Keys whose latest record succeeded; a resumed sweep skips these.
    pub fn completed(&self) -> BTreeSet<RunKey> {
        self.latest().into_iter().filter(|(_, r)| r.is_ok()).map(|(k, _)| k).collect()
    }

    pub fn failed(&self) -> Vec<&ResultRow> {
        self.latest().into_values().filter(|r| !r.is_ok()).collect()
    }

    /// Fold means per (model, case, day) over successful runs.
    pub fn summarize(&self) -> BTreeMap<CellKey, Cell> {
        let mut groups: BTreeMap<CellKey, Vec<&ResultRow>> = BTreeMap::new();
        for (k, r) in self.latest() {
            if r.is_ok() {
                groups.entry(CellKey { model: k.model.clone(), case: k.case, day: k.day }).or_default().push(r);
            }
        }
        groups.into_iter().map(|(k, rows)| (k, Cell::from_rows(&rows))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub model: String,
    pub case: u8,
    pub day: u32,
}

/// Fold aggregate for one (model, case, day).
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub folds: usize,
    pub mean: RunMetrics,
    pub seconds_mean: f64,
    pub seconds_sum: f64,
}

impl Cell {
    /// `rows` must be nonempty and successful; they are combined in fold order.
    pub fn from_rows(rows: &[&ResultRow]) -> Self {
        let mut sorted: Vec<&ResultRow> = rows.to_vec();
        sorted.sort_by_key(|r| r.key.fold);
        let n = sorted.len() as f64;
        let mean_of = |f: &dyn Fn(&RunMetrics) -> f64| sorted.iter().map(|r| f(r.metrics.as_ref().unwrap())).sum::<f64>() / n;
        let seconds_sum: f64 = sorted.iter().map(|r| r.seconds).sum();
        Self {
            folds: sorted.len(),
            mean: RunMetrics {
                train_accuracy: mean_of(&|m| m.train_accuracy),
                train_f1: mean_of(&|m| m.train_f1),
                val_accuracy: mean_of(&|m| m.val_accuracy),
                val_f1: mean_of(&|m| m.val_f1),
            },
            seconds_mean: seconds_sum / n,
            seconds_sum,
        }
    }
}

/// Single appending writer for the record file.
pub struct ResultsWriter {
    path: PathBuf,
    file: File,
}

impl ResultsWriter {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).read(true).open(path)?;
        // a torn last record must not swallow the next one
        let len = file.metadata()?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1))?;
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        Ok(Self { path: path.to_path_buf(), file })
    }

    pub fn append(&mut self, row: &ResultRow) -> Result<()> {
        let mut line = serde_json::to_string(row).map_err(|source| Error::Json { path: self.path.clone(), source })?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}
