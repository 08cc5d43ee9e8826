//! Stratified k-fold assignment shared by every model, day and case.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// Fold of each dataset row.
    pub fold_of: Vec<usize>,
    pub registration_ids: Vec<u32>,
}

impl FoldAssignment {
    /// Shuffles each class with `seed`, then deals the concatenated classes
    /// round-robin. Fold sizes, and per-class counts, differ by at most one.
    pub fn stratified(labels: &[u8], registration_ids: &[u32], k: usize, seed: u64) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Invalid("cannot fold an empty dataset".into()));
        }
        if k == 0 {
            return Err(Error::Invalid("fold count must be positive".into()));
        }
        if labels.len() != registration_ids.len() {
            return Err(Error::Shape("labels and ids differ in length".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let mut fold_of = vec![0; labels.len()];
        for (slot, &row) in pos.iter().chain(&neg).enumerate() {
            fold_of[row] = slot % k;
        }
        Ok(Self { k, seed, fold_of, registration_ids: registration_ids.to_vec() })
    }

    pub fn validation_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn training_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e| Error::Csv { path: "folds.csv".into(), source: e };
        w.write_record(["registration_id", "fold"]).map_err(err)?;
        for (id, f) in self.registration_ids.iter().zip(&self.fold_of) {
            w.write_record([id.to_string(), f.to_string()]).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Convenience wrapper with the default fold count.
pub fn make_folds(labels: &[u8], registration_ids: &[u32], seed: u64) -> Result<FoldAssignment> {
    FoldAssignment::stratified(labels, registration_ids, DEFAULT_FOLDS, seed)
}
