//! End-to-end data preparation: filtered records, 13 snapshots, encoded
//! datasets, and their file outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::encode::{Encoder, SnapshotDataset};
use crate::error::{Error, Result};
use crate::grades::{build_snapshots, PassModelWeights, Snapshot};
use crate::ingest::OulaTables;
use crate::preprocess::{preprocess, write_records_file, Preprocessed};

#[derive(Debug, Clone)]
pub struct Prepared {
    pub preprocessed: Preprocessed,
    pub snapshots: Vec<Snapshot>,
    pub encoder: Encoder,
    /// One encoded dataset per snapshot day, same row order as the records.
    pub datasets: Vec<SnapshotDataset>,
}

impl Prepared {
    pub fn dataset(&self, day: u32) -> Option<&SnapshotDataset> {
        self.datasets.iter().find(|d| d.day == day)
    }
}

pub fn prepare(tables: &OulaTables) -> Result<Prepared> {
    let preprocessed = preprocess(tables);
    let snapshots = build_snapshots(&preprocessed.records, &preprocessed.index);
    let encoder = Encoder::fit(&preprocessed.records);
    let datasets = snapshots
        .iter()
        .map(|s| encoder.transform(&preprocessed.records, &s.partial_grade, s.day))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { preprocessed, snapshots, encoder, datasets })
}

pub fn write_weights<W: Write>(weights: &[PassModelWeights], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e| Error::Csv { path: "weights.csv".into(), source: e };
    w.write_record(["module", "presentation", "alpha", "beta", "n_fit", "source", "residual_offset"]).map_err(err)?;
    for p in weights {
        w.write_record([
            p.code_module.clone(),
            p.code_presentation.clone(),
            format!("{:.6}", p.alpha),
            format!("{:.6}", p.beta),
            p.n_fit.to_string(),
            format!("{:?}", p.source),
            format!("{:.6}", p.residual_offset),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn snapshot_file_name(day: u32) -> String {
    format!("snapshot_d{day}.csv")
}

/// Writes `weights.csv` and the 13 `snapshot_d{day}.csv` files.
pub fn write_snapshot_files(prepared: &Prepared, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_weights(&prepared.preprocessed.weights, BufWriter::new(File::create(dir.join("weights.csv"))?))?;
    for s in &prepared.snapshots {
        write_records_file(&dir.join(snapshot_file_name(s.day)), &prepared.preprocessed.records, Some(&s.partial_grade))?;
    }
    Ok(())
}
