//! Data-preparation outputs: canonical table, snapshots, folds, PCA and
//! graph dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use studentgraph_core::graph::{graph_stats, write_edge_list};
use studentgraph_core::pca::{pca_loadings, Pca};
use studentgraph_core::pipeline::write_snapshot_files;
use studentgraph_core::preprocess::write_records_file;
use studentgraph_core::{Feature, FeatureCase, FoldAssignment, Matrix, Prepared};

use crate::error::{Error, Result};
use crate::sweep::GraphSplit;

pub const PREPROCESSED_FILE: &str = "preprocessed.csv";
pub const FOLDS_FILE: &str = "folds.csv";
pub const PCA_FILE: &str = "pca_loadings.csv";
pub const GRAPH_DIR: &str = "graphs";
pub const PCA_COMPONENTS: usize = 10;

pub fn write_preprocessed(p: &Prepared, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(PREPROCESSED_FILE);
    write_records_file(&path, &p.preprocessed.records, None)?;
    Ok(path)
}

pub fn write_snapshots(p: &Prepared, dir: &Path) -> Result<()> {
    write_snapshot_files(p, dir)?;
    Ok(())
}

pub fn write_folds(folds: &FoldAssignment, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(FOLDS_FILE);
    folds.write_csv(BufWriter::new(File::create(&path)?))?;
    Ok(path)
}

/// Static encoded columns plus one partial-grade column per snapshot day.
pub fn pca_input(p: &Prepared) -> Result<(Matrix, Vec<String>)> {
    let last = p.datasets.last().ok_or_else(|| Error::Config("no snapshot datasets".into()))?;
    let static_cols: Vec<usize> = (0..last.column_names.len())
        .filter(|c| !last.columns_of(&[Feature::PartialGrade]).contains(c))
        .collect();
    let pg_col = last.columns_of(&[Feature::PartialGrade])[0];
    let mut names: Vec<String> = p.datasets.iter().map(|d| format!("partial_grade_d{}", d.day)).collect();
    names.extend(static_cols.iter().map(|&c| last.column_names[c].clone()));
    let width = names.len();
    let mut m = Matrix::zeros(last.len(), width);
    for i in 0..last.len() {
        let row = m.row_mut(i);
        for (k, d) in p.datasets.iter().enumerate() {
            row[k] = d.features[(i, pg_col)];
        }
        for (k, &c) in static_cols.iter().enumerate() {
            row[p.datasets.len() + k] = last.features[(i, c)];
        }
    }
    Ok((m, names))
}

pub fn compute_pca(p: &Prepared) -> Result<Pca> {
    let (m, names) = pca_input(p)?;
    Ok(pca_loadings(&m, &names, PCA_COMPONENTS)?)
}

pub fn write_pca(pca: &Pca, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(PCA_FILE);
    pca.write_csv(BufWriter::new(File::create(&path)?))?;
    Ok(path)
}

/// Edge lists per fold split and a statistics table. Topology is the same
/// for every day and case, so one dump per fold suffices.
pub fn write_graphs(p: &Prepared, folds: &FoldAssignment, dir: &Path) -> Result<PathBuf> {
    let gdir = dir.join(GRAPH_DIR);
    std::fs::create_dir_all(&gdir)?;
    let ds = p.datasets.last().ok_or_else(|| Error::Config("no snapshot datasets".into()))?;
    let stats_path = gdir.join("graph_stats.csv");
    let mut stats = BufWriter::new(File::create(&stats_path)?);
    writeln!(stats, "fold,split,nodes,edges,avg_degree,max_degree,modal_degree")?;
    for fold in 0..folds.k {
        let (train, val) = GraphSplit::graphs(ds, folds, FeatureCase::FULL, fold);
        for g in [&train, &val] {
            let split = format!("{:?}", g.split).to_lowercase();
            let s = graph_stats(g);
            writeln!(
                stats,
                "{fold},{split},{},{},{:.4},{},{}",
                s.node_count, s.edge_count, s.avg_degree, s.max_degree, s.modal_degree
            )?;
            let f = File::create(gdir.join(format!("fold{fold}_{split}_edges.csv")))?;
            write_edge_list(g, BufWriter::new(f))?;
        }
    }
    stats.flush()?;
    Ok(stats_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use studentgraph_core::synthetic::{generate, SyntheticConfig};

    #[test]
    fn pca_input_has_one_grade_column_per_day() {
        let p = studentgraph_core::prepare(&generate(SyntheticConfig { students: 120, seed: 3, repeat_probability: 0.2 })).unwrap();
        let (m, names) = pca_input(&p).unwrap();
        assert_eq!(names.iter().filter(|n| n.starts_with("partial_grade_d")).count(), 13);
        assert_eq!(m.cols(), names.len());
        assert_eq!(m.cols(), 13 + p.datasets[0].column_names.len() - 1);
        // day-260 grade column matches the day-260 snapshot
        let ds = p.dataset(260).unwrap();
        let pg = ds.columns_of(&[Feature::PartialGrade])[0];
        assert!((0..m.rows()).all(|i| m[(i, 12)] == ds.features[(i, pg)]));
    }
}
