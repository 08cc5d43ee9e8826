//! `studentgraph` subcommands. Each one reads the OULA files (or earlier
//! outputs) and writes under `--out`; existing outputs are left alone unless
//! `--force` is given.
//!
//! Layout of the output directory:
//!
//! ```text
//! preprocessed.csv  preprocess_report.json
//! snapshots/        weights.csv, snapshot_d{day}.csv
//! folds.csv  pca_loadings.csv
//! graphs/           graph_stats.csv, fold{f}_{split}_edges.csv
//! results.jsonl  tuning.json  checkpoints/
//! report/           table4..7 (.csv, .md), figures (.svg, .csv)
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use studentgraph_core::preprocess::PreprocessReport;
use studentgraph_core::{ingest, preprocess};
use studentgraph_harness::artifacts::{self, FOLDS_FILE, PCA_FILE, PREPROCESSED_FILE};
use studentgraph_harness::plots::{emit_plots, Loadings};
use studentgraph_harness::report::emit_tables;
use studentgraph_harness::{plan, run_sweep_with, ModelId, ResultRow, ResultsTable, RunConfig, Workbench};

pub const REPORT_FILE: &str = "preprocess_report.json";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Parser)]
#[command(name = "studentgraph", version, about = "Student-success prediction workbench on OULA data")]
pub struct Cli {
    #[command(flatten)]
    pub opts: Options,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and label registrations, write the canonical table
    Preprocess,
    /// Pass weights, the 13 snapshot tables, folds and PCA loadings
    Snapshots,
    /// Cross-validated baseline runs (Case 5 features)
    Baselines,
    /// Registration graphs per fold: edge lists and statistics
    Graphs,
    /// Cross-validated HAN/HGT runs with tuning and checkpoints
    TrainGnn,
    /// Every configured run; resumes from results.jsonl
    Sweep,
    /// Tables and figures from results.jsonl
    Report,
}

/// Flags override the config file, which overrides the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// JSON run configuration
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory with the OULA CSV files
    #[arg(long, global = true, value_name = "PATH")]
    pub data_dir: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Comma-separated model names, e.g. LR,RF,HGT
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    pub models: Option<Vec<ModelId>>,
    /// Comma-separated feature cases (1-5)
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    pub cases: Option<Vec<u8>>,
    /// Comma-separated snapshot days
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    pub days: Option<Vec<u32>>,
    /// Recompute outputs that already exist
    #[arg(long, global = true)]
    pub force: bool,
}

impl Options {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        if let Some(d) = &self.out {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = &self.models {
            cfg.models = m.clone();
        }
        if let Some(c) = &self.cases {
            cfg.cases = c.clone();
        }
        if let Some(d) = &self.days {
            cfg.days = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.opts.resolve()?;
    let force = cli.opts.force;
    match cli.command {
        Command::Preprocess => cmd_preprocess(&cfg, force),
        Command::Snapshots => cmd_snapshots(&cfg, force),
        Command::Graphs => cmd_graphs(&cfg, force),
        Command::Baselines => cmd_runs(&cfg, force, Some(false)),
        Command::TrainGnn => cmd_runs(&cfg, force, Some(true)),
        Command::Sweep => cmd_runs(&cfg, force, None),
        Command::Report => cmd_report(&cfg),
    }
}

fn all_exist(paths: &[PathBuf]) -> bool {
    paths.iter().all(|p| p.exists())
}

fn skip(what: &str, dir: &Path) {
    println!("{what} already present in {}; skipping (use --force to recompute)", dir.display());
}

fn workbench(cfg: &RunConfig) -> Result<Workbench> {
    Workbench::load(&cfg.data_dir, cfg.folds, cfg.seed)
        .with_context(|| format!("loading OULA data from {}", cfg.data_dir.display()))
}

fn cmd_preprocess(cfg: &RunConfig, force: bool) -> Result<()> {
    let out = &cfg.output_dir;
    let report_path = out.join(REPORT_FILE);
    if !force && all_exist(&[out.join(PREPROCESSED_FILE), report_path.clone()]) {
        skip("preprocessed table", out);
        let report: PreprocessReport = serde_json::from_str(&std::fs::read_to_string(&report_path)?)
            .with_context(|| format!("reading {}", report_path.display()))?;
        println!("{}", report.summary_line());
        return Ok(());
    }
    let tables = ingest::load_oula(&cfg.data_dir)
        .with_context(|| format!("loading OULA data from {}", cfg.data_dir.display()))?;
    let pre = preprocess(&tables);
    std::fs::create_dir_all(out)?;
    studentgraph_core::preprocess::write_records_file(&out.join(PREPROCESSED_FILE), &pre.records, None)?;
    std::fs::write(&report_path, serde_json::to_string_pretty(&pre.report)?)?;
    println!("{}", pre.report.summary_line());
    Ok(())
}

fn snapshot_outputs(out: &Path) -> Vec<PathBuf> {
    let snap = out.join(SNAPSHOT_DIR);
    let mut v = vec![snap.join("weights.csv"), out.join(FOLDS_FILE), out.join(PCA_FILE)];
    v.extend(studentgraph_core::SNAPSHOT_DAYS.iter().map(|&(d, _)| snap.join(studentgraph_core::pipeline::snapshot_file_name(d))));
    v
}

fn cmd_snapshots(cfg: &RunConfig, force: bool) -> Result<()> {
    let out = &cfg.output_dir;
    if !force && all_exist(&snapshot_outputs(out)) {
        skip("snapshots", out);
        return Ok(());
    }
    let wb = workbench(cfg)?;
    artifacts::write_snapshots(&wb.prepared, &out.join(SNAPSHOT_DIR))?;
    artifacts::write_folds(&wb.folds, out)?;
    let pca = artifacts::compute_pca(&wb.prepared)?;
    artifacts::write_pca(&pca, out)?;
    println!(
        "wrote weights.csv and {} snapshots to {}, {} and {}",
        wb.prepared.snapshots.len(),
        out.join(SNAPSHOT_DIR).display(),
        FOLDS_FILE,
        PCA_FILE
    );
    Ok(())
}

fn cmd_graphs(cfg: &RunConfig, force: bool) -> Result<()> {
    let out = &cfg.output_dir;
    let stats = out.join(artifacts::GRAPH_DIR).join("graph_stats.csv");
    if !force && stats.exists() {
        skip("graphs", out);
        return Ok(());
    }
    let wb = workbench(cfg)?;
    let path = artifacts::write_graphs(&wb.prepared, &wb.folds, out)?;
    print!("{}", std::fs::read_to_string(&path)?);
    Ok(())
}

/// `graphs`: `Some(false)` keeps baselines only, `Some(true)` graph models
/// only, `None` keeps everything.
fn cmd_runs(cfg: &RunConfig, force: bool, graphs: Option<bool>) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(g) = graphs {
        cfg.models.retain(|m| m.is_graph() == g);
        if cfg.models.is_empty() {
            bail!("no {} models selected", if g { "graph" } else { "baseline" });
        }
    }
    let done = if force { Default::default() } else { ResultsTable::load(&cfg.results_path())?.completed() };
    let todo = plan(&cfg).iter().filter(|j| !done.contains(&j.key())).count();
    if todo == 0 {
        println!("all {} runs already in {}; nothing to do", plan(&cfg).len(), cfg.results_path().display());
        return Ok(());
    }
    let wb = workbench(&cfg)?;
    let mut n = 0;
    let table = run_sweep_with(&wb, &cfg, force, |r: &ResultRow| {
        n += 1;
        let k = &r.key;
        match &r.metrics {
            Some(m) => log::info!(
                "[{n}/{todo}] {} case {} day {} fold {}: val F1 {:.3}, {:.2}s",
                k.model, k.case, k.day, k.fold, m.val_f1, r.seconds
            ),
            None => log::warn!(
                "[{n}/{todo}] {} case {} day {} fold {} failed: {}",
                k.model, k.case, k.day, k.fold, r.error.as_deref().unwrap_or("?")
            ),
        }
    })?;
    let failed = table.failed().len();
    println!("{n} runs written to {} ({} complete, {failed} failed)", cfg.results_path().display(), table.completed().len());
    Ok(())
}

fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let path = cfg.results_path();
    let results = ResultsTable::load(&path)?;
    if results.completed().is_empty() {
        bail!("no results in {}", path.display());
    }
    let dir = cfg.output_dir.join(REPORT_DIR);
    let pca_path = cfg.output_dir.join(PCA_FILE);
    let loadings = if pca_path.exists() {
        Some(Loadings::parse_csv(&std::fs::read_to_string(&pca_path)?)?)
    } else {
        log::warn!("{} not found; skipping the PCA heatmap (run `snapshots` first)", pca_path.display());
        None
    };
    let mut files = emit_tables(&results, &dir)?;
    files.extend(emit_plots(&results, loadings.as_ref(), &dir)?);
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}
