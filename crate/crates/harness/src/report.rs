//! Tables 4 to 7 as CSV and Markdown, computed only from result records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use studentgraph_baselines::ModelName;
use studentgraph_core::FeatureCase;
use studentgraph_gnn::ModelKind;

use crate::error::{Error, Result};
use crate::results::{Cell, CellKey, Metric, ResultsTable};

pub type Summary = BTreeMap<CellKey, Cell>;

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub metric: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub days: Vec<u32>,
    pub rows: Vec<TableRow>,
}

/// A (model, case) series as it appears in row labels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Series {
    pub model: String,
    pub case: u8,
    pub label: String,
}

impl Series {
    pub fn baseline(m: ModelName) -> Self {
        Self { model: m.short().to_string(), case: FeatureCase::FULL.id(), label: m.short().to_string() }
    }

    pub fn graph(kind: ModelKind, case: u8) -> Self {
        Self { model: kind.as_str().to_string(), case, label: format!("{kind} Case {case}") }
    }

    pub fn cell<'a>(&self, s: &'a Summary, day: u32) -> Option<&'a Cell> {
        s.get(&CellKey { model: self.model.clone(), case: self.case, day })
    }

    fn present(&self, s: &Summary) -> bool {
        s.keys().any(|k| k.model == self.model && k.case == self.case)
    }

    /// Mean validation F1 over the days this series has.
    pub fn mean_val_f1(&self, s: &Summary) -> Option<f64> {
        let v: Vec<f64> = s
            .iter()
            .filter(|(k, _)| k.model == self.model && k.case == self.case)
            .map(|(_, c)| c.mean.val_f1)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn days_of(s: &Summary) -> Vec<u32> {
    let mut d: Vec<u32> = s.keys().map(|k| k.day).collect();
    d.sort_unstable();
    d.dedup();
    d
}

pub fn baseline_series(s: &Summary) -> Vec<Series> {
    ModelName::ALL.into_iter().map(Series::baseline).filter(|x| x.present(s)).collect()
}

pub fn graph_series(s: &Summary, case: u8) -> Vec<Series> {
    ModelKind::ALL.into_iter().map(|k| Series::graph(k, case)).filter(|x| x.present(s)).collect()
}

/// The three baselines with the highest mean validation F1 (ties keep the
/// canonical model order).
pub fn top_baselines(s: &Summary, n: usize) -> Vec<Series> {
    let mut ranked: Vec<(f64, Series)> =
        baseline_series(s).into_iter().filter_map(|x| x.mean_val_f1(s).map(|v| (v, x))).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    ranked.into_iter().take(n).map(|(_, x)| x).collect()
}

/// The full-feature graph model with the highest mean validation F1.
pub fn best_graph(s: &Summary) -> Option<Series> {
    let mut best: Option<(f64, Series)> = None;
    for x in graph_series(s, FeatureCase::FULL.id()) {
        if let Some(v) = x.mean_val_f1(s) {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, x));
            }
        }
    }
    best.map(|(_, x)| x)
}

fn metric_rows(series: &[Series], s: &Summary, days: &[u32]) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for x in series {
        for m in Metric::ALL {
            rows.push(TableRow {
                model: x.label.clone(),
                metric: m.label().to_string(),
                values: days.iter().map(|&d| x.cell(s, d).map(|c| c.mean.get(m))).collect(),
            });
        }
    }
    rows
}

pub fn table4(s: &Summary) -> Table {
    let days = days_of(s);
    Table {
        name: "table4".into(),
        title: "Baseline models on the full feature set (fold means)".into(),
        rows: metric_rows(&baseline_series(s), s, &days),
        days,
    }
}

pub fn table5(s: &Summary) -> Table {
    let days = days_of(s);
    let series: Vec<Series> = ModelKind::ALL
        .into_iter()
        .flat_map(|k| FeatureCase::ALL.into_iter().map(move |c| Series::graph(k, c.id())))
        .filter(|x| x.present(s))
        .collect();
    Table {
        name: "table5".into(),
        title: "Graph models across feature cases (fold means)".into(),
        rows: metric_rows(&series, s, &days),
        days,
    }
}

pub fn table6(s: &Summary) -> Table {
    let days = days_of(s);
    let mut series = top_baselines(s, 3);
    series.extend(best_graph(s));
    Table {
        name: "table6".into(),
        title: "Top three baselines and the best full-feature graph model (fold means)".into(),
        rows: metric_rows(&series, s, &days),
        days,
    }
}

/// Wall-clock seconds per fold and summed over folds.
pub fn table7(s: &Summary) -> Table {
    let days = days_of(s);
    let mut series = baseline_series(s);
    series.extend(graph_series(s, FeatureCase::FULL.id()));
    let mut rows = Vec::new();
    for x in &series {
        for (metric, f) in [("RT mean per fold (s)", true), ("RT total (s)", false)] {
            rows.push(TableRow {
                model: x.label.clone(),
                metric: metric.to_string(),
                values: days
                    .iter()
                    .map(|&d| x.cell(s, d).map(|c| if f { c.seconds_mean } else { c.seconds_sum }))
                    .collect(),
            });
        }
    }
    Table { name: "table7".into(), title: "Running time in seconds".into(), rows, days }
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,metric");
        for d in &self.days {
            write!(out, ",{d}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{},{}", r.model, r.metric).unwrap();
            for v in &r.values {
                write!(out, ",{}", fmt_cell(*v)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("**{}**\n\n| Model | Metric |", self.title);
        for d in &self.days {
            write!(out, " {d} |").unwrap();
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---:|".repeat(self.days.len()));
        out.push('\n');
        let mut previous = "";
        for r in &self.rows {
            let model = if r.model == previous { "" } else { r.model.as_str() };
            previous = &r.model;
            write!(out, "| {model} | {} |", r.metric).unwrap();
            for v in &r.values {
                write!(out, " {} |", fmt_cell(*v)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn missing_cells(&self) -> usize {
        self.rows.iter().map(|r| r.values.iter().filter(|v| v.is_none()).count()).sum()
    }

    /// Parses the CSV layout written by [`Table::to_csv`].
    pub fn parse_csv(name: &str, text: &str) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let days = headers
            .iter()
            .skip(2)
            .map(|h| h.parse::<u32>().map_err(|_| Error::Config(format!("bad day column {h:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let values = rec
                .iter()
                .skip(2)
                .map(|v| if v.is_empty() { Ok(None) } else { v.parse::<f64>().map(Some) })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("bad cell: {e}")))?;
            rows.push(TableRow { model: rec[0].to_string(), metric: rec[1].to_string(), values });
        }
        Ok(Table { name: name.to_string(), title: String::new(), days, rows })
    }
}

pub fn tables(s: &Summary) -> Vec<Table> {
    vec![table4(s), table5(s), table6(s), table7(s)]
}

/// Writes `table4` to `table7` as `.csv` and `.md`.
pub fn emit_tables(results: &ResultsTable, dir: &Path) -> Result<Vec<PathBuf>> {
    let s = results.summarize();
    if s.is_empty() {
        return Err(Error::NoResults);
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in tables(&s) {
        let missing = t.missing_cells();
        if missing > 0 {
            log::warn!("{}: {missing} cells without results left blank", t.name);
        }
        for (ext, body) in [("csv", t.to_csv()), ("md", t.to_markdown())] {
            let path = dir.join(format!("{}.{ext}", t.name));
            std::fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}
