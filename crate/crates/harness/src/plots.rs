//! SVG line charts and the PCA loading heatmap.
//!
//! Each figure is written as `<name>.svg` next to `<name>.csv` holding the
//! exact plotted values, so figure claims can be checked without parsing
//! images. Output depends only on the input values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use studentgraph_core::FeatureCase;
use studentgraph_gnn::ModelKind;

use crate::error::{Error, Result};
use crate::report::{graph_series, top_baselines, Series, Summary};
use crate::results::{Metric, ResultsTable};

const PALETTE: [&str; 10] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];
const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 50.0;
const LEGEND_W: f64 = 150.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub name: String,
    pub points: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub lines: Vec<Line>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub name: String,
    pub title: String,
    pub panels: Vec<Panel>,
}

fn line_for(x: &Series, s: &Summary, m: Metric) -> Line {
    let points = s
        .iter()
        .filter(|(k, _)| k.model == x.model && k.case == x.case)
        .map(|(k, c)| (k.day, c.mean.get(m)))
        .collect();
    Line { name: x.label.clone(), points }
}

fn validation_panels(series: &[Series], s: &Summary) -> Vec<Panel> {
    [(Metric::ValF1, "Validation F1"), (Metric::ValAccuracy, "Validation accuracy")]
        .into_iter()
        .map(|(m, title)| Panel {
            title: title.to_string(),
            y_label: m.label().to_string(),
            lines: series.iter().map(|x| line_for(x, s, m)).collect(),
        })
        .collect()
}

/// All feature cases of both graph models.
pub fn fig_cases(s: &Summary) -> Figure {
    let series: Vec<Series> =
        FeatureCase::ALL.into_iter().flat_map(|c| graph_series(s, c.id())).collect();
    Figure { name: "fig_cases".into(), title: "Graph models by feature case".into(), panels: validation_panels(&series, s) }
}

/// Case 2 against Case 5 for each graph model.
pub fn fig_case2v5(s: &Summary) -> Figure {
    let series: Vec<Series> = ModelKind::ALL
        .into_iter()
        .flat_map(|k| [Series::graph(k, 2), Series::graph(k, 5)])
        .filter(|x| s.keys().any(|key| key.model == x.model && key.case == x.case))
        .collect();
    Figure { name: "fig_case2v5".into(), title: "Case 2 against Case 5".into(), panels: validation_panels(&series, s) }
}

/// Top three baselines against the full-feature graph models.
pub fn fig_top3(s: &Summary) -> Figure {
    let mut series = top_baselines(s, 3);
    series.extend(graph_series(s, FeatureCase::FULL.id()));
    Figure {
        name: "fig_top3".into(),
        title: "Top baselines against Case 5 graph models".into(),
        panels: validation_panels(&series, s),
    }
}

fn nice_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let lo = ((lo * 20.0).floor() / 20.0).clamp(0.0, 0.95);
    let hi = ((hi * 20.0).ceil() / 20.0).clamp(lo + 0.05, 1.0);
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn to_svg(&self) -> String {
        let n = self.panels.len().max(1) as f64;
        let width = n * (PANEL_W + LEGEND_W);
        let height = PANEL_H + 40.0;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            width / 2.0,
            escape(&self.title)
        );
        for (p, panel) in self.panels.iter().enumerate() {
            let ox = p as f64 * (PANEL_W + LEGEND_W);
            panel_svg(&mut out, panel, ox, 30.0);
        }
        out.push_str("</svg>\n");
        out
    }

    /// Long format: panel, series, day, value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("panel,series,day,value\n");
        for p in &self.panels {
            for l in &p.lines {
                for &(d, v) in &l.points {
                    writeln!(out, "{},{},{d},{v:.6}", p.title, l.name).unwrap();
                }
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let svg = dir.join(format!("{}.svg", self.name));
        let csv = dir.join(format!("{}.csv", self.name));
        std::fs::write(&svg, self.to_svg())?;
        std::fs::write(&csv, self.to_csv())?;
        Ok(vec![svg, csv])
    }
}

fn panel_svg(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let (x0, x1) = (ox + MARGIN, ox + PANEL_W - 10.0);
    let (y0, y1) = (oy + 20.0, oy + PANEL_H - MARGIN);
    let mut days: Vec<u32> = panel.lines.iter().flat_map(|l| l.points.iter().map(|p| p.0)).collect();
    days.sort_unstable();
    days.dedup();
    let (dmin, dmax) = match (days.first(), days.last()) {
        (Some(&a), Some(&b)) if b > a => (f64::from(a), f64::from(b)),
        (Some(&a), _) => (f64::from(a) - 10.0, f64::from(a) + 10.0),
        _ => (0.0, 260.0),
    };
    let (lo, hi) = nice_range(panel.lines.iter().flat_map(|l| l.points.iter().map(|p| p.1)));
    let px = |d: f64| x0 + (d - dmin) / (dmax - dmin) * (x1 - x0);
    let py = |v: f64| y1 - (v - lo) / (hi - lo) * (y1 - y0);
    writeln!(out, "<g class=\"panel\">").unwrap();
    writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\">{}</text>", (x0 + x1) / 2.0, oy + 10.0, escape(&panel.title)).unwrap();
    // grid and y ticks every 0.05
    let steps = ((hi - lo) / 0.05).round() as usize;
    for k in 0..=steps {
        let v = lo + k as f64 * 0.05;
        let y = py(v);
        writeln!(out, "<line x1=\"{x0:.1}\" y1=\"{y:.1}\" x2=\"{x1:.1}\" y2=\"{y:.1}\" stroke=\"#e0e0e0\"/>").unwrap();
        writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>", x0 - 4.0, y + 4.0).unwrap();
    }
    for &d in &days {
        let x = px(f64::from(d));
        writeln!(out, "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{d}</text>", y1 + 14.0).unwrap();
    }
    writeln!(out, "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>", x1 - x0, y1 - y0).unwrap();
    writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">Day</text>", (x0 + x1) / 2.0, y1 + 30.0).unwrap();
    writeln!(out, "<text transform=\"translate({:.1},{:.1}) rotate(-90)\" text-anchor=\"middle\">{}</text>", ox + 12.0, (y0 + y1) / 2.0, escape(&panel.y_label)).unwrap();
    if panel.lines.iter().all(|l| l.points.is_empty()) {
        writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#888\">no data</text>", (x0 + x1) / 2.0, (y0 + y1) / 2.0).unwrap();
    }
    for (i, line) in panel.lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if i >= PALETTE.len() { " stroke-dasharray=\"4 3\"" } else { "" };
        let pts: Vec<String> =
            line.points.iter().map(|&(d, v)| format!("{:.1},{:.1}", px(f64::from(d)), py(v))).collect();
        writeln!(out, "<polyline class=\"series\" data-name=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>", escape(&line.name), pts.join(" ")).unwrap();
        for &(d, v) in &line.points {
            writeln!(out, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"{color}\"/>", px(f64::from(d)), py(v)).unwrap();
        }
        let ly = y0 + 14.0 * i as f64;
        writeln!(out, "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>", x1 + 14.0, x1 + 34.0).unwrap();
        writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>", x1 + 38.0, ly + 4.0, escape(&line.name)).unwrap();
    }
    writeln!(out, "</g>").unwrap();
}

/// Loadings parsed from `pca_loadings.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Loadings {
    pub components: Vec<String>,
    pub features: Vec<String>,
    /// `features × components`
    pub values: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
}

impl Loadings {
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let components: Vec<String> = rdr.headers()?.iter().skip(1).map(String::from).collect();
        let (mut features, mut values, mut ratio) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let nums = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("bad loading: {e}")))?;
            if &rec[0] == "explained_variance_ratio" {
                ratio = nums;
            } else {
                features.push(rec[0].to_string());
                values.push(nums);
            }
        }
        Ok(Self { components, features, values, explained_variance_ratio: ratio })
    }

    pub fn heatmap(&self) -> (String, String) {
        let cell_w = 46.0;
        let cell_h = 16.0;
        let left = 200.0;
        let top = 50.0;
        let width = left + cell_w * self.components.len() as f64 + 20.0;
        let height = top + cell_h * self.features.len() as f64 + 30.0;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" font-family=\"sans-serif\" font-size=\"10\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">PCA loadings</text>\n",
            width / 2.0
        );
        for (c, name) in self.components.iter().enumerate() {
            let x = left + cell_w * (c as f64 + 0.5);
            let label = match self.explained_variance_ratio.get(c) {
                Some(r) => format!("{name} ({:.0}%)", 100.0 * r),
                None => name.clone(),
            };
            writeln!(svg, "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"8\">{}</text>", top - 6.0, escape(&label)).unwrap();
        }
        let mut csv = String::from("feature,component,loading\n");
        for (f, name) in self.features.iter().enumerate() {
            let y = top + cell_h * f as f64;
            writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", left - 4.0, y + cell_h * 0.7, escape(name)).unwrap();
            for (c, comp) in self.components.iter().enumerate() {
                let v = self.values[f].get(c).copied().unwrap_or(0.0);
                writeln!(
                    svg,
                    "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{cell_w:.1}\" height=\"{cell_h:.1}\" fill=\"{}\"><title>{:.3}</title></rect>",
                    left + cell_w * c as f64,
                    diverging(v),
                    v
                )
                .unwrap();
                writeln!(csv, "{name},{comp},{v:.6}").unwrap();
            }
        }
        svg.push_str("</svg>\n");
        (svg, csv)
    }
}

/// Blue for negative, white at zero, red for positive; saturates at |v| = 1.
fn diverging(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x)).round() as u8;
    let (r, g, b) = if t >= 0.0 { (255, fade(t), fade(t)) } else { (fade(-t), fade(-t), 255) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

pub fn figures(s: &Summary) -> Vec<Figure> {
    vec![fig_cases(s), fig_case2v5(s), fig_top3(s)]
}

/// Writes the three line figures and, when loadings exist, the heatmap.
pub fn emit_plots(results: &ResultsTable, loadings: Option<&Loadings>, dir: &Path) -> Result<Vec<PathBuf>> {
    let s = results.summarize();
    if s.is_empty() {
        return Err(Error::NoResults);
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in figures(&s) {
        written.extend(f.write(dir)?);
    }
    if let Some(l) = loadings {
        let (svg, csv) = l.heatmap();
        for (name, body) in [("pca_heatmap.svg", svg), ("pca_heatmap.csv", csv)] {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(name: &str, n: usize) -> Line {
        Line { name: name.into(), points: (0..n).map(|i| (20 * (i as u32 + 1), 0.6 + 0.02 * i as f64)).collect() }
    }

    fn figure(lines: Vec<Line>) -> Figure {
        Figure {
            name: "f".into(),
            title: "t".into(),
            panels: vec![Panel { title: "Validation F1".into(), y_label: "Val F1".into(), lines }],
        }
    }

    #[test]
    fn single_series_has_13_points() {
        let svg = figure(vec![line("LR", 13)]).to_svg();
        let poly: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(poly.len(), 1);
        let points = poly[0].split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        assert_eq!(points.split(' ').count(), 13);
    }

    #[test]
    fn identical_series_coincide() {
        let f = figure(vec![line("A", 13), line("B", 13)]);
        let svg = f.to_svg();
        let coords: Vec<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| l.split("points=").nth(1).unwrap())
            .collect();
        assert_eq!(coords[0], coords[1]);
        let csv = f.to_csv();
        let a: Vec<String> = csv.lines().filter(|l| l.contains(",A,")).map(|l| l.replace(",A,", ",")).collect();
        let b: Vec<String> = csv.lines().filter(|l| l.contains(",B,")).map(|l| l.replace(",B,", ",")).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn rendering_is_deterministic() {
        let f = figure(vec![line("A", 5)]);
        assert_eq!(f.to_svg(), f.clone().to_svg());
    }

    #[test]
    fn heatmap_from_loadings_csv() {
        let text = "feature,PC1,PC2\na,0.5,-1.0\nb,0.0,0.25\nexplained_variance_ratio,0.7,0.3\n";
        let l = Loadings::parse_csv(text).unwrap();
        assert_eq!(l.features, ["a", "b"]);
        let (svg, csv) = l.heatmap();
        assert_eq!(csv.lines().count(), 5);
        assert!(svg.contains("#0000ff"));
        assert!(svg.contains("PC1 (70%)"));
        assert_eq!(diverging(0.0), "#ffffff");
    }
}
