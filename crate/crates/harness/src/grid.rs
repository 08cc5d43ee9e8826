//! Exhaustive hyperparameter grid for the graph models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub lr: Vec<f64>,
    pub hidden: Vec<usize>,
    pub heads: Vec<usize>,
    pub dropout: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self { lr: vec![1e-3, 5e-3], hidden: vec![32, 64], heads: vec![4, 8], dropout: vec![0.0, 0.3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: f64,
    pub hidden: usize,
    pub heads: usize,
    pub dropout: f64,
}

impl GridPoint {
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("lr".to_string(), self.lr),
            ("hidden".to_string(), self.hidden as f64),
            ("heads".to_string(), self.heads as f64),
            ("dropout".to_string(), self.dropout),
        ])
    }
}

impl Grid {
    pub fn singleton(p: GridPoint) -> Self {
        Self { lr: vec![p.lr], hidden: vec![p.hidden], heads: vec![p.heads], dropout: vec![p.dropout] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr.is_empty() || self.hidden.is_empty() || self.heads.is_empty() || self.dropout.is_empty() {
            return Err(Error::Config("every grid list needs at least one value".into()));
        }
        Ok(())
    }

    /// Points in lexicographic order of (lr, hidden, heads, dropout) as listed.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &lr in &self.lr {
            for &hidden in &self.hidden {
                for &heads in &self.heads {
                    for &dropout in &self.dropout {
                        out.push(GridPoint { lr, hidden, heads, dropout });
                    }
                }
            }
        }
        out
    }

    pub fn first(&self) -> Option<GridPoint> {
        self.points().into_iter().next()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEval {
    pub val_f1: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub point: GridPoint,
    /// `None` when training failed at this point.
    pub eval: Option<PointEval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub best: GridPoint,
    pub evaluations: Vec<Evaluated>,
}

/// Picks the highest validation F1; ties go to the lower validation loss,
/// then to the earlier grid position. Failed or non-finite points never win.
pub fn select_best(evaluations: &[Evaluated]) -> Option<GridPoint> {
    let mut best: Option<(GridPoint, PointEval)> = None;
    for e in evaluations {
        let Some(ev) = e.eval.filter(|v| v.val_f1.is_finite() && v.val_loss.is_finite()) else { continue };
        let better = match &best {
            None => true,
            Some((_, b)) => ev.val_f1 > b.val_f1 || (ev.val_f1 == b.val_f1 && ev.val_loss < b.val_loss),
        };
        if better {
            best = Some((e.point, ev));
        }
    }
    best.map(|(p, _)| p)
}

/// Evaluates every grid point with `eval` and returns the selected one.
pub fn grid_search<F>(grid: &Grid, mut eval: F) -> Result<TuningOutcome>
where
    F: FnMut(&GridPoint) -> Result<PointEval>,
{
    grid.validate()?;
    let evaluations: Vec<Evaluated> = grid
        .points()
        .into_iter()
        .map(|point| match eval(&point) {
            Ok(ev) => Evaluated { point, eval: Some(ev), error: None },
            Err(e) => {
                log::warn!("grid point {point:?} failed: {e}");
                Evaluated { point, eval: None, error: Some(e.to_string()) }
            }
        })
        .collect();
    match select_best(&evaluations) {
        Some(best) => Ok(TuningOutcome { best, evaluations }),
        None => {
            let reasons: Vec<String> = evaluations.iter().filter_map(|e| e.error.clone()).collect();
            Err(Error::GridExhausted(reasons.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_16_points_in_order() {
        let p = Grid::default().points();
        assert_eq!(p.len(), 16);
        assert_eq!((p[0].lr, p[0].hidden, p[0].heads, p[0].dropout), (1e-3, 32, 4, 0.0));
        assert_eq!((p[1].lr, p[1].dropout), (1e-3, 0.3));
        assert_eq!((p[15].lr, p[15].hidden, p[15].heads, p[15].dropout), (5e-3, 64, 8, 0.3));
    }

    #[test]
    fn singleton_grid_returns_its_point() {
        let point = GridPoint { lr: 0.01, hidden: 16, heads: 2, dropout: 0.1 };
        let out = grid_search(&Grid::singleton(point), |_| Ok(PointEval { val_f1: 0.1, val_loss: 1.0 })).unwrap();
        assert_eq!(out.best, point);
    }

    #[test]
    fn ties_broken_by_loss_then_order() {
        let grid = Grid { lr: vec![1.0, 2.0, 3.0], ..Grid::singleton(GridPoint { lr: 0.0, hidden: 8, heads: 1, dropout: 0.0 }) };
        let out = grid_search(&grid, |p| Ok(PointEval { val_f1: 0.5, val_loss: if p.lr == 1.0 { 0.7 } else { 0.6 } })).unwrap();
        assert_eq!(out.best.lr, 2.0);
    }

    #[test]
    fn all_failures_are_fatal() {
        let r = grid_search(&Grid::default(), |_| Err(Error::Config("boom".into())));
        assert!(matches!(r, Err(Error::GridExhausted(_))));
    }
}
