//! Pass-model weights and the dynamic partial grade.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AssessmentDef, AssessmentType, SubmissionRow};
use crate::logit::{fit_logistic, LogisticOptions};
use crate::matrix::Matrix;
use crate::par;
use crate::preprocess::RegistrationRecord;

/// Passing threshold of the final grade.
pub const PASS_THRESHOLD: f64 = 40.0;

/// (day since presentation start, percent of semester completed).
pub const SNAPSHOT_DAYS: [(u32, u32); 13] = [
    (20, 7),
    (40, 15),
    (60, 23),
    (80, 30),
    (100, 38),
    (120, 46),
    (140, 54),
    (160, 60),
    (180, 70),
    (200, 77),
    (220, 85),
    (240, 93),
    (260, 100),
];

pub fn snapshot_days() -> Vec<(u32, u32)> {
    SNAPSHOT_DAYS.to_vec()
}

pub fn is_snapshot_day(day: u32) -> bool {
    SNAPSHOT_DAYS.iter().any(|&(d, _)| d == day)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightSource {
    /// Fitted on this module-presentation.
    Fitted,
    /// Too few usable records; weights pooled over all module-presentations.
    Pooled,
    /// No exam scores recorded; assessments carry the whole grade.
    NoExam,
}

/// Weights of `alpha·x + beta·y >= 40`, normalized to `alpha + beta = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassModelWeights {
    pub code_module: String,
    pub code_presentation: String,
    pub alpha: f64,
    pub beta: f64,
    pub n_fit: usize,
    pub source: WeightSource,
    /// Fitted boundary offset minus the fixed threshold, in normalized units.
    pub residual_offset: f64,
}

impl PassModelWeights {
    pub fn grade(&self, x: f64, y: f64) -> f64 {
        self.alpha * x + self.beta * y
    }

    pub fn exam_share(&self) -> f64 {
        self.beta / (self.alpha + self.beta)
    }
}

/// One training point of the pass model: end-of-semester weighted
/// assessment grade `x`, exam score `y` and the binary label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassPoint {
    pub x: f64,
    pub y: f64,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFit {
    pub alpha: f64,
    pub beta: f64,
    pub residual_offset: f64,
}

/// Fits the pass boundary on points that all carry an exam score.
///
/// Fails with `Error::Invalid` when either class has fewer than two points or
/// the fitted direction has no positive component.
pub fn fit_pass_boundary(points: &[PassPoint]) -> Result<BoundaryFit> {
    let pos = points.iter().filter(|p| p.label == 1).count();
    let neg = points.len() - pos;
    if pos < 2 || neg < 2 {
        return Err(Error::Invalid(format!("need two points per class, have {pos}/{neg}")));
    }
    let x = Matrix::from_vec(points.len(), 2, points.iter().flat_map(|p| [p.x, p.y]).collect())?;
    let y: Vec<u8> = points.iter().map(|p| p.label).collect();
    let fit = fit_logistic(&x, &y, LogisticOptions::default())?;
    let w1 = fit.coef[0].max(0.0);
    let w2 = fit.coef[1].max(0.0);
    let s = w1 + w2;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Invalid("fitted boundary has no positive direction".into()));
    }
    Ok(BoundaryFit {
        alpha: w1 / s,
        beta: w2 / s,
        residual_offset: -fit.intercept / s - PASS_THRESHOLD,
    })
}

/// Fits weights for every module-presentation, falling back to pooled
/// weights when a group has too little data and to `(1, 0)` when it has no
/// exam scores at all.
/// (assessment grade, exam score if any, label) per registration.
pub type CourseRows = Vec<(f64, Option<f64>, u8)>;

pub fn fit_pass_weights(groups: &[((String, String), CourseRows)]) -> Vec<PassModelWeights> {
    let with_exam = |rows: &CourseRows| -> Vec<PassPoint> {
        rows.iter().filter_map(|&(x, y, label)| y.map(|y| PassPoint { x, y, label })).collect()
    };
    let all: Vec<PassPoint> = groups.iter().flat_map(|(_, rows)| with_exam(rows)).collect();
    let pooled = fit_pass_boundary(&all).ok();
    if pooled.is_none() && !all.is_empty() {
        log::warn!("pooled pass model could not be fitted on {} points", all.len());
    }
    groups
        .iter()
        .map(|((module, presentation), rows)| {
            let pts = with_exam(rows);
            let (fit, source) = if pts.is_empty() {
                log::warn!("{module} {presentation}: no exam scores, using alpha=1 beta=0");
                (BoundaryFit { alpha: 1.0, beta: 0.0, residual_offset: 0.0 }, WeightSource::NoExam)
            } else {
                match (fit_pass_boundary(&pts), pooled) {
                    (Ok(f), _) => (f, WeightSource::Fitted),
                    (Err(e), Some(p)) => {
                        log::info!("{module} {presentation}: {e}; using pooled weights");
                        (p, WeightSource::Pooled)
                    }
                    (Err(e), None) => {
                        log::warn!("{module} {presentation}: {e}; no pooled fit, using alpha=1 beta=0");
                        (BoundaryFit { alpha: 1.0, beta: 0.0, residual_offset: 0.0 }, WeightSource::NoExam)
                    }
                }
            };
            PassModelWeights {
                code_module: module.clone(),
                code_presentation: presentation.clone(),
                alpha: fit.alpha,
                beta: fit.beta,
                n_fit: if source == WeightSource::Fitted { pts.len() } else { 0 },
                source,
                residual_offset: fit.residual_offset,
            }
        })
        .collect()
}

/// Mean exam share over module-presentations with their own fit.
pub fn mean_exam_share(weights: &[PassModelWeights]) -> Option<f64> {
    let fitted: Vec<f64> =
        weights.iter().filter(|w| w.source == WeightSource::Fitted).map(PassModelWeights::exam_share).collect();
    (!fitted.is_empty()).then(|| fitted.iter().sum::<f64>() / fitted.len() as f64)
}

/// Weighted assessment grade of one registration at `cutoff_day`.
///
/// Sums `weight/100 · score` over non-exam assessments due on or before the
/// cutoff. Unsubmitted or unscored work counts as zero; assessments without a
/// due day only count when `cutoff_day` is `None` (end of semester).
pub fn weighted_assessment_grade(subs: &[SubmissionRow], defs: &[AssessmentDef], cutoff_day: Option<i32>) -> f64 {
    let scores: HashMap<u64, f64> = subs.iter().filter_map(|s| s.score.map(|v| (s.id_assessment, v))).collect();
    weighted_grade_from(|id| scores.get(&id).copied(), defs, cutoff_day)
}

fn weighted_grade_from(score_of: impl Fn(u64) -> Option<f64>, defs: &[AssessmentDef], cutoff_day: Option<i32>) -> f64 {
    let mut total = 0.0;
    for d in defs {
        if d.assessment_type == AssessmentType::Exam {
            continue;
        }
        let due = match (d.due_day, cutoff_day) {
            (_, None) => true,
            (Some(day), Some(cut)) => day <= cut,
            (None, Some(_)) => false,
        };
        if due {
            total += d.weight / 100.0 * score_of(d.id_assessment).unwrap_or(0.0);
        }
    }
    total.clamp(0.0, 100.0)
}

/// Lookup tables over the assessment files.
#[derive(Debug, Clone, Default)]
pub struct AssessmentIndex {
    defs: HashMap<(String, String), Vec<AssessmentDef>>,
    scores: HashMap<(u64, u64), f64>,
}

impl AssessmentIndex {
    pub fn new(defs: &[AssessmentDef], subs: &[SubmissionRow]) -> Self {
        let mut by_course: HashMap<(String, String), Vec<AssessmentDef>> = HashMap::new();
        for d in defs {
            by_course.entry((d.code_module.clone(), d.code_presentation.clone())).or_default().push(d.clone());
        }
        let mut scores = HashMap::new();
        for s in subs {
            if let Some(v) = s.score {
                // duplicates keep the best attempt
                let e = scores.entry((s.id_student, s.id_assessment)).or_insert(v);
                *e = f64::max(*e, v);
            }
        }
        Self { defs: by_course, scores }
    }

    pub fn defs(&self, module: &str, presentation: &str) -> &[AssessmentDef] {
        self.defs.get(&(module.to_string(), presentation.to_string())).map_or(&[], Vec::as_slice)
    }

    pub fn score(&self, student: u64, assessment: u64) -> Option<f64> {
        self.scores.get(&(student, assessment)).copied()
    }

    /// Module-presentations with at least one scored submission.
    pub fn graded_courses(&self) -> std::collections::HashSet<(String, String)> {
        let mut course_of = HashMap::new();
        for (key, defs) in &self.defs {
            for d in defs {
                course_of.insert(d.id_assessment, key);
            }
        }
        self.scores.keys().filter_map(|(_, a)| course_of.get(a).map(|k| (*k).clone())).collect()
    }

    pub fn partial_grade(&self, student: u64, module: &str, presentation: &str, cutoff_day: Option<i32>) -> f64 {
        weighted_grade_from(|a| self.score(student, a), self.defs(module, presentation), cutoff_day)
    }

    /// Mean exam score, if any exam of the course was scored for the student.
    pub fn exam_score(&self, student: u64, module: &str, presentation: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .defs(module, presentation)
            .iter()
            .filter(|d| d.assessment_type == AssessmentType::Exam)
            .filter_map(|d| self.score(student, d.id_assessment))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Partial grades of every record at one snapshot day. The other columns
/// are shared across snapshots and live in the record list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub day: u32,
    pub percent: u32,
    pub partial_grade: Vec<f64>,
}

pub fn build_snapshots(records: &[RegistrationRecord], index: &AssessmentIndex) -> Vec<Snapshot> {
    SNAPSHOT_DAYS
        .iter()
        .map(|&(day, percent)| Snapshot {
            day,
            percent,
            partial_grade: par::map(records, |r| {
                index.partial_grade(r.id_student, &r.code_module, &r.code_presentation, Some(day as i32))
            }),
        })
        .collect()
}
