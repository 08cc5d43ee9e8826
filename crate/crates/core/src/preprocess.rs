//! Filtering and labelling of registrations.
//!
//! Steps run in a fixed order:
//! 1. drop module-presentations without any scored submission;
//! 2. drop Withdrawn registrations that left on or before day 7;
//! 3. drop records inconsistent with the pass threshold, using pass-model
//!    weights fitted on the data (fit, drop, refit);
//! 4. merge Pass/Distinction into label 1 and Fail/Withdrawn into label 0.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grades::{self, AssessmentIndex, CourseRows, PassModelWeights, PASS_THRESHOLD};
use crate::ingest::{check_assessment_weights, FinalResult, OulaTables, StudentInfoRow, WeightWarning};

/// Last day (inclusive) on which a withdrawal removes the registration.
pub const EARLY_WITHDRAWAL_DAY: i32 = 7;

const COURSE_CATEGORIES: &str = include_str!("../data/course_categories.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CourseCategory {
    #[serde(rename = "STEM")]
    Stem,
    SocialScience,
}

impl CourseCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            CourseCategory::Stem => "STEM",
            CourseCategory::SocialScience => "SocialScience",
        }
    }
}

impl FromStr for CourseCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "STEM" => Ok(CourseCategory::Stem),
            "SocialScience" => Ok(CourseCategory::SocialScience),
            other => Err(Error::Invalid(format!("unknown course category {other:?}"))),
        }
    }
}

/// Category of an OULA module code, from the bundled lookup table.
pub fn course_category(code_module: &str) -> Option<CourseCategory> {
    COURSE_CATEGORIES
        .lines()
        .skip(1)
        .filter_map(|l| {
            let mut f = l.split(',');
            Some((f.next()?, f.nth(1)?))
        })
        .find(|(m, _)| *m == code_module)
        .and_then(|(_, c)| c.trim().parse().ok())
}

pub fn derive_label(final_result: &str) -> Result<u8> {
    Ok(final_result.parse::<FinalResult>()?.label())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub registration_id: u32,
    pub code_module: String,
    pub code_presentation: String,
    pub id_student: u64,
    pub gender: String,
    pub region: String,
    pub highest_education: String,
    pub imd_band: Option<String>,
    pub age_band: String,
    pub num_of_prev_attempts: u32,
    pub studied_credits: u32,
    pub disability: String,
    pub final_result: FinalResult,
    pub course_category: CourseCategory,
    pub label: u8,
    pub withdrawal_day: Option<i32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub input_rows: usize,
    pub dropped_ungraded_course: usize,
    pub dropped_early_withdrawal: usize,
    pub dropped_threshold_outlier: usize,
    pub dropped_unknown_module: usize,
    pub dropped_duplicate: usize,
    pub output_rows: usize,
    pub unique_students: usize,
    pub label_one_fraction: f64,
    pub mean_exam_share: Option<f64>,
    pub weight_warnings: Vec<WeightWarning>,
}

impl PreprocessReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{} records over {} students ({:.2}% label-0 / {:.2}% label-1); dropped: {} ungraded-course, {} early-withdrawal, {} threshold-outlier",
            self.output_rows,
            self.unique_students,
            100.0 * (1.0 - self.label_one_fraction),
            100.0 * self.label_one_fraction,
            self.dropped_ungraded_course,
            self.dropped_early_withdrawal,
            self.dropped_threshold_outlier,
        )
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub records: Vec<RegistrationRecord>,
    /// Pass-model weights from the refit after outlier removal.
    pub weights: Vec<PassModelWeights>,
    pub report: PreprocessReport,
    pub index: AssessmentIndex,
}

type CourseKey = (String, String);

pub fn preprocess(tables: &OulaTables) -> Preprocessed {
    preprocess_with(&tables.students, tables, &tables.withdrawal_days())
}

/// Runs the filter chain. `withdrawal_days` maps (student, module,
/// presentation) to the day of withdrawal; absent keys are not withdrawn.
pub fn preprocess_with(
    rows: &[StudentInfoRow],
    tables: &OulaTables,
    withdrawal_days: &HashMap<(u64, String, String), i32>,
) -> Preprocessed {
    let index = AssessmentIndex::new(&tables.assessments, &tables.submissions);
    let mut report = PreprocessReport {
        input_rows: rows.len(),
        weight_warnings: check_assessment_weights(&tables.assessments),
        ..Default::default()
    };

    let graded = index.graded_courses();
    let withdrawal = |r: &StudentInfoRow| {
        withdrawal_days.get(&(r.id_student, r.code_module.clone(), r.code_presentation.clone())).copied()
    };

    let mut kept: Vec<&StudentInfoRow> = Vec::with_capacity(rows.len());
    for r in rows {
        if !graded.contains(&(r.code_module.clone(), r.code_presentation.clone())) {
            report.dropped_ungraded_course += 1;
            continue;
        }
        if r.final_result == FinalResult::Withdrawn && withdrawal(r).is_some_and(|d| d <= EARLY_WITHDRAWAL_DAY) {
            report.dropped_early_withdrawal += 1;
            continue;
        }
        kept.push(r);
    }

    // pass 1: fit on everything that survived steps 1-2
    let points: Vec<(f64, Option<f64>)> = kept
        .iter()
        .map(|r| {
            (
                index.partial_grade(r.id_student, &r.code_module, &r.code_presentation, None),
                index.exam_score(r.id_student, &r.code_module, &r.code_presentation),
            )
        })
        .collect();
    let first = grades::fit_pass_weights(&group_points(&kept, &points, |_| true));
    let first_by_course: HashMap<CourseKey, &PassModelWeights> =
        first.iter().map(|w| ((w.code_module.clone(), w.code_presentation.clone()), w)).collect();

    let consistent: Vec<bool> = kept
        .iter()
        .zip(&points)
        .map(|(r, &(x, y))| {
            let Some(y) = y else { return true };
            let label = r.final_result.label();
            if label == 1 {
                y >= PASS_THRESHOLD
            } else {
                let w = first_by_course[&(r.code_module.clone(), r.code_presentation.clone())];
                w.grade(x, y) < PASS_THRESHOLD
            }
        })
        .collect();
    report.dropped_threshold_outlier = consistent.iter().filter(|c| !**c).count();

    // pass 2: refit on the consistent records
    let weights = grades::fit_pass_weights(&group_points(&kept, &points, |i| consistent[i]));
    report.mean_exam_share = grades::mean_exam_share(&weights);

    let mut records = Vec::with_capacity(kept.len());
    let mut seen: HashSet<(u64, &str, &str)> = HashSet::new();
    for (i, r) in kept.iter().enumerate() {
        if !consistent[i] {
            continue;
        }
        let Some(course_category) = course_category(&r.code_module) else {
            log::warn!("module {} has no course category; dropping registration", r.code_module);
            report.dropped_unknown_module += 1;
            continue;
        };
        if !seen.insert((r.id_student, &r.code_module, &r.code_presentation)) {
            report.dropped_duplicate += 1;
            continue;
        }
        records.push(RegistrationRecord {
            registration_id: 0,
            code_module: r.code_module.clone(),
            code_presentation: r.code_presentation.clone(),
            id_student: r.id_student,
            gender: r.gender.clone(),
            region: r.region.clone(),
            highest_education: r.highest_education.clone(),
            imd_band: r.imd_band.clone(),
            age_band: r.age_band.clone(),
            num_of_prev_attempts: r.num_of_prev_attempts,
            studied_credits: r.studied_credits,
            disability: r.disability.clone(),
            final_result: r.final_result,
            course_category,
            label: r.final_result.label(),
            withdrawal_day: withdrawal(r),
        });
    }
    records.sort_by(|a, b| {
        (a.id_student, &a.code_module, &a.code_presentation).cmp(&(b.id_student, &b.code_module, &b.code_presentation))
    });
    for (i, r) in records.iter_mut().enumerate() {
        r.registration_id = i as u32;
    }

    report.output_rows = records.len();
    report.unique_students = records.iter().map(|r| r.id_student).collect::<HashSet<_>>().len();
    report.label_one_fraction = if records.is_empty() {
        0.0
    } else {
        records.iter().filter(|r| r.label == 1).count() as f64 / records.len() as f64
    };
    Preprocessed { records, weights, report, index }
}

fn group_points(
    rows: &[&StudentInfoRow],
    points: &[(f64, Option<f64>)],
    include: impl Fn(usize) -> bool,
) -> Vec<(CourseKey, CourseRows)> {
    let mut groups: HashMap<CourseKey, CourseRows> = HashMap::new();
    for (i, (r, &(x, y))) in rows.iter().zip(points).enumerate() {
        let entry = groups.entry((r.code_module.clone(), r.code_presentation.clone())).or_default();
        if include(i) {
            entry.push((x, y, r.final_result.label()));
        }
    }
    let mut out: Vec<_> = groups.into_iter().collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Column order of the canonical preprocessed table.
pub const CANONICAL_COLUMNS: [&str; 16] = [
    "registration_id",
    "id_student",
    "code_module",
    "code_presentation",
    "gender",
    "region",
    "highest_education",
    "imd_band",
    "age_band",
    "num_of_prev_attempts",
    "studied_credits",
    "disability",
    "course_category",
    "final_result",
    "label",
    "withdrawal_day",
];

fn canonical_fields(r: &RegistrationRecord) -> [String; 16] {
    [
        r.registration_id.to_string(),
        r.id_student.to_string(),
        r.code_module.clone(),
        r.code_presentation.clone(),
        r.gender.clone(),
        r.region.clone(),
        r.highest_education.clone(),
        r.imd_band.clone().unwrap_or_default(),
        r.age_band.clone(),
        r.num_of_prev_attempts.to_string(),
        r.studied_credits.to_string(),
        r.disability.clone(),
        r.course_category.as_str().to_string(),
        r.final_result.as_str().to_string(),
        r.label.to_string(),
        r.withdrawal_day.map(|d| d.to_string()).unwrap_or_default(),
    ]
}

/// Writes the canonical table; an extra trailing column is appended when
/// `partial_grade` is given (snapshot files).
pub fn write_records<W: Write>(out: W, records: &[RegistrationRecord], partial_grade: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CANONICAL_COLUMNS.to_vec();
    if partial_grade.is_some() {
        header.push("partial_grade");
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in records.iter().enumerate() {
        let mut fields = canonical_fields(r).to_vec();
        if let Some(pg) = partial_grade {
            fields.push(format!("{}", pg[i]));
        }
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_file(path: &Path, records: &[RegistrationRecord], partial_grade: Option<&[f64]>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_records(std::io::BufWriter::new(f), records, partial_grade)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv { path: "<output>".into(), source: e }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AssessmentDef, AssessmentType, SubmissionRow};

    fn student(id: u64, module: &str, pres: &str, result: FinalResult) -> StudentInfoRow {
        StudentInfoRow {
            code_module: module.into(),
            code_presentation: pres.into(),
            id_student: id,
            gender: "F".into(),
            region: "Wales".into(),
            highest_education: "HE Qualification".into(),
            imd_band: None,
            age_band: "0-35".into(),
            num_of_prev_attempts: 0,
            studied_credits: 60,
            disability: "N".into(),
            final_result: result,
        }
    }

    fn graded_tables(students: Vec<StudentInfoRow>) -> OulaTables {
        let mut assessments = Vec::new();
        let mut submissions = Vec::new();
        for (i, (m, p)) in [("AAA", "2013J"), ("AAA", "2014J")].iter().enumerate() {
            let id = i as u64 + 1;
            assessments.push(AssessmentDef {
                id_assessment: id,
                code_module: (*m).into(),
                code_presentation: (*p).into(),
                assessment_type: AssessmentType::Tma,
                due_day: Some(30),
                weight: 100.0,
            });
            submissions.push(SubmissionRow { id_assessment: id, id_student: 999, date_submitted: Some(20), score: Some(70.0) });
        }
        OulaTables { students, assessments, submissions, ..Default::default() }
    }

    #[test]
    fn labels() {
        assert_eq!(derive_label("Distinction").unwrap(), 1);
        assert_eq!(derive_label("Pass").unwrap(), 1);
        assert_eq!(derive_label("Withdrawn").unwrap(), 0);
        assert_eq!(derive_label("Fail").unwrap(), 0);
        assert!(derive_label("Absent").is_err());
    }

    #[test]
    fn categories_from_lookup() {
        assert_eq!(course_category("AAA"), Some(CourseCategory::SocialScience));
        assert_eq!(course_category("FFF"), Some(CourseCategory::Stem));
        assert_eq!(course_category("ZZZ"), None);
    }

    #[test]
    fn early_withdrawal_is_removed() {
        let t = graded_tables(vec![student(5, "AAA", "2013J", FinalResult::Withdrawn)]);
        let wd = HashMap::from([((5, "AAA".to_string(), "2013J".to_string()), -10)]);
        let out = preprocess_with(&t.students, &t, &wd);
        assert!(out.records.is_empty());
        assert_eq!(out.report.dropped_early_withdrawal, 1);

        let late = HashMap::from([((5, "AAA".to_string(), "2013J".to_string()), 8)]);
        assert_eq!(preprocess_with(&t.students, &t, &late).records.len(), 1);
    }

    #[test]
    fn one_student_two_presentations() {
        let t = graded_tables(vec![
            student(5, "AAA", "2014J", FinalResult::Pass),
            student(5, "AAA", "2013J", FinalResult::Pass),
        ]);
        let out = preprocess(&t);
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records.iter().map(|r| r.label).collect::<Vec<_>>(), vec![1, 1]);
        assert_eq!(out.records[0].code_presentation, "2013J");
        assert_eq!(out.report.unique_students, 1);
    }

    #[test]
    fn ungraded_course_is_removed() {
        let t = graded_tables(vec![student(5, "BBB", "2013J", FinalResult::Pass)]);
        let out = preprocess(&t);
        assert!(out.records.is_empty());
        assert_eq!(out.report.dropped_ungraded_course, 1);
    }

    #[test]
    fn pass_with_failed_exam_is_an_outlier() {
        let mut t = graded_tables(vec![
            student(1, "AAA", "2013J", FinalResult::Pass),
            student(2, "AAA", "2013J", FinalResult::Pass),
        ]);
        t.assessments.push(AssessmentDef {
            id_assessment: 9,
            code_module: "AAA".into(),
            code_presentation: "2013J".into(),
            assessment_type: AssessmentType::Exam,
            due_day: None,
            weight: 100.0,
        });
        t.submissions.push(SubmissionRow { id_assessment: 9, id_student: 1, date_submitted: Some(240), score: Some(20.0) });
        t.submissions.push(SubmissionRow { id_assessment: 9, id_student: 2, date_submitted: Some(240), score: Some(70.0) });
        let out = preprocess(&t);
        assert_eq!(out.report.dropped_threshold_outlier, 1);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].id_student, 2);
    }

    #[test]
    fn canonical_csv_is_deterministic() {
        let t = graded_tables(vec![
            student(7, "AAA", "2013J", FinalResult::Fail),
            student(3, "AAA", "2014J", FinalResult::Distinction),
        ]);
        let a = preprocess(&t);
        let b = preprocess(&t);
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_records(&mut ba, &a.records, None).unwrap();
        write_records(&mut bb, &b.records, None).unwrap();
        assert_eq!(ba, bb);
        let text = String::from_utf8(ba).unwrap();
        assert!(text.starts_with(&CANONICAL_COLUMNS.join(",")));
        assert!(text.lines().nth(1).unwrap().starts_with("0,3,AAA,2014J"));
    }
}
