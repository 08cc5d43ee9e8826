//! Synthetic OULA-shaped fixtures.
//!
//! Generates the four CSV tables with the public column layout. Scores and
//! outcomes follow a latent ability per student so the pipeline has real
//! signal to learn; final results are decided by `0.1·x + 0.9·y >= 40`
//! where an exam is recorded. Used by tests, benches and the CLI demo.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{
    AssessmentDef, AssessmentType, FinalResult, OulaTables, RegistrationDates, StudentInfoRow, SubmissionRow,
    ASSESSMENTS_FILE, STUDENT_ASSESSMENT_FILE, STUDENT_INFO_FILE, STUDENT_REGISTRATION_FILE,
};

pub const MODULES: [&str; 7] = ["AAA", "BBB", "CCC", "DDD", "EEE", "FFF", "GGG"];
pub const PRESENTATIONS: [&str; 4] = ["2013B", "2013J", "2014B", "2014J"];
const REGIONS: [&str; 13] = [
    "East Anglian Region",
    "East Midlands Region",
    "Ireland",
    "London Region",
    "North Region",
    "North Western Region",
    "Scotland",
    "South East Region",
    "South Region",
    "South West Region",
    "Wales",
    "West Midlands Region",
    "Yorkshire Region",
];
const EDUCATION: [&str; 5] = [
    "No Formal quals",
    "Lower Than A Level",
    "A Level or Equivalent",
    "HE Qualification",
    "Post Graduate Qualification",
];
const IMD: [&str; 10] = ["0-10%", "10-20", "20-30%", "30-40%", "40-50%", "50-60%", "60-70%", "70-80%", "80-90%", "90-100%"];
const AGES: [&str; 3] = ["0-35", "35-55", "55<="];

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub students: usize,
    pub seed: u64,
    /// Probability that a student takes a second course (and, again, a third...).
    pub repeat_probability: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { students: 500, seed: 42, repeat_probability: 0.15 }
    }
}

/// Modules whose exam scores are recorded in the fixture.
fn exam_recorded(module: &str) -> bool {
    matches!(module, "CCC" | "DDD" | "EEE")
}

pub fn generate(cfg: SyntheticConfig) -> OulaTables {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let mut assessments = Vec::new();
    let mut next_assessment = 1000u64;
    let courses: Vec<(&str, &str)> =
        MODULES.iter().flat_map(|m| PRESENTATIONS.iter().map(move |p| (*m, *p))).collect();
    for &(m, p) in &courses {
        let n = rng.random_range(3..=6);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..4.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut acc = 0.0;
        for (k, w) in raw.iter().enumerate() {
            let weight = if k + 1 == n { 100.0 - acc } else { (w / total * 100.0).round() };
            acc += weight;
            assessments.push(AssessmentDef {
                id_assessment: next_assessment,
                code_module: m.into(),
                code_presentation: p.into(),
                assessment_type: if k % 2 == 0 { AssessmentType::Tma } else { AssessmentType::Cma },
                due_day: Some(15 + (k as i32) * (220 / n as i32) + rng.random_range(0..10)),
                weight,
            });
            next_assessment += 1;
        }
        assessments.push(AssessmentDef {
            id_assessment: next_assessment,
            code_module: m.into(),
            code_presentation: p.into(),
            assessment_type: AssessmentType::Exam,
            due_day: None,
            weight: 100.0,
        });
        next_assessment += 1;
    }

    let mut students = Vec::new();
    let mut submissions = Vec::new();
    let mut registrations = Vec::new();
    for s in 0..cfg.students {
        let id_student = 10_000 + s as u64 * 7;
        let edu = rng.random_range(0..EDUCATION.len());
        let imd = rng.random_range(0..=IMD.len());
        let ability = noise.sample(&mut rng) + 0.25 * (edu as f64 - 2.0) + 0.1 * (imd.min(9) as f64 - 4.5) / 4.5;
        let gender = if rng.random_bool(0.5) { "M" } else { "F" };
        let region = REGIONS[rng.random_range(0..REGIONS.len())];
        let age = AGES[[0, 0, 0, 1, 1, 2][rng.random_range(0..6)]];
        let disability = if rng.random_bool(0.1) { "Y" } else { "N" };

        let mut taken: Vec<usize> = Vec::new();
        loop {
            let c = rng.random_range(0..courses.len());
            if !taken.contains(&c) {
                taken.push(c);
            }
            if taken.len() >= 5 || !rng.random_bool(cfg.repeat_probability) {
                break;
            }
        }
        for &c in &taken {
            let (m, p) = courses[c];
            let prev = if rng.random_bool(0.12) { rng.random_range(1..3) } else { 0 };
            let a = ability - 0.3 * f64::from(prev) + 0.4 * noise.sample(&mut rng);
            let withdraws = rng.random_bool((0.45 - 0.2 * a).clamp(0.03, 0.8));
            let withdrawal_day = withdraws.then(|| rng.random_range(-40..200));
            let course_defs: Vec<&AssessmentDef> =
                assessments.iter().filter(|d| d.code_module == m && d.code_presentation == p).collect();
            let mut x = 0.0;
            let mut y = None;
            for d in &course_defs {
                let due = d.due_day.unwrap_or(250);
                if withdrawal_day.is_some_and(|w| w < due) {
                    continue;
                }
                if d.assessment_type == AssessmentType::Exam {
                    if !exam_recorded(m) {
                        continue;
                    }
                    let score = (50.0 + 22.0 * a + 10.0 * noise.sample(&mut rng)).clamp(0.0, 100.0).round();
                    y = Some(score);
                    submissions.push(SubmissionRow {
                        id_assessment: d.id_assessment,
                        id_student,
                        date_submitted: Some(due),
                        score: Some(score),
                    });
                    continue;
                }
                if !rng.random_bool((0.85 + 0.1 * a).clamp(0.2, 0.99)) {
                    continue;
                }
                let score = (68.0 + 14.0 * a + 8.0 * noise.sample(&mut rng)).clamp(0.0, 100.0).round();
                x += d.weight / 100.0 * score;
                submissions.push(SubmissionRow {
                    id_assessment: d.id_assessment,
                    id_student,
                    date_submitted: Some(due - rng.random_range(0..5)),
                    score: if rng.random_bool(0.01) { None } else { Some(score) },
                });
            }
            let final_result = if withdraws {
                FinalResult::Withdrawn
            } else {
                let grade = match y {
                    Some(y) => 0.1 * x + 0.9 * y,
                    None => (50.0 + 22.0 * a + 10.0 * noise.sample(&mut rng)).clamp(0.0, 100.0),
                };
                match grade {
                    g if g >= 75.0 => FinalResult::Distinction,
                    g if g >= 40.0 => FinalResult::Pass,
                    _ => FinalResult::Fail,
                }
            };
            students.push(StudentInfoRow {
                code_module: m.into(),
                code_presentation: p.into(),
                id_student,
                gender: gender.into(),
                region: region.into(),
                highest_education: EDUCATION[edu].into(),
                imd_band: IMD.get(imd).map(|s| s.to_string()),
                age_band: age.into(),
                num_of_prev_attempts: prev,
                studied_credits: 30 * rng.random_range(1..5),
                disability: disability.into(),
                final_result,
            });
            registrations.push(RegistrationDates {
                code_module: m.into(),
                code_presentation: p.into(),
                id_student,
                date_registration: Some(rng.random_range(-100..0)),
                date_unregistration: withdrawal_day,
            });
        }
    }
    OulaTables { students, assessments, submissions, registrations: Some(registrations), rejections: Vec::new() }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "?".to_string(), T::to_string)
}

/// Writes the tables in the public file layout.
pub fn write_dir(tables: &OulaTables, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let open = |name: &str| -> Result<csv::Writer<BufWriter<File>>> {
        Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
    };
    let err = |e| Error::Csv { path: dir.to_path_buf(), source: e };

    let mut w = open(STUDENT_INFO_FILE)?;
    w.write_record([
        "code_module",
        "code_presentation",
        "id_student",
        "gender",
        "region",
        "highest_education",
        "imd_band",
        "age_band",
        "num_of_prev_attempts",
        "studied_credits",
        "disability",
        "final_result",
    ])
    .map_err(err)?;
    for s in &tables.students {
        w.write_record([
            s.code_module.clone(),
            s.code_presentation.clone(),
            s.id_student.to_string(),
            s.gender.clone(),
            s.region.clone(),
            s.highest_education.clone(),
            opt(&s.imd_band),
            s.age_band.clone(),
            s.num_of_prev_attempts.to_string(),
            s.studied_credits.to_string(),
            s.disability.clone(),
            s.final_result.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;

    let mut w = open(ASSESSMENTS_FILE)?;
    w.write_record(["code_module", "code_presentation", "id_assessment", "assessment_type", "date", "weight"])
        .map_err(err)?;
    for a in &tables.assessments {
        let ty = match a.assessment_type {
            AssessmentType::Tma => "TMA",
            AssessmentType::Cma => "CMA",
            AssessmentType::Exam => "Exam",
        };
        w.write_record([
            a.code_module.clone(),
            a.code_presentation.clone(),
            a.id_assessment.to_string(),
            ty.to_string(),
            a.due_day.map(|d| d.to_string()).unwrap_or_default(),
            a.weight.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;

    let mut w = open(STUDENT_ASSESSMENT_FILE)?;
    w.write_record(["id_assessment", "id_student", "date_submitted", "is_banked", "score"]).map_err(err)?;
    for s in &tables.submissions {
        w.write_record([
            s.id_assessment.to_string(),
            s.id_student.to_string(),
            opt(&s.date_submitted),
            "0".to_string(),
            opt(&s.score),
        ])
        .map_err(err)?;
    }
    w.flush()?;

    if let Some(regs) = &tables.registrations {
        let mut w = open(STUDENT_REGISTRATION_FILE)?;
        w.write_record(["code_module", "code_presentation", "id_student", "date_registration", "date_unregistration"])
            .map_err(err)?;
        for r in regs {
            w.write_record([
                r.code_module.clone(),
                r.code_presentation.clone(),
                r.id_student.to_string(),
                r.date_registration.map(|d| d.to_string()).unwrap_or_default(),
                r.date_unregistration.map(|d| d.to_string()).unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        w.flush()?;
    }
    Ok(())
}
