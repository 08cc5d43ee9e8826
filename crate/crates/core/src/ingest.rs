//! Loading of the OULA CSV files.
//!
//! Missing cells (`""` or `"?"` in the public release) become `None`. Rows
//! that fail to parse or break a field invariant are rejected individually
//! and reported with their line number; a missing file is fatal.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STUDENT_INFO_FILE: &str = "studentInfo.csv";
pub const ASSESSMENTS_FILE: &str = "assessments.csv";
pub const STUDENT_ASSESSMENT_FILE: &str = "studentAssessment.csv";
pub const STUDENT_REGISTRATION_FILE: &str = "studentRegistration.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FinalResult {
    Pass,
    Distinction,
    Fail,
    Withdrawn,
}

impl FinalResult {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalResult::Pass => "Pass",
            FinalResult::Distinction => "Distinction",
            FinalResult::Fail => "Fail",
            FinalResult::Withdrawn => "Withdrawn",
        }
    }

    /// Pass and Distinction are success (1); Fail and Withdrawn are not (0).
    pub fn label(self) -> u8 {
        match self {
            FinalResult::Pass | FinalResult::Distinction => 1,
            FinalResult::Fail | FinalResult::Withdrawn => 0,
        }
    }
}

impl FromStr for FinalResult {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Pass" => Ok(FinalResult::Pass),
            "Distinction" => Ok(FinalResult::Distinction),
            "Fail" => Ok(FinalResult::Fail),
            "Withdrawn" => Ok(FinalResult::Withdrawn),
            other => Err(Error::UnknownFinalResult(other.to_string())),
        }
    }
}

impl fmt::Display for FinalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentInfoRow {
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
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssessmentType {
    Tma,
    Cma,
    Exam,
}

impl FromStr for AssessmentType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "TMA" => Ok(AssessmentType::Tma),
            "CMA" => Ok(AssessmentType::Cma),
            "Exam" => Ok(AssessmentType::Exam),
            other => Err(Error::Invalid(format!("unknown assessment type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentDef {
    pub id_assessment: u64,
    pub code_module: String,
    pub code_presentation: String,
    pub assessment_type: AssessmentType,
    pub due_day: Option<i32>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRow {
    pub id_assessment: u64,
    pub id_student: u64,
    pub date_submitted: Option<i32>,
    pub score: Option<f64>,
}

/// One row of the optional registration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationDates {
    pub code_module: String,
    pub code_presentation: String,
    pub id_student: u64,
    pub date_registration: Option<i32>,
    pub date_unregistration: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

/// Problems found in assessment definitions. Reported, never fatal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightWarning {
    pub code_module: String,
    pub code_presentation: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct OulaTables {
    pub students: Vec<StudentInfoRow>,
    pub assessments: Vec<AssessmentDef>,
    pub submissions: Vec<SubmissionRow>,
    pub registrations: Option<Vec<RegistrationDates>>,
    pub rejections: Vec<Rejection>,
}

impl OulaTables {
    /// Withdrawal day per (student, module, presentation), when the
    /// registration file was present and recorded one.
    pub fn withdrawal_days(&self) -> HashMap<(u64, String, String), i32> {
        self.registrations
            .iter()
            .flatten()
            .filter_map(|r| {
                r.date_unregistration
                    .map(|d| ((r.id_student, r.code_module.clone(), r.code_presentation.clone()), d))
            })
            .collect()
    }
}

/// Loads the three required files plus `studentRegistration.csv` if present.
pub fn load_oula(dir: &Path) -> Result<OulaTables> {
    let mut rejections = Vec::new();
    let students = read_table(&dir.join(STUDENT_INFO_FILE), parse_student, &mut rejections)?;
    let assessments = read_table(&dir.join(ASSESSMENTS_FILE), parse_assessment, &mut rejections)?;
    let submissions = read_table(&dir.join(STUDENT_ASSESSMENT_FILE), parse_submission, &mut rejections)?;
    let reg_path = dir.join(STUDENT_REGISTRATION_FILE);
    let registrations = if reg_path.exists() {
        Some(read_table(&reg_path, parse_registration, &mut rejections)?)
    } else {
        log::info!("{} not found; treating all registrations as not withdrawn early", reg_path.display());
        None
    };
    for w in check_assessment_weights(&assessments) {
        log::warn!("{} {}: {}", w.code_module, w.code_presentation, w.message);
    }
    Ok(OulaTables { students, assessments, submissions, registrations, rejections })
}

/// Non-exam weights should sum to 100 per module-presentation and exams
/// should weigh 100.
pub fn check_assessment_weights(defs: &[AssessmentDef]) -> Vec<WeightWarning> {
    let mut groups: HashMap<(&str, &str), (f64, Vec<f64>, usize)> = HashMap::new();
    for d in defs {
        let e = groups.entry((&d.code_module, &d.code_presentation)).or_default();
        match d.assessment_type {
            AssessmentType::Exam => e.1.push(d.weight),
            _ => {
                e.0 += d.weight;
                e.2 += 1;
            }
        }
    }
    let mut keys: Vec<_> = groups.keys().copied().collect();
    keys.sort_unstable();
    let mut out = Vec::new();
    for key in keys {
        let (sum, exams, n) = &groups[&key];
        if *n > 0 && (sum - 100.0).abs() > 1e-6 {
            out.push(WeightWarning {
                code_module: key.0.to_string(),
                code_presentation: key.1.to_string(),
                message: format!("non-exam weights sum to {sum}, expected 100"),
            });
        }
        for w in exams {
            if (w - 100.0).abs() > 1e-6 {
                out.push(WeightWarning {
                    code_module: key.0.to_string(),
                    code_presentation: key.1.to_string(),
                    message: format!("exam weight {w}, expected 100"),
                });
            }
        }
    }
    out
}

struct Row<'a> {
    header: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    fn raw(&self, name: &str) -> std::result::Result<&str, String> {
        let idx = *self.header.get(name).ok_or_else(|| format!("missing column {name}"))?;
        self.record.get(idx).map(str::trim).ok_or_else(|| format!("missing field {name}"))
    }

    fn opt(&self, name: &str) -> std::result::Result<Option<&str>, String> {
        let v = self.raw(name)?;
        Ok(if v.is_empty() || v == "?" { None } else { Some(v) })
    }

    fn req(&self, name: &str) -> std::result::Result<&str, String> {
        self.opt(name)?.ok_or_else(|| format!("empty {name}"))
    }

    fn parse<T: FromStr>(&self, name: &str) -> std::result::Result<T, String> {
        let v = self.req(name)?;
        v.parse().map_err(|_| format!("cannot parse {name}={v:?}"))
    }

    fn parse_opt<T: FromStr>(&self, name: &str) -> std::result::Result<Option<T>, String> {
        match self.opt(name)? {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| format!("cannot parse {name}={v:?}")),
        }
    }
}

fn read_table<T>(
    path: &Path,
    parse: fn(&Row<'_>) -> std::result::Result<T, String>,
    rejections: &mut Vec<Rejection>,
) -> Result<Vec<T>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let csv_err = |source| Error::Csv { path: PathBuf::from(path), source };
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(csv_err)?;
    let header: HashMap<String, usize> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().trim_matches('"').to_string(), i))
        .collect();
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = Vec::new();
    for result in reader.records() {
        let (line, parsed) = match result {
            Ok(record) => {
                let line = record.position().map_or(0, |p| p.line());
                (line, parse(&Row { header: &header, record: &record }))
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                (line, Err(e.to_string()))
            }
        };
        match parsed {
            Ok(v) => out.push(v),
            Err(reason) => {
                log::warn!("{file}:{line}: rejected row: {reason}");
                rejections.push(Rejection { file: file.clone(), line, reason });
            }
        }
    }
    Ok(out)
}

fn parse_student(r: &Row<'_>) -> std::result::Result<StudentInfoRow, String> {
    let id_student: u64 = r.parse("id_student")?;
    if id_student == 0 {
        return Err("id_student must be positive".into());
    }
    let studied_credits: u32 = r.parse("studied_credits")?;
    if studied_credits == 0 {
        return Err("studied_credits must be positive".into());
    }
    Ok(StudentInfoRow {
        code_module: r.req("code_module")?.to_string(),
        code_presentation: r.req("code_presentation")?.to_string(),
        id_student,
        gender: r.req("gender")?.to_string(),
        region: r.req("region")?.to_string(),
        highest_education: r.req("highest_education")?.to_string(),
        imd_band: r.opt("imd_band")?.map(str::to_string),
        age_band: r.req("age_band")?.to_string(),
        num_of_prev_attempts: r.parse("num_of_prev_attempts")?,
        studied_credits,
        disability: r.req("disability")?.to_string(),
        final_result: r.req("final_result")?.parse().map_err(|e: Error| e.to_string())?,
    })
}

fn parse_assessment(r: &Row<'_>) -> std::result::Result<AssessmentDef, String> {
    let weight: f64 = r.parse("weight")?;
    if !(0.0..=100.0).contains(&weight) {
        return Err(format!("weight {weight} outside [0, 100]"));
    }
    Ok(AssessmentDef {
        id_assessment: r.parse("id_assessment")?,
        code_module: r.req("code_module")?.to_string(),
        code_presentation: r.req("code_presentation")?.to_string(),
        assessment_type: r.req("assessment_type")?.parse().map_err(|e: Error| e.to_string())?,
        due_day: r.parse_opt("date")?,
        weight,
    })
}

fn parse_submission(r: &Row<'_>) -> std::result::Result<SubmissionRow, String> {
    let score: Option<f64> = r.parse_opt("score")?;
    if let Some(s) = score {
        if !(0.0..=100.0).contains(&s) {
            return Err(format!("score {s} outside [0, 100]"));
        }
    }
    Ok(SubmissionRow {
        id_assessment: r.parse("id_assessment")?,
        id_student: r.parse("id_student")?,
        date_submitted: r.parse_opt("date_submitted")?,
        score,
    })
}

fn parse_registration(r: &Row<'_>) -> std::result::Result<RegistrationDates, String> {
    Ok(RegistrationDates {
        code_module: r.req("code_module")?.to_string(),
        code_presentation: r.req("code_presentation")?.to_string(),
        id_student: r.parse("id_student")?,
        date_registration: r.parse_opt("date_registration")?,
        date_unregistration: r.parse_opt("date_unregistration")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const STUDENT_HEADER: &str = "code_module,code_presentation,id_student,gender,region,highest_education,imd_band,age_band,num_of_prev_attempts,studied_credits,disability,final_result\n";

    fn write_min(dir: &Path, students: &str) {
        fs::write(dir.join(STUDENT_INFO_FILE), format!("{STUDENT_HEADER}{students}")).unwrap();
        fs::write(
            dir.join(ASSESSMENTS_FILE),
            "code_module,code_presentation,id_assessment,assessment_type,date,weight\nAAA,2013J,1,TMA,19,100\nAAA,2013J,2,Exam,,100\n",
        )
        .unwrap();
        fs::write(
            dir.join(STUDENT_ASSESSMENT_FILE),
            "id_assessment,id_student,date_submitted,is_banked,score\n1,11,18,0,78\n1,12,20,0,?\n",
        )
        .unwrap();
    }

    #[test]
    fn empty_directory_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        match load_oula(dir.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with(STUDENT_INFO_FILE)),
            other => panic!("expected missing file, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write_min(
            dir.path(),
            "AAA,2013J,11,M,East Anglian Region,HE Qualification,90-100%,55<=,0,240,N,Pass\n\
             AAA,2013J,not-a-number,F,Scotland,HE Qualification,20-30%,35-55,0,60,N,Withdrawn\n\
             AAA,2013J,12,F,Scotland,A Level or Equivalent,?,0-35,1,60,Y,Fail\n",
        );
        let t = load_oula(dir.path()).unwrap();
        assert_eq!(t.students.len(), 2);
        assert_eq!(t.rejections.len(), 1);
        assert_eq!(t.rejections[0].line, 3);
        assert_eq!(t.students[1].imd_band, None);
        assert_eq!(t.submissions[1].score, None);
        assert_eq!(t.assessments[1].due_day, None);
        assert!(t.registrations.is_none());
    }

    #[test]
    fn unknown_final_result_is_rejected() {
        assert!("Incomplete".parse::<FinalResult>().is_err());
        let dir = tempfile::tempdir().unwrap();
        write_min(dir.path(), "AAA,2013J,11,M,Wales,HE Qualification,90-100%,55<=,0,240,N,Incomplete\n");
        let t = load_oula(dir.path()).unwrap();
        assert!(t.students.is_empty());
        assert_eq!(t.rejections.len(), 1);
    }

    #[test]
    fn weight_checks_warn_only() {
        let mk = |id, ty, w| AssessmentDef {
            id_assessment: id,
            code_module: "AAA".into(),
            code_presentation: "2013J".into(),
            assessment_type: ty,
            due_day: Some(10),
            weight: w,
        };
        let ok = vec![mk(1, AssessmentType::Tma, 40.0), mk(2, AssessmentType::Cma, 60.0), mk(3, AssessmentType::Exam, 100.0)];
        assert!(check_assessment_weights(&ok).is_empty());
        let bad = vec![mk(1, AssessmentType::Tma, 40.0), mk(3, AssessmentType::Exam, 50.0)];
        assert_eq!(check_assessment_weights(&bad).len(), 2);
    }
}
