//! Categorical encoding and the feature-case column sets.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preprocess::RegistrationRecord;

/// Token standing in for a missing categorical value (only IMD band has
/// missing values in practice). It is a category of its own.
pub const MISSING: &str = "<missing>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    PartialGrade,
    PrevAttempts,
    CourseCategory,
    CodeModule,
    CodePresentation,
    Education,
    StudiedCredits,
    Gender,
    Disability,
    Region,
    Age,
    ImdBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encoding {
    Numeric,
    Label,
    OneHot,
}

impl Feature {
    /// Matrix column order.
    pub const ALL: [Feature; 12] = [
        Feature::PartialGrade,
        Feature::PrevAttempts,
        Feature::CourseCategory,
        Feature::CodeModule,
        Feature::CodePresentation,
        Feature::Education,
        Feature::StudiedCredits,
        Feature::Gender,
        Feature::Disability,
        Feature::Region,
        Feature::Age,
        Feature::ImdBand,
    ];

    pub fn encoding(self) -> Encoding {
        use Feature::*;
        match self {
            PartialGrade | PrevAttempts | StudiedCredits => Encoding::Numeric,
            Education | Region | CodeModule | CodePresentation => Encoding::OneHot,
            Gender | Age | ImdBand | Disability | CourseCategory => Encoding::Label,
        }
    }

    pub fn name(self) -> &'static str {
        use Feature::*;
        match self {
            PartialGrade => "partial_grade",
            PrevAttempts => "num_of_prev_attempts",
            CourseCategory => "course_category",
            CodeModule => "code_module",
            CodePresentation => "code_presentation",
            Education => "highest_education",
            StudiedCredits => "studied_credits",
            Gender => "gender",
            Disability => "disability",
            Region => "region",
            Age => "age_band",
            ImdBand => "imd_band",
        }
    }

    /// Student attributes sit on student nodes before the metapath collapse.
    pub fn is_student_attribute(self) -> bool {
        use Feature::*;
        matches!(self, Education | StudiedCredits | Gender | Disability | Region | Age | ImdBand)
    }

    fn categorical_value(self, r: &RegistrationRecord) -> Option<String> {
        use Feature::*;
        Some(match self {
            CourseCategory => r.course_category.as_str().to_string(),
            CodeModule => r.code_module.clone(),
            CodePresentation => r.code_presentation.clone(),
            Education => r.highest_education.clone(),
            Gender => r.gender.clone(),
            Disability => r.disability.clone(),
            Region => r.region.clone(),
            Age => r.age_band.clone(),
            ImdBand => r.imd_band.clone().unwrap_or_else(|| MISSING.to_string()),
            PartialGrade | PrevAttempts | StudiedCredits => return None,
        })
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the five cumulative ablation feature sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureCase(u8);

impl FeatureCase {
    pub const ALL: [FeatureCase; 5] = [FeatureCase(1), FeatureCase(2), FeatureCase(3), FeatureCase(4), FeatureCase(5)];
    pub const FULL: FeatureCase = FeatureCase(5);

    pub fn new(id: u8) -> Result<Self> {
        if (1..=5).contains(&id) {
            Ok(FeatureCase(id))
        } else {
            Err(Error::Invalid(format!("feature case must be 1..=5, got {id}")))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn features(self) -> Vec<Feature> {
        use Feature::*;
        let steps: [&[Feature]; 5] = [
            &[PartialGrade],
            &[PrevAttempts],
            &[CourseCategory, CodeModule, CodePresentation],
            &[Education, StudiedCredits, Gender],
            &[Disability, Region, Age, ImdBand],
        ];
        steps[..self.0 as usize].iter().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn registration_features(self) -> Vec<Feature> {
        self.features().into_iter().filter(|f| !f.is_student_attribute()).collect()
    }

    pub fn student_features(self) -> Vec<Feature> {
        self.features().into_iter().filter(|f| f.is_student_attribute()).collect()
    }
}

impl fmt::Display for FeatureCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub feature: Feature,
    pub start: usize,
    pub len: usize,
}

/// Vocabularies fitted on a record set. Categories are sorted so codes are
/// stable across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    vocab: Vec<(Feature, Vec<String>)>,
    groups: Vec<ColumnGroup>,
    column_names: Vec<String>,
}

/// Encoded feature matrix for one snapshot day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDataset {
    pub day: u32,
    pub features: Matrix,
    pub column_names: Vec<String>,
    pub groups: Vec<ColumnGroup>,
    pub labels: Vec<u8>,
    pub registration_ids: Vec<u32>,
    pub student_ids: Vec<u64>,
}

impl SnapshotDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Column indices of the given features, in matrix order.
    pub fn columns_of(&self, features: &[Feature]) -> Vec<usize> {
        self.groups
            .iter()
            .filter(|g| features.contains(&g.feature))
            .flat_map(|g| g.start..g.start + g.len)
            .collect()
    }

    pub fn case_columns(&self, case: FeatureCase) -> Vec<usize> {
        self.columns_of(&case.features())
    }

    /// Row subset, keeping column metadata.
    pub fn subset(&self, rows: &[usize]) -> SnapshotDataset {
        SnapshotDataset {
            day: self.day,
            features: self.features.select_rows(rows),
            column_names: self.column_names.clone(),
            groups: self.groups.clone(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            registration_ids: rows.iter().map(|&i| self.registration_ids[i]).collect(),
            student_ids: rows.iter().map(|&i| self.student_ids[i]).collect(),
        }
    }
}

impl Encoder {
    pub fn fit(records: &[RegistrationRecord]) -> Self {
        let mut vocab = Vec::new();
        let mut groups = Vec::new();
        let mut column_names = Vec::new();
        for f in Feature::ALL {
            let start = column_names.len();
            match f.encoding() {
                Encoding::Numeric => column_names.push(f.name().to_string()),
                enc => {
                    let mut v: Vec<String> = records.iter().filter_map(|r| f.categorical_value(r)).collect();
                    v.sort_unstable();
                    v.dedup();
                    if enc == Encoding::OneHot {
                        column_names.extend(v.iter().map(|c| format!("{}={c}", f.name())));
                    } else {
                        column_names.push(f.name().to_string());
                    }
                    vocab.push((f, v));
                }
            }
            groups.push(ColumnGroup { feature: f, start, len: column_names.len() - start });
        }
        Self { vocab, groups, column_names }
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn groups(&self) -> &[ColumnGroup] {
        &self.groups
    }

    pub fn vocabulary(&self, f: Feature) -> Option<&[String]> {
        self.vocab.iter().find(|(g, _)| *g == f).map(|(_, v)| v.as_slice())
    }

    pub fn transform(&self, records: &[RegistrationRecord], partial_grade: &[f64], day: u32) -> Result<SnapshotDataset> {
        if records.len() != partial_grade.len() {
            return Err(Error::Shape(format!("{} records but {} partial grades", records.len(), partial_grade.len())));
        }
        let width = self.column_names.len();
        let mut m = Matrix::zeros(records.len(), width);
        for (i, r) in records.iter().enumerate() {
            let row = m.row_mut(i);
            for g in &self.groups {
                match g.feature.encoding() {
                    Encoding::Numeric => {
                        row[g.start] = match g.feature {
                            Feature::PartialGrade => partial_grade[i],
                            Feature::PrevAttempts => f64::from(r.num_of_prev_attempts),
                            _ => f64::from(r.studied_credits),
                        };
                    }
                    enc => {
                        let value = g.feature.categorical_value(r).unwrap_or_default();
                        let code = self.vocabulary(g.feature).and_then(|v| v.binary_search(&value).ok());
                        match (enc, code) {
                            (Encoding::OneHot, Some(c)) => row[g.start + c] = 1.0,
                            (Encoding::Label, Some(c)) => row[g.start] = c as f64,
                            (Encoding::OneHot, None) => {
                                log::warn!("unseen {} value {value:?}; encoding as all zeros", g.feature)
                            }
                            (_, None) => {
                                log::warn!("unseen {} value {value:?}; encoding as -1", g.feature);
                                row[g.start] = -1.0;
                            }
                            (Encoding::Numeric, _) => unreachable!(),
                        }
                    }
                }
            }
        }
        Ok(SnapshotDataset {
            day,
            features: m,
            column_names: self.column_names.clone(),
            groups: self.groups.clone(),
            labels: records.iter().map(|r| r.label).collect(),
            registration_ids: records.iter().map(|r| r.registration_id).collect(),
            student_ids: records.iter().map(|r| r.id_student).collect(),
        })
    }

    /// Recovers the categorical values of one encoded row. `None` marks an
    /// all-zero one-hot block or an out-of-vocabulary label code.
    pub fn decode(&self, row: &[f64]) -> Vec<(Feature, Option<String>)> {
        self.groups
            .iter()
            .filter(|g| g.feature.encoding() != Encoding::Numeric)
            .map(|g| {
                let v = self.vocabulary(g.feature).unwrap_or(&[]);
                let value = match g.feature.encoding() {
                    Encoding::OneHot => {
                        (0..g.len).find(|&k| row[g.start + k] == 1.0).map(|k| v[k].clone())
                    }
                    _ => {
                        let code = row[g.start];
                        (code >= 0.0 && code.fract() == 0.0).then(|| v.get(code as usize).cloned()).flatten()
                    }
                };
                (g.feature, value)
            })
            .collect()
    }
}

/// Categorical values of a record in the order `decode` reports them.
pub fn categorical_values(r: &RegistrationRecord) -> Vec<(Feature, Option<String>)> {
    Feature::ALL
        .iter()
        .filter(|f| f.encoding() != Encoding::Numeric)
        .map(|&f| (f, f.categorical_value(r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::FinalResult;
    use crate::preprocess::CourseCategory;

    pub(crate) fn record(id: u32, region: &str, disability: &str) -> RegistrationRecord {
        RegistrationRecord {
            registration_id: id,
            code_module: "AAA".into(),
            code_presentation: "2013J".into(),
            id_student: 100 + u64::from(id),
            gender: "M".into(),
            region: region.into(),
            highest_education: "A Level or Equivalent".into(),
            imd_band: if id.is_multiple_of(2) { Some("20-30%".into()) } else { None },
            age_band: "0-35".into(),
            num_of_prev_attempts: 0,
            studied_credits: 60,
            disability: disability.into(),
            final_result: FinalResult::Pass,
            course_category: CourseCategory::SocialScience,
            label: 1,
            withdrawal_day: None,
        }
    }

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

    #[test]
    fn thirteen_regions_make_thirteen_columns() {
        let recs: Vec<_> = (0..26).map(|i| record(i, REGIONS[i as usize % 13], "N")).collect();
        let enc = Encoder::fit(&recs);
        let ds = enc.transform(&recs, &vec![0.0; recs.len()], 20).unwrap();
        let cols = ds.columns_of(&[Feature::Region]);
        assert_eq!(cols.len(), 13);
        for i in 0..ds.len() {
            let s: f64 = cols.iter().map(|&c| ds.features[(i, c)]).sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn binary_disability_is_one_label_column() {
        let recs = vec![record(0, "Wales", "N"), record(1, "Wales", "Y")];
        let enc = Encoder::fit(&recs);
        let ds = enc.transform(&recs, &[0.0, 0.0], 20).unwrap();
        let cols = ds.columns_of(&[Feature::Disability]);
        assert_eq!(cols.len(), 1);
        assert_eq!(ds.features.column(cols[0]), vec![0.0, 1.0]);
    }

    #[test]
    fn partial_grade_changes_one_column() {
        let recs = vec![record(0, "Wales", "N"), record(0, "Wales", "N")];
        let enc = Encoder::fit(&recs);
        let ds = enc.transform(&recs, &[10.0, 35.5], 40).unwrap();
        let diff = (0..ds.features.cols()).filter(|&j| ds.features[(0, j)] != ds.features[(1, j)]).count();
        assert_eq!(diff, 1);
    }

    #[test]
    fn unseen_category_gives_zero_block() {
        let enc = Encoder::fit(&[record(0, "Wales", "N")]);
        let ds = enc.transform(&[record(1, "Scotland", "N")], &[0.0], 20).unwrap();
        let cols = ds.columns_of(&[Feature::Region]);
        assert!(cols.iter().all(|&c| ds.features[(0, c)] == 0.0));
        let decoded = enc.decode(ds.features.row(0));
        assert!(decoded.contains(&(Feature::Region, None)));
    }

    #[test]
    fn cases_are_strictly_nested() {
        for w in FeatureCase::ALL.windows(2) {
            let a = w[0].features();
            let b = w[1].features();
            assert!(a.len() < b.len());
            assert!(a.iter().all(|f| b.contains(f)));
        }
        assert_eq!(FeatureCase::new(1).unwrap().features(), vec![Feature::PartialGrade]);
        assert_eq!(FeatureCase::FULL.features().len(), 12);
        assert!(FeatureCase::new(6).is_err());
        assert_eq!(FeatureCase::new(4).unwrap().student_features(), vec![Feature::Education, Feature::StudiedCredits, Feature::Gender]);
    }
}
