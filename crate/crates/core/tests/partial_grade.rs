//! Partial-grade properties against an independent brute-force loop.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use studentgraph_core::grades::{weighted_assessment_grade, SNAPSHOT_DAYS};
use studentgraph_core::ingest::{AssessmentDef, AssessmentType, SubmissionRow};

/// Straight loop over submissions: look up each submission's definition and
/// add its contribution if it is a non-exam assessment due by the cutoff.
fn brute_force(subs: &[SubmissionRow], defs: &[AssessmentDef], cutoff: i32) -> f64 {
    let mut total = 0.0;
    for s in subs {
        let Some(score) = s.score else { continue };
        for d in defs {
            if d.id_assessment == s.id_assessment
                && d.assessment_type != AssessmentType::Exam
                && d.due_day.is_some_and(|due| due <= cutoff)
            {
                total += d.weight * score / 100.0;
            }
        }
    }
    total.clamp(0.0, 100.0)
}

fn fixture(rng: &mut ChaCha8Rng) -> (Vec<AssessmentDef>, Vec<SubmissionRow>) {
    let n = rng.random_range(0..8);
    let defs: Vec<AssessmentDef> = (0..n)
        .map(|i| AssessmentDef {
            id_assessment: i,
            code_module: "M".into(),
            code_presentation: "P".into(),
            assessment_type: match rng.random_range(0..3) {
                0 => AssessmentType::Tma,
                1 => AssessmentType::Cma,
                _ => AssessmentType::Exam,
            },
            due_day: if rng.random_bool(0.1) { None } else { Some(rng.random_range(-5..280)) },
            weight: rng.random_range(0.0..40.0),
        })
        .collect();
    let mut subs = Vec::new();
    for d in &defs {
        if rng.random_bool(0.7) {
            subs.push(SubmissionRow {
                id_assessment: d.id_assessment,
                id_student: 1,
                date_submitted: Some(1),
                score: if rng.random_bool(0.05) { None } else { Some(rng.random_range(0.0..=100.0)) },
            });
        }
    }
    (defs, subs)
}

#[test]
fn matches_brute_force_on_1000_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let (defs, subs) = fixture(&mut rng);
        let cutoff = rng.random_range(0..300);
        let fast = weighted_assessment_grade(&subs, &defs, Some(cutoff));
        let slow = brute_force(&subs, &defs, cutoff);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }
}

#[test]
fn flat_after_last_due_day() {
    let defs: Vec<AssessmentDef> = [(1, 30, 40.0), (2, 100, 60.0)]
        .iter()
        .map(|&(id, due, w)| AssessmentDef {
            id_assessment: id,
            code_module: "M".into(),
            code_presentation: "P".into(),
            assessment_type: AssessmentType::Tma,
            due_day: Some(due),
            weight: w,
        })
        .collect();
    let subs = vec![
        SubmissionRow { id_assessment: 1, id_student: 1, date_submitted: Some(29), score: Some(70.0) },
        SubmissionRow { id_assessment: 2, id_student: 1, date_submitted: Some(99), score: Some(55.0) },
    ];
    let expected = brute_force(&subs, &defs, 100);
    assert!((expected - 61.0).abs() < 1e-12);
    for &(day, _) in SNAPSHOT_DAYS.iter().filter(|(d, _)| *d >= 100) {
        assert_eq!(weighted_assessment_grade(&subs, &defs, Some(day as i32)), expected);
    }
    assert_eq!(weighted_assessment_grade(&[], &defs, Some(260)), 0.0);
}

proptest! {
    #[test]
    fn monotone_in_snapshot_day(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (defs, subs) = fixture(&mut rng);
        let grades: Vec<f64> = SNAPSHOT_DAYS.iter().map(|&(d, _)| weighted_assessment_grade(&subs, &defs, Some(d as i32))).collect();
        prop_assert!(grades.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(grades.iter().all(|g| (0.0..=100.0).contains(g)));
    }
}
