//! Evaluation: slice-quality metrics, the analytic overhead estimator, a
//! random corpus generator and the experiment harness.

mod gen;
mod harness;

use std::collections::BTreeSet;

pub use gen::{generate_corpus, generate_program, GenParams, GeneratedProgram};
pub use harness::{
    evaluate_corpus, evaluate_program, write_cdf_csv, write_table_csv, BugRow, CdfRow, CorpusEval, HarnessConfig,
    ProgramEval,
};

use crate::ir::StmtId;
use crate::slicer::SliceReport;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("original running time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("no valid program after {attempts} attempts for program {index}")]
    GenerationExhausted { index: usize, attempts: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("pipeline failure on program {index}: {message}")]
    Pipeline { index: usize, message: String },
}

/// |wok ∩ giri| / |giri|.
pub fn recovery_rate(wok: &BTreeSet<StmtId>, giri: &BTreeSet<StmtId>) -> Result<f64, EvalError> {
    if giri.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    Ok(wok.intersection(giri).count() as f64 / giri.len() as f64)
}

/// Members inspected in (depth, statement) order up to and including the
/// first root-cause statement; `None` if the slice misses the root cause.
pub fn root_cause_distance(report: &SliceReport, root_cause: &BTreeSet<StmtId>) -> Option<usize> {
    report.members.iter().position(|m| root_cause.contains(&m.stmt)).map(|i| i + 1)
}

/// Cumulative fraction of `reference` covered after each run.
pub fn coverage_cdf<T: Ord + Clone>(per_run: &[BTreeSet<T>], reference: &BTreeSet<T>) -> Result<Vec<f64>, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let mut seen: BTreeSet<&T> = BTreeSet::new();
    Ok(per_run
        .iter()
        .map(|deps| {
            seen.extend(deps.iter().filter(|d| reference.contains(d)));
            seen.len() as f64 / reference.len() as f64
        })
        .collect())
}

/// 1 + trap_cost × accesses / original_time.
pub fn expected_overhead(avg_trap_cost: f64, exp_hmem_acc: f64, orig_time: f64) -> Result<f64, EvalError> {
    if orig_time.is_nan() || orig_time <= 0.0 {
        return Err(EvalError::NonPositiveTime(orig_time));
    }
    Ok(1.0 + avg_trap_cost * exp_hmem_acc / orig_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::execute;
    use crate::ir::{fixtures::P1, parse_program};
    use crate::slicer::{dynamic_slice, ProgramFacts};

    fn sid(s: &str) -> StmtId {
        s.parse().unwrap()
    }

    #[test]
    fn recovery() {
        let giri: BTreeSet<StmtId> = ["0:0:0", "0:0:1", "0:0:2", "0:0:3"].iter().map(|s| sid(s)).collect();
        let wok: BTreeSet<StmtId> = ["0:0:1", "0:0:2", "0:0:3", "0:1:0"].iter().map(|s| sid(s)).collect();
        assert_eq!(recovery_rate(&wok, &giri).unwrap(), 0.75);
        assert_eq!(recovery_rate(&giri, &giri).unwrap(), 1.0);
        assert_eq!(recovery_rate(&wok, &BTreeSet::new()), Err(EvalError::EmptyGroundTruth));
        let big: BTreeSet<StmtId> = (0..130).map(|i| StmtId::new(0, 0, i)).collect();
        assert_eq!(recovery_rate(&big, &big).unwrap(), 1.0);
    }

    #[test]
    fn inspection_distance_on_p1() {
        let p = parse_program(P1).unwrap();
        let facts = ProgramFacts::new(&p);
        let r = dynamic_slice(&facts, &execute(&p, &[1], 0).unwrap(), sid("0:1:1")).unwrap();
        assert_eq!(root_cause_distance(&r, &BTreeSet::from([sid("0:0:1")])), Some(5));
        assert_eq!(root_cause_distance(&r, &BTreeSet::from([sid("0:1:1")])), Some(1));
        assert_eq!(root_cause_distance(&r, &BTreeSet::from([sid("0:2:0")])), None);
    }

    #[test]
    fn cdf() {
        let reference = BTreeSet::from([1, 2]);
        let runs = [BTreeSet::from([1]), BTreeSet::from([1, 2]), BTreeSet::from([2])];
        assert_eq!(coverage_cdf(&runs, &reference).unwrap(), vec![0.5, 1.0, 1.0]);
        assert_eq!(coverage_cdf(&[BTreeSet::new(), BTreeSet::new()], &reference).unwrap(), vec![0.0, 0.0]);
        assert_eq!(coverage_cdf::<i32>(&[], &BTreeSet::new()), Err(EvalError::EmptyGroundTruth));
    }

    #[test]
    fn overhead() {
        let v = expected_overhead(1.8e-6, 27_778.0, 1.0).unwrap();
        assert!((v - 1.050_000_4).abs() / 1.050_000_4 < 1e-12);
        assert_eq!(format!("{v:.3}"), "1.050");
        assert_eq!(expected_overhead(1.8e-6, 0.0, 1.0).unwrap(), 1.0);
        assert!((expected_overhead(1.8e-6, 1e6, 1.0).unwrap() - 2.8).abs() < 1e-12 * 2.8);
        assert_eq!(expected_overhead(1.0, 1.0, 0.0), Err(EvalError::NonPositiveTime(0.0)));
    }
}
