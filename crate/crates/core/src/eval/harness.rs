use std::collections::BTreeSet;
use std::io::Write;

use serde::{Serialize, Serializer};

use super::{coverage_cdf, generate_corpus, recovery_rate, root_cause_distance, EvalError, GenParams, GeneratedProgram};
use crate::interp::{execute, FaultReason, FullTrace};
use crate::ir::StmtId;
use crate::odg::ObservedDependencyGraph;
use crate::par::{map_range, Parallelism};
use crate::pipeline::slice_run;
use crate::slicer::{dynamic_slice, static_slice, ProgramFacts, SliceReport};
use crate::tracing::{encode_branch_trace, full_data_deps, sampled_data_deps, SamplerState, SamplingMode};

#[derive(Clone, Debug)]
pub struct HarnessConfig {
    /// Corpus seed.
    pub seed: u64,
    pub n_programs: usize,
    pub runs_per_program: usize,
    pub sampling: SamplingMode,
    /// Sampler seed; each program derives its own stream from it.
    pub rng_seed: u64,
    pub gen: GenParams,
    pub par: Parallelism,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: 42,
            n_programs: 10,
            runs_per_program: 50,
            sampling: SamplingMode::Adaptive,
            rng_seed: 1,
            gen: GenParams::default(),
            par: Parallelism::Auto,
        }
    }
}

fn not_found<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(n) => s.serialize_u64(*n as u64),
        None => s.serialize_str("NOT_FOUND"),
    }
}

/// One row per injected bug.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BugRow {
    pub program: usize,
    pub statements: usize,
    pub root_cause: StmtId,
    pub seed: StmtId,
    pub static_size: usize,
    pub dynamic_size: usize,
    pub statistical_size: usize,
    pub recovery: f64,
    pub rootcause_path_recovery: f64,
    pub size_vs_dynamic: f64,
    pub size_vs_static: f64,
    #[serde(serialize_with = "not_found")]
    pub inspect_statistical: Option<usize>,
    #[serde(serialize_with = "not_found")]
    pub inspect_dynamic: Option<usize>,
    pub runs: usize,
    pub heap_deps: usize,
    pub final_coverage: f64,
    pub recursive: bool,
}

const TABLE_HEADER: [&str; 17] = [
    "program",
    "statements",
    "root_cause",
    "seed",
    "static_size",
    "dynamic_size",
    "statistical_size",
    "recovery",
    "rootcause_path_recovery",
    "size_vs_dynamic",
    "size_vs_static",
    "inspect_statistical",
    "inspect_dynamic",
    "runs",
    "heap_deps",
    "final_coverage",
    "recursive",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CdfRow {
    pub program: usize,
    pub run: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug)]
pub struct ProgramEval {
    pub row: BugRow,
    /// Cumulative heap-dependence coverage after each run.
    pub cdf: Vec<f64>,
    pub statistical: SliceReport,
    pub dynamic: SliceReport,
    pub static_slice: SliceReport,
}

#[derive(Clone, Debug)]
pub struct CorpusEval {
    pub programs: Vec<GeneratedProgram>,
    pub evals: Vec<ProgramEval>,
}

impl CorpusEval {
    pub fn rows(&self) -> Vec<BugRow> {
        self.evals.iter().map(|e| e.row.clone()).collect()
    }

    pub fn cdf_rows(&self) -> Vec<CdfRow> {
        self.evals
            .iter()
            .flat_map(|e| {
                e.cdf.iter().enumerate().map(|(run, &fraction)| CdfRow { program: e.row.program, run, fraction })
            })
            .collect()
    }

    pub fn mean_recovery(&self) -> f64 {
        if self.evals.is_empty() {
            return f64::NAN;
        }
        self.evals.iter().map(|e| e.row.recovery).sum::<f64>() / self.evals.len() as f64
    }
}

fn sampler_for(cfg: &HarnessConfig, index: usize) -> SamplerState {
    let seed = cfg.rng_seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    match cfg.sampling {
        SamplingMode::Adaptive => SamplerState::adaptive(seed),
        SamplingMode::Fixed(r) => SamplerState::fixed(r, seed),
    }
}

/// Runs the cooperative workload of one program (inputs in rotation), then
/// slices the first failing run three ways.
pub fn evaluate_program(g: &GeneratedProgram, cfg: &HarnessConfig) -> Result<ProgramEval, EvalError> {
    let index = g.index;
    let pipeline = |e: &dyn std::fmt::Display| EvalError::Pipeline { index, message: e.to_string() };
    let p = &g.program;
    let facts = ProgramFacts::new(p);

    let mut state = sampler_for(cfg, index);
    let mut odg = ObservedDependencyGraph::new(p.digest());
    let mut per_run = Vec::with_capacity(cfg.runs_per_program);
    let mut reference = BTreeSet::new();
    let mut faulty: Option<FullTrace> = None;

    let mut run = |input: &[i64], run_id: usize, faulty: &mut Option<FullTrace>| -> Result<(), EvalError> {
        let t = execute(p, input, run_id as u64).map_err(|e| pipeline(&e))?;
        reference.extend(full_data_deps(&t).heap_only().pairs());
        let sampled = sampled_data_deps(&t, &state);
        state = sampled.state;
        per_run.push(sampled.deps.pairs());
        odg = odg.add_run(&sampled.deps, &t.executed(), run_id as u64).map_err(|e| pipeline(&e))?;
        if faulty.is_none() && matches!(t.fault(), Some((_, FaultReason::Fail))) {
            *faulty = Some(t);
        }
        Ok(())
    };
    for r in 0..cfg.runs_per_program {
        run(&g.inputs[r % g.inputs.len()], r, &mut faulty)?;
    }
    if faulty.is_none() {
        run(&g.inputs[g.failing_input], cfg.runs_per_program, &mut faulty)?;
    }
    let faulty = faulty.expect("failing input was run");

    let (statistical, _) = slice_run(&facts, &odg, &encode_branch_trace(&faulty), None).map_err(|e| pipeline(&e))?;
    let seed = statistical.seed;
    let dynamic = dynamic_slice(&facts, &faulty, seed).map_err(|e| pipeline(&e))?;
    let static_slice = static_slice(&facts, seed).map_err(|e| pipeline(&e))?;

    let (stat_set, dyn_set) = (statistical.statements(), dynamic.statements());
    let root = BTreeSet::from([g.root_cause]);
    let inspect_dynamic = root_cause_distance(&dynamic, &root);
    let path: BTreeSet<StmtId> = dynamic
        .members
        .iter()
        .take(inspect_dynamic.unwrap_or(dynamic.members.len()))
        .map(|m| m.stmt)
        .collect();
    let cdf = match coverage_cdf(&per_run, &reference) {
        Ok(c) => c,
        Err(_) => vec![1.0; per_run.len()],
    };
    let row = BugRow {
        program: index,
        statements: p.stmt_count(),
        root_cause: g.root_cause,
        seed,
        static_size: static_slice.len(),
        dynamic_size: dynamic.len(),
        statistical_size: statistical.len(),
        recovery: recovery_rate(&stat_set, &dyn_set)?,
        rootcause_path_recovery: recovery_rate(&stat_set, &path)?,
        size_vs_dynamic: statistical.len() as f64 / dynamic.len() as f64,
        size_vs_static: statistical.len() as f64 / static_slice.len() as f64,
        inspect_statistical: root_cause_distance(&statistical, &root),
        inspect_dynamic,
        runs: per_run.len(),
        heap_deps: reference.len(),
        final_coverage: cdf.last().copied().unwrap_or(1.0),
        recursive: p.is_recursive(),
    };
    Ok(ProgramEval { row, cdf, statistical, dynamic, static_slice })
}

pub fn evaluate_corpus(cfg: &HarnessConfig) -> Result<CorpusEval, EvalError> {
    let programs = generate_corpus(cfg.seed, cfg.n_programs, &cfg.gen, cfg.par)?;
    let evals = map_range(programs.len(), cfg.par, |i| evaluate_program(&programs[i], cfg))
        .into_iter()
        .collect::<Result<_, _>>()?;
    Ok(CorpusEval { programs, evals })
}

/// Per-bug table; the header is written even when there are no rows.
pub fn write_table_csv<W: Write>(rows: &[BugRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Coverage curve: one row per (program, run).
pub fn write_cdf_csv<W: Write>(rows: &[CdfRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["program", "run", "fraction"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
