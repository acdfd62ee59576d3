//! Analysis side of the deployment: from an aggregated graph and the branch
//! trace of one faulty run to its statistical slice.

use std::collections::BTreeSet;

use crate::alias::{must_alias_deps_with, points_to};
use crate::ir::StmtId;
use crate::odg::{ObservedDependencyGraph, OdgError};
use crate::slicer::{statistical_slice, ProgramFacts, SliceError, SliceReport};
use crate::tracing::{decode_branch_trace, BranchTrace, DecodeError, DecodedRun};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("no seed: the run did not fail and no seed statement was given")]
    NoSeed,
    #[error("program mismatch: graph is for {graph}, program is {program}")]
    ProgramMismatch { graph: String, program: String },
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Odg(#[from] OdgError),
    #[error(transparent)]
    Slice(#[from] SliceError),
}

/// The graph as the slicer sees it: pruned to one run, with alias arcs and
/// that run's control arcs.
pub fn prepare_graph(
    facts: &ProgramFacts<'_>,
    g: &ObservedDependencyGraph,
    run: &DecodedRun,
) -> Result<ObservedDependencyGraph, PipelineError> {
    let program = facts.program;
    if g.digest != program.digest() {
        return Err(PipelineError::ProgramMismatch { graph: g.digest.clone(), program: program.digest() });
    }
    let mut pruned = g.prune_to_execution(&run.executed);
    // statements of this run never seen by the aggregated runs still belong
    pruned.nodes.extend(run.executed.iter().copied());
    let pts = points_to(program, &run.executed);
    let alias = must_alias_deps_with(program, &facts.chains, &pts, &run.executed);
    Ok(pruned.augment(&alias, &run.control_arcs)?)
}

/// Decode, prune, alias, augment and slice. `seed` overrides the faulting
/// statement recorded in the trace.
pub fn slice_run(
    facts: &ProgramFacts<'_>,
    g: &ObservedDependencyGraph,
    trace: &BranchTrace,
    seed: Option<StmtId>,
) -> Result<(SliceReport, BTreeSet<StmtId>), PipelineError> {
    let run = decode_branch_trace(facts.program, trace)?;
    let seed = seed.or(run.seed).ok_or(PipelineError::NoSeed)?;
    let augmented = prepare_graph(facts, g, &run)?;
    let report = statistical_slice(facts, &augmented, &run.executed, seed)?;
    Ok((report, run.executed))
}
