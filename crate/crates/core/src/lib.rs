//! Statistical program slicing.
//!
//! Data dependencies are sampled over many runs of a program and aggregated
//! into an observed dependency graph. That graph is combined with exact
//! control flow from one faulty run and a must-alias analysis restricted to
//! the code that run executed. A backward traversal from the failure then
//! yields a slice approximating the dynamic slice of that run.
//!
//! Pipeline, by module:
//!
//! - [`ir`]: the textual IR and its static analyses
//! - [`interp`]: the reference interpreter producing full event traces
//! - [`tracing`]: branch-trace compression, sampled and full dependence tracing
//! - [`odg`]: aggregation, merge and pruning of observed dependencies
//! - [`alias`]: execution-restricted points-to and must-alias arcs
//! - [`slicer`]: statistical, dynamic and static slicers
//! - [`pipeline`]: decode, prune, alias, augment and slice one faulty run
//! - [`eval`]: metrics, corpus generation and the experiment harness
//! - [`par`]: rayon-backed parallel map with a sequential fallback

pub mod ir;
pub mod interp;
pub mod tracing;
pub mod odg;
pub mod alias;
pub mod slicer;
pub mod eval;
pub mod par;
pub mod pipeline;
