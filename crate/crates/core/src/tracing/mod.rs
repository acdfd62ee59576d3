//! Runtime monitors: branch-trace compression, sampled heap dependence
//! tracing, and the full dependence tracer used as ground truth.

mod branch;
mod deps;
mod sampler;

pub use branch::{decode_branch_trace, encode_branch_trace, BranchTrace, DecodeError, DecodedRun, Packet};
pub use deps::{full_data_deps, DataDep, DepKind, DepSet};
pub use sampler::{
    adapt_rate, sampled_data_deps, SampledRun, SamplerState, SamplingMode, DEFAULT_GAMMA, DEFAULT_RATE_MIN,
};
