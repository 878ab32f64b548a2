//! Combining per-worker chains into one fiducial sample.

mod direct;
mod merge;
mod resample;
mod sample;
mod worker;

pub use direct::{
    exact_log_weight, run_algorithm1, run_algorithm1_exact, simplified_log_weight, DirectComponent,
    DirectOutput,
};
pub use merge::{run_method_g, write_trace, MergePlan, MergeRecord, MethodGOutput};
pub use resample::{resample, systematic_indices};
pub use sample::{estimate_r, normalize_and_ess, LogWeightVector, Particles, WeightedSample};
pub use worker::{ExchangeLog, Payload, Worker};
