//! Posterior simulation: Gaussian block updates, log-scale slice updates,
//! and the Gibbs sweep that ties them together.

pub mod engine;
pub mod gaussian;
pub mod slice;

pub use engine::{
    ChainDiagnostics, ChainOutput, ChainSettings, ChainState, EngineTerm, GlobalScale, Sampler, ShrinkageTerm,
    SliceCounters, TermPrior, TermState, VarianceUpdate,
};
pub use gaussian::{constrain_to_zero_sum, sample_gaussian_precision};
pub use slice::{slice_update_log, SliceConfig, SliceStats};
