//! Running many independent scenarios at once.
//!
//! Each run is single-threaded and deterministic, so a batch gives the same
//! results in the same order whichever executor runs it.

use crate::engine::{simulate, RunError, RunOutput};
use crate::scenario::Model;

pub fn run_batch_sequential(models: &[Model]) -> Vec<Result<RunOutput, RunError>> {
    models.iter().map(simulate).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch_parallel(models: &[Model]) -> Vec<Result<RunOutput, RunError>> {
    use rayon::prelude::*;
    models.par_iter().map(simulate).collect()
}

/// Runs on the rayon pool when the `parallel` feature is on.
pub fn run_batch(models: &[Model]) -> Vec<Result<RunOutput, RunError>> {
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(models)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(models)
    }
}
