//! Physics-informed neural networks for radiative transfer in graded-index media.
//!
//! The crate solves forward and inverse steady/transient transport problems by
//! minimizing PDE, boundary, and data residuals of a tanh network at
//! quasi-Monte Carlo collocation points. Everything is built on a scalar
//! reverse-mode tape ([`autodiff`]) that also carries forward-mode tangents,
//! so the spatial/angular derivatives inside the residual operators are exact
//! and themselves differentiable with respect to the network parameters.
//!
//! Module map:
//! - [`autodiff`] — tape, `Var`/`Dual` scalars, gradients, replayable recordings
//! - [`network`] — feed-forward tanh network, init, flatten, snapshots
//! - [`sampling`] — Sobol points, Gauss-Legendre rules, training-point families
//! - [`cases`] — transport residual operators, benchmark catalog, oracles
//! - [`training`] — losses, Adam, L-BFGS, forward/inverse drivers, ensembles
//! - [`metrics`] — training/generalization errors and a-priori bound evaluators
//! - [`verify`] — the self-check suite behind `gradix verify`

pub mod autodiff;
pub mod cases;
pub mod error;
pub mod math;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod sampling;
pub mod training;
pub mod verify;

pub use error::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Cap the global worker-thread count (no-op once a pool exists). Callers
/// typically wire this to the `GRADIX_THREADS` environment variable.
#[cfg(feature = "parallel")]
pub fn set_thread_cap(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
pub fn set_thread_cap(_n: usize) -> Result<()> {
    Ok(())
}

/// Fixed number of collocation points per work chunk. Loss and gradient
/// reductions run chunk-by-chunk in index order, so results are bitwise
/// identical whether chunks are evaluated in parallel or sequentially.
pub(crate) const CHUNK: usize = 128;

/// Map `f` over `0..n` chunk indices, in parallel when the `parallel` feature
/// is enabled and `sequential` is false. Output order is always by index.
pub(crate) fn map_chunks<T, F>(n: usize, sequential: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = sequential;
    (0..n).map(f).collect()
}
