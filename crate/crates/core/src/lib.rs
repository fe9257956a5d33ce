//! Simulation of extracellular water diffusion in 2D porous substrates.
//!
//! The substrate is a square domain packed with non-overlapping circles
//! (axon cross sections). Water diffuses in the extracellular space with
//! constant diffusivity and does not enter the circles. The heat equation
//! with this discontinuous coefficient is solved by a discontinuous
//! Galerkin method on a structured triangular mesh; averaging many
//! centered point-source solutions yields the ensemble average propagator,
//! whose Gaussian profile (covariance matrix) is the quantity of interest.
//! An independent Monte Carlo random-walk simulator of the same substrate
//! serves as a cross-validation oracle.

pub mod eap;
pub mod error;
pub mod mc;
pub mod mesh;
pub mod solver;
pub mod substrate;

pub use error::Error;

/// Runs `f` inside a rayon thread pool with `workers` threads.
///
/// `workers == 0` uses the global default pool. All parallel loops in this
/// crate produce results that are bitwise independent of the worker count.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to build thread pool");
        pool.install(f)
    }
}
