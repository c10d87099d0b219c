//! Numerical laboratory for generalized-divisor error terms.
//!
//! The crate computes the divisor functions d_k(n) by segmented sieve, the
//! main-term polynomials P_{k-1} and Q_{k-1} from the Laurent expansion of
//! the k-th power of zeta at s = 1, the error term Delta_k(x), discrete and
//! continuous short-interval mean squares, the Jutila series route to the
//! continuous mean square, cubic-log fitting of the main term, and a zeta
//! engine (Euler-Maclaurin values, moment integrals, E(T), truncated Perron
//! checks).
//!
//! Everything is deterministic: parallel reductions split work at fixed
//! chunk boundaries and combine partial results in ascending order, so the
//! output is bit-identical for every worker count.

pub mod dd;
pub mod delta;
pub mod fit;
pub mod jutila;
pub mod kahan;
pub mod mainterm;
pub mod quad;
pub mod sieve;
pub mod zeta;

use thiserror::Error;

/// Unified error type; variants map one-to-one onto CLI exit codes.
#[derive(Debug, Error)]
pub enum LabError {
    /// Input outside an operation's documented domain (CLI exit 2).
    #[error("validation: {0}")]
    Validation(String),
    /// Input valid but beyond the configured resource budget (CLI exit 3).
    #[error("resource guard: {0}")]
    Resource(String),
    /// Two internal routes disagreed beyond tolerance (CLI exit 4).
    #[error("internal consistency: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

/// Runs `f` on a rayon pool of `workers` threads.
///
/// All parallel entry points funnel through here so the worker count is an
/// explicit argument rather than ambient global state.
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool construction cannot fail with a positive size");
    pool.install(f)
}
