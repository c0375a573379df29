//! Cycle model, sparsity statistics and design-space exploration for
//! streaming CNN accelerators that skip zero activations.
//!
//! Layers are described by [`netspec`], activation sparsity by
//! [`trace::SparsityTrace`]. [`engine`] models one zero-skipping engine,
//! [`pipeline`] a full layer of engines behind a synchronisation barrier,
//! [`analytic`] the closed-form latency model, and [`dse`] searches for
//! per-layer parallelism and buffer depths under a resource budget.

pub mod analytic;
pub mod dse;
pub mod engine;
pub mod error;
pub mod netspec;
pub mod pipeline;
pub mod trace;

pub use error::{Error, Result};
