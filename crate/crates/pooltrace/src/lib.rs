//! Simulation and inference toolkit for pooled testing on contact networks.
//!
//! The crate covers the full loop: simulate an epidemic over a dynamic
//! contact graph, pool samples through combinatorial design matrices, corrupt
//! the pooled measurements under binary or multiplicative noise, and recover
//! per-individual status with message-passing and convex decoders. A thin
//! `pooltrace` binary exposes the same pipeline; the `examples/` directory has
//! one runnable example per capability.

pub mod decoders;
pub mod design;
pub mod epidemic;
pub mod error;
pub mod gamp;
pub mod graph;
pub mod harness;
pub mod io;
pub mod measurement;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
