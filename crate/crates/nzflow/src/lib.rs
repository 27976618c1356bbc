//! nzflow compiles a dense loop-nest kernel against fixed input sparsity
//! structures. A data-flow analysis over the kernel's access dependence graph
//! propagates nonzero-ness through the statements, predicts the output
//! structure including fill-ins, and identifies the statement instances that
//! can produce nonzero values. Those instances are scheduled by lexicographic
//! timestamps, mapped to positions in a deterministic sparse value layout, and
//! folded back into piecewise-regular loops free of indirect references.
//!
//! Two reference executors (a dense interpreter of the kernel and an
//! interpreter of the generated piecewise program) support differential
//! verification of the whole pipeline.
//!
//! See the `examples/` directory for one runnable example per capability; the
//! `nzflow` binary wires the same pipeline behind `analyze`, `codegen`,
//! `verify` and `stats` subcommands.

pub mod adg;
pub mod analysis;
pub mod cli;
pub mod codegen;
pub mod error;
pub mod exec;
pub mod kernel;
pub mod sparsity;

pub use error::{Error, Result};
