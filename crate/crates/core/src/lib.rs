//! Workload characterization and runtime prediction for accelerator kernels.
//!
//! The pipeline: run a kernel through the [`microkernel`] interpreter, reduce
//! its trace to architecture-independent metrics with [`characterizer`], join
//! those with measured runtimes in a [`dataset`], fit a random [`forest`] of
//! per-device execution time, tune it with [`tuner`], and evaluate with the
//! procedures in [`experiments`].

pub mod characterizer;
pub mod dataset;
pub mod experiments;
pub mod forest;
pub mod microkernel;
pub mod tuner;
