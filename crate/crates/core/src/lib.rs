//! Training-cost simulator for spiking Transformers on a systolic array.
//!
//! [`workload`] builds the per-phase stage graphs, [`mapper`] tiles each
//! matrix multiply onto the array, and [`latency`] and [`energy`] price the
//! result. [`kernel`] runs the training math on small tensors to check the
//! gradients and to measure the sparsity the energy model consumes.

pub mod config;
pub mod energy;
pub mod gradcheck;
pub mod kernel;
pub mod latency;
pub mod mapper;
pub mod model;
pub mod oracle;
pub mod report;
pub mod sim;
pub mod workload;
