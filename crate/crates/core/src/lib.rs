//! Excess-delay measurement for ground delay programs (GDPs).
//!
//! The pipeline ingests flight, quarter-hour rate and advisory records,
//! reconstructs each program, classifies the flights it touched, rebuilds
//! the no-program arrival counterfactual with a deterministic queue, and
//! explains the resulting excess delay with regularized regression.

pub mod flightdata;
pub mod lifecycle;
pub mod classifier;
pub mod pipeline;
pub mod queueing;
pub mod synth;
pub mod features;
pub mod regression;
