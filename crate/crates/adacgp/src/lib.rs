//! Online estimation of graph shift operators from streaming
//! multivariate time series.
//!
//! The estimator identifies a sparse causal graph process: each incoming
//! sample updates exponentially weighted correlation statistics, a split
//! non-negative filter bank takes a projected gradient step, and the
//! shift operator is recovered either through its own sparse sub-problem
//! (Path 1) or directly as the first filter block (Path 2). A debiasing
//! phase re-fits the detected support and estimates the polynomial
//! coefficients. Companion modules generate synthetic ground truths,
//! simulate signal streams, score estimates and run full experiments.

pub mod baselines;
pub mod control;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod ops;
pub mod sim;
pub mod split;

pub use error::{Error, Result};
pub use estimator::{
    AdaCgp, DebiasMode, EstimatorConfig, EstimatorTrace, HUpdateMode, Path, StepMode,
    StepRecord, TraceOptions,
};
pub use graph::{generate_gso, normalize_spectral, GraphShiftOperator, Topology};
pub use sim::{generate_filter_coeffs, simulate_cgp, FilterCoeffs, SignalStream};
