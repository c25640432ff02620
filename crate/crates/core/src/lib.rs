//! Simulation of a Bayesian model of human-AI interaction.
//!
//! A user with preference `theta` chooses how much information to share with
//! an AI assistant. The AI combines the user's noisy signal with its own
//! prior and returns the posterior mean. Sharing more information lowers the
//! fidelity error of the output but costs effort proportional to the mutual
//! information of the signal; the user may also skip the AI entirely for a
//! fixed manual cost.
//!
//! The crate provides:
//!
//! - closed-form per-user primitives and the optimal-signal solver
//!   ([`model`], [`solver`]),
//! - population-level aggregates (output variance, societal bias, expected
//!   loss) by quadrature ([`population`]),
//! - a discretized self-training loop in which the AI's prior is re-fit to
//!   its own outputs, driving output variance toward collapse
//!   ([`quantizer`], [`training`]),
//! - an analytically tractable three-point variant of the same dynamics
//!   ([`three_point`]),
//! - the experiment-runner CLI plumbing ([`cli`]).
//!
//! Everything is deterministic: all expectations are exact sums or fixed
//! quadrature rules, never Monte Carlo.

pub mod cli;
pub mod model;
pub mod population;
pub mod quantizer;
pub mod solver;
pub mod three_point;
pub mod training;

pub use model::{ModelParams, Regime, SignalChoice, UserOutcome};
pub use population::{PopulationStats, QuadratureSpec, SweepAxis};
pub use quantizer::{DiscreteDistribution, PopulationPreset, SignalGrid};
pub use solver::SolverSettings;
pub use training::{LoopConfig, LoopVariant, Trajectory};
