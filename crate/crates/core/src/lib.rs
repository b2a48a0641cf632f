//! Tabular reinforcement learning for piecewise-stationary MDPs.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`] finite models, exact planning, action selection and simulation;
//! * [`envs`] random contexts, the scheduled non-stationary wrapper and the
//!   sensor / traffic applications;
//! * [`changepoint`] Dirichlet-likelihood (ODCP) and energy-statistic (ECP)
//!   detectors over experience-tuple streams;
//! * [`agents`] Context Q-learning and the baseline controllers;
//! * [`eval`] metrics, the Monte Carlo harness and report serialisation.
//!
//! Monte Carlo replicates and permutation batches run on rayon when the
//! `parallel` feature is enabled (the default). Every replicate draws from its
//! own ChaCha stream, so sequential and parallel execution produce identical
//! results.

pub mod agents;
pub mod changepoint;
pub mod config;
pub mod envs;
pub mod error;
pub mod eval;
pub mod exec;
pub mod mdp;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Execution;
pub use rng::SimRng;
