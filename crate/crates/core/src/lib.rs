//! Stubborn and selfish mining in a fork-prone longest-chain proof-of-work network.
//!
//! Two engines answer the same question, how much of the consensus-block
//! revenue an attacking pool captures and how much throughput is lost:
//!
//! - [`chain`], [`fate`] and [`metrics`]: a continuous-time Markov chain on
//!   `(Δ, N)` states with per-block fate probabilities;
//! - [`sim`]: a Monte Carlo simulator over an explicit block tree.
//!
//! [`harness`] sweeps both over parameter grids and cross-validates them.

pub mod chain;
pub mod closed_form;
pub mod error;
pub mod fate;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
pub use model::{decide_mp_action, validate_params, Delta, Event, MarkovState, ModelParams, MpAction, RawParams, StrategyFlags};
