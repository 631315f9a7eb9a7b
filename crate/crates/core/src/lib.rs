//! Throughput-optimal server assignment for two-station tandem lines with
//! synergistic collaborating servers and impatient customers.
//!
//! - [`model`]: instance types and validation.
//! - [`analytic`]: closed-form gains of threshold rules, the optimal
//!   threshold, and expedite-optimality bounds.
//! - [`mdp`]: the uniformized average-reward MDP, policy evaluation and
//!   iteration, and the one-step improvement certificate.
//! - [`sim`]: seeded CTMC and event-driven simulators.
//! - [`experiments`]: random sweeps, grids and campaigns behind the CLI.

pub mod analytic;
pub mod birth_death;
pub mod experiments;
pub mod mdp;
pub mod model;
pub mod sim;

pub use model::{canonicalize, Action, DecisionRule, GeneralistParams, ModelError, SystemParams, ThresholdPolicy};
