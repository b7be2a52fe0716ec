//! Tabular curriculum learning for robust reward-free world models.
//!
//! Everything is desk scale and exact: environments are finite MDPs generated
//! from a parameter grid, the world model is a count-based ensemble over a
//! parameter-augmented state space, and the quantities the theory bounds
//! (regret, model TV error, occupancy measures) are computed by direct linear
//! solves rather than estimated.

pub mod curriculum;
pub mod env;
pub mod error;
pub mod eval;
pub mod explore;
pub mod mdp;
pub mod model;
pub mod scalar;
pub mod snapshot;
pub mod trainer;

pub use error::{Error, Result};

/// Concrete scalar used by the simulation stack.
pub type Value = f64;

/// Finite MDP over `f64`.
pub type Mdp = mdp::TabularMdp<Value>;
/// Reward table over `f64`.
pub type Reward = mdp::RewardFn<Value>;
/// Stochastic policy over `f64`.
pub type Policy = mdp::Policy<Value>;
/// Discounted state-action distribution over `f64`.
pub type Occupancy = mdp::OccupancyMeasure<Value>;
