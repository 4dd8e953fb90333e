//! Dynamic metabolic control by policy-gradient reinforcement learning.
//!
//! - [`sim`]: adaptive Runge–Kutta integration over piecewise-constant inputs.
//! - [`models`]: the fatty-acid and lactate bioprocess kinetic models.
//! - [`env`]: domain-randomized episodes, features, returns and references.
//! - [`policy`]: the Gaussian MLP policy with exact log-density gradients.
//! - [`reinforce`]: the normalized Monte-Carlo policy-gradient trainer.
//! - [`streams`]: deterministic per-episode random streams.

pub mod env;
pub mod models;
pub mod policy;
pub mod reinforce;
pub mod sim;
pub mod streams;

pub use env::{BioprocessEnv, EnvError, Objective, ReferenceTrajectory, Trajectory, UncertaintySpec};
pub use models::{Model, ModelKind, ModelParams};
pub use policy::{GaussianMlp, PolicyError, PolicyOutput};
pub use reinforce::{Environment, TrainConfig, TrainResult};
pub use sim::{ControlSchedule, IntegratorConfig, SimError, StateVector};
pub use streams::{Purpose, StreamId};
