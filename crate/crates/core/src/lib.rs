//! Private gradient collection for distributed actor-critic reinforcement
//! learning.
//!
//! Local agents roll out episodes in privately parameterized cart-pole
//! environments, compute an actor-critic loss gradient, randomize it with an
//! ε-locally-differentially-private mechanism and submit it to a central
//! aggregator, which only ever sees the noisy gradients.
//!
//! Module map:
//! - [`mechanism`]: clipping, Laplace noise, projected random sign, budget ledger
//! - [`cartpole`]: cart-pole dynamics with a per-agent gravity coefficient
//! - [`model`]: the 112-parameter policy/value network and its loss gradient
//! - [`agent`]: one local agent activation (rollout, gradient, randomize)
//! - [`aggregator`]: buffered averaged-gradient updates of the global model
//! - [`harness`]: trial execution and evaluation metrics
//! - [`experiment`]: command-line experiment matrix and result files

pub mod agent;
pub mod aggregator;
pub mod cartpole;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod mechanism;
pub mod model;
pub mod par;
pub mod seed;

pub use error::{Error, Result};

/// Version string echoed into result metadata.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
