//! Edge-differentially-private analysis of networks under the
//! covariate-adjusted beta-model.
//!
//! The pipeline is: [`network`] data → [`network::sufficient_stats`] →
//! [`privacy::release`] → [`estimator::fit`] → [`inference`]. The [`sim`]
//! module wires the whole chain into a replicated coverage study and
//! [`dataset`] reads edge lists and node attribute tables from disk.

pub mod dataset;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod link;
pub mod model;
pub mod network;
pub mod privacy;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use estimator::{fit, FitConfig, FitResult};
pub use model::ModelParams;
pub use network::{Network, PairCovariates, SufficientStats};
pub use privacy::{PrivacyBudget, ReleasedStats};
