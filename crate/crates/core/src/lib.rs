//! Membership inference auditing for recommender systems.
//!
//! The crate trains shadow and target recommenders on rating data, profiles
//! every user by the gap between the centre of their interacted items and
//! the centre of their recommended items in a latent item space, and trains
//! an attack classifier that separates members (users the recommender was
//! trained on) from non-members (users served the popularity list).
//!
//! Module map:
//!
//! * [`data`]: rating ingestion, user-level splits, implicit matrices, negative sampling.
//! * [`mf`]: explicit-rating matrix factorization producing item feature vectors.
//! * [`recommender`]: Item-CF, LFM, NCF and popularity recommenders plus HR@k.
//! * [`defense`]: Popularity Randomization for non-member recommendation lists.
//! * [`attack`]: user features, the MLP attack model, K-Means and aggregation baselines.
//! * [`metrics`]: rank-statistic AUC.
//! * [`experiment`]: experiment specs, notation codes, the end-to-end runner and grids.
//! * [`synthetic`]: block-structured synthetic rating generator.

pub mod attack;
pub mod cache;
pub mod data;
pub mod defense;
mod error;
pub mod experiment;
pub mod metrics;
pub mod mf;
mod nn;
pub mod recommender;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
