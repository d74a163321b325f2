//! Popularity Randomization.
//!
//! Instead of the top `N_rec` popular items, each non-member receives
//! `N_rec` items drawn uniformly without replacement from the top
//! `N_cand = round(N_rec / alpha)` popular items. The draw is seeded from
//! the global seed and the user id, so a user always sees the same list.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    /// Ratio of recommendations to candidates, in `(0, 1]`.
    pub alpha: f64,
    pub n_rec: usize,
    pub seed: u64,
}

impl DefenseConfig {
    pub fn new(alpha: f64, n_rec: usize, seed: u64) -> Result<Self> {
        let cfg = DefenseConfig { alpha, n_rec, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha {} must lie in (0, 1]", self.alpha)));
        }
        if self.n_rec == 0 {
            return Err(Error::config("N_rec must be >= 1"));
        }
        Ok(())
    }

    pub fn n_candidates(&self) -> usize {
        (self.n_rec as f64 / self.alpha).round() as usize
    }
}

/// Defended recommendation list for `user` (external id), as items of
/// `sorted` (most popular first). The returned items keep popularity order.
pub fn popularity_randomization(sorted: &[usize], cfg: &DefenseConfig, user: &str) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n_cand = cfg.n_candidates();
    if n_cand > sorted.len() {
        return Err(Error::NotEnoughItems {
            needed: n_cand,
            available: sorted.len(),
        });
    }
    let mut rng = seed::rng(seed::derive(cfg.seed, &format!("popularity-randomization/{user}")));
    let mut picked = index::sample(&mut rng, n_cand, cfg.n_rec).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|p| sorted[p]).collect())
}
