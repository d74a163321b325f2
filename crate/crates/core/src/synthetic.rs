//! Block-structured synthetic rating data.
//!
//! Items are dealt round-robin into `n_blocks` preference blocks, so item
//! `i` belongs to block `i % n_blocks` and has in-block popularity rank
//! `i / n_blocks`. Every user likes `tastes` distinct blocks with
//! Dirichlet(1) weights: each interaction falls in a liked block (picked by
//! weight) with probability `in_block`, otherwise in a uniformly chosen
//! block. Within a block, items are drawn with weight `(rank + 1)^-skew`.
//! Independently of taste, a `global_share` of interactions are drawn from
//! the whole catalogue with weight `(index + 1)^-global_skew`.
//! Ratings are high inside liked blocks and low outside, plus
//! Gaussian noise, rounded to the `1..=5` scale.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::{Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::data::RatingDataset;
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_blocks: usize,
    pub tastes: usize,
    pub min_interactions: usize,
    pub max_interactions: usize,
    pub in_block: f64,
    pub popularity_skew: f64,
    pub global_share: f64,
    pub global_skew: f64,
    pub preferred_rating: f64,
    pub other_rating: f64,
    pub rating_noise: f64,
    pub seed: u64,
}

/// Defaults keep every attack cell informative without saturating it, so
/// directional comparisons between settings are measurable.
impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 2000,
            n_items: 500,
            n_blocks: 5,
            tastes: 2,
            min_interactions: 20,
            max_interactions: 60,
            in_block: 0.7,
            popularity_skew: 1.0,
            global_share: 0.0,
            global_skew: 1.0,
            preferred_rating: 4.5,
            other_rating: 2.0,
            rating_noise: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_blocks == 0 || self.n_items < self.n_blocks {
            return Err(Error::config(
                "synthetic data needs users, blocks and at least one item per block",
            ));
        }
        if self.tastes == 0 || self.tastes > self.n_blocks {
            return Err(Error::config("tastes must lie in 1..=n_blocks"));
        }
        if self.min_interactions == 0 || self.min_interactions > self.max_interactions {
            return Err(Error::config(
                "synthetic interaction range must satisfy 1 <= min <= max",
            ));
        }
        if self.max_interactions > self.n_items / self.n_blocks {
            return Err(Error::config("max interactions exceed the smallest block"));
        }
        let probability = |p: f64| (0.0..=1.0).contains(&p);
        if !probability(self.in_block) || !probability(self.global_share) {
            return Err(Error::config("in_block and global_share must be probabilities"));
        }
        if self.popularity_skew < 0.0 || self.global_skew < 0.0 || self.rating_noise < 0.0 {
            return Err(Error::config("skews and noise must be nonnegative"));
        }
        Ok(())
    }

    pub fn block_of_item(&self, item: usize) -> usize {
        item % self.n_blocks
    }
}

/// Liked blocks and their weights for every generated user, by user index.
pub fn user_tastes(cfg: &SyntheticConfig) -> Vec<Vec<(usize, f64)>> {
    let mut rng = seed::rng(seed::derive(cfg.seed, "synthetic-tastes"));
    (0..cfg.n_users)
        .map(|_| {
            let blocks = rand::seq::index::sample(&mut rng, cfg.n_blocks, cfg.tastes);
            let raw: Vec<f64> = (0..cfg.tastes).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = raw.iter().sum();
            blocks.into_iter().zip(raw).map(|(b, w)| (b, w / total)).collect()
        })
        .collect()
}

/// Users are named `u<index>`, items `i<index>`.
pub fn generate(cfg: &SyntheticConfig) -> Result<RatingDataset> {
    cfg.validate()?;
    let blocks: Vec<Vec<usize>> = (0..cfg.n_blocks)
        .map(|b| (b..cfg.n_items).step_by(cfg.n_blocks).collect())
        .collect();
    let samplers = blocks
        .iter()
        .map(|items| WeightedIndex::new((0..items.len()).map(|r| ((r + 1) as f64).powf(-cfg.popularity_skew))))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::config(format!("popularity weights: {e}")))?;
    let global = WeightedIndex::new((0..cfg.n_items).map(|i| ((i + 1) as f64).powf(-cfg.global_skew)))
        .map_err(|e| Error::config(format!("popularity weights: {e}")))?;
    let noise = Normal::new(0.0, cfg.rating_noise).map_err(|e| Error::config(e.to_string()))?;
    let tastes = user_tastes(cfg);

    let mut rng = seed::rng(seed::derive(cfg.seed, "synthetic-interactions"));
    let mut records = Vec::new();
    let mut taken = vec![false; cfg.n_items];
    for (u, liked) in tastes.iter().enumerate() {
        let pick = WeightedIndex::new(liked.iter().map(|t| t.1)).map_err(|e| Error::config(e.to_string()))?;
        let n = rng.gen_range(cfg.min_interactions..=cfg.max_interactions);
        let mut chosen = Vec::with_capacity(n);
        while chosen.len() < n {
            let item = if cfg.global_share > 0.0 && rng.gen_bool(cfg.global_share) {
                global.sample(&mut rng)
            } else {
                let block = if rng.gen_bool(cfg.in_block) {
                    liked[pick.sample(&mut rng)].0
                } else {
                    rng.gen_range(0..cfg.n_blocks)
                };
                blocks[block][samplers[block].sample(&mut rng)]
            };
            if !taken[item] {
                taken[item] = true;
                chosen.push(item);
            }
        }
        for item in chosen {
            taken[item] = false;
            let base = if liked.iter().any(|t| t.0 == cfg.block_of_item(item)) {
                cfg.preferred_rating
            } else {
                cfg.other_rating
            };
            let score = (base + noise.sample(&mut rng)).round().clamp(1.0, 5.0);
            records.push((format!("u{u}"), format!("i{item}"), score));
        }
    }
    RatingDataset::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_users: 200,
            n_items: 100,
            n_blocks: 4,
            tastes: 1,
            min_interactions: 5,
            max_interactions: 10,
            ..Default::default()
        }
    }

    #[test]
    fn shape_and_ranges() {
        let cfg = small();
        let ds = generate(&cfg).unwrap();
        assert_eq!(ds.n_users(), 200);
        assert!(ds.n_items() <= 100);
        for c in ds.interactions_per_user() {
            assert!((5..=10).contains(&c));
        }
        assert!(ds
            .triples()
            .iter()
            .all(|t| (1.0..=5.0).contains(&t.score) && t.score.fract() == 0.0));
    }

    #[test]
    fn users_concentrate_on_their_block() {
        let cfg = SyntheticConfig {
            in_block: 0.9,
            ..small()
        };
        let ds = generate(&cfg).unwrap();
        let tastes = user_tastes(&cfg);
        let mut inside = 0usize;
        for t in ds.triples() {
            let u: usize = ds.user_id(t.user)[1..].parse().unwrap();
            let i: usize = ds.item_id(t.item)[1..].parse().unwrap();
            inside += usize::from(cfg.block_of_item(i) == tastes[u][0].0);
        }
        // expected share 0.9 + 0.1 / 4
        let share = inside as f64 / ds.len() as f64;
        assert!((share - 0.925).abs() < 0.03, "{share}");
    }

    #[test]
    fn taste_weights_are_distributions() {
        let cfg = SyntheticConfig { tastes: 3, ..small() };
        for liked in user_tastes(&cfg) {
            assert_eq!(liked.len(), 3);
            assert!((liked.iter().map(|t| t.1).sum::<f64>() - 1.0).abs() < 1e-12);
            let mut blocks: Vec<usize> = liked.iter().map(|t| t.0).collect();
            blocks.sort_unstable();
            blocks.dedup();
            assert_eq!(blocks.len(), 3);
        }
        assert!(generate(&SyntheticConfig { tastes: 5, ..small() }).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.triples(), b.triples());
        let c = generate(&SyntheticConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.triples(), c.triples());
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&SyntheticConfig {
            max_interactions: 30,
            ..small()
        })
        .is_err());
        assert!(generate(&SyntheticConfig {
            min_interactions: 0,
            ..small()
        })
        .is_err());
        assert!(generate(&SyntheticConfig {
            in_block: 1.5,
            ..small()
        })
        .is_err());
    }
}
