//! Personalized recommenders for members, the popularity recommender for
//! non-members, and HR@k evaluation.
//!
//! Every model keeps the implicit matrix it was trained on so that a
//! member's own interactions can be excluded from their recommendations.

mod item_cf;
mod lfm;
mod ncf;
mod popularity;

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::InteractionMatrix;
use crate::{Error, Result};

pub use item_cf::{train_item_cf, ItemCf};
pub use lfm::{train_lfm, Lfm, LfmConfig};
pub use ncf::{train_ncf, Ncf, NcfConfig};
pub use popularity::{popularity_rank, recommend_popular, Popularity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Item,
    Lfm,
    Ncf,
    Popularity,
}

impl Algorithm {
    pub const PERSONALIZED: [Algorithm; 3] = [Algorithm::Item, Algorithm::Lfm, Algorithm::Ncf];

    /// Single-letter code used in experiment notation.
    pub fn letter(self) -> char {
        match self {
            Algorithm::Item => 'I',
            Algorithm::Lfm => 'L',
            Algorithm::Ncf => 'N',
            Algorithm::Popularity => 'P',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'I' => Some(Algorithm::Item),
            'L' => Some(Algorithm::Lfm),
            'N' => Some(Algorithm::Ncf),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Item => "Item",
            Algorithm::Lfm => "LFM",
            Algorithm::Ncf => "NCF",
            Algorithm::Popularity => "Popularity",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "item" | "i" | "item-cf" => Ok(Algorithm::Item),
            "lfm" | "l" => Ok(Algorithm::Lfm),
            "ncf" | "n" => Ok(Algorithm::Ncf),
            "popularity" | "pop" => Ok(Algorithm::Popularity),
            _ => Err(Error::config(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommenderConfig {
    /// Length of every recommendation list.
    pub k: usize,
    pub seed: u64,
    pub lfm: LfmConfig,
    pub ncf: NcfConfig,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        RecommenderConfig {
            k: 100,
            seed: 0,
            lfm: LfmConfig::default(),
            ncf: NcfConfig::default(),
        }
    }
}

/// An ordered top-k list; position 0 is rank 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user: usize,
    pub items: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum RecommenderModel {
    Item(ItemCf),
    Lfm(Lfm),
    Ncf(Ncf),
    Popularity(Popularity),
}

/// Train `algorithm` on an implicit member matrix.
pub fn train(algorithm: Algorithm, members: &InteractionMatrix, cfg: &RecommenderConfig) -> Result<RecommenderModel> {
    Ok(match algorithm {
        Algorithm::Item => RecommenderModel::Item(train_item_cf(members)?),
        Algorithm::Lfm => RecommenderModel::Lfm(train_lfm(members, &cfg.lfm, cfg.seed)?),
        Algorithm::Ncf => RecommenderModel::Ncf(train_ncf(members, &cfg.ncf, cfg.seed)?),
        Algorithm::Popularity => RecommenderModel::Popularity(Popularity::fit(members)?),
    })
}

impl RecommenderModel {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            RecommenderModel::Item(_) => Algorithm::Item,
            RecommenderModel::Lfm(_) => Algorithm::Lfm,
            RecommenderModel::Ncf(_) => Algorithm::Ncf,
            RecommenderModel::Popularity(_) => Algorithm::Popularity,
        }
    }

    pub fn training_matrix(&self) -> &InteractionMatrix {
        match self {
            RecommenderModel::Item(m) => m.training_matrix(),
            RecommenderModel::Lfm(m) => m.training_matrix(),
            RecommenderModel::Ncf(m) => m.training_matrix(),
            RecommenderModel::Popularity(m) => m.training_matrix(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.training_matrix().n_rows()
    }

    pub fn n_items(&self) -> usize {
        self.training_matrix().n_cols()
    }

    /// Score of every item for `user`.
    pub fn scores(&self, user: usize) -> Result<Vec<f64>> {
        if user >= self.n_users() {
            return Err(Error::IndexOutOfRange {
                index: user,
                size: self.n_users(),
            });
        }
        Ok(match self {
            RecommenderModel::Item(m) => m.scores(user),
            RecommenderModel::Lfm(m) => m.scores(user),
            RecommenderModel::Ncf(m) => m.scores(user),
            RecommenderModel::Popularity(m) => m.scores(),
        })
    }

    /// Popularity order of the training items.
    pub fn popularity(&self) -> Vec<usize> {
        popularity::rank_matrix(self.training_matrix())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let model: RecommenderModel = serde_json::from_reader(input)?;
        Ok(match model {
            RecommenderModel::Item(m) => RecommenderModel::Item(m.rebuilt()),
            other => other,
        })
    }
}

/// Indices of the `k` highest scores among items not in `excluded`
/// (ascending), ties broken by ascending item index.
pub fn top_k(scores: &[f64], excluded: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| excluded.binary_search(i).is_err())
        .collect();
    if candidates.len() < k {
        return Err(Error::NotEnoughItems {
            needed: k,
            available: candidates.len(),
        });
    }
    let cmp = |a: &usize, b: &usize| -> Ordering { scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)) };
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k, cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(cmp);
    Ok(candidates)
}

/// Top-k list for `user`. Personalized models skip the user's training
/// interactions; the popularity model returns the same list for everyone.
pub fn recommend_top_k(model: &RecommenderModel, user: usize, k: usize) -> Result<RecommendationList> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    let scores = model.scores(user)?;
    let excluded: &[usize] = match model {
        RecommenderModel::Popularity(_) => &[],
        _ => model.training_matrix().row_indices(user),
    };
    Ok(RecommendationList {
        user,
        items: top_k(&scores, excluded, k)?,
    })
}

/// Fraction of lists that contain their ground-truth item. A `None` target
/// (held-out item unknown to the recommender) counts as a miss.
pub fn hit_rate<'a, T: PartialEq + 'a>(cases: impl IntoIterator<Item = (&'a [T], Option<T>)>) -> Result<f64> {
    let mut n = 0usize;
    let mut hits = 0usize;
    for (list, target) in cases {
        n += 1;
        if target.is_some_and(|t| list.contains(&t)) {
            hits += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(hits as f64 / n as f64)
}

/// HR@k over `(user, held-out item)` pairs.
pub fn hit_rate_at_k(model: &RecommenderModel, holdout: &[(usize, Option<usize>)], k: usize) -> Result<f64> {
    let lists = holdout
        .iter()
        .map(|&(u, _)| recommend_top_k(model, u, k))
        .collect::<Result<Vec<_>>>()?;
    hit_rate(lists.iter().zip(holdout).map(|(l, &(_, t))| (l.items.as_slice(), t)))
}
