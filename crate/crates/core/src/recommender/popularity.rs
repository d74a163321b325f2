use serde::{Deserialize, Serialize};

use crate::data::InteractionMatrix;
use crate::{Error, Result};

/// Non-personalized recommender: every user gets the most interacted items.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Popularity {
    ranking: Vec<usize>,
    counts: Vec<usize>,
    train: InteractionMatrix,
}

impl Popularity {
    pub fn fit(members: &InteractionMatrix) -> Result<Self> {
        Ok(Popularity {
            ranking: popularity_rank(members)?,
            counts: members.column_counts(),
            train: members.clone(),
        })
    }

    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    pub(crate) fn scores(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub(crate) fn training_matrix(&self) -> &InteractionMatrix {
        &self.train
    }
}

pub(crate) fn rank_matrix(m: &InteractionMatrix) -> Vec<usize> {
    let counts = m.column_counts();
    let mut order: Vec<usize> = (0..m.n_cols()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order
}

/// Every item ordered by descending interaction count, ties by ascending
/// index.
pub fn popularity_rank(members: &InteractionMatrix) -> Result<Vec<usize>> {
    if members.n_cols() == 0 || members.nnz() == 0 {
        return Err(Error::Empty("member interactions"));
    }
    Ok(rank_matrix(members))
}

/// The top-k prefix of a popularity ranking.
pub fn recommend_popular(sorted: &[usize], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    if k > sorted.len() {
        return Err(Error::NotEnoughItems {
            needed: k,
            available: sorted.len(),
        });
    }
    Ok(sorted[..k].to_vec())
}
