use serde::{Deserialize, Serialize};

use crate::data::{Feedback, InteractionMatrix};
use crate::{Error, Result};

/// Item-based collaborative filtering over binary item columns.
///
/// `score(u, i) = sum over j in interactions(u) of cos(i, j)`, with no
/// neighbourhood truncation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ItemCf {
    train: InteractionMatrix,
    #[serde(skip)]
    similarity: Vec<f64>,
}

pub fn train_item_cf(members: &InteractionMatrix) -> Result<ItemCf> {
    if members.feedback() != Feedback::Implicit {
        return Err(Error::config("item-based CF expects an implicit matrix"));
    }
    if members.nnz() == 0 {
        return Err(Error::Empty("member interactions"));
    }
    Ok(ItemCf {
        train: members.clone(),
        similarity: Vec::new(),
    }
    .rebuilt())
}

impl ItemCf {
    /// Recompute the similarity matrix from the stored training matrix.
    pub(crate) fn rebuilt(mut self) -> Self {
        self.similarity = cosine_similarity(&self.train);
        self
    }

    pub fn n_items(&self) -> usize {
        self.train.n_cols()
    }

    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        self.similarity[a * self.n_items() + b]
    }

    pub(crate) fn scores(&self, user: usize) -> Vec<f64> {
        let q = self.n_items();
        let mut out = vec![0.0; q];
        for &j in self.train.row_indices(user) {
            let row = &self.similarity[j * q..(j + 1) * q];
            for (o, s) in out.iter_mut().zip(row) {
                *o += s;
            }
        }
        out
    }

    pub(crate) fn training_matrix(&self) -> &InteractionMatrix {
        &self.train
    }
}

/// Dense `q x q` cosine similarity between binary item columns; all-zero
/// columns get similarity 0 to everything.
fn cosine_similarity(m: &InteractionMatrix) -> Vec<f64> {
    let q = m.n_cols();
    let mut co = vec![0.0f64; q * q];
    for u in 0..m.n_rows() {
        let row = m.row_indices(u);
        for &a in row {
            let base = a * q;
            for &b in row {
                co[base + b] += 1.0;
            }
        }
    }
    let norms: Vec<f64> = (0..q).map(|i| co[i * q + i].sqrt()).collect();
    for a in 0..q {
        for b in 0..q {
            let d = norms[a] * norms[b];
            co[a * q + b] = if d > 0.0 { co[a * q + b] / d } else { 0.0 };
        }
    }
    co
}
