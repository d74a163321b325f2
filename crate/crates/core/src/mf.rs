//! Explicit-rating matrix factorization.
//!
//! The rating matrix of the feature partition is factorized as
//! `R ~= U * V^T` by stochastic gradient descent over the observed entries.
//! Rows of the item matrix `V` are the item feature vectors used to profile
//! users. The user matrix is fitted but deliberately not exposed: the users
//! of the feature partition are not the users being audited.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Feedback, InteractionMatrix, RatingDataset};
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfConfig {
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub regularization: f64,
    /// Factors start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            latent_dim: 100,
            learning_rate: 0.01,
            epochs: 50,
            regularization: 0.01,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl MfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("latent dimension must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.regularization < 0.0 || self.init_scale < 0.0 {
            return Err(Error::config("regularization and init scale must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatentFactorization {
    n_users: usize,
    n_items: usize,
    latent_dim: usize,
    seed: u64,
    final_loss: f64,
    loss_history: Vec<f64>,
    user_matrix: Vec<f64>,
    item_matrix: Vec<f64>,
    item_ids: Vec<String>,
    #[serde(skip)]
    item_lookup: HashMap<String, usize>,
}

/// Rating matrix of a dataset: the score where a triple exists, 0 elsewhere.
pub fn build_rating_matrix(ds: &RatingDataset) -> InteractionMatrix {
    InteractionMatrix::from_dataset(ds, Feedback::Explicit)
}

/// Per-entry objective `(r - u.v)^2 + reg * (|u|^2 + |v|^2)`.
pub fn entry_loss(user: &[f64], item: &[f64], rating: f64, reg: f64) -> f64 {
    let e = rating - dot(user, item);
    e * e + reg * (dot(user, user) + dot(item, item))
}

/// Analytic gradient of [`entry_loss`] with respect to `(user, item)`.
pub fn entry_gradient(user: &[f64], item: &[f64], rating: f64, reg: f64) -> (Vec<f64>, Vec<f64>) {
    let e = rating - dot(user, item);
    let gu = user
        .iter()
        .zip(item)
        .map(|(&u, &v)| -2.0 * e * v + 2.0 * reg * u)
        .collect();
    let gv = user
        .iter()
        .zip(item)
        .map(|(&u, &v)| -2.0 * e * u + 2.0 * reg * v)
        .collect();
    (gu, gv)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Factorize an explicit rating matrix over its observed entries.
pub fn factorize(m: &InteractionMatrix, cfg: &MfConfig) -> Result<LatentFactorization> {
    let entries: Vec<(usize, usize, f64)> = m.entries().collect();
    factorize_observed(m.n_rows(), m.n_cols(), &entries, cfg)
}

/// Factorize a `p x q` matrix given its observed `(row, col, value)`
/// entries. Unlike [`InteractionMatrix`], observed zeros are allowed.
pub fn factorize_observed(
    p: usize,
    q: usize,
    entries: &[(usize, usize, f64)],
    cfg: &MfConfig,
) -> Result<LatentFactorization> {
    cfg.validate()?;
    if entries.is_empty() {
        return Err(Error::Empty("observed ratings"));
    }
    if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= p || c >= q) {
        return Err(Error::IndexOutOfRange {
            index: r.max(c),
            size: p.min(q),
        });
    }
    let l = cfg.latent_dim;
    let mut rng = seed::rng(seed::derive(cfg.seed, "mf"));
    let mut init = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if cfg.init_scale == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-cfg.init_scale..=cfg.init_scale)
                }
            })
            .collect()
    };
    let mut users = init(p * l);
    let mut items = init(q * l);

    let mut order: Vec<usize> = (0..entries.len()).collect();
    let (lr, reg) = (cfg.learning_rate, cfg.regularization);

    let objective = |users: &[f64], items: &[f64]| -> f64 {
        entries
            .iter()
            .map(|&(u, i, r)| entry_loss(&users[u * l..(u + 1) * l], &items[i * l..(i + 1) * l], r, reg))
            .sum::<f64>()
            / entries.len() as f64
    };

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    history.push(objective(&users, &items));
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let (u, i, r) = entries[k];
            let ur = &mut users[u * l..(u + 1) * l];
            let ir = &mut items[i * l..(i + 1) * l];
            let e = r - dot(ur, ir);
            for (a, b) in ur.iter_mut().zip(ir.iter_mut()) {
                let (ua, vb) = (*a, *b);
                *a += lr * (e * vb - reg * ua);
                *b += lr * (e * ua - reg * vb);
            }
        }
        let loss = objective(&users, &items);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                stage: "matrix factorization",
                epoch: epoch + 1,
            });
        }
        history.push(loss);
    }

    Ok(LatentFactorization {
        n_users: p,
        n_items: q,
        latent_dim: l,
        seed: cfg.seed,
        final_loss: *history.last().unwrap(),
        loss_history: history,
        user_matrix: users,
        item_matrix: items,
        item_ids: (0..q).map(|i| i.to_string()).collect(),
        item_lookup: HashMap::new(),
    }
    .indexed())
}

/// Factorize a dataset's rating matrix and key item rows by external id.
pub fn embed_dataset(ds: &RatingDataset, cfg: &MfConfig) -> Result<LatentFactorization> {
    let mut f = factorize(&build_rating_matrix(ds), cfg)?;
    f.item_ids = ds.item_ids().to_vec();
    Ok(f.indexed())
}

impl LatentFactorization {
    fn indexed(mut self) -> Self {
        self.item_lookup = self
            .item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        self
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    /// Objective before training followed by one value per epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Feature vector of the item at row `item`.
    pub fn item_vector(&self, item: usize) -> Result<&[f64]> {
        if item >= self.n_items {
            return Err(Error::IndexOutOfRange {
                index: item,
                size: self.n_items,
            });
        }
        let l = self.latent_dim;
        Ok(&self.item_matrix[item * l..(item + 1) * l])
    }

    /// Feature vector of the item with external id `id`.
    pub fn item_vector_by_id(&self, id: &str) -> Result<&[f64]> {
        let row = self
            .item_lookup
            .get(id)
            .ok_or_else(|| Error::UnknownItem(id.to_owned()))?;
        self.item_vector(*row)
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Root-mean-square error over the stored entries of `m`.
    pub fn rmse(&self, m: &InteractionMatrix) -> f64 {
        let l = self.latent_dim;
        let sse: f64 = m
            .entries()
            .map(|(u, i, r)| {
                let e = r - dot(
                    &self.user_matrix[u * l..(u + 1) * l],
                    &self.item_matrix[i * l..(i + 1) * l],
                );
                e * e
            })
            .sum();
        (sse / m.nnz().max(1) as f64).sqrt()
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let f: LatentFactorization = serde_json::from_reader(input)?;
        let l = f.latent_dim;
        if f.item_matrix.len() != f.n_items * l || f.user_matrix.len() != f.n_users * l || f.item_ids.len() != f.n_items
        {
            return Err(Error::Format("factorization shape does not match its header".into()));
        }
        Ok(f.indexed())
    }
}
