use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{sample_negatives, Feedback, InteractionMatrix, TrainingPair};
use crate::mf::dot;
use crate::nn::init_normal;
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LfmConfig {
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    /// Sampled zero-pairs per observed pair.
    pub negative_ratio: usize,
    pub init_std: f64,
}

impl Default for LfmConfig {
    fn default() -> Self {
        LfmConfig {
            factors: 16,
            learning_rate: 0.01,
            regularization: 0.01,
            epochs: 20,
            negative_ratio: 1,
            init_std: 0.1,
        }
    }
}

/// Latent factor model fitted to `{0, 1}` labels by squared-error SGD.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lfm {
    factors: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    loss_history: Vec<f64>,
    train: InteractionMatrix,
}

pub fn train_lfm(members: &InteractionMatrix, cfg: &LfmConfig, seed_value: u64) -> Result<Lfm> {
    if members.feedback() != Feedback::Implicit {
        return Err(Error::config("LFM expects an implicit matrix"));
    }
    if cfg.factors == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::config(
            "LFM needs factors >= 1, epochs >= 1 and a positive learning rate",
        ));
    }
    let d = cfg.factors;
    let mut rng = seed::rng(seed::derive(seed_value, "lfm-init"));
    let mut model = Lfm {
        factors: d,
        user_factors: vec![0.0; members.n_rows() * d],
        item_factors: vec![0.0; members.n_cols() * d],
        loss_history: Vec::with_capacity(cfg.epochs + 1),
        train: members.clone(),
    };
    init_normal(&mut rng, &mut model.user_factors, cfg.init_std);
    init_normal(&mut rng, &mut model.item_factors, cfg.init_std);

    let mut pairs = sample_negatives(members, cfg.negative_ratio, seed::derive(seed_value, "lfm-negatives"))?;
    let (lr, reg) = (cfg.learning_rate, cfg.regularization);
    model.loss_history.push(model.objective(&pairs, reg));
    for epoch in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        for p in &pairs {
            let pu = &mut model.user_factors[p.user * d..(p.user + 1) * d];
            let qi = &mut model.item_factors[p.item * d..(p.item + 1) * d];
            let e = p.label - dot(pu, qi);
            for (a, b) in pu.iter_mut().zip(qi.iter_mut()) {
                let (ua, vb) = (*a, *b);
                *a += lr * (e * vb - reg * ua);
                *b += lr * (e * ua - reg * vb);
            }
        }
        let loss = model.objective(&pairs, reg);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                stage: "LFM",
                epoch: epoch + 1,
            });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}

impl Lfm {
    fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.factors..(u + 1) * self.factors]
    }

    fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.factors..(i + 1) * self.factors]
    }

    fn objective(&self, pairs: &[TrainingPair], reg: f64) -> f64 {
        pairs
            .iter()
            .map(|p| {
                let (pu, qi) = (self.user(p.user), self.item(p.item));
                let e = p.label - dot(pu, qi);
                e * e + reg * (dot(pu, pu) + dot(qi, qi))
            })
            .sum::<f64>()
            / pairs.len() as f64
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.user(user), self.item(item))
    }

    /// Training objective before the first epoch and after each epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub(crate) fn scores(&self, user: usize) -> Vec<f64> {
        (0..self.train.n_cols()).map(|i| self.score(user, i)).collect()
    }

    pub(crate) fn training_matrix(&self) -> &InteractionMatrix {
        &self.train
    }
}
