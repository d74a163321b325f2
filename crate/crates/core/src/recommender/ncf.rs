//! Neural collaborative filtering: a GMF path (element-wise product of user
//! and item embeddings) and an MLP path over concatenated embeddings, fused
//! by one linear unit and a sigmoid, trained with binary cross-entropy.

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{sample_negatives, Feedback, InteractionMatrix, TrainingPair};
use crate::nn::{affine, affine_backward, init_normal, init_uniform, relu_backward, relu_in_place, sigmoid, Adam};
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NcfConfig {
    pub gmf_dim: usize,
    /// Per-side MLP embedding size; the first MLP layer sees twice this.
    pub mlp_embedding_dim: usize,
    pub mlp_layers: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negative_ratio: usize,
    pub embedding_init_std: f64,
}

impl Default for NcfConfig {
    fn default() -> Self {
        NcfConfig {
            gmf_dim: 8,
            mlp_embedding_dim: 32,
            mlp_layers: vec![64, 32, 16],
            learning_rate: 0.001,
            epochs: 20,
            batch_size: 256,
            negative_ratio: 4,
            embedding_init_std: 0.01,
        }
    }
}

impl NcfConfig {
    fn validate(&self) -> Result<()> {
        if self.gmf_dim == 0 || self.mlp_embedding_dim == 0 || self.mlp_layers.is_empty() {
            return Err(Error::config(
                "NCF dimensions must be positive and at least one MLP layer given",
            ));
        }
        if self.mlp_layers.contains(&0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("NCF layer sizes, epochs and batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("NCF learning rate must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layout {
    n_users: usize,
    n_items: usize,
    gmf: usize,
    emb: usize,
    /// `(fan_in, fan_out, weight offset, bias offset)` per MLP layer.
    layers: Vec<(usize, usize, usize, usize)>,
    out_w: usize,
    out_b: usize,
    len: usize,
}

impl Layout {
    fn new(n_users: usize, n_items: usize, cfg: &NcfConfig) -> Self {
        let (g, e) = (cfg.gmf_dim, cfg.mlp_embedding_dim);
        let mut off = (n_users + n_items) * (g + e);
        let mut fan_in = 2 * e;
        let mut layers = Vec::with_capacity(cfg.mlp_layers.len());
        for &out in &cfg.mlp_layers {
            layers.push((fan_in, out, off, off + fan_in * out));
            off += fan_in * out + out;
            fan_in = out;
        }
        let out_w = off;
        let out_b = out_w + g + fan_in;
        Layout {
            n_users,
            n_items,
            gmf: g,
            emb: e,
            layers,
            out_w,
            out_b,
            len: out_b + 1,
        }
    }

    fn user_gmf(&self, u: usize) -> usize {
        u * self.gmf
    }

    fn item_gmf(&self, i: usize) -> usize {
        self.n_users * self.gmf + i * self.gmf
    }

    fn user_mlp(&self, u: usize) -> usize {
        (self.n_users + self.n_items) * self.gmf + u * self.emb
    }

    fn item_mlp(&self, i: usize) -> usize {
        (self.n_users + self.n_items) * self.gmf + self.n_users * self.emb + i * self.emb
    }

    fn last_width(&self) -> usize {
        self.layers.last().map_or(2 * self.emb, |l| l.1)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ncf {
    layout: Layout,
    params: Vec<f64>,
    loss_history: Vec<f64>,
    train: InteractionMatrix,
}

struct Activations {
    gmf: Vec<f64>,
    /// Input to the MLP followed by each post-ReLU layer output.
    mlp: Vec<Vec<f64>>,
    prob: f64,
    logit: f64,
}

impl Ncf {
    /// Freshly initialized, untrained model.
    pub fn new(n_users: usize, n_items: usize, cfg: &NcfConfig, seed_value: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(n_users, n_items, cfg);
        let mut params = vec![0.0; layout.len];
        let mut rng = seed::rng(seed::derive(seed_value, "ncf-init"));
        let emb_end = (n_users + n_items) * (cfg.gmf_dim + cfg.mlp_embedding_dim);
        init_normal(&mut rng, &mut params[..emb_end], cfg.embedding_init_std);
        for &(fan_in, fan_out, w, b) in &layout.layers {
            init_uniform(&mut rng, &mut params[w..w + fan_in * fan_out], fan_in);
            init_uniform(&mut rng, &mut params[b..b + fan_out], fan_in);
        }
        let fan_in = layout.gmf + layout.last_width();
        init_uniform(&mut rng, &mut params[layout.out_w..layout.out_b + 1], fan_in);
        Ok(Ncf {
            layout,
            params,
            loss_history: Vec::new(),
            train: InteractionMatrix::from_rows(vec![Vec::new(); n_users], n_items, Feedback::Implicit),
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    fn forward(&self, user: usize, item: usize) -> Activations {
        let l = &self.layout;
        let p = &self.params;
        let pu = &p[l.user_gmf(user)..l.user_gmf(user) + l.gmf];
        let qi = &p[l.item_gmf(item)..l.item_gmf(item) + l.gmf];
        let gmf: Vec<f64> = pu.iter().zip(qi).map(|(a, b)| a * b).collect();

        let mut x = Vec::with_capacity(2 * l.emb);
        x.extend_from_slice(&p[l.user_mlp(user)..l.user_mlp(user) + l.emb]);
        x.extend_from_slice(&p[l.item_mlp(item)..l.item_mlp(item) + l.emb]);
        let mut mlp = Vec::with_capacity(l.layers.len() + 1);
        mlp.push(x);
        for &(fan_in, fan_out, w, b) in &l.layers {
            let mut h = vec![0.0; fan_out];
            affine(
                &p[w..w + fan_in * fan_out],
                &p[b..b + fan_out],
                mlp.last().unwrap(),
                &mut h,
            );
            relu_in_place(&mut h);
            mlp.push(h);
        }
        let top = mlp.last().unwrap();
        let wo = &p[l.out_w..l.out_b];
        let logit = p[l.out_b]
            + wo[..l.gmf].iter().zip(&gmf).map(|(a, b)| a * b).sum::<f64>()
            + wo[l.gmf..].iter().zip(top).map(|(a, b)| a * b).sum::<f64>();
        Activations {
            gmf,
            mlp,
            prob: sigmoid(logit),
            logit,
        }
    }

    /// Predicted interaction probability.
    pub fn score(&self, user: usize, item: usize) -> f64 {
        self.forward(user, item).prob
    }

    /// Mean binary cross-entropy over `batch` and its gradient with respect
    /// to [`Ncf::params`].
    pub fn loss_and_gradient(&self, batch: &[TrainingPair]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.layout.len];
        let loss = self.accumulate(batch, &mut grad);
        (loss, grad)
    }

    fn accumulate(&self, batch: &[TrainingPair], grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let p = &self.params;
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for pair in batch {
            let act = self.forward(pair.user, pair.item);
            loss += bce_from_logit(act.logit, pair.label);
            let dlogit = (act.prob - pair.label) * scale;

            let top = act.mlp.last().unwrap();
            grad[l.out_b] += dlogit;
            {
                let gw = &mut grad[l.out_w..l.out_b];
                for (g, v) in gw.iter_mut().zip(act.gmf.iter().chain(top)) {
                    *g += dlogit * v;
                }
            }
            let wo = &p[l.out_w..l.out_b];

            let (ug, ig) = (l.user_gmf(pair.user), l.item_gmf(pair.item));
            for k in 0..l.gmf {
                let d = dlogit * wo[k];
                let (pu, qi) = (p[ug + k], p[ig + k]);
                grad[ug + k] += d * qi;
                grad[ig + k] += d * pu;
            }

            let mut dh: Vec<f64> = wo[l.gmf..].iter().map(|w| dlogit * w).collect();
            for (idx, &(fan_in, fan_out, w, _)) in l.layers.iter().enumerate().rev() {
                relu_backward(&act.mlp[idx + 1], &mut dh);
                let mut dx = vec![0.0; fan_in];
                let (dw, rest) = grad[w..].split_at_mut(fan_in * fan_out);
                affine_backward(
                    &p[w..w + fan_in * fan_out],
                    &act.mlp[idx],
                    &dh,
                    dw,
                    &mut rest[..fan_out],
                    Some(&mut dx),
                );
                dh = dx;
            }
            let (um, im) = (l.user_mlp(pair.user), l.item_mlp(pair.item));
            for k in 0..l.emb {
                grad[um + k] += dh[k];
                grad[im + k] += dh[l.emb + k];
            }
        }
        loss * scale
    }

    pub(crate) fn scores(&self, user: usize) -> Vec<f64> {
        (0..self.layout.n_items).map(|i| self.score(user, i)).collect()
    }

    pub(crate) fn training_matrix(&self) -> &InteractionMatrix {
        &self.train
    }
}

fn bce_from_logit(logit: f64, label: f64) -> f64 {
    // log(1 + e^x) - y x, written to avoid overflow
    logit.max(0.0) - label * logit + (-logit.abs()).exp().ln_1p()
}

/// Train NCF with Adam on positives plus freshly sampled negatives each epoch.
pub fn train_ncf(members: &InteractionMatrix, cfg: &NcfConfig, seed_value: u64) -> Result<Ncf> {
    if members.feedback() != Feedback::Implicit {
        return Err(Error::config("NCF expects an implicit matrix"));
    }
    let mut model = Ncf::new(members.n_rows(), members.n_cols(), cfg, seed_value)?;
    model.train = members.clone();
    let mut opt = Adam::new(model.layout.len, cfg.learning_rate);
    let mut rng = seed::rng(seed::derive(seed_value, "ncf-shuffle"));
    let mut grad = vec![0.0; model.layout.len];
    let mut warned = false;

    for epoch in 0..cfg.epochs {
        let neg_seed = seed::derive_indexed(seed_value, "ncf-negatives", epoch as u64);
        let mut pairs = sample_negatives(members, cfg.negative_ratio, neg_seed)?;
        pairs.shuffle(&mut rng);
        let batch = if pairs.len() < cfg.batch_size {
            if !warned {
                warn!(
                    "only {} training pairs for batch size {}; using full-batch updates",
                    pairs.len(),
                    cfg.batch_size
                );
                warned = true;
            }
            pairs.len()
        } else {
            cfg.batch_size
        };
        let mut total = 0.0;
        for chunk in pairs.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = model.accumulate(chunk, &mut grad);
            total += loss * chunk.len() as f64;
            opt.update(&mut model.params, &grad);
        }
        let mean = total / pairs.len() as f64;
        if !mean.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                stage: "NCF",
                epoch: epoch + 1,
            });
        }
        model.loss_history.push(mean);
    }
    Ok(model)
}
