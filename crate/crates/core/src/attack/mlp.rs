use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::nn::{affine, affine_backward, init_uniform, relu_backward, relu_in_place, softmax, Momentum};
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpTrainConfig {
    pub hidden: [usize; 2],
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        MlpTrainConfig {
            hidden: [32, 8],
            epochs: 20,
            learning_rate: 0.01,
            momentum: 0.7,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl MlpTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "attack MLP needs nonzero hidden sizes, epochs and batch size",
            ));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("attack MLP needs lr > 0 and momentum in [0, 1)"));
        }
        Ok(())
    }
}

/// Two ReLU hidden layers and a two-way softmax (non-member, member).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackMlp {
    input_dim: usize,
    hidden: [usize; 2],
    params: Vec<f64>,
    loss_history: Vec<f64>,
    trained_with: Option<MlpTrainConfig>,
}

/// Offsets of (W1, b1, W2, b2, W3, b3) in the flat buffer.
struct Layout {
    n_in: usize,
    h1: usize,
    h2: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

impl Layout {
    fn new(n_in: usize, [h1, h2]: [usize; 2]) -> Self {
        let w1 = 0;
        let b1 = w1 + h1 * n_in;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + 2 * h2;
        Layout {
            n_in,
            h1,
            h2,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            len: b3 + 2,
        }
    }
}

struct Trace {
    h1: Vec<f64>,
    h2: Vec<f64>,
    logits: Vec<f64>,
}

impl AttackMlp {
    /// Weights and biases drawn from `U(+-1/sqrt(fan_in))`.
    pub fn new(input_dim: usize, hidden: [usize; 2], seed_value: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::config("attack MLP dimensions must be nonzero"));
        }
        let params = vec![0.0; Layout::new(input_dim, hidden).len];
        let mut rng = seed::rng(seed::derive(seed_value, "attack-mlp-init"));
        let mut model = AttackMlp {
            input_dim,
            hidden,
            params,
            loss_history: Vec::new(),
            trained_with: None,
        };
        model.init_layers(&mut rng);
        Ok(model)
    }

    fn init_layers(&mut self, rng: &mut impl rand::Rng) {
        let l = self.layout();
        let p = &mut self.params;
        init_uniform(rng, &mut p[l.w1..l.w2], l.n_in);
        init_uniform(rng, &mut p[l.w2..l.w3], l.h1);
        init_uniform(rng, &mut p[l.w3..l.len], l.h2);
    }

    fn layout(&self) -> Layout {
        Layout::new(self.input_dim, self.hidden)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Mean training loss before the first epoch and after each epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }

    pub fn trained_with(&self) -> Option<&MlpTrainConfig> {
        self.trained_with.as_ref()
    }

    pub fn write_json<W: std::io::Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self> {
        let model: AttackMlp = serde_json::from_reader(input)?;
        if model.params.len() != model.layout().len {
            return Err(Error::Format(
                "attack model parameter count does not match its shape".into(),
            ));
        }
        Ok(model)
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: z.len(),
            });
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("attack feature"));
        }
        Ok(())
    }

    fn trace(&self, z: &[f64]) -> Trace {
        let l = self.layout();
        let p = &self.params;
        let mut h1 = vec![0.0; l.h1];
        affine(&p[l.w1..l.b1], &p[l.b1..l.w2], z, &mut h1);
        relu_in_place(&mut h1);
        let mut h2 = vec![0.0; l.h2];
        affine(&p[l.w2..l.b2], &p[l.b2..l.w3], &h1, &mut h2);
        relu_in_place(&mut h2);
        let mut logits = vec![0.0; 2];
        affine(&p[l.w3..l.b3], &p[l.b3..l.len], &h2, &mut logits);
        Trace { h1, h2, logits }
    }

    /// `[P(non-member), P(member)]`.
    pub fn forward(&self, z: &[f64]) -> Result<[f64; 2]> {
        self.check_input(z)?;
        let y = softmax(&self.trace(z).logits);
        Ok([y[0], y[1]])
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], bool)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let l = self.layout();
        let p = &self.params;
        let mut grad = vec![0.0; l.len];
        let mut loss = 0.0;
        let mut d_h1 = vec![0.0; l.h1];
        let mut d_h2 = vec![0.0; l.h2];
        for &(z, member) in batch {
            self.check_input(z)?;
            let t = self.trace(z);
            let target = usize::from(member);
            let max = t.logits[0].max(t.logits[1]);
            let lse = max + t.logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - t.logits[target];

            let mut d_logits = softmax(&t.logits);
            d_logits[target] -= 1.0;
            let (g_head, g_tail) = grad.split_at_mut(l.b3);
            affine_backward(
                &p[l.w3..l.b3],
                &t.h2,
                &d_logits,
                &mut g_head[l.w3..],
                g_tail,
                Some(&mut d_h2),
            );
            relu_backward(&t.h2, &mut d_h2);
            let (g_head, g_tail) = grad.split_at_mut(l.b2);
            affine_backward(
                &p[l.w2..l.b2],
                &t.h1,
                &d_h2,
                &mut g_head[l.w2..],
                &mut g_tail[..l.h2],
                Some(&mut d_h1),
            );
            relu_backward(&t.h1, &mut d_h1);
            let (g_head, g_tail) = grad.split_at_mut(l.b1);
            affine_backward(&p[l.w1..l.b1], z, &d_h1, &mut g_head[l.w1..], &mut g_tail[..l.h1], None);
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    fn mean_loss(&self, samples: &[(&[f64], bool)]) -> Result<f64> {
        Ok(self.loss_and_gradient(samples)?.0)
    }
}

/// Train a fresh attack model on `(feature, is_member)` samples with
/// minibatch SGD with momentum over cross-entropy.
pub fn train_mlp(samples: &[(&[f64], bool)], cfg: &MlpTrainConfig) -> Result<AttackMlp> {
    cfg.validate()?;
    let first = samples.first().ok_or(Error::Empty("attack training set"))?;
    let members = samples.iter().filter(|s| s.1).count();
    if members == 0 || members == samples.len() {
        return Err(Error::SingleClass);
    }
    let mut model = AttackMlp::new(first.0.len(), cfg.hidden, cfg.seed)?;
    let mut opt = Momentum::new(model.params.len(), cfg.learning_rate, cfg.momentum);
    let mut rng = seed::rng(seed::derive(cfg.seed, "attack-mlp-order"));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    model.loss_history.push(model.mean_loss(samples)?);
    if !model.loss_history[0].is_finite() {
        return Err(Error::Diverged {
            stage: "attack MLP",
            epoch: 0,
        });
    }
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            let (_, grad) = model.loss_and_gradient(&batch)?;
            opt.update(&mut model.params, &grad);
        }
        let loss = model.mean_loss(samples)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                stage: "attack MLP",
                epoch: epoch + 1,
            });
        }
        model.loss_history.push(loss);
    }
    model.trained_with = Some(cfg.clone());
    Ok(model)
}

/// `(is_member, P(member))`; a tie counts as non-member.
pub fn infer_membership(model: &AttackMlp, z: &[f64]) -> Result<(bool, f64)> {
    let [a, b] = model.forward(z)?;
    Ok((a < b, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(seed: u64) -> AttackMlp {
        AttackMlp::new(4, [6, 4], seed).unwrap()
    }

    #[test]
    fn parameter_count() {
        let m = AttackMlp::new(50, [32, 8], 0).unwrap();
        assert_eq!(m.params().len(), 32 * 50 + 32 + 8 * 32 + 8 + 2 * 8 + 2);
        assert!(small(0).params().len() <= 200);
    }

    #[test]
    fn zero_weights_give_even_odds() {
        let mut m = small(1);
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), [0.5, 0.5]);
        assert_eq!(infer_membership(&m, &[0.0; 4]).unwrap(), (false, 0.5));
    }

    #[test]
    fn hand_set_weights_match_manual_arithmetic() {
        // 2 -> 2 -> 2 -> 2 with identity-like layers
        let mut m = AttackMlp::new(2, [2, 2], 0).unwrap();
        let p = m.params_mut();
        p.copy_from_slice(&[
            1.0, 0.0, 0.0, 1.0, 0.0, 0.0, // W1 = I, b1 = 0
            1.0, 1.0, 0.0, 1.0, 0.5, 0.0, // W2 = [[1,1],[0,1]], b2 = [0.5, 0]
            1.0, 0.0, 0.0, 2.0, 0.0, -1.0, // W3 = diag(1,2), b3 = [0,-1]
        ]);
        // z = [1, -3]: h1 = [1, 0]; h2 = relu([1.5, 0]) = [1.5, 0]; logits = [1.5, -1]
        let [a, b] = m.forward(&[1.0, -3.0]).unwrap();
        let e = (-2.5f64).exp();
        assert!((a - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((b - e / (1.0 + e)).abs() < 1e-15);
        assert_eq!(infer_membership(&m, &[1.0, -3.0]).unwrap().0, false);
    }

    #[test]
    fn zero_input_output_does_not_depend_on_scale() {
        let m = small(2);
        let z = [0.3, -0.1, 2.0, 5.0];
        let scaled: Vec<f64> = z.iter().map(|v| v * 0.0).collect();
        assert_eq!(m.forward(&scaled).unwrap(), m.forward(&[0.0; 4]).unwrap());
    }

    #[test]
    fn outputs_sum_to_one() {
        let mut rng = seed::rng(3);
        for s in 0..50 {
            let m = AttackMlp::new(5, [7, 3], s).unwrap();
            let z: Vec<f64> = (0..5).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let [a, b] = m.forward(&z).unwrap();
            assert!(a >= 0.0 && b >= 0.0 && (a + b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_inputs() {
        let m = small(0);
        assert!(m.forward(&[0.0; 3]).is_err());
        assert!(m.forward(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seed::rng(11);
        let m = small(5);
        let feats: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let batch: Vec<(&[f64], bool)> = feats
            .iter()
            .enumerate()
            .map(|(i, f)| (f.as_slice(), i % 2 == 0))
            .collect();
        let (_, grad) = m.loss_and_gradient(&batch).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for p in 0..m.params().len() {
            let mut plus = m.clone();
            plus.params_mut()[p] += h;
            let mut minus = m.clone();
            minus.params_mut()[p] -= h;
            let fd = (plus.mean_loss(&batch).unwrap() - minus.mean_loss(&batch).unwrap()) / (2.0 * h);
            let rel = (fd - grad[p]).abs() / (fd.abs() + grad[p].abs()).max(1e-7);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    fn clusters(seed_value: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = seed::rng(seed_value);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let member = i % 2 == 0;
            let c = if member { 1.0 } else { -1.0 };
            feats.push((0..5).map(|_| c + rng.gen_range(-0.5..0.5)).collect());
            labels.push(member);
        }
        (feats, labels)
    }

    #[test]
    fn separable_clusters_are_learned() {
        let (feats, labels) = clusters(4);
        let samples: Vec<(&[f64], bool)> = feats.iter().map(|f| f.as_slice()).zip(labels.iter().copied()).collect();
        let model = train_mlp(&samples, &MlpTrainConfig::default()).unwrap();
        let correct = samples
            .iter()
            .filter(|(z, l)| infer_membership(&model, z).unwrap().0 == *l)
            .count();
        assert!(correct as f64 / samples.len() as f64 >= 0.95);
        assert_eq!(model.loss_history().len(), 21);
        assert!(model.final_loss().unwrap() < model.loss_history()[0]);
    }

    #[test]
    fn training_is_reproducible_and_checks_classes() {
        let (feats, labels) = clusters(9);
        let samples: Vec<(&[f64], bool)> = feats.iter().map(|f| f.as_slice()).zip(labels.iter().copied()).collect();
        let cfg = MlpTrainConfig {
            seed: 5,
            batch_size: 8,
            ..Default::default()
        };
        let a = train_mlp(&samples, &cfg).unwrap();
        let b = train_mlp(&samples, &cfg).unwrap();
        assert_eq!(a.params(), b.params());
        let one_class: Vec<(&[f64], bool)> = samples.iter().map(|&(z, _)| (z, true)).collect();
        assert!(matches!(train_mlp(&one_class, &cfg), Err(Error::SingleClass)));
    }

    #[test]
    fn divergence_is_reported() {
        let (feats, _) = clusters(1);
        let huge: Vec<Vec<f64>> = feats.iter().map(|f| f.iter().map(|v| v * 1e100).collect()).collect();
        // labels unrelated to the features keep the loss large
        let samples: Vec<(&[f64], bool)> = huge
            .iter()
            .enumerate()
            .map(|(i, f)| (f.as_slice(), i % 3 == 0))
            .collect();
        let cfg = MlpTrainConfig {
            learning_rate: 1e6,
            ..Default::default()
        };
        assert!(matches!(train_mlp(&samples, &cfg), Err(Error::Diverged { .. })));
    }
}
