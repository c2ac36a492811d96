//! Trainable multi-class classifiers: supervised training with loss
//! tracking, logit prediction, and distillation toward soft targets.
//!
//! Two architectures share one interface (a linear softmax model and an MLP
//! with tanh hidden layers) so federated clients can be heterogeneous.

mod losses;

pub use losses::{cross_entropy, kl_divergence, l2_logit_loss, softmax};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureMatrix;
use crate::error::{Error, Result};

/// Real-valued pre-softmax predictions on the public set; the only artifact
/// exchanged between clients and server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl LogitsMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_classes(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Per-round training diagnostics for one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    /// Mean training loss per local epoch.
    pub epoch_losses: Vec<f64>,
    pub dev_f1: Option<f64>,
}

impl LossRecord {
    /// Minimum training loss over the recorded epochs.
    pub fn l_min(&self) -> f64 {
        self.epoch_losses.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    SoftmaxLinear,
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning_rate must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.5,
            epochs: 3,
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }
}

/// How distillation targets are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    /// Tempered KL toward softmax(targets / tau), with the standard tau^2
    /// gradient scaling; targets are raw logits.
    Kl { tau: f64 },
    /// KL toward targets that are already probability rows.
    KlProbs,
    /// Squared error on raw logits.
    L2,
    /// Squared error in probability space: softmax both sides first.
    L2Probs,
    /// Cross-entropy against softmax(targets) as a soft label.
    CeSoft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    /// Row-major `out_dim x in_dim`.
    w: Vec<f64>,
    b: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Layer {
        Layer {
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn xavier(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Layer {
        let scale = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Layer {
            w: (0..in_dim * out_dim)
                .map(|_| rng.random_range(-scale..scale))
                .collect(),
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }
}

/// A trainable multi-class classifier over sparse feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub arch: Architecture,
    pub num_features: usize,
    pub num_classes: usize,
    layers: Vec<Layer>,
}

impl Classifier {
    /// Hidden layers get seeded Xavier init; the output layer starts at zero
    /// so a fresh linear model predicts all-zero logits.
    pub fn new(arch: Architecture, num_features: usize, num_classes: usize, seed: u64) -> Classifier {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![num_features];
        if let Architecture::Mlp { hidden } = &arch {
            dims.extend(hidden.iter().copied());
        }
        dims.push(num_classes);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let last = i == dims.len() - 2;
            layers.push(if last {
                Layer::zeros(dims[i], dims[i + 1])
            } else {
                Layer::xavier(dims[i], dims[i + 1], &mut rng)
            });
        }
        Classifier {
            arch,
            num_features,
            num_classes,
            layers,
        }
    }

    /// Activations per layer; the last entry is the logits row. Hidden
    /// layers use tanh.
    fn forward(&self, row: &[(u32, f64)]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = layer.b.clone();
            if li == 0 {
                for &(col, val) in row {
                    let col = col as usize;
                    for (o, out_val) in out.iter_mut().enumerate() {
                        *out_val += layer.w[o * layer.in_dim + col] * val;
                    }
                }
            } else {
                let prev: &Vec<f64> = &acts[li - 1];
                for (o, out_val) in out.iter_mut().enumerate() {
                    let base = o * layer.in_dim;
                    for (i, &p) in prev.iter().enumerate() {
                        *out_val += layer.w[base + i] * p;
                    }
                }
            }
            if li < self.layers.len() - 1 {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Deterministic forward pass over all rows; no softmax applied.
    pub fn predict_logits(&self, features: &FeatureMatrix) -> Result<LogitsMatrix> {
        if features.num_features != self.num_features {
            return Err(Error::ShapeMismatch(format!(
                "features have dim {} but classifier expects {}",
                features.num_features, self.num_features
            )));
        }
        let rows = features
            .rows
            .iter()
            .map(|r| self.forward(r).pop().unwrap())
            .collect();
        Ok(LogitsMatrix { rows })
    }

    fn zero_grads(&self) -> Vec<Layer> {
        self.layers
            .iter()
            .map(|l| Layer::zeros(l.in_dim, l.out_dim))
            .collect()
    }

    /// Accumulates gradients for one example given dL/dlogits.
    fn backward(
        &self,
        row: &[(u32, f64)],
        acts: &[Vec<f64>],
        mut delta: Vec<f64>,
        grads: &mut [Layer],
    ) {
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let grad = &mut grads[li];
            for (o, &d) in delta.iter().enumerate() {
                grad.b[o] += d;
            }
            if li == 0 {
                for &(col, val) in row {
                    let col = col as usize;
                    for (o, &d) in delta.iter().enumerate() {
                        grad.w[o * layer.in_dim + col] += d * val;
                    }
                }
            } else {
                let prev = &acts[li - 1];
                for (o, &d) in delta.iter().enumerate() {
                    let base = o * layer.in_dim;
                    for (i, &p) in prev.iter().enumerate() {
                        grad.w[base + i] += d * p;
                    }
                }
                // propagate through tanh of the previous layer
                let mut next_delta = vec![0.0; layer.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    let base = o * layer.in_dim;
                    for (i, nd) in next_delta.iter_mut().enumerate() {
                        *nd += layer.w[base + i] * d;
                    }
                }
                for (i, nd) in next_delta.iter_mut().enumerate() {
                    *nd *= 1.0 - prev[i] * prev[i];
                }
                delta = next_delta;
            }
        }
    }

    /// Mean loss and parameter gradients over a batch.
    fn batch_loss_grad(
        &self,
        features: &FeatureMatrix,
        batch: &[usize],
        target: &Target,
    ) -> (f64, Vec<Layer>) {
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        for &i in batch {
            let row = &features.rows[i];
            let acts = self.forward(row);
            let logits = acts.last().unwrap();
            let (l, delta) = target.loss_and_logit_grad(logits, i);
            loss += l;
            self.backward(row, &acts, delta, &mut grads);
        }
        let inv = 1.0 / batch.len() as f64;
        loss *= inv;
        for g in &mut grads {
            for w in &mut g.w {
                *w *= inv;
            }
            for b in &mut g.b {
                *b *= inv;
            }
        }
        (loss, grads)
    }

    fn mean_loss(&self, features: &FeatureMatrix, batch: &[usize], target: &Target) -> f64 {
        batch
            .iter()
            .map(|&i| {
                let logits = self.forward(&features.rows[i]).pop().unwrap();
                target.loss_and_logit_grad(&logits, i).0
            })
            .sum::<f64>()
            / batch.len() as f64
    }

    fn run_epochs(
        &mut self,
        features: &FeatureMatrix,
        target: &Target,
        config: &TrainingConfig,
        what: &str,
    ) -> Result<Vec<f64>> {
        config.validate()?;
        let n = features.num_rows();
        if n == 0 {
            return Err(Error::InvalidInput(format!("{what}: empty feature matrix")));
        }
        if features.num_features != self.num_features {
            return Err(Error::ShapeMismatch(format!(
                "{what}: feature dim {} vs classifier {}",
                features.num_features, self.num_features
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut adam: Option<(Vec<Layer>, Vec<Layer>, u64)> = match config.optimizer {
            Optimizer::Adam => Some((self.zero_grads(), self.zero_grads(), 0)),
            Optimizer::Sgd => None,
        };
        let mut epoch_losses = Vec::with_capacity(config.epochs);
        for _epoch in 0..config.epochs {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut seen = 0usize;
            for batch in order.chunks(config.batch_size) {
                let (loss, grads) = self.batch_loss_grad(features, batch, target);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss(format!("{what}: loss {loss}")));
                }
                epoch_loss += loss * batch.len() as f64;
                seen += batch.len();
                self.apply_update(&grads, config, &mut adam);
            }
            epoch_losses.push(epoch_loss / seen as f64);
        }
        Ok(epoch_losses)
    }

    fn apply_update(
        &mut self,
        grads: &[Layer],
        config: &TrainingConfig,
        adam: &mut Option<(Vec<Layer>, Vec<Layer>, u64)>,
    ) {
        let lr = config.learning_rate;
        match adam {
            None => {
                for (layer, g) in self.layers.iter_mut().zip(grads) {
                    for (w, gw) in layer.w.iter_mut().zip(&g.w) {
                        *w -= lr * gw;
                    }
                    for (b, gb) in layer.b.iter_mut().zip(&g.b) {
                        *b -= lr * gb;
                    }
                }
            }
            Some((m, v, t)) => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let bc1 = 1.0 - B1.powi(*t as i32);
                let bc2 = 1.0 - B2.powi(*t as i32);
                for ((layer, g), (ml, vl)) in
                    self.layers.iter_mut().zip(grads).zip(m.iter_mut().zip(v.iter_mut()))
                {
                    for i in 0..layer.w.len() {
                        ml.w[i] = B1 * ml.w[i] + (1.0 - B1) * g.w[i];
                        vl.w[i] = B2 * vl.w[i] + (1.0 - B2) * g.w[i] * g.w[i];
                        layer.w[i] -= lr * (ml.w[i] / bc1) / ((vl.w[i] / bc2).sqrt() + EPS);
                    }
                    for i in 0..layer.b.len() {
                        ml.b[i] = B1 * ml.b[i] + (1.0 - B1) * g.b[i];
                        vl.b[i] = B2 * vl.b[i] + (1.0 - B2) * g.b[i] * g.b[i];
                        layer.b[i] -= lr * (ml.b[i] / bc1) / ((vl.b[i] / bc2).sqrt() + EPS);
                    }
                }
            }
        }
    }

    /// Mini-batch gradient descent on the cross-entropy loss for
    /// `config.epochs` epochs with a seeded shuffle order.
    pub fn train_supervised(
        &mut self,
        features: &FeatureMatrix,
        config: &TrainingConfig,
    ) -> Result<LossRecord> {
        let labels = features
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("train_supervised requires labels".into()))?;
        let target = Target::Hard(labels);
        let epoch_losses = self.run_epochs(features, &target, config, "train")?;
        Ok(LossRecord {
            epoch_losses,
            dev_f1: None,
        })
    }

    /// Gradient steps on the chosen distillation loss toward `targets`.
    /// Returns the per-epoch mean loss.
    pub fn distill(
        &mut self,
        features: &FeatureMatrix,
        targets: &LogitsMatrix,
        mode: DistillMode,
        config: &TrainingConfig,
    ) -> Result<Vec<f64>> {
        if targets.num_rows() != features.num_rows() {
            return Err(Error::ShapeMismatch(format!(
                "targets have {} rows, features {}",
                targets.num_rows(),
                features.num_rows()
            )));
        }
        let target = Target::Soft {
            rows: &targets.rows,
            mode,
        };
        self.run_epochs(features, &target, config, "distill")
    }

    /// Mean distillation loss without updating parameters.
    pub fn distill_loss(
        &self,
        features: &FeatureMatrix,
        targets: &LogitsMatrix,
        mode: DistillMode,
    ) -> f64 {
        let target = Target::Soft {
            rows: &targets.rows,
            mode,
        };
        let all: Vec<usize> = (0..features.num_rows()).collect();
        self.mean_loss(features, &all, &target)
    }

    /// Full-batch mean loss and flat parameter gradient for an objective;
    /// the surface gradient-checking oracles work against.
    pub fn loss_and_gradient(
        &self,
        features: &FeatureMatrix,
        objective: LossObjective<'_>,
    ) -> Result<(f64, Vec<f64>)> {
        let target = match objective {
            LossObjective::Supervised => Target::Hard(
                features
                    .labels
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("supervised objective requires labels".into()))?,
            ),
            LossObjective::Distill { targets, mode } => Target::Soft {
                rows: &targets.rows,
                mode,
            },
        };
        let batch: Vec<usize> = (0..features.num_rows()).collect();
        let (loss, grads) = self.batch_loss_grad(features, &batch, &target);
        let mut flat = Vec::new();
        for g in &grads {
            flat.extend_from_slice(&g.w);
            flat.extend_from_slice(&g.b);
        }
        Ok((loss, flat))
    }

    /// Full-batch mean loss only.
    pub fn objective_loss(&self, features: &FeatureMatrix, objective: LossObjective<'_>) -> Result<f64> {
        self.loss_and_gradient(features, objective).map(|(l, _)| l)
    }

    /// Predicted class indices (argmax of logits).
    pub fn predict_classes(&self, features: &FeatureMatrix) -> Result<Vec<usize>> {
        let logits = self.predict_logits(features)?;
        Ok(logits
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect())
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        let mut cursor = 0;
        for l in &mut self.layers {
            let wlen = l.w.len();
            l.w.copy_from_slice(&params[cursor..cursor + wlen]);
            cursor += wlen;
            let blen = l.b.len();
            l.b.copy_from_slice(&params[cursor..cursor + blen]);
            cursor += blen;
        }
        assert_eq!(cursor, params.len());
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Classifier> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Objective selector for [`Classifier::loss_and_gradient`].
pub enum LossObjective<'a> {
    /// Cross-entropy against the hard labels carried by the feature matrix.
    Supervised,
    /// Distillation against teacher logit (or probability) rows.
    Distill {
        targets: &'a LogitsMatrix,
        mode: DistillMode,
    },
}

/// Per-example training target.
enum Target<'a> {
    Hard(&'a [usize]),
    Soft {
        rows: &'a [Vec<f64>],
        mode: DistillMode,
    },
}

impl Target<'_> {
    /// Loss value and dL/dlogits for example `i`.
    fn loss_and_logit_grad(&self, logits: &[f64], i: usize) -> (f64, Vec<f64>) {
        match self {
            Target::Hard(labels) => {
                let q = softmax(logits, 1.0);
                let y = labels[i];
                let loss = cross_entropy(&q, y);
                let mut delta = q;
                delta[y] -= 1.0;
                (loss, delta)
            }
            Target::Soft { rows, mode } => {
                let t = &rows[i];
                match mode {
                    DistillMode::Kl { tau } => {
                        let p = softmax(t, *tau);
                        let q = softmax(logits, *tau);
                        let loss = tau * tau * kl_divergence(&p, &q);
                        let delta = q.iter().zip(&p).map(|(&qi, &pi)| tau * (qi - pi)).collect();
                        (loss, delta)
                    }
                    DistillMode::KlProbs => {
                        let q = softmax(logits, 1.0);
                        let loss = kl_divergence(t, &q);
                        let delta = q.iter().zip(t).map(|(&qi, &pi)| qi - pi).collect();
                        (loss, delta)
                    }
                    DistillMode::L2 => {
                        let loss = l2_logit_loss(logits, t);
                        let delta = logits.iter().zip(t).map(|(&z, &ti)| 2.0 * (z - ti)).collect();
                        (loss, delta)
                    }
                    DistillMode::L2Probs => {
                        let p = softmax(t, 1.0);
                        let q = softmax(logits, 1.0);
                        let d: Vec<f64> = q.iter().zip(&p).map(|(&qi, &pi)| qi - pi).collect();
                        let loss: f64 = d.iter().map(|x| x * x).sum();
                        // chain rule through softmax: J = diag(q) - q q^T
                        let dot: f64 = d.iter().zip(&q).map(|(&di, &qi)| di * qi).sum();
                        let delta = q.iter().zip(&d).map(|(&qi, &di)| 2.0 * qi * (di - dot)).collect();
                        (loss, delta)
                    }
                    DistillMode::CeSoft => {
                        let p = softmax(t, 1.0);
                        let q = softmax(logits, 1.0);
                        let loss: f64 = p
                            .iter()
                            .zip(&q)
                            .map(|(&pi, &qi)| -pi * qi.max(1e-12).ln())
                            .sum();
                        let delta = q.iter().zip(&p).map(|(&qi, &pi)| qi - pi).collect();
                        (loss, delta)
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> FeatureMatrix {
        let num_features = rows[0].len();
        FeatureMatrix {
            rows: rows
                .into_iter()
                .map(|r| {
                    r.into_iter()
                        .enumerate()
                        .filter(|(_, v)| *v != 0.0)
                        .map(|(i, v)| (i as u32, v))
                        .collect()
                })
                .collect(),
            num_features,
            labels,
        }
    }

    #[test]
    fn fresh_linear_model_predicts_zero_logits() {
        let clf = Classifier::new(Architecture::SoftmaxLinear, 4, 3, 0);
        let f = dense(vec![vec![1.0, 2.0, 0.0, 1.0]], None);
        let logits = clf.predict_logits(&f).unwrap();
        assert_eq!(logits.rows[0], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn hand_set_linear_weights_select_column() {
        // Oracle: 2x2 linear weights, one-hot input -> logits = selected column.
        let mut clf = Classifier::new(Architecture::SoftmaxLinear, 2, 2, 0);
        // w = [[1, 2], [3, 4]] row-major (out x in), b = 0
        clf.set_params_flat(&[1.0, 2.0, 3.0, 4.0, 0.0, 0.0]);
        let f = dense(vec![vec![0.0, 1.0]], None);
        let logits = clf.predict_logits(&f).unwrap();
        assert_eq!(logits.rows[0], vec![2.0, 4.0]);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let clf = Classifier::new(Architecture::SoftmaxLinear, 4, 2, 0);
        let f = dense(vec![vec![1.0, 0.0]], None);
        assert!(clf.predict_logits(&f).is_err());
    }

    #[test]
    fn train_on_separable_data_converges() {
        // 20 linearly separable points in 2D.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            rows.push(vec![1.0 + 0.1 * i as f64, 0.0]);
            labels.push(0);
            rows.push(vec![0.0, 1.0 + 0.1 * i as f64]);
            labels.push(1);
        }
        let f = dense(rows, Some(labels));
        let mut clf = Classifier::new(Architecture::SoftmaxLinear, 2, 2, 0);
        let config = TrainingConfig {
            learning_rate: 1.0,
            epochs: 50,
            batch_size: 4,
            seed: 1,
            optimizer: Optimizer::Sgd,
        };
        let record = clf.train_supervised(&f, &config).unwrap();
        assert_eq!(record.epoch_losses.len(), 50);
        assert!(*record.epoch_losses.last().unwrap() < 0.1);
        assert_eq!(record.l_min(), record.epoch_losses.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn zero_epochs_rejected() {
        let f = dense(vec![vec![1.0]], Some(vec![0]));
        let mut clf = Classifier::new(Architecture::SoftmaxLinear, 1, 2, 0);
        let config = TrainingConfig {
            epochs: 0,
            ..TrainingConfig::default()
        };
        assert!(clf.train_supervised(&f, &config).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let f = dense(
            vec![vec![1.0, 0.5], vec![0.2, 1.0], vec![0.9, 0.1]],
            Some(vec![0, 1, 0]),
        );
        let run = || {
            let mut clf = Classifier::new(
                Architecture::Mlp { hidden: vec![8] },
                2,
                2,
                3,
            );
            clf.train_supervised(&f, &TrainingConfig::default()).unwrap();
            clf.params_flat()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn self_distillation_is_fixed_point() {
        let f = dense(vec![vec![1.0, 0.3], vec![0.2, 0.8]], None);
        for mode in [DistillMode::Kl { tau: 1.0 }, DistillMode::L2] {
            let mut clf = Classifier::new(Architecture::Mlp { hidden: vec![4] }, 2, 3, 7);
            // give the output layer some non-trivial values first
            let mut p = clf.params_flat();
            for (i, v) in p.iter_mut().enumerate() {
                *v += 0.01 * (i as f64 % 5.0);
            }
            clf.set_params_flat(&p);
            let own = clf.predict_logits(&f).unwrap();
            let before = clf.params_flat();
            let config = TrainingConfig {
                epochs: 1,
                batch_size: 2,
                ..TrainingConfig::default()
            };
            clf.distill(&f, &own, mode, &config).unwrap();
            let after = clf.params_flat();
            let delta: f64 = before
                .iter()
                .zip(&after)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(delta < 1e-8, "mode {mode:?}: delta {delta}");
        }
    }

    #[test]
    fn one_l2_step_matches_hand_gradient() {
        // Linear model, one example x = [1, 2], current params zero so
        // z = [0, 0]; target t = [1, -1].
        // L = ||z - t||^2, dL/dz = 2(z - t) = [-2, 2].
        // dL/dW[o][i] = dL/dz_o * x_i -> W grad = [[-2,-4],[2,4]], b grad = [-2,2].
        // After one SGD step at lr = 0.1: W = [[0.2,0.4],[-0.2,-0.4]], b = [0.2,-0.2].
        let mut clf = Classifier::new(Architecture::SoftmaxLinear, 2, 2, 0);
        let f = dense(vec![vec![1.0, 2.0]], None);
        let targets = LogitsMatrix {
            rows: vec![vec![1.0, -1.0]],
        };
        let config = TrainingConfig {
            learning_rate: 0.1,
            epochs: 1,
            batch_size: 1,
            seed: 0,
            optimizer: Optimizer::Sgd,
        };
        clf.distill(&f, &targets, DistillMode::L2, &config).unwrap();
        let p = clf.params_flat();
        let expected = [0.2, 0.4, -0.2, -0.4, 0.2, -0.2];
        for (a, b) in p.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{p:?}");
        }
    }

    /// Central finite differences over all parameters; the shared oracle for
    /// gradient correctness.
    fn finite_diff_check(arch: Architecture, target_of: impl Fn(usize) -> TargetSpec, seed: u64) {
        let num_features = 3;
        let num_classes = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..num_features).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let f = dense(rows, None);
        let mut clf = Classifier::new(arch, num_features, num_classes, seed);
        let mut p = clf.params_flat();
        for v in &mut p {
            *v += rng.random_range(-0.5..0.5);
        }
        clf.set_params_flat(&p);

        let spec = target_of(num_classes);
        let (labels, soft_rows): (Vec<usize>, Vec<Vec<f64>>) = match &spec {
            TargetSpec::Hard => (
                (0..4).map(|_| rng.random_range(0..num_classes)).collect(),
                vec![],
            ),
            TargetSpec::Soft(mode) => (
                vec![],
                (0..4)
                    .map(|_| {
                        let row: Vec<f64> =
                            (0..num_classes).map(|_| rng.random_range(-1.0..1.0)).collect();
                        // this mode consumes probability rows, not logits
                        if *mode == DistillMode::KlProbs {
                            softmax(&row, 1.0)
                        } else {
                            row
                        }
                    })
                    .collect(),
            ),
        };
        let target = match &spec {
            TargetSpec::Hard => Target::Hard(&labels),
            TargetSpec::Soft(mode) => Target::Soft {
                rows: &soft_rows,
                mode: *mode,
            },
        };
        let batch: Vec<usize> = (0..4).collect();
        let (_, grads) = clf.batch_loss_grad(&f, &batch, &target);
        let mut analytic = Vec::new();
        for g in &grads {
            analytic.extend_from_slice(&g.w);
            analytic.extend_from_slice(&g.b);
        }

        let h = 1e-5;
        let base = clf.params_flat();
        for (j, &g) in analytic.iter().enumerate() {
            let mut plus = base.clone();
            plus[j] += h;
            let mut minus = base.clone();
            minus[j] -= h;
            let mut m = clf.clone();
            m.set_params_flat(&plus);
            let lp = m.mean_loss(&f, &batch, &target);
            m.set_params_flat(&minus);
            let lm = m.mean_loss(&f, &batch, &target);
            let numeric = (lp - lm) / (2.0 * h);
            let denom = g.abs().max(numeric.abs()).max(1e-6);
            let rel = (g - numeric).abs() / denom;
            assert!(rel < 1e-4, "param {j}: analytic {g} numeric {numeric}");
        }
    }

    enum TargetSpec {
        Hard,
        Soft(DistillMode),
    }

    #[test]
    fn gradients_match_finite_differences_all_modes() {
        for seed in 0..3 {
            for arch in [
                Architecture::SoftmaxLinear,
                Architecture::Mlp { hidden: vec![5] },
            ] {
                finite_diff_check(arch.clone(), |_| TargetSpec::Hard, seed);
                finite_diff_check(arch.clone(), |_| TargetSpec::Soft(DistillMode::Kl { tau: 2.0 }), seed);
                finite_diff_check(arch.clone(), |_| TargetSpec::Soft(DistillMode::L2), seed);
                finite_diff_check(arch.clone(), |_| TargetSpec::Soft(DistillMode::CeSoft), seed);
                finite_diff_check(arch.clone(), |_| TargetSpec::Soft(DistillMode::L2Probs), seed);
                finite_diff_check(arch.clone(), |_| TargetSpec::Soft(DistillMode::KlProbs), seed);
            }
        }
    }

    #[test]
    fn kl_approaches_scaled_l2_at_high_temperature() {
        // tau^2 KL(softmax(a/tau), softmax(b/tau)) -> ||a-b||^2 / (2C)
        // for zero-mean rows as tau -> infinity.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tau = 100.0;
        for _ in 0..200 {
            let c = rng.random_range(2..=10);
            let center = |mut v: Vec<f64>| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                for x in &mut v {
                    *x -= m;
                }
                v
            };
            let a = center((0..c).map(|_| rng.random_range(-1.0..1.0)).collect());
            let b = center((0..c).map(|_| rng.random_range(-1.0..1.0)).collect());
            let kl = tau * tau * kl_divergence(&softmax(&a, tau), &softmax(&b, tau));
            let l2 = l2_logit_loss(&a, &b) / (2.0 * c as f64);
            if l2 > 1e-6 {
                assert!((kl - l2).abs() / l2 < 0.05, "kl {kl} vs l2 {l2}");
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let clf = Classifier::new(Architecture::Mlp { hidden: vec![4, 3] }, 6, 2, 5);
        let json = clf.to_json().unwrap();
        let back = Classifier::from_json(&json).unwrap();
        assert_eq!(clf, back);
    }
}
