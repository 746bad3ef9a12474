use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};

use super::adam::Adam;
use super::gcn::{argmax, cross_entropy, GcnModel, Gradients};
use super::matrix::Matrix;

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Momentum of the batch-norm running statistics.
    pub bn_decay: f64,
    pub max_epochs: usize,
    /// Epochs without a new best test loss before training stops.
    pub patience: usize,
    pub seed: u64,
    /// Number of data-parallel shards per mini-batch. `1` trains
    /// sequentially; larger values normalise each shard separately and
    /// average the shard gradients in shard order.
    pub shards: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 32,
            bn_decay: 0.9,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            shards: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.bn_decay)
            && self.bn_decay > 0.0
            && self.max_epochs > 0
            && self.patience > 0
            && self.shards > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the lowest test loss.
    pub model: GcnModel,
    pub curves: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Inference-mode loss and accuracy. Empty input gives `NaN` metrics.
pub fn evaluate(model: &GcnModel, examples: &[Example]) -> Result<Metrics> {
    if examples.is_empty() {
        return Ok(Metrics {
            loss: f64::NAN,
            accuracy: f64::NAN,
        });
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in examples.chunks(EVAL_CHUNK) {
        let xs: Vec<&[u8]> = chunk.iter().map(|e| e.x.as_slice()).collect();
        let labels: Vec<usize> = chunk.iter().map(|e| e.label).collect();
        let probs = model.infer(&xs)?;
        loss += cross_entropy(&probs, &labels) * chunk.len() as f64;
        correct += (0..chunk.len())
            .filter(|&r| argmax(probs.row(r)) == labels[r])
            .count();
    }
    Ok(Metrics {
        loss: loss / examples.len() as f64,
        accuracy: correct as f64 / examples.len() as f64,
    })
}

/// Fraction of examples whose label is among the `k` most probable nodes
/// (ties toward lower ids).
pub fn top_k_accuracy(model: &GcnModel, examples: &[Example], k: usize) -> Result<f64> {
    let mut hits = 0usize;
    for chunk in examples.chunks(EVAL_CHUNK) {
        let xs: Vec<&[u8]> = chunk.iter().map(|e| e.x.as_slice()).collect();
        let probs = model.infer(&xs)?;
        for (r, e) in chunk.iter().enumerate() {
            let row = probs.row(r);
            let p = row[e.label];
            let rank = row
                .iter()
                .enumerate()
                .filter(|&(j, &q)| q > p || (q == p && j < e.label))
                .count();
            if rank < k {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / examples.len().max(1) as f64)
}

pub fn train_on_dataset(model: GcnModel, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if model.fingerprint() != ds.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: model.fingerprint().to_string(),
            found: ds.fingerprint.clone(),
        });
    }
    train(model, ds.train(), ds.test(), cfg)
}

/// Mini-batch Adam with early stopping on the test loss (on the training
/// loss when the test set is empty).
pub fn train(
    mut model: GcnModel,
    train_set: &[Example],
    test_set: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    model.set_bn_decay(cfg.bn_decay);
    let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(cfg.lr, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut curves = Vec::new();
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[u8]> = batch.iter().map(|&i| train_set[i].x.as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set[i].label).collect();
            let mask = model.sample_mask(batch.len(), &mut rng);
            let grads = batch_gradients(&mut model, &xs, &labels, &mask, cfg.shards)?;
            adam.step(model.params_mut(), &grads.tensors);
        }

        let tr = evaluate(&model, train_set)?;
        let te = evaluate(&model, test_set)?;
        curves.push(EpochRecord {
            epoch,
            train_loss: tr.loss,
            test_loss: te.loss,
            train_acc: tr.accuracy,
            test_acc: te.accuracy,
        });
        let monitored = if test_set.is_empty() { tr.loss } else { te.loss };
        log::debug!(
            "epoch {epoch}: train loss {:.4} acc {:.3}, test loss {:.4} acc {:.3}",
            tr.loss,
            tr.accuracy,
            te.loss,
            te.accuracy
        );
        if monitored < best_loss {
            best_loss = monitored;
            best = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best,
        curves,
        best_epoch,
        stopped_early,
    })
}

/// Gradients of one mini-batch; updates the running statistics.
fn batch_gradients(
    model: &mut GcnModel,
    xs: &[&[u8]],
    labels: &[usize],
    mask: &Matrix,
    shards: usize,
) -> Result<Gradients> {
    if shards <= 1 || xs.len() < 2 {
        let cache = model.forward_train(xs, mask)?;
        let grads = model.backward(&cache, labels)?;
        model.update_running_stats(&cache);
        return Ok(grads);
    }
    let per = xs.len().div_ceil(shards);
    let width = model.mask_width();
    let frozen: &GcnModel = model;
    let parts = (0..xs.len().div_ceil(per))
        .into_par_iter()
        .map(|k| {
            let lo = k * per;
            let hi = (lo + per).min(xs.len());
            let rows = mask.as_slice()[lo * width..hi * width].to_vec();
            let shard_mask = Matrix::from_vec(hi - lo, width, rows);
            let cache = frozen.forward_train(&xs[lo..hi], &shard_mask)?;
            let grads = frozen.backward(&cache, &labels[lo..hi])?;
            Ok((hi - lo, cache, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Gradients::zeros_like(model);
    for (len, cache, grads) in &parts {
        total.add_scaled(grads, *len as f64 / xs.len() as f64);
        model.update_running_stats(cache);
    }
    Ok(total)
}

/// Exponential smoothing `s_t = mu * s_{t-1} + (1 - mu) * v_t`, seeded
/// with the first value.
pub fn smooth(values: &[f64], mu: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut s = match values.first() {
        Some(&v) => v,
        None => return out,
    };
    for &v in values {
        s = mu * s + (1.0 - mu) * v;
        out.push(s);
    }
    out
}

/// Raw and smoothed learning curves as CSV.
pub fn curves_csv(curves: &[EpochRecord], mu: f64) -> String {
    let col = |f: fn(&EpochRecord) -> f64| smooth(&curves.iter().map(f).collect::<Vec<_>>(), mu);
    let s_train_loss = col(|r| r.train_loss);
    let s_test_loss = col(|r| r.test_loss);
    let s_train_acc = col(|r| r.train_acc);
    let s_test_acc = col(|r| r.test_acc);
    let mut out = String::from(
        "epoch,train_loss,test_loss,train_acc,test_acc,\
         train_loss_smooth,test_loss_smooth,train_acc_smooth,test_acc_smooth\n",
    );
    for (i, r) in curves.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.test_loss,
            r.train_acc,
            r.test_acc,
            s_train_loss[i],
            s_test_loss[i],
            s_train_acc[i],
            s_test_acc[i]
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::encode_instance;
    use crate::graph::fixtures::*;
    use crate::graph::Instance;
    use crate::nn::gcn::ModelConfig;

    fn memorizable() -> Vec<Example> {
        let cases = [
            (3, 1, vec![0, 6], 2),
            (0, 5, vec![], 6),
            (1, 4, vec![], 4),
            (2, 4, vec![], 3),
            (4, 3, vec![], 3),
            (5, 6, vec![], 6),
            (6, 2, vec![], 2),
            (1, 6, vec![3], 0),
            (5, 0, vec![], 6),
            (3, 6, vec![], 2),
        ];
        cases
            .into_iter()
            .enumerate()
            .map(|(root, (s, d, m, t))| Example {
                x: encode_instance(7, &Instance::new(7, s, d, m).unwrap()),
                label: t,
                root,
            })
            .collect()
    }

    #[test]
    fn memorizes_ten_examples() {
        let g = seven();
        let model = GcnModel::new(&g, &ModelConfig::default(), 1).unwrap();
        let data = memorizable();
        let cfg = TrainConfig {
            lr: 1e-2,
            batch_size: 10,
            max_epochs: 300,
            patience: 300,
            ..TrainConfig::default()
        };
        let out = train(model, &data, &[], &cfg).unwrap();
        assert_eq!(evaluate(&out.model, &data).unwrap().accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let g = seven();
        let data = memorizable();
        let cfg = TrainConfig {
            lr: 1e-3,
            batch_size: 4,
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let run = || {
            let model = GcnModel::new(&g, &ModelConfig::default(), 3).unwrap();
            train(model, &data[..7], &data[7..], &cfg).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.model, b.model);
        assert_eq!(a.curves, b.curves);
    }

    #[test]
    fn sharded_training_is_deterministic() {
        let g = seven();
        let data = memorizable();
        let cfg = TrainConfig {
            lr: 1e-3,
            batch_size: 8,
            max_epochs: 3,
            shards: 2,
            ..TrainConfig::default()
        };
        let run = || {
            let model = GcnModel::new(&g, &ModelConfig::default(), 3).unwrap();
            train(model, &data, &data[..3], &cfg).unwrap().model
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn early_stopping_keeps_the_best_snapshot() {
        let g = seven();
        let data = memorizable();
        let cfg = TrainConfig {
            lr: 5e-2,
            batch_size: 2,
            max_epochs: 60,
            patience: 3,
            ..TrainConfig::default()
        };
        let model = GcnModel::new(&g, &ModelConfig::default(), 5).unwrap();
        // labels of the held-out half contradict the training half
        let mut test: Vec<Example> = data[..5].to_vec();
        for e in &mut test {
            e.label = (e.label + 3) % 7;
        }
        let out = train(model, &data[..5], &test, &cfg).unwrap();
        let best = out
            .curves
            .iter()
            .min_by(|a, b| a.test_loss.total_cmp(&b.test_loss))
            .unwrap();
        assert_eq!(best.epoch, out.best_epoch);
        let again = evaluate(&out.model, &test).unwrap();
        assert!((again.loss - best.test_loss).abs() < 1e-12);
        assert!(out.stopped_early);
    }

    #[test]
    fn top_k_and_smoothing() {
        let g = seven();
        let model = GcnModel::zeroed(&g, &ModelConfig::default()).unwrap();
        let data = memorizable();
        // uniform output: rank of label j is j
        let expected = data.iter().filter(|e| e.label < 3).count() as f64 / data.len() as f64;
        assert_eq!(top_k_accuracy(&model, &data, 3).unwrap(), expected);
        assert_eq!(top_k_accuracy(&model, &data, 7).unwrap(), 1.0);
        let s = smooth(&[1.0, 0.0, 0.0], 0.8);
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!((s[1] - 0.8).abs() < 1e-15);
        assert!((s[2] - 0.64).abs() < 1e-15);
        assert!(smooth(&[], 0.8).is_empty());
    }

    #[test]
    fn bad_inputs() {
        let g = seven();
        let model = GcnModel::new(&g, &ModelConfig::default(), 0).unwrap();
        assert!(matches!(
            train(model.clone(), &[], &[], &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(model, &memorizable(), &[], &cfg), Err(Error::Config(_))));
    }
}
