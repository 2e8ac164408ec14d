use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Optimizer};
use super::graph::Graph;
use super::loss::{batch_tokens, example_objective, example_terms, total_loss, Example, LossReport};
use super::mat::Mat;
use super::model::{Forward, Model, Trainable};
use super::NeuralError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Pretrain,
    SideTune,
}

/// Inverse square-root schedule with linear warm-up; `step` counts from 1.
pub fn learning_rate(base: f64, warmup: usize, step: usize) -> f64 {
    let s = step.max(1) as f64;
    let w = warmup.max(1) as f64;
    base * s.powf(-0.5).min(s * w.powf(-1.5))
}

/// Gradient of the batch objective for every parameter (zero when frozen).
pub fn batch_gradient(
    model: &Model,
    batch: &[Example],
    anchors: Option<&BTreeMap<u32, Vec<f64>>>,
    trainable: Trainable,
) -> Result<(LossReport, Vec<Mat>), NeuralError> {
    if batch.is_empty() {
        return Err(NeuralError::Argument("empty batch".into()));
    }
    let tokens = batch_tokens(batch);
    let mut grads = model.params.zeros_like();
    let mut report = LossReport::default();
    for ex in batch {
        let mut g = Graph::new();
        let mut fw = Forward::new(&mut g, model, trainable);
        let terms = example_terms(&mut fw, ex, anchors)?;
        let root = example_objective(&mut fw, &terms, tokens);
        report.ce += g.value(terms.ce_sum).data[0];
        report.est += terms.est.map_or(0.0, |n| g.value(n).data[0]);
        report.pnm += terms.pnm.map_or(0.0, |n| g.value(n).data[0]);
        for (i, d) in g.backward(root) {
            grads[i].add_assign(&d);
        }
    }
    report.ce /= tokens as f64;
    let c = &model.config;
    report.total = c.w_ce * report.ce + c.w_est * report.est + c.w_pnm * report.pnm;
    Ok((report, grads))
}

struct AdamState {
    m: Vec<Mat>,
    v: Vec<Mat>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Objective of every step's batch, before that step's update.
    pub history: Vec<LossReport>,
}

/// Trains for `config.steps` steps over shuffled passes of `corpus`.
///
/// `Pretrain` starts from `init` or a fresh model; `SideTune` requires a
/// pre-trained model and updates only the side network, the gate and (when
/// `tune_decoder`) the decoder. Shape fields of `config` must match `init`.
pub fn train(
    corpus: &[Example],
    config: &ModelConfig,
    mode: TrainMode,
    init: Option<Model>,
    anchors: Option<&BTreeMap<u32, Vec<f64>>>,
) -> Result<TrainOutcome, NeuralError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(NeuralError::Argument("empty training corpus".into()));
    }
    let mut model = match (mode, init) {
        (_, Some(mut m)) => {
            let same_shape = |a: &ModelConfig, b: &ModelConfig| {
                (a.layers, a.heads, a.d_model, a.d_ffn, a.src_vocab, a.tgt_vocab, a.side_scale)
                    == (b.layers, b.heads, b.d_model, b.d_ffn, b.src_vocab, b.tgt_vocab, b.side_scale)
            };
            if !same_shape(&m.config, config) {
                return Err(NeuralError::Config("config shape differs from the initial model".into()));
            }
            m.config = config.clone();
            m
        }
        (TrainMode::Pretrain, None) => Model::new(config.clone())?,
        (TrainMode::SideTune, None) => {
            return Err(NeuralError::State("side tuning needs a pre-trained model".into()))
        }
    };
    let trainable = model.trainable(mode == TrainMode::SideTune);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7a11);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut cursor = order.len();
    let mut adam = AdamState {
        m: model.params.zeros_like(),
        v: model.params.zeros_like(),
    };
    let mut history = Vec::with_capacity(config.steps);
    let mut batch = Vec::with_capacity(config.batch_size);
    for step in 1..=config.steps {
        batch.clear();
        while batch.len() < config.batch_size.min(corpus.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(corpus[order[cursor]].clone());
            cursor += 1;
        }
        let (report, mut grads) = batch_gradient(&model, &batch, anchors, trainable)?;
        if !report.total.is_finite() {
            return Err(NeuralError::Numeric(format!("non-finite loss at step {step}")));
        }
        history.push(report);
        if config.clip_norm > 0.0 {
            let norm = grads.iter().map(Mat::sum_sq).sum::<f64>().sqrt();
            if norm > config.clip_norm {
                let s = config.clip_norm / norm;
                grads.iter_mut().for_each(|g| g.data.iter_mut().for_each(|x| *x *= s));
            }
        }
        let lr = learning_rate(config.base_lr, config.warmup_steps, step);
        for (i, g) in grads.iter().enumerate() {
            if !trainable.contains(model.params.group(i)) {
                continue;
            }
            let p = model.params.get_mut(i);
            match config.optimizer {
                Optimizer::Sgd => {
                    for (x, d) in p.data.iter_mut().zip(&g.data) {
                        *x -= lr * d;
                    }
                }
                Optimizer::Adam => {
                    let (b1, b2, eps) = (0.9, 0.98, 1e-9);
                    let (c1, c2) = (1.0 - b1f(b1, step), 1.0 - b1f(b2, step));
                    let (m, v) = (&mut adam.m[i].data, &mut adam.v[i].data);
                    for (j, (x, d)) in p.data.iter_mut().zip(&g.data).enumerate() {
                        m[j] = b1 * m[j] + (1.0 - b1) * d;
                        v[j] = b2 * v[j] + (1.0 - b2) * d * d;
                        *x -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
    Ok(TrainOutcome { model, history })
}

fn b1f(beta: f64, step: usize) -> f64 {
    beta.powi(step as i32)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
}

/// Floor on the denominator of the relative error, so coordinates whose
/// gradient is pure rounding noise do not dominate.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Compares analytic gradients of the batch objective with central finite
/// differences on `samples` coordinates drawn from trainable parameters.
pub fn grad_check(
    model: &Model,
    batch: &[Example],
    anchors: Option<&BTreeMap<u32, Vec<f64>>>,
    trainable: Trainable,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport, NeuralError> {
    let (_, grads) = batch_gradient(model, batch, anchors, trainable)?;
    let coords: Vec<(usize, usize)> = (0..model.params.len())
        .filter(|&i| trainable.contains(model.params.group(i)))
        .flat_map(|i| (0..model.params.get(i).data.len()).map(move |j| (i, j)))
        .collect();
    if coords.is_empty() {
        return Err(NeuralError::Argument("no trainable coordinates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<(usize, usize)> = if coords.len() <= samples {
        coords
    } else {
        (0..samples).map(|_| coords[rng.gen_range(0..coords.len())]).collect()
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for &(i, j) in &picked {
        let orig = probe.params.get(i).data[j];
        probe.params.get_mut(i).data[j] = orig + epsilon;
        let up = total_loss(&probe, batch, anchors)?.total;
        probe.params.get_mut(i).data[j] = orig - epsilon;
        let down = total_loss(&probe, batch, anchors)?.total;
        probe.params.get_mut(i).data[j] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grads[i].data[j];
        let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        coordinates: picked.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subword::SubwordSequence;

    #[test]
    fn schedule_shape() {
        let lr = |s| learning_rate(1.0, 4000, s);
        let peak = (1..=20_000).max_by(|&a, &b| lr(a).total_cmp(&lr(b))).unwrap();
        assert_eq!(peak, 4000);
        assert!((lr(8000) / lr(4000) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(lr(1) < lr(2));
    }

    fn copy_task(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let len = rng.gen_range(2..6);
                let ids: Vec<u32> = (0..len).map(|_| rng.gen_range(4..12)).collect();
                Example::new(SubwordSequence::plain(ids.clone()), SubwordSequence::plain(ids))
            })
            .collect()
    }

    #[test]
    fn side_tune_needs_model() {
        let data = copy_task(4, 0);
        let c = ModelConfig::toy(12, 12);
        assert!(matches!(
            train(&data, &c, TrainMode::SideTune, None, None),
            Err(NeuralError::State(_))
        ));
    }

    #[test]
    fn side_tune_freezes_backbone() {
        let data = copy_task(16, 1);
        let mut c = ModelConfig::toy(12, 12);
        c.steps = 3;
        let pre = train(&data, &c, TrainMode::Pretrain, None, None).unwrap().model;
        c.use_side = true;
        c.tune_decoder = false;
        let tuned = train(&data, &c, TrainMode::SideTune, Some(pre.clone()), None).unwrap().model;
        let mut side_changed = false;
        for i in 0..pre.params.len() {
            let same = pre.params.get(i).data.iter().zip(&tuned.params.get(i).data).all(|(a, b)| a.to_bits() == b.to_bits());
            match pre.params.group(i) {
                crate::neural::Group::Side => side_changed |= !same,
                _ => assert!(same, "{} changed", pre.params.name(i)),
            }
        }
        assert!(side_changed);
    }

    #[test]
    fn loss_decreases_on_copy_task() {
        let data = copy_task(32, 2);
        let mut c = ModelConfig::toy(12, 12);
        c.steps = 60;
        c.warmup_steps = 20;
        let out = train(&data, &c, TrainMode::Pretrain, None, None).unwrap();
        let before = total_loss(&Model::new(c.clone()).unwrap(), &data, None).unwrap().total;
        let after = total_loss(&out.model, &data, None).unwrap().total;
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn grad_check_small_model() {
        let data = copy_task(2, 3);
        let mut c = ModelConfig::toy(12, 12);
        c.use_side = true;
        let m = Model::new(c).unwrap();
        let r = grad_check(&m, &data, None, Trainable::ALL, 1e-5, 40, 0).unwrap();
        assert_eq!(r.coordinates, 40);
        assert!(r.max_rel_error < 1e-4, "{}", r.max_rel_error);
    }
}
