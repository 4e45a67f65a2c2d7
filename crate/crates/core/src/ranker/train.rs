//! Cross-entropy training of the mapping network and classifier by
//! per-sample SGD, plus a finite-difference gradient checker.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{log_sum_exp, softmax, Params, RankerModel, CLASSES};
use super::{EmbeddingTriple, RankerError};
use crate::label::PairLabel;
use crate::oracle::Answer;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub triple: EmbeddingTriple,
    pub answer: Answer,
    pub label: PairLabel,
}

impl TrainSample {
    /// Four-way class: supportive pairs first, then the two unsupportive ones.
    pub fn class(&self) -> usize {
        class_index(self.answer, self.label)
    }
}

pub fn class_index(answer: Answer, label: PairLabel) -> usize {
    match (answer, label) {
        (Answer::Yes, PairLabel::Real) => 0,
        (Answer::No, PairLabel::Fake) => 1,
        (Answer::No, PairLabel::Real) => 2,
        (Answer::Yes, PairLabel::Fake) => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 30,
            shuffle_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: RankerModel,
    /// Mean per-sample loss of each epoch, measured before each step.
    pub loss_trace: Vec<f64>,
}

/// Loss `-log p[class]` and its gradient with respect to every parameter.
pub fn loss_and_gradient(model: &RankerModel, sample: &TrainSample) -> Result<(f64, Params), RankerError> {
    let fwd = model.forward(&sample.triple)?;
    let class = sample.class();
    let loss = log_sum_exp(&fwd.logits) - fwd.logits[class];

    let dim = model.dim();
    let hidden = model.hidden();
    let p = model.params();
    let mut g = Params::zeros(dim, hidden);

    // d loss / d logits = softmax - onehot
    let mut d_logits = softmax(&fwd.logits);
    d_logits[class] -= 1.0;

    let mut d_fused = vec![0.0; dim];
    for (k, dz) in d_logits.iter().enumerate() {
        g.bc[k] = *dz;
        for j in 0..dim {
            g.wc[k * dim + j] = dz * fwd.fused[j];
            d_fused[j] += p.wc[k * dim + j] * dz;
        }
    }

    let d_mapped: Vec<f64> = d_fused.iter().zip(&fwd.h_qb).map(|(a, b)| a * b).collect();

    let mut d_hidden = vec![0.0; hidden];
    for (i, dm) in d_mapped.iter().enumerate() {
        g.b2[i] = *dm;
        for j in 0..hidden {
            g.w2[i * hidden + j] = dm * fwd.hidden[j];
            d_hidden[j] += p.w2[i * hidden + j] * dm;
        }
    }

    for (j, dh) in d_hidden.iter().enumerate() {
        let a = fwd.hidden[j];
        let d_pre = dh * (1.0 - a * a);
        g.b1[j] = d_pre;
        for i in 0..dim {
            g.w1[j * dim + i] = d_pre * fwd.h_cb[i];
        }
    }

    Ok((loss, g))
}

pub fn loss(model: &RankerModel, sample: &TrainSample) -> Result<f64, RankerError> {
    let fwd = model.forward(&sample.triple)?;
    Ok(log_sum_exp(&fwd.logits) - fwd.logits[sample.class()])
}

/// Per-sample SGD over a seeded shuffle, one step per sample.
///
/// Aborts with [`RankerError::NonFiniteLoss`] as soon as a loss or gradient
/// stops being finite.
pub fn train(samples: &[TrainSample], model: RankerModel, hp: &Hyperparams) -> Result<TrainOutcome, RankerError> {
    if samples.is_empty() {
        return Err(RankerError::EmptyTrainingSet);
    }
    if !(hp.learning_rate.is_finite() && hp.learning_rate >= 0.0) {
        return Err(RankerError::InvalidLearningRate(hp.learning_rate));
    }
    for s in samples {
        if s.triple.dim() != model.dim() {
            return Err(RankerError::DimensionMismatch {
                expected: model.dim(),
                found: s.triple.dim(),
            });
        }
        s.triple.validate()?;
    }

    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.shuffle_seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_trace = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grad) = loss_and_gradient(&model, &samples[i])?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(RankerError::NonFiniteLoss { epoch, sample: i, loss });
            }
            total += loss;
            model.params_mut().descend(&grad, hp.learning_rate);
        }
        let mean = total / samples.len() as f64;
        log::debug!(target: "decontext::ranker", "epoch {epoch}: mean loss {mean:.6}");
        loss_trace.push(mean);
    }

    Ok(TrainOutcome { model, loss_trace })
}

/// Arg-max class of the model on a sample.
pub fn predict_class(model: &RankerModel, triple: &EmbeddingTriple) -> Result<usize, RankerError> {
    let p = model.classify(&model.fuse(triple)?)?;
    Ok((0..CLASSES)
        .max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a)))
        .expect("four classes"))
}

pub fn training_accuracy(model: &RankerModel, samples: &[TrainSample]) -> Result<f64, RankerError> {
    if samples.is_empty() {
        return Err(RankerError::EmptyTrainingSet);
    }
    let mut correct = 0;
    for s in samples {
        if predict_class(model, &s.triple)? == s.class() {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// `|a - n| / max(|a| + |n|, 1e-6)`.
///
/// The floor sits above the round-off of a central difference with a small
/// step (about `1e-16 * loss / delta`), so components too small to resolve
/// are judged by absolute error instead.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Largest relative error between the analytic gradient and central finite
/// differences with step `delta`, over every parameter.
pub fn grad_check(model: &RankerModel, sample: &TrainSample, delta: f64) -> Result<f64, RankerError> {
    let (_, analytic) = loss_and_gradient(model, sample)?;
    let numeric = numeric_gradient(model, sample, delta)?;
    Ok(analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| relative_error(a, n))
        .fold(0.0, f64::max))
}

/// Central-difference gradient, parameter by parameter.
pub fn numeric_gradient(model: &RankerModel, sample: &TrainSample, delta: f64) -> Result<Params, RankerError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(RankerError::InvalidStep(delta));
    }
    let mut grad = Params::zeros(model.dim(), model.hidden());
    let mut probe = model.clone();
    let flat: Vec<f64> = model.params().iter().collect();
    for (i, &original) in flat.iter().enumerate() {
        *probe.params_mut().get_mut(i).unwrap() = original + delta;
        let plus = loss(&probe, sample)?;
        *probe.params_mut().get_mut(i).unwrap() = original - delta;
        let minus = loss(&probe, sample)?;
        *probe.params_mut().get_mut(i).unwrap() = original;
        *grad.get_mut(i).unwrap() = (plus - minus) / (2.0 * delta);
    }
    Ok(grad)
}
