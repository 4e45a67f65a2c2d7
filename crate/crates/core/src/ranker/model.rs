//! Ranker parameters and the inference path.
//!
//! The mapping network is `D -> H -> D` with a tanh hidden layer and an
//! identity output layer; the classifier is an affine `D -> 4` map followed
//! by softmax. All matrices are row-major with shape `(out, in)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTriple, RankerError};

pub const CLASSES: usize = 4;

/// Every trainable parameter, in a fixed order. Gradients share this layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Hidden layer weights, `H x D`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Mapping output weights, `D x H`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Classifier weights, `4 x D`.
    pub wc: Vec<f64>,
    pub bc: Vec<f64>,
}

impl Params {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            w1: vec![0.0; hidden * dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; dim * hidden],
            b2: vec![0.0; dim],
            wc: vec![0.0; CLASSES * dim],
            bc: vec![0.0; CLASSES],
        }
    }

    pub fn groups(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.wc, &self.bc]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.wc,
            &mut self.bc,
        ]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.groups().into_iter().flat_map(|g| g.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mutable access by flat index in [`Params::iter`] order.
    pub fn get_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for group in self.groups_mut() {
            if index < group.len() {
                return Some(&mut group[index]);
            }
            index -= group.len();
        }
        None
    }

    /// `self -= step * grad`.
    pub fn descend(&mut self, grad: &Params, step: f64) {
        for (p, g) in self.groups_mut().into_iter().zip(grad.groups()) {
            for (p, g) in p.iter_mut().zip(g) {
                *p -= step * g;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel {
    dim: usize,
    hidden: usize,
    seed: u64,
    params: Params,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub h_qb: Vec<f64>,
    pub h_cb: Vec<f64>,
    pub hidden: Vec<f64>,
    pub fused: Vec<f64>,
    pub logits: [f64; CLASSES],
}

fn affine(weights: &[f64], bias: &[f64], input: &[f64]) -> Vec<f64> {
    let cols = input.len();
    bias.iter()
        .enumerate()
        .map(|(r, b)| {
            let row = &weights[r * cols..(r + 1) * cols];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64; CLASSES]) -> [f64; CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|z| (z - max).exp());
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// `log(sum(exp(logits)))`, stable.
pub(crate) fn log_sum_exp(logits: &[f64; CLASSES]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

impl RankerModel {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation; biases too.
    pub fn new(dim: usize, hidden: usize, seed: u64) -> Result<Self, RankerError> {
        if dim == 0 || hidden == 0 {
            return Err(RankerError::ZeroDimension);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(dim, hidden);
        let fan_ins = [dim, dim, hidden, hidden, dim, dim];
        for (group, fan_in) in params.groups_mut().into_iter().zip(fan_ins) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in group.iter_mut() {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(Self {
            dim,
            hidden,
            seed,
            params,
        })
    }

    pub fn from_params(dim: usize, hidden: usize, seed: u64, params: Params) -> Result<Self, RankerError> {
        if dim == 0 || hidden == 0 {
            return Err(RankerError::ZeroDimension);
        }
        let expected = Params::zeros(dim, hidden);
        for (name, (have, want)) in ["w1", "b1", "w2", "b2", "wc", "bc"]
            .into_iter()
            .zip(params.groups().iter().zip(expected.groups()))
        {
            if have.len() != want.len() {
                return Err(RankerError::ParameterShape {
                    name,
                    expected: want.len(),
                    found: have.len(),
                });
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(RankerError::NonFiniteParameter);
        }
        Ok(Self {
            dim,
            hidden,
            seed,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn check_dim(&self, found: usize) -> Result<(), RankerError> {
        if found == self.dim {
            Ok(())
        } else {
            Err(RankerError::DimensionMismatch {
                expected: self.dim,
                found,
            })
        }
    }

    pub(crate) fn forward(&self, t: &EmbeddingTriple) -> Result<Forward, RankerError> {
        self.check_dim(t.dim())?;
        t.validate()?;
        let h_qb = hadamard(&t.h_q, &t.h_v);
        let h_cb = hadamard(&t.h_c, &t.h_v);
        let (fused, hidden) = self.fuse_boosted(&h_qb, &h_cb);
        let logits = self.logits(&fused);
        Ok(Forward {
            h_qb,
            h_cb,
            hidden,
            fused,
            logits,
        })
    }

    fn fuse_boosted(&self, h_qb: &[f64], h_cb: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let hidden: Vec<f64> = affine(&p.w1, &p.b1, h_cb).into_iter().map(f64::tanh).collect();
        let mapped = affine(&p.w2, &p.b2, &hidden);
        (hadamard(h_qb, &mapped), hidden)
    }

    fn logits(&self, fused: &[f64]) -> [f64; CLASSES] {
        let z = affine(&self.params.wc, &self.params.bc, fused);
        [z[0], z[1], z[2], z[3]]
    }

    /// Vision-boosted fusion: `(h_q * h_v) * F_M(h_c * h_v)`, element-wise.
    pub fn fuse(&self, t: &EmbeddingTriple) -> Result<Vec<f64>, RankerError> {
        self.check_dim(t.dim())?;
        t.validate()?;
        let h_qb = hadamard(&t.h_q, &t.h_v);
        let h_cb = hadamard(&t.h_c, &t.h_v);
        Ok(self.fuse_boosted(&h_qb, &h_cb).0)
    }

    /// Class probabilities for a fused vector.
    pub fn classify(&self, fused: &[f64]) -> Result<[f64; CLASSES], RankerError> {
        self.check_dim(fused.len())?;
        Ok(softmax(&self.logits(fused)))
    }

    /// Probability that the query is supportive of the pair's credibility.
    pub fn support(&self, t: &EmbeddingTriple) -> Result<f64, RankerError> {
        Ok(support_prob(&self.classify(&self.fuse(t)?)?))
    }
}

/// `P(class 0) + P(class 1)`, i.e. (Yes, Real) plus (No, Fake).
pub fn support_prob(p: &[f64; CLASSES]) -> f64 {
    (p[0] + p[1]).clamp(0.0, 1.0)
}
