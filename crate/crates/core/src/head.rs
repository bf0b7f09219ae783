//! Classification head: global-average-pooled features -> dropout ->
//! dense -> softmax, trained with categorical cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeadError {
    #[error("input contains a non-finite value at position {0}")]
    NonFinite(usize),
    #[error("empty input vector")]
    Empty,
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
}

/// `softmax(z)_i = exp(z_i) / sum_j exp(z_j)`, evaluated after subtracting
/// `max(z)` so large logits cannot overflow.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, HeadError> {
    if logits.is_empty() {
        return Err(HeadError::Empty);
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(HeadError::NonFinite(i));
    }
    Ok(softmax_unchecked(logits))
}

fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Floor applied to predicted probabilities inside the logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-7;

/// One-hot target of length `classes` with its 1 at `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHot {
    index: usize,
    classes: usize,
}

impl OneHot {
    pub fn new(index: usize, classes: usize) -> Result<Self, HeadError> {
        if index >= classes {
            return Err(HeadError::Label { label: index, classes });
        }
        Ok(Self { index, classes })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.classes];
        v[self.index] = 1.0;
        v
    }
}

/// `-sum_i y_i log(yhat_i)`, which for a one-hot target is
/// `-log(max(yhat[true], PROBABILITY_FLOOR))`.
pub fn categorical_cross_entropy(y: &OneHot, yhat: &[f64]) -> Result<f64, HeadError> {
    if yhat.len() != y.classes {
        return Err(HeadError::Length { expected: y.classes, got: yhat.len() });
    }
    let p = yhat[y.index].max(PROBABILITY_FLOOR);
    // -ln(1) is -0.0; report a clean zero
    Ok(-libm::log(p) + 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub dropout_rate: f64,
    pub num_classes: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { dropout_rate: 0.30, num_classes: 17 }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err("dropout rate must be in [0, 1)");
        }
        if self.num_classes < 2 {
            return Err("at least two classes are required");
        }
        Ok(())
    }
}

/// Dense layer from `features` inputs to `classes` logits. Weights are
/// stored row-major by class: `weights[c * features + f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseHead {
    features: usize,
    classes: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Gradient of the mean batch loss with respect to the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseHead {
    /// Glorot-uniform weights, `U(-l, l)` with `l = sqrt(6 / (fan_in +
    /// fan_out))`, and zero biases; weights drawn from the stream
    /// `(master_seed, "head-init")`.
    pub fn init(features: usize, classes: usize, master_seed: u64) -> Self {
        let limit = libm::sqrt(6.0 / (features + classes) as f64);
        let mut rng = seed::stream(master_seed, "head-init", &[features as u64, classes as u64]);
        let weights = (0..features * classes).map(|_| seed::uniform(&mut rng, -limit, limit)).collect();
        Self { features, classes, weights, bias: vec![0.0; classes] }
    }

    pub fn from_parts(features: usize, classes: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, HeadError> {
        if weights.len() != features * classes {
            return Err(HeadError::Length { expected: features * classes, got: weights.len() });
        }
        if bias.len() != classes {
            return Err(HeadError::Length { expected: classes, got: bias.len() });
        }
        Ok(Self { features, classes, weights, bias })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// `(features + 1) * classes`.
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// All parameters, weights then biases.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(&self.bias).copied()
    }

    pub fn logits(&self, x: &[f32]) -> Result<Vec<f64>, HeadError> {
        if x.len() != self.features {
            return Err(HeadError::Length { expected: self.features, got: x.len() });
        }
        Ok(self.logits_f64(x.iter().map(|&v| v as f64)))
    }

    fn logits_f64(&self, x: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * self.features..(c + 1) * self.features];
                self.bias[c] + row.iter().zip(x.clone()).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Inference: dropout is the identity.
    pub fn predict(&self, x: &[f32]) -> Result<Vec<f64>, HeadError> {
        let z = self.logits(x)?;
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(HeadError::NonFinite(i));
        }
        Ok(softmax_unchecked(&z))
    }

    /// Mean cross-entropy over a batch and its gradient.
    ///
    /// `inputs` are the (already dropped-out) feature vectors. Because the
    /// loss composes softmax with cross-entropy, the gradient with respect
    /// to the logits is `p - y`; the probability floor is ignored there.
    pub fn loss_and_grad(&self, inputs: &[Vec<f64>], labels: &[usize]) -> Result<(f64, HeadGrad, Vec<Vec<f64>>), HeadError> {
        let mut grad = HeadGrad { weights: vec![0.0; self.weights.len()], bias: vec![0.0; self.classes] };
        let mut loss = 0.0;
        let mut probs = Vec::with_capacity(inputs.len());
        let n = inputs.len().max(1) as f64;
        for (x, &label) in inputs.iter().zip(labels) {
            if x.len() != self.features {
                return Err(HeadError::Length { expected: self.features, got: x.len() });
            }
            let y = OneHot::new(label, self.classes)?;
            let z = self.logits_f64(x.iter().copied());
            if let Some(i) = z.iter().position(|v| !v.is_finite()) {
                return Err(HeadError::NonFinite(i));
            }
            let p = softmax_unchecked(&z);
            loss += categorical_cross_entropy(&y, &p)?;
            for c in 0..self.classes {
                let delta = (p[c] - if c == label { 1.0 } else { 0.0 }) / n;
                grad.bias[c] += delta;
                let row = &mut grad.weights[c * self.features..(c + 1) * self.features];
                for (g, &v) in row.iter_mut().zip(x) {
                    *g += delta * v;
                }
            }
            probs.push(p);
        }
        Ok((loss / n, grad, probs))
    }

    /// Mean batch loss only (used by gradient checks).
    pub fn loss(&self, inputs: &[Vec<f64>], labels: &[usize]) -> Result<f64, HeadError> {
        self.loss_and_grad(inputs, labels).map(|r| r.0)
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }
}

/// Inverted dropout: each feature is zeroed with probability `rate` and
/// survivors are scaled by `1 / (1 - rate)`.
pub fn dropout<R: RngCore>(x: &[f32], rate: f64, rng: &mut R) -> Vec<f64> {
    if rate <= 0.0 {
        return x.iter().map(|&v| v as f64).collect();
    }
    let keep = 1.0 / (1.0 - rate);
    x.iter().map(|&v| if seed::unit(rng) < rate { 0.0 } else { v as f64 * keep }).collect()
}

/// Adaptive moment estimation over the head parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    /// Moments 0.9 / 0.999, epsilon 1e-7.
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-7, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, head: &mut DenseHead, grad: &HeadGrad) {
        let n = head.parameter_count();
        if self.m.len() != n {
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
        }
        self.step += 1;
        let t = self.step as f64;
        let lr_t = self.learning_rate * libm::sqrt(1.0 - libm::pow(self.beta2, t)) / (1.0 - libm::pow(self.beta1, t));
        let (w, b) = head.params_mut();
        let params = w.iter_mut().chain(b.iter_mut());
        let grads = grad.weights.iter().chain(&grad.bias);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr_t * *m / (libm::sqrt(*v) + self.epsilon);
        }
    }
}
