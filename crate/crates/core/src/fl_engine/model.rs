//! Differentiable models over flat parameter vectors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;

/// Anything local training can differentiate.
pub trait Model: Sync {
    fn dim(&self) -> usize;

    /// Sum of per-sample losses over `batch`; writes the gradient of that
    /// sum into `grad` (overwriting it).
    fn loss_grad(&self, w: &[f64], data: &Dataset, batch: &[usize], grad: &mut [f64]) -> f64;
}

/// Models that map a feature row to class scores.
pub trait Classifier: Model {
    fn num_classes(&self) -> usize;
    fn logits(&self, w: &[f64], x: &[f64], out: &mut [f64]);
}

/// Numerically stable `ln Σ exp(z)`.
pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy of `logits` against `label`; overwrites `logits` with
/// `softmax - onehot`.
fn softmax_xent_in_place(logits: &mut [f64], label: usize) -> f64 {
    let lse = log_sum_exp(logits);
    let loss = lse - logits[label];
    for v in logits.iter_mut() {
        *v = (*v - lse).exp();
    }
    logits[label] -= 1.0;
    loss
}

/// Multinomial logistic regression. Parameters: `C × p` weights then `C`
/// biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Logistic {
    pub num_features: usize,
    pub num_classes: usize,
}

impl Model for Logistic {
    fn dim(&self) -> usize {
        self.num_features * self.num_classes + self.num_classes
    }

    fn loss_grad(&self, w: &[f64], data: &Dataset, batch: &[usize], grad: &mut [f64]) -> f64 {
        let (p, c) = (self.num_features, self.num_classes);
        grad.fill(0.0);
        let mut z = vec![0.0; c];
        let mut loss = 0.0;
        for &i in batch {
            let x = data.row(i);
            self.logits(w, x, &mut z);
            loss += softmax_xent_in_place(&mut z, data.labels[i]);
            for k in 0..c {
                let row = &mut grad[k * p..(k + 1) * p];
                for (g, xv) in row.iter_mut().zip(x) {
                    *g += z[k] * xv;
                }
                grad[c * p + k] += z[k];
            }
        }
        loss
    }
}

impl Classifier for Logistic {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let (p, c) = (self.num_features, self.num_classes);
        for k in 0..c {
            out[k] = w[c * p + k]
                + w[k * p..(k + 1) * p]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
    }
}

/// One tanh hidden layer. Parameters: `H × p` weights, `H` biases,
/// `C × H` weights, `C` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub num_features: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl Mlp {
    fn offsets(&self) -> [usize; 3] {
        let (p, h, c) = (self.num_features, self.hidden, self.num_classes);
        [h * p, h * p + h, h * p + h + c * h]
    }

    fn hidden_layer(&self, w: &[f64], x: &[f64], a: &mut [f64]) {
        let p = self.num_features;
        let [b1, ..] = self.offsets();
        for (u, out) in a.iter_mut().enumerate() {
            let pre = w[b1 + u]
                + w[u * p..(u + 1) * p]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            *out = pre.tanh();
        }
    }

    fn output_layer(&self, w: &[f64], a: &[f64], out: &mut [f64]) {
        let h = self.hidden;
        let [_, w2, b2] = self.offsets();
        for (k, o) in out.iter_mut().enumerate() {
            *o = w[b2 + k]
                + w[w2 + k * h..w2 + (k + 1) * h]
                    .iter()
                    .zip(a)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
    }
}

impl Model for Mlp {
    fn dim(&self) -> usize {
        let (p, h, c) = (self.num_features, self.hidden, self.num_classes);
        h * p + h + c * h + c
    }

    fn loss_grad(&self, w: &[f64], data: &Dataset, batch: &[usize], grad: &mut [f64]) -> f64 {
        let (p, h, c) = (self.num_features, self.hidden, self.num_classes);
        let [b1, w2, b2] = self.offsets();
        grad.fill(0.0);
        let mut a = vec![0.0; h];
        let mut z = vec![0.0; c];
        let mut back = vec![0.0; h];
        let mut loss = 0.0;
        for &i in batch {
            let x = data.row(i);
            self.hidden_layer(w, x, &mut a);
            self.output_layer(w, &a, &mut z);
            loss += softmax_xent_in_place(&mut z, data.labels[i]);
            back.fill(0.0);
            for k in 0..c {
                grad[b2 + k] += z[k];
                for u in 0..h {
                    grad[w2 + k * h + u] += z[k] * a[u];
                    back[u] += z[k] * w[w2 + k * h + u];
                }
            }
            for u in 0..h {
                let delta = back[u] * (1.0 - a[u] * a[u]);
                grad[b1 + u] += delta;
                for (g, xv) in grad[u * p..(u + 1) * p].iter_mut().zip(x) {
                    *g += delta * xv;
                }
            }
        }
        loss
    }
}

impl Classifier for Mlp {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let mut a = vec![0.0; self.hidden];
        self.hidden_layer(w, x, &mut a);
        self.output_layer(w, &a, out);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    #[default]
    Logistic,
    Mlp { hidden: usize },
}

/// A concrete classifier chosen at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Logistic(Logistic),
    Mlp(Mlp),
}

impl Architecture {
    pub fn new(spec: ModelSpec, num_features: usize, num_classes: usize) -> Self {
        match spec {
            ModelSpec::Logistic => Self::Logistic(Logistic {
                num_features,
                num_classes,
            }),
            ModelSpec::Mlp { hidden } => Self::Mlp(Mlp {
                num_features,
                hidden,
                num_classes,
            }),
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init_weights(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let s = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-s..=s)).collect()
        };
        match *self {
            Self::Logistic(m) => {
                let mut w = uniform(m.num_features * m.num_classes, m.num_features);
                w.resize(m.dim(), 0.0);
                w
            }
            Self::Mlp(m) => {
                let mut w = uniform(m.hidden * m.num_features, m.num_features);
                w.resize(w.len() + m.hidden, 0.0);
                w.extend(uniform(m.num_classes * m.hidden, m.hidden));
                w.resize(m.dim(), 0.0);
                w
            }
        }
    }
}

impl Model for Architecture {
    fn dim(&self) -> usize {
        match self {
            Self::Logistic(m) => m.dim(),
            Self::Mlp(m) => m.dim(),
        }
    }

    fn loss_grad(&self, w: &[f64], data: &Dataset, batch: &[usize], grad: &mut [f64]) -> f64 {
        match self {
            Self::Logistic(m) => m.loss_grad(w, data, batch, grad),
            Self::Mlp(m) => m.loss_grad(w, data, batch, grad),
        }
    }
}

impl Classifier for Architecture {
    fn num_classes(&self) -> usize {
        match self {
            Self::Logistic(m) => m.num_classes,
            Self::Mlp(m) => m.num_classes,
        }
    }

    fn logits(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        match self {
            Self::Logistic(m) => m.logits(w, x, out),
            Self::Mlp(m) => m.logits(w, x, out),
        }
    }
}
