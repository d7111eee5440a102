//! Federated averaging with local AdaGrad.
//!
//! Each round every user starts from the global model, runs `L` AdaGrad
//! steps on fresh mini-batches of its shard and reports `w_L - w_0`. The
//! server adds the `ρ`-weighted sum of the (decoded) updates.

mod data;
mod model;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{
    mini_batch, partition, train_test_split, Dataset, PartitionMode, Shards, SyntheticConfig,
    LABEL_COLUMN,
};
pub use model::{Architecture, Classifier, Logistic, Mlp, Model, ModelSpec};

#[derive(Debug, Error, PartialEq)]
pub enum FlError {
    #[error("{n} samples cannot be split among {k} users")]
    TooFewSamples { n: usize, k: usize },
    #[error("non-finite gradient at local step {step}, coordinate {index}")]
    NonFiniteGradient { step: usize, index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid training parameters: {0}")]
    InvalidConfig(String),
    #[error("dataset error: {0}")]
    Data(String),
}

/// Where the current gradient enters the accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdagradOrder {
    /// `g ← g + ∇²` then `w ← w - α∇/√(g + ε)`.
    #[default]
    Standard,
    /// `w ← w - α∇/√(g + ε)` with the accumulator from before this step,
    /// then `g ← g + ∇²`. The first step divides by `√ε` alone.
    #[serde(alias = "paper")]
    Lagged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConfig {
    pub local_iters: usize,
    /// Mini-batch size `ξ`; clipped to the shard size.
    pub batch_size: usize,
    pub alpha: f64,
    pub eps_a: f64,
    pub order: AdagradOrder,
}

impl LocalConfig {
    pub fn validate(&self) -> Result<(), FlError> {
        let bad = |m: &str| Err(FlError::InvalidConfig(m.into()));
        if self.local_iters == 0 {
            return bad("local_iters must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be finite and non-negative");
        }
        if !(self.eps_a.is_finite() && self.eps_a > 0.0) {
            return bad("eps_a must be finite and positive");
        }
        Ok(())
    }
}

/// Runs `L` local AdaGrad steps from `w0` and returns `w_L - w_0`.
pub fn local_train<M: Model + ?Sized>(
    model: &M,
    w0: &[f64],
    data: &Dataset,
    shard: &[usize],
    cfg: &LocalConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, FlError> {
    cfg.validate()?;
    let d = model.dim();
    if w0.len() != d {
        return Err(FlError::DimensionMismatch {
            expected: d,
            got: w0.len(),
        });
    }
    let mut w = w0.to_vec();
    let mut g = vec![0.0; d];
    let mut grad = vec![0.0; d];
    for step in 0..cfg.local_iters {
        let batch = mini_batch(shard, cfg.batch_size, rng);
        model.loss_grad(&w, data, &batch, &mut grad);
        if let Some(index) = grad.iter().position(|v| !v.is_finite()) {
            return Err(FlError::NonFiniteGradient { step, index });
        }
        for i in 0..d {
            let sq = grad[i] * grad[i];
            match cfg.order {
                AdagradOrder::Standard => {
                    g[i] += sq;
                    w[i] -= cfg.alpha * grad[i] / (g[i] + cfg.eps_a).sqrt();
                }
                AdagradOrder::Lagged => {
                    w[i] -= cfg.alpha * grad[i] / (g[i] + cfg.eps_a).sqrt();
                    g[i] += sq;
                }
            }
        }
    }
    Ok(w.iter().zip(w0).map(|(a, b)| a - b).collect())
}

/// `w + Σ_j ρ_j u_j`.
pub fn aggregate(global: &[f64], updates: &[Vec<f64>], rho: &[f64]) -> Result<Vec<f64>, FlError> {
    if updates.len() != rho.len() {
        return Err(FlError::DimensionMismatch {
            expected: rho.len(),
            got: updates.len(),
        });
    }
    let mut out = global.to_vec();
    for (u, &r) in updates.iter().zip(rho) {
        if u.len() != global.len() {
            return Err(FlError::DimensionMismatch {
                expected: global.len(),
                got: u.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(u) {
            *o += r * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean cross-entropy per sample.
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross-entropy and top-1 accuracy; ties go to the lowest class.
pub fn evaluate<M: Classifier + ?Sized>(model: &M, w: &[f64], data: &Dataset) -> Evaluation {
    let mut z = vec![0.0; model.num_classes()];
    let (mut loss, mut correct) = (0.0, 0usize);
    for i in 0..data.len() {
        model.logits(w, data.row(i), &mut z);
        let label = data.labels[i];
        loss += model::log_sum_exp(&z) - z[label];
        let best = z
            .iter()
            .enumerate()
            .fold(0, |b, (k, &v)| if v > z[b] { k } else { b });
        correct += usize::from(best == label);
    }
    let n = data.len().max(1) as f64;
    Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// `f_n(w) = ½ w²` per sample, one parameter.
    struct HalfSquare;

    impl Model for HalfSquare {
        fn dim(&self) -> usize {
            1
        }
        fn loss_grad(&self, w: &[f64], _: &Dataset, batch: &[usize], grad: &mut [f64]) -> f64 {
            grad[0] = batch.len() as f64 * w[0];
            0.5 * batch.len() as f64 * w[0] * w[0]
        }
    }

    fn points(n: usize) -> Dataset {
        Dataset {
            name: "points".into(),
            features: vec![0.0; n],
            labels: vec![0; n],
            num_features: 1,
            num_classes: 2,
        }
    }

    fn cfg(alpha: f64, eps_a: f64, order: AdagradOrder) -> LocalConfig {
        LocalConfig {
            local_iters: 1,
            batch_size: 1,
            alpha,
            eps_a,
            order,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn lagged_order_first_step_divides_by_sqrt_eps() {
        let c = cfg(0.1, 1e-8, AdagradOrder::Lagged);
        let dw = local_train(&HalfSquare, &[1.0], &points(1), &[0], &c, &mut rng()).unwrap();
        assert!((dw[0] + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn standard_order_first_step_is_normalized() {
        let c = cfg(0.1, 1e-8, AdagradOrder::Standard);
        let dw = local_train(&HalfSquare, &[1.0], &points(1), &[0], &c, &mut rng()).unwrap();
        assert!((dw[0] + 0.1 / (1.0 + 1e-8f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn two_step_hand_trace() {
        // Standard: g=1, w=1-0.1/√1.01; then g += w², w -= 0.1 w/√(g+0.01).
        let c = LocalConfig {
            local_iters: 2,
            ..cfg(0.1, 0.01, AdagradOrder::Standard)
        };
        let dw = local_train(&HalfSquare, &[1.0], &points(1), &[0], &c, &mut rng()).unwrap();
        let w1 = 1.0 - 0.1 / 1.01f64.sqrt();
        let w2 = w1 - 0.1 * w1 / (1.0 + w1 * w1 + 0.01).sqrt();
        assert!((dw[0] - (w2 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_and_zero_step() {
        let c = cfg(0.1, 1e-2, AdagradOrder::Standard);
        let dw = local_train(&HalfSquare, &[0.0], &points(3), &[0, 1, 2], &c, &mut rng()).unwrap();
        assert_eq!(dw, vec![0.0]);
        let c = cfg(0.0, 1e-2, AdagradOrder::Lagged);
        let dw = local_train(&HalfSquare, &[5.0], &points(3), &[0, 1, 2], &c, &mut rng()).unwrap();
        assert_eq!(dw, vec![0.0]);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let c = cfg(0.1, 1e-2, AdagradOrder::Standard);
        let err = local_train(&HalfSquare, &[f64::NAN], &points(1), &[0], &c, &mut rng());
        assert_eq!(err, Err(FlError::NonFiniteGradient { step: 0, index: 0 }));
    }

    #[test]
    fn local_training_is_deterministic() {
        let (train, _) = SyntheticConfig::default().generate(&mut ChaCha8Rng::seed_from_u64(1));
        let m = Architecture::new(ModelSpec::Logistic, 20, 4);
        let w0 = m.init_weights(&mut ChaCha8Rng::seed_from_u64(2));
        let shard: Vec<usize> = (0..100).collect();
        let c = LocalConfig {
            local_iters: 5,
            batch_size: 32,
            alpha: 0.05,
            eps_a: 1e-2,
            order: AdagradOrder::Standard,
        };
        let run = |s| local_train(&m, &w0, &train, &shard, &c, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn aggregate_examples() {
        let w = vec![1.0, -2.0];
        assert_eq!(aggregate(&w, &[vec![0.0; 2], vec![0.0; 2]], &[0.5, 0.5]).unwrap(), w);
        assert_eq!(aggregate(&w, &[vec![3.0, 4.0]], &[1.0]).unwrap(), vec![4.0, 2.0]);
        assert_eq!(
            aggregate(&[0.0, 0.0], &[vec![2.0, 0.0], vec![0.0, 2.0]], &[0.5, 0.5]).unwrap(),
            vec![1.0, 1.0]
        );
        assert!(aggregate(&w, &[vec![1.0]], &[1.0]).is_err());
        assert!(aggregate(&w, &[vec![1.0, 1.0]], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let m = Architecture::new(ModelSpec::Logistic, 1, 2);
        let data = Dataset {
            name: "two".into(),
            features: vec![-1.0, 1.0],
            labels: vec![0, 1],
            num_features: 1,
            num_classes: 2,
        };
        // Class-1 score grows with x, class-0 score shrinks.
        let perfect = [-5.0, 5.0, 0.0, 0.0];
        assert_eq!(evaluate(&m, &perfect, &data).accuracy, 1.0);
        let constant = [0.0, 0.0, 1.0, 0.0];
        assert_eq!(evaluate(&m, &constant, &data).accuracy, 0.5);
        let uniform = evaluate(&m, &[0.0; 4], &data);
        assert!((uniform.loss - 2f64.ln()).abs() < 1e-15);
    }
}
