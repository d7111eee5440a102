//! Min-max uplink latency power control.
//!
//! Maximizing the smallest rate-per-bit `min_j R_j / b_j` over `p ∈ [0,1]^K`
//! is solved by bisection on the target `η`. For a fixed `η` the SINR
//! targets `θ_j = 2^(η b_j / B_τ) - 1` turn every user's rate requirement
//! into a linear constraint
//!
//! ```text
//! (Ā_j - θ_j B̄_j) p_j - θ_j Σ_{k≠j} B̃_j^k p_k ≥ θ_j I_M^j
//! ```
//!
//! which has standard-interference-function structure: iterating
//! `p ← T(p)` from zero climbs monotonically to the minimal feasible power
//! vector, or past 1 when the targets are unreachable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{rate, SinrCoefficients};

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("SINR target exponent {exponent} exceeds cap {cap}")]
    Overflow { exponent: f64, cap: f64 },
    #[error("invalid power-control problem: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Bisection tolerance relative to the initial upper bound.
    pub eps_b_rel: f64,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    /// Powers up to `1 + slack` are accepted and clamped to 1.
    pub feasibility_slack: f64,
    /// Largest `η b_j / B_τ` for which `θ_j` is evaluated.
    pub max_theta_exponent: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_b_rel: 1e-3,
            fixed_point_tol: 1e-12,
            fixed_point_max_iter: 100_000,
            feasibility_slack: 1e-9,
            max_theta_exponent: 1000.0,
        }
    }
}

/// Coefficients plus the per-user payload sizes of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProblem {
    pub coeffs: SinrCoefficients,
    pub bits: Vec<u64>,
}

impl PowerProblem {
    pub fn new(coeffs: SinrCoefficients, bits: Vec<u64>) -> Result<Self, PowerError> {
        let problem = Self { coeffs, bits };
        problem.validate()?;
        Ok(problem)
    }

    pub fn num_users(&self) -> usize {
        self.bits.len()
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        let bad = |m: String| Err(PowerError::InvalidProblem(m));
        let c = &self.coeffs;
        let k = self.bits.len();
        if k == 0 {
            return bad("no users".into());
        }
        if c.a_bar.len() != k || c.b_bar.len() != k || c.i_m.len() != k || c.b_tilde.len() != k {
            return bad(format!("coefficient vectors must all have length {k}"));
        }
        if c.b_tilde.iter().any(|row| row.len() != k) {
            return bad(format!("B_tilde must be {k}x{k}"));
        }
        let finite_nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
        if !c.a_bar.iter().all(finite_nonneg)
            || !c.b_bar.iter().all(finite_nonneg)
            || !c.b_tilde.iter().flatten().all(finite_nonneg)
        {
            return bad("coefficients must be finite and non-negative".into());
        }
        if !c.i_m.iter().all(|v| v.is_finite() && *v > 0.0) {
            return bad("I_M must be finite and positive".into());
        }
        if !(c.b_tau.is_finite() && c.b_tau > 0.0) {
            return bad("B_tau must be finite and positive".into());
        }
        if self.bits.contains(&0) {
            return bad("payload bits must be at least 1".into());
        }
        Ok(())
    }

    /// Rate-per-bit of every user at `powers`.
    pub fn rate_per_bit(&self, powers: &[f64]) -> Vec<f64> {
        (0..self.num_users())
            .map(|j| rate(&self.coeffs, powers, j) / self.bits[j] as f64)
            .collect()
    }

    /// `min_j R_j(p) / b_j`.
    pub fn objective(&self, powers: &[f64]) -> f64 {
        self.rate_per_bit(powers)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Uplink latency `b_j / R_j` of every user at `powers`, in seconds.
    pub fn latencies(&self, powers: &[f64]) -> Vec<f64> {
        (0..self.num_users())
            .map(|j| self.bits[j] as f64 / rate(&self.coeffs, powers, j))
            .collect()
    }

    /// Latency of the slowest user.
    pub fn max_latency(&self, powers: &[f64]) -> f64 {
        self.latencies(powers).into_iter().fold(0.0, f64::max)
    }

    /// Interference-free single-user bound on any achievable `η`.
    pub fn eta_upper_bound(&self) -> f64 {
        let c = &self.coeffs;
        let best_snr = c
            .a_bar
            .iter()
            .zip(&c.i_m)
            .map(|(a, i)| a / i)
            .fold(0.0_f64, f64::max);
        let min_bits = *self.bits.iter().min().expect("validated non-empty") as f64;
        c.b_tau * (1.0 + best_snr).log2() / min_bits
    }
}

/// JSON problem description read by the `powerctl` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerProblemFile {
    #[serde(rename = "A_bar")]
    pub a_bar: Vec<f64>,
    #[serde(rename = "B_bar")]
    pub b_bar: Vec<f64>,
    #[serde(rename = "B_tilde")]
    pub b_tilde: Vec<Vec<f64>>,
    #[serde(rename = "I_M")]
    pub i_m: Vec<f64>,
    pub bits: Vec<u64>,
    #[serde(rename = "B_tau")]
    pub b_tau: f64,
}

impl PowerProblemFile {
    pub fn parse(bytes: &[u8]) -> Result<PowerProblem, PowerError> {
        let file: Self = serde_json::from_slice(bytes)
            .map_err(|e| PowerError::InvalidProblem(e.to_string()))?;
        file.into_problem()
    }

    pub fn into_problem(self) -> Result<PowerProblem, PowerError> {
        let coeffs = SinrCoefficients {
            gamma: Vec::new(),
            a_bar: self.a_bar,
            b_bar: self.b_bar,
            b_tilde: self.b_tilde,
            i_m: self.i_m,
            b_tau: self.b_tau,
        };
        PowerProblem::new(coeffs, self.bits)
    }

    pub fn from_problem(problem: &PowerProblem) -> Self {
        let c = &problem.coeffs;
        Self {
            a_bar: c.a_bar.clone(),
            b_bar: c.b_bar.clone(),
            b_tilde: c.b_tilde.clone(),
            i_m: c.i_m.clone(),
            bits: problem.bits.clone(),
            b_tau: c.b_tau,
        }
    }
}

/// SINR targets `θ_j = 2^(η b_j / B_τ) - 1`.
pub fn theta(eta: f64, bits: &[u64], b_tau: f64, max_exponent: f64) -> Result<Vec<f64>, PowerError> {
    bits.iter()
        .map(|&b| {
            let exponent = eta * b as f64 / b_tau;
            if exponent > max_exponent {
                Err(PowerError::Overflow {
                    exponent,
                    cap: max_exponent,
                })
            } else {
                Ok(exponent.exp2() - 1.0)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Minimal power vector meeting every target.
    Feasible(Vec<f64>),
    /// Some iterate exceeded full power, or a target beats the
    /// interference-free ceiling.
    Infeasible,
    /// No convergence within the iteration cap.
    IterationCap,
}

impl Feasibility {
    pub fn witness(self) -> Option<Vec<f64>> {
        match self {
            Self::Feasible(p) => Some(p),
            _ => None,
        }
    }
}

pub fn feasible(coeffs: &SinrCoefficients, theta: &[f64], cfg: &SolverConfig) -> Feasibility {
    let k = theta.len();
    let mut gain = vec![0.0; k];
    for j in 0..k {
        if theta[j] == 0.0 {
            continue;
        }
        let g = coeffs.a_bar[j] - theta[j] * coeffs.b_bar[j];
        if g <= 0.0 {
            return Feasibility::Infeasible;
        }
        gain[j] = g;
    }

    let ceiling = 1.0 + cfg.feasibility_slack;
    let mut p = vec![0.0; k];
    let mut next = vec![0.0; k];
    for _ in 0..cfg.fixed_point_max_iter {
        let mut change = 0.0_f64;
        for j in 0..k {
            next[j] = if theta[j] == 0.0 {
                0.0
            } else {
                let interference: f64 = (0..k)
                    .filter(|&i| i != j)
                    .map(|i| p[i] * coeffs.b_tilde[j][i])
                    .sum();
                theta[j] * (interference + coeffs.i_m[j]) / gain[j]
            };
            if next[j] > ceiling {
                return Feasibility::Infeasible;
            }
            change = change.max((next[j] - p[j]).abs());
        }
        std::mem::swap(&mut p, &mut next);
        if change <= cfg.fixed_point_tol {
            return Feasibility::Feasible(p.into_iter().map(|x| x.min(1.0)).collect());
        }
    }
    Feasibility::IterationCap
}

/// Left-minus-right of every linear rate constraint at `powers`.
pub fn constraint_slacks(coeffs: &SinrCoefficients, theta: &[f64], powers: &[f64]) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let interference: f64 = (0..theta.len())
                .filter(|&i| i != j)
                .map(|i| powers[i] * coeffs.b_tilde[j][i])
                .sum();
            (coeffs.a_bar[j] - theta[j] * coeffs.b_bar[j]) * powers[j]
                - theta[j] * interference
                - theta[j] * coeffs.i_m[j]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSolution {
    pub powers: Vec<f64>,
    /// Largest rate-per-bit target certified feasible, in 1/s.
    pub eta_star: f64,
    /// Bisection upper bracket at exit.
    pub eta_upper: f64,
    pub eta_max_init: f64,
    /// Absolute bisection tolerance used.
    pub eps_b: f64,
    pub iterations: usize,
    pub feasible: bool,
}

/// Upper bound on bisection steps for a given bracket and tolerance.
pub fn bisection_step_bound(eta_max_init: f64, eps_b: f64) -> usize {
    (eta_max_init / eps_b).log2().ceil().max(0.0) as usize
}

pub fn solve(problem: &PowerProblem, cfg: &SolverConfig) -> Result<PowerSolution, PowerError> {
    problem.validate()?;
    if cfg.eps_b_rel.is_nan() || cfg.eps_b_rel <= 0.0 {
        return Err(PowerError::InvalidProblem(
            "bisection tolerance must be positive".into(),
        ));
    }
    let coeffs = &problem.coeffs;
    let eta_max_init = problem.eta_upper_bound();
    let eps_b = cfg.eps_b_rel * eta_max_init;

    let (mut lo, mut hi) = (0.0, eta_max_init);
    let mut witness: Option<Vec<f64>> = None;
    let mut iterations = 0;
    while hi - lo > eps_b {
        let mid = 0.5 * (lo + hi);
        iterations += 1;
        let found = match theta(mid, &problem.bits, coeffs.b_tau, cfg.max_theta_exponent) {
            Ok(th) => feasible(coeffs, &th, cfg).witness(),
            Err(PowerError::Overflow { .. }) => None,
            Err(e) => return Err(e),
        };
        match found {
            Some(p) => {
                lo = mid;
                witness = Some(p);
            }
            None => hi = mid,
        }
    }

    // Full power is feasible for every target up to its own objective, so
    // it is an equally valid witness whenever it does at least as well.
    let full = full_power_baseline(problem.num_users());
    let powers = match witness {
        Some(p) if problem.max_latency(&p) <= problem.max_latency(&full) => p,
        _ => full,
    };
    let feasible = problem.objective(&powers) > 0.0;
    Ok(PowerSolution {
        powers,
        eta_star: lo,
        eta_upper: hi,
        eta_max_init,
        eps_b,
        iterations,
        feasible,
    })
}

pub fn full_power_baseline(num_users: usize) -> Vec<f64> {
    vec![1.0; num_users]
}
