//! Run configuration, validation and arm descriptors.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::NetworkConfig;
use crate::fl_engine::{AdagradOrder, ModelSpec, PartitionMode, SyntheticConfig};
use crate::power_control::SolverConfig;
use crate::quantizer::{Codec, QuantSpec, PASSTHROUGH_BITS};

/// One validation failure, tied to the dotted key that caused it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserQuant {
    pub lambda: f64,
    pub bits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    pub lambda: f64,
    pub bits: u32,
    /// Per-user `(λ_j, b_j)`; empty means every user uses `lambda`/`bits`.
    pub per_user: Vec<UserQuant>,
    /// Charge `⌈log2 d⌉` bits per kept index in Top-q arms.
    pub charge_indices: bool,
    /// Width of the classic-FL reference in the overhead reduction.
    pub reference_bits: u32,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            bits: 10,
            per_user: Vec::new(),
            charge_indices: false,
            reference_bits: PASSTHROUGH_BITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Separate test CSV; without it `test_fraction` of `path` is held out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    pub test_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_sep: f64,
    pub noise_std: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        Self {
            source: DataSource::Synthetic,
            path: None,
            test_path: None,
            test_fraction: 0.2,
            n_train: s.n_train,
            n_test: s.n_test,
            n_features: s.n_features,
            n_classes: s.n_classes,
            class_sep: s.class_sep,
            noise_std: s.noise_std,
        }
    }
}

impl DatasetConfig {
    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_train: self.n_train,
            n_test: self.n_test,
            n_features: self.n_features,
            n_classes: self.n_classes,
            class_sep: self.class_sep,
            noise_std: self.noise_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub model: ModelSpec,
    pub dataset: DatasetConfig,
    pub partition: PartitionMode,
    pub local_iters: usize,
    pub alpha: f64,
    pub eps_a: f64,
    /// Mini-batch size `ξ`; each user uses `min(batch_size, |D_j|)`.
    pub batch_size: usize,
    pub adagrad_order: AdagradOrder,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Logistic,
            dataset: DatasetConfig::default(),
            partition: PartitionMode::Iid,
            local_iters: 5,
            alpha: 0.05,
            eps_a: 1e-2,
            batch_size: 32,
            adagrad_order: AdagradOrder::Standard,
        }
    }
}

/// Cycles per second in the compute model of the original experiments.
pub const LITERAL_CPU_HZ: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    /// Total latency budget `ℓ̄` in seconds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_s: Option<f64>,
    /// `a_j`, CPU cycles per training sample.
    pub cycles_per_sample: f64,
    /// `ν_j`, CPU cycles per second.
    pub cpu_hz: f64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            budget_s: None,
            cycles_per_sample: 1e6,
            cpu_hz: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Number of global rounds `T`.
    pub rounds: usize,
    /// Quantizer and power-control arm of `simulate`.
    pub arm: String,
    /// Extra arms run next to `arm` by `compare`.
    pub baselines: Vec<String>,
    pub network: NetworkConfig,
    pub quant: QuantConfig,
    pub training: TrainingConfig,
    pub solver: SolverConfig,
    pub latency: LatencyConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            rounds: 50,
            arm: "mixed+optimal".into(),
            baselines: vec!["mixed+full".into(), "uniform-32+optimal".into(), "uniform-32+full".into()],
            network: NetworkConfig::default(),
            quant: QuantConfig::default(),
            training: TrainingConfig::default(),
            solver: SolverConfig::default(),
            latency: LatencyConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn num_users(&self) -> usize {
        self.network.num_users
    }

    /// Every violated constraint, each naming its key.
    pub fn validate(&self) -> Result<(), Vec<ConfigIssue>> {
        let mut issues = Vec::new();
        let mut check = |ok: bool, key: &str, msg: &str| {
            if !ok {
                issues.push(ConfigIssue::new(key, msg));
            }
        };
        let pos = |v: f64| v.is_finite() && v > 0.0;

        check(self.rounds > 0, "rounds", "rounds must be at least 1");
        for (key, arm) in std::iter::once(("arm".to_string(), &self.arm)).chain(
            self.baselines
                .iter()
                .enumerate()
                .map(|(i, a)| (format!("baselines[{i}]"), a)),
        ) {
            if let Err(e) = arm.parse::<Arm>() {
                check(false, &key, &e);
            }
        }

        let n = &self.network;
        check(n.num_aps > 0, "network.num_aps", "num_aps must be at least 1");
        check(n.antennas_per_ap > 0, "network.antennas_per_ap", "antennas_per_ap must be at least 1");
        check(n.num_users > 0, "network.num_users", "num_users must be at least 1");
        check(pos(n.area_side_m), "network.area_side_m", "area_side_m must be positive");
        check(pos(n.pathloss_exponent), "network.pathloss_exponent", "pathloss_exponent must be positive");
        check(n.pathloss_intercept_db.is_finite(), "network.pathloss_intercept_db", "pathloss_intercept_db must be finite");
        check(pos(n.reference_distance_m), "network.reference_distance_m", "reference_distance_m must be positive");
        check(pos(n.min_distance_m), "network.min_distance_m", "min_distance_m must be positive");
        check(pos(n.bandwidth_hz), "network.bandwidth_hz", "bandwidth_hz must be positive");
        check(n.tau_p >= 1, "network.tau_p", "tau_p must be at least 1");
        check(n.tau_p < n.tau_c, "network.tau_p", "tau_p < tau_c required");
        check(pos(n.uplink_power_w), "network.uplink_power_w", "uplink_power_w must be positive");
        check(n.noise_power_dbm.is_finite(), "network.noise_power_dbm", "noise_power_dbm must be finite");
        check(n.noise_figure_db.is_finite(), "network.noise_figure_db", "noise_figure_db must be finite");

        let q = &self.quant;
        check(q.lambda > 0.0 && q.lambda < 1.0, "quant.lambda", "lambda must lie in (0,1)");
        if let Err(e) = QuantSpec::new(0.5, q.bits) {
            check(false, "quant.bits", &e.to_string());
        }
        check(
            (1..=PASSTHROUGH_BITS).contains(&q.reference_bits),
            "quant.reference_bits",
            "reference_bits must lie in [1,32]",
        );
        if !q.per_user.is_empty() {
            check(
                q.per_user.len() == n.num_users,
                "quant.per_user",
                "per_user must list exactly num_users entries",
            );
            for (j, u) in q.per_user.iter().enumerate() {
                check(u.lambda > 0.0 && u.lambda < 1.0, &format!("quant.per_user[{j}].lambda"), "lambda must lie in (0,1)");
                if let Err(e) = QuantSpec::new(0.5, u.bits) {
                    check(false, &format!("quant.per_user[{j}].bits"), &e.to_string());
                }
            }
        }

        let t = &self.training;
        if let ModelSpec::Mlp { hidden } = t.model {
            check(hidden > 0, "training.model.hidden", "hidden must be at least 1");
        }
        check(t.local_iters >= 1, "training.local_iters", "local_iters must be at least 1");
        check(t.alpha.is_finite() && t.alpha >= 0.0, "training.alpha", "alpha must be finite and non-negative");
        check(pos(t.eps_a), "training.eps_a", "eps_a must be positive");
        check(t.batch_size >= 1, "training.batch_size", "batch_size must be at least 1");
        let d = &t.dataset;
        match d.source {
            DataSource::Synthetic => {
                if let Err(e) = d.synthetic().validate() {
                    let field = e.split_whitespace().next().unwrap_or("n_train");
                    check(false, &format!("training.dataset.{field}"), &e);
                }
                check(
                    d.n_train >= n.num_users,
                    "training.dataset.n_train",
                    "n_train must be at least num_users",
                );
                check(d.n_test >= 1, "training.dataset.n_test", "n_test must be at least 1");
            }
            DataSource::Csv => {
                check(d.path.is_some(), "training.dataset.path", "path is required for csv data");
                check(
                    d.test_path.is_some() || (d.test_fraction > 0.0 && d.test_fraction < 1.0),
                    "training.dataset.test_fraction",
                    "test_fraction must lie in (0,1)",
                );
            }
        }

        let s = &self.solver;
        check(s.eps_b_rel > 0.0 && s.eps_b_rel < 1.0, "solver.eps_b_rel", "eps_b_rel must lie in (0,1)");
        check(pos(s.fixed_point_tol), "solver.fixed_point_tol", "fixed_point_tol must be positive");
        check(s.fixed_point_max_iter >= 1, "solver.fixed_point_max_iter", "fixed_point_max_iter must be at least 1");
        check(
            s.feasibility_slack.is_finite() && s.feasibility_slack >= 0.0,
            "solver.feasibility_slack",
            "feasibility_slack must be non-negative",
        );
        check(pos(s.max_theta_exponent), "solver.max_theta_exponent", "max_theta_exponent must be positive");

        let l = &self.latency;
        if let Some(b) = l.budget_s {
            check(b.is_finite() && b >= 0.0, "latency.budget_s", "budget_s must be finite and non-negative");
        }
        check(
            l.cycles_per_sample.is_finite() && l.cycles_per_sample >= 0.0,
            "latency.cycles_per_sample",
            "cycles_per_sample must be non-negative",
        );
        check(pos(l.cpu_hz), "latency.cpu_hz", "cpu_hz must be positive");

        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    /// Codec of user `j` under the given quantizer arm.
    pub fn codec(&self, arm: QuantArm, j: usize) -> Codec {
        match arm {
            QuantArm::Mixed => {
                let u = self.quant.per_user.get(j).copied().unwrap_or(UserQuant {
                    lambda: self.quant.lambda,
                    bits: self.quant.bits,
                });
                Codec::Mixed(QuantSpec {
                    lambda: u.lambda,
                    bits: u.bits,
                })
            }
            QuantArm::MixedWith { lambda, bits } => Codec::Mixed(QuantSpec { lambda, bits }),
            QuantArm::Uniform { bits } => Codec::Uniform { bits },
            QuantArm::TopQ { fraction, bits } => Codec::TopQ {
                fraction,
                bits,
                charge_indices: self.quant.charge_indices,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantArm {
    /// Mixed resolution with the `quant` section's parameters.
    Mixed,
    MixedWith { lambda: f64, bits: u32 },
    Uniform { bits: u32 },
    TopQ { fraction: f64, bits: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerArm {
    Optimal,
    Full,
}

/// A quantizer/power-control pairing such as `mixed+optimal`,
/// `uniform-32+full`, `mixed-0.2-4+optimal` or `topq-0.01-10+full`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    pub quant: QuantArm,
    pub power: PowerArm,
}

impl fmt::Display for QuantArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mixed => write!(f, "mixed"),
            Self::MixedWith { lambda, bits } => write!(f, "mixed-{lambda}-{bits}"),
            Self::Uniform { bits } => write!(f, "uniform-{bits}"),
            Self::TopQ { fraction, bits } => write!(f, "topq-{fraction}-{bits}"),
        }
    }
}

impl fmt::Display for PowerArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::Full => "full",
        })
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.quant, self.power)
    }
}

impl FromStr for QuantArm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split('-').collect();
        let num = |v: &str| v.parse::<f64>().map_err(|_| format!("`{v}` is not a number in arm `{s}`"));
        let bits = |v: &str| v.parse::<u32>().map_err(|_| format!("`{v}` is not a bit width in arm `{s}`"));
        let arm = match parts.as_slice() {
            ["mixed"] => Self::Mixed,
            ["mixed", l, b] => Self::MixedWith {
                lambda: num(l)?,
                bits: bits(b)?,
            },
            ["uniform", b] => Self::Uniform { bits: bits(b)? },
            ["topq", q, b] => Self::TopQ {
                fraction: num(q)?,
                bits: bits(b)?,
            },
            _ => return Err(format!("unknown quantizer arm `{s}`")),
        };
        match arm {
            Self::MixedWith { lambda, bits } => {
                QuantSpec::new(lambda, bits).map_err(|e| e.to_string())?;
            }
            Self::Uniform { bits } if !(1..=PASSTHROUGH_BITS).contains(&bits) => {
                return Err(format!("uniform bits must lie in [1,32] in arm `{s}`"));
            }
            Self::TopQ { fraction, bits } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(format!("top-q fraction must lie in (0,1] in arm `{s}`"));
                }
                if !(1..=PASSTHROUGH_BITS).contains(&bits) {
                    return Err(format!("top-q bits must lie in [1,32] in arm `{s}`"));
                }
            }
            _ => {}
        }
        Ok(arm)
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (q, p) = s
            .split_once('+')
            .ok_or_else(|| format!("arm `{s}` must look like <quantizer>+<optimal|full>"))?;
        let power = match p {
            "optimal" => PowerArm::Optimal,
            "full" => PowerArm::Full,
            _ => return Err(format!("unknown power arm `{p}`")),
        };
        Ok(Self {
            quant: q.parse()?,
            power,
        })
    }
}
