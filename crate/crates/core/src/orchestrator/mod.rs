//! End-to-end federated rounds over the cell-free uplink.
//!
//! A round: local AdaGrad on every user, encode, solve the power problem
//! for the resulting payload sizes, charge the slowest user's uplink time
//! plus the compute time, then decode and aggregate.

mod config;
pub mod output;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{rates, ChannelState};
use crate::fl_engine::{
    aggregate, evaluate, local_train, partition, train_test_split, Architecture, Dataset, FlError,
    LocalConfig, Model, Shards,
};
use crate::power_control::{full_power_baseline, solve, PowerError, PowerProblem};
use crate::quantizer::{overhead_reduction, Codec, Payload, QuantError};
use crate::rng::{self, derive_seed, TAG_DATA, TAG_INIT, TAG_LOCAL, TAG_PARTITION, TAG_REDRAW};

pub use config::{
    Arm, ConfigIssue, DataSource, DatasetConfig, LatencyConfig, PowerArm, QuantArm, QuantConfig,
    SimConfig, TrainingConfig, UserQuant, LITERAL_CPU_HZ,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration")]
    Config(Vec<ConfigIssue>),
    #[error("round {round}: {source}")]
    Training {
        round: usize,
        #[source]
        source: FlError,
    },
    #[error("data: {0}")]
    Data(FlError),
    #[error("round {round}, user {user}: {source}")]
    Quantization {
        round: usize,
        user: usize,
        #[source]
        source: QuantError,
    },
    #[error("round {round}: {source}")]
    PowerControl {
        round: usize,
        #[source]
        source: PowerError,
    },
    #[error("round {round}, user {user}: zero uplink rate")]
    ZeroRate { round: usize, user: usize },
    #[error("{0}")]
    Io(String),
}

impl SimError {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Data(_) => 2,
            Self::Training { .. }
            | Self::Quantization { .. }
            | Self::PowerControl { .. }
            | Self::ZeroRate { .. } => 3,
            Self::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Data(_) => "data",
            Self::Training { .. } => "training",
            Self::Quantization { .. } => "quantization",
            Self::PowerControl { .. } => "power_control",
            Self::ZeroRate { .. } => "zero_rate",
            Self::Io(_) => "io",
        }
    }
}

/// `ℓ = b / R`.
pub fn uplink_latency(bits: u64, rate_bps: f64) -> Option<f64> {
    (rate_bps > 0.0).then(|| bits as f64 / rate_bps)
}

/// `ℓ_c = L |D| a / (K ν)`.
pub fn computation_latency(
    local_iters: usize,
    dataset_size: usize,
    cycles_per_sample: f64,
    num_users: usize,
    cpu_hz: f64,
) -> f64 {
    local_iters as f64 * dataset_size as f64 * cycles_per_sample / (num_users as f64 * cpu_hz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub bits: u64,
    /// Fraction of elements sent at full width.
    pub s: f64,
    pub rate_bps: f64,
    pub power: f64,
    pub latency_s: f64,
    /// `⌈log2 b⌉` signaling bits announcing the payload size; not charged.
    pub signaling_bits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub t: usize,
    pub users: Vec<UserMetrics>,
    /// Certified rate-per-bit (1/s); under full power the achieved one.
    pub eta_star: f64,
    pub bisection_iterations: usize,
    pub uplink_latency_s: f64,
    pub compute_latency_s: f64,
    pub cumulative_latency_s: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub arm: String,
    pub seed: u64,
    pub rounds_run: usize,
    /// Mean high-resolution share in percent over all users and rounds.
    pub s_percent: f64,
    /// Overhead reduction versus `reference_bits`-wide classic FL, percent.
    pub r_bar_percent: f64,
    pub reference_bits: u32,
    /// Rounds completed within the latency budget (all rounds without one).
    pub t_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_s: Option<f64>,
    pub final_accuracy: f64,
    pub final_train_loss: f64,
    pub initial_train_loss: f64,
    pub total_latency_s: f64,
    pub model_dim: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub summary: Summary,
    pub rounds: Vec<IterationMetrics>,
    pub config: SimConfig,
}

/// Everything fixed for a run plus the evolving global model.
pub struct Simulation {
    config: SimConfig,
    arm: Arm,
    model: Architecture,
    train: Dataset,
    test: Dataset,
    shards: Shards,
    channel: ChannelState,
    codecs: Vec<Codec>,
    local: Vec<LocalConfig>,
    compute_latency: f64,
    w: Vec<f64>,
    cumulative: f64,
    initial_train_loss: f64,
}

/// Train/test data for a configuration.
pub fn load_data(config: &SimConfig) -> Result<(Dataset, Dataset), SimError> {
    let d = &config.training.dataset;
    let mut rng = rng::stream(config.seed, &[TAG_DATA]);
    match d.source {
        DataSource::Synthetic => Ok(d.synthetic().generate(&mut rng)),
        DataSource::Csv => {
            let read = |p: &std::path::Path| -> Result<Dataset, SimError> {
                let f = std::fs::File::open(p)
                    .map_err(|e| SimError::Io(format!("{}: {e}", p.display())))?;
                let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("csv");
                Dataset::from_csv(std::io::BufReader::new(f), name).map_err(SimError::Data)
            };
            let path = d.path.as_ref().ok_or_else(|| {
                SimError::Config(vec![ConfigIssue::new("training.dataset.path", "path is required for csv data")])
            })?;
            let all = read(path)?;
            let (train, mut test) = match &d.test_path {
                Some(tp) => (all, read(tp)?),
                None => train_test_split(&all, d.test_fraction, &mut rng),
            };
            if test.num_features != train.num_features {
                return Err(SimError::Data(FlError::Data(
                    "train and test feature counts differ".into(),
                )));
            }
            let classes = train.num_classes.max(test.num_classes);
            let mut train = train;
            train.num_classes = classes;
            test.num_classes = classes;
            Ok((train, test))
        }
    }
}

impl Simulation {
    pub fn new(config: &SimConfig, arm: Arm) -> Result<Self, SimError> {
        config.validate().map_err(SimError::Config)?;
        let (train, test) = load_data(config)?;
        Self::with_data(config, arm, train, test)
    }

    pub fn with_data(config: &SimConfig, arm: Arm, train: Dataset, test: Dataset) -> Result<Self, SimError> {
        config.validate().map_err(SimError::Config)?;
        let k = config.num_users();
        let shards = partition(
            &train.labels,
            k,
            config.training.partition,
            &mut rng::stream(config.seed, &[TAG_PARTITION]),
        )
        .map_err(SimError::Data)?;
        let model = Architecture::new(config.training.model, train.num_features, train.num_classes);
        let w = model.init_weights(&mut rng::stream(config.seed, &[TAG_INIT]));
        let t = &config.training;
        let local = shards
            .indices
            .iter()
            .map(|s| LocalConfig {
                local_iters: t.local_iters,
                batch_size: t.batch_size.min(s.len()),
                alpha: t.alpha,
                eps_a: t.eps_a,
                order: t.adagrad_order,
            })
            .collect();
        let codecs = (0..k).map(|j| config.codec(arm.quant, j)).collect();
        let compute_latency = computation_latency(
            t.local_iters,
            train.len(),
            config.latency.cycles_per_sample,
            k,
            config.latency.cpu_hz,
        );
        let channel = ChannelState::build(&config.network, config.seed);
        let initial_train_loss = evaluate(&model, &w, &train).loss;
        Ok(Self {
            config: config.clone(),
            arm,
            model,
            train,
            test,
            shards,
            channel,
            codecs,
            local,
            compute_latency,
            w,
            cumulative: 0.0,
            initial_train_loss,
        })
    }

    pub fn global_model(&self) -> &[f64] {
        &self.w
    }

    pub fn model(&self) -> &Architecture {
        &self.model
    }

    pub fn shards(&self) -> &Shards {
        &self.shards
    }

    pub fn channel(&self) -> &ChannelState {
        &self.channel
    }

    pub fn compute_latency(&self) -> f64 {
        self.compute_latency
    }

    /// Executes round `t` (1-based) without committing it; returns the
    /// metrics and the next global model.
    pub fn step(&self, t: usize) -> Result<(IterationMetrics, Vec<f64>), SimError> {
        let k = self.config.num_users();

        let updates: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|j| {
                let mut rng = rng::stream(self.config.seed, &[TAG_LOCAL, t as u64, j as u64]);
                local_train(&self.model, &self.w, &self.train, &self.shards.indices[j], &self.local[j], &mut rng)
            })
            .collect::<Result<_, _>>()
            .map_err(|source| SimError::Training { round: t, source })?;

        let payloads: Vec<Payload> = updates
            .par_iter()
            .zip(&self.codecs)
            .enumerate()
            .map(|(j, (u, codec))| {
                codec.encode(u).map_err(|source| SimError::Quantization {
                    round: t,
                    user: j,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        let bits: Vec<u64> = payloads.iter().map(Payload::payload_bits).collect();

        let redrawn;
        let channel = if self.config.network.redraw_each_round {
            redrawn = ChannelState::build(
                &self.config.network,
                derive_seed(self.config.seed, &[TAG_REDRAW, t as u64]),
            );
            &redrawn
        } else {
            &self.channel
        };
        let problem = PowerProblem::new(channel.coeffs.clone(), bits.clone())
            .map_err(|source| SimError::PowerControl { round: t, source })?;
        let (powers, eta_star, bisection_iterations) = match self.arm.power {
            PowerArm::Optimal => {
                let sol = solve(&problem, &self.config.solver)
                    .map_err(|source| SimError::PowerControl { round: t, source })?;
                (sol.powers, sol.eta_star, sol.iterations)
            }
            PowerArm::Full => {
                let p = full_power_baseline(k);
                let eta = problem.objective(&p);
                (p, eta, 0)
            }
        };
        let user_rates = rates(&channel.coeffs, &powers);

        let mut users = Vec::with_capacity(k);
        for j in 0..k {
            let latency_s = uplink_latency(bits[j], user_rates[j])
                .ok_or(SimError::ZeroRate { round: t, user: j })?;
            users.push(UserMetrics {
                bits: bits[j],
                s: payloads[j].high_fraction(),
                rate_bps: user_rates[j],
                power: powers[j],
                latency_s,
                signaling_bits: ceil_log2(bits[j]),
            });
        }
        let uplink = users.iter().map(|u| u.latency_s).fold(0.0, f64::max);

        let decoded: Vec<Vec<f64>> = payloads
            .iter()
            .enumerate()
            .map(|(j, p)| {
                p.decode().map_err(|source| SimError::Quantization {
                    round: t,
                    user: j,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        let next = aggregate(&self.w, &decoded, &self.shards.rho)
            .map_err(|source| SimError::Training { round: t, source })?;

        let train_eval = evaluate(&self.model, &next, &self.train);
        let test_eval = evaluate(&self.model, &next, &self.test);
        let metrics = IterationMetrics {
            t,
            users,
            eta_star,
            bisection_iterations,
            uplink_latency_s: uplink,
            compute_latency_s: self.compute_latency,
            cumulative_latency_s: self.cumulative + uplink + self.compute_latency,
            train_loss: train_eval.loss,
            test_loss: test_eval.loss,
            test_accuracy: test_eval.accuracy,
        };
        Ok((metrics, next))
    }

    pub fn commit(&mut self, metrics: &IterationMetrics, next: Vec<f64>) {
        self.w = next;
        self.cumulative = metrics.cumulative_latency_s;
    }

    /// All rounds, stopping before the first one that would overrun the
    /// budget.
    pub fn run(mut self) -> Result<RunReport, SimError> {
        let budget = self.config.latency.budget_s;
        let mut rounds = Vec::new();
        for t in 1..=self.config.rounds {
            let (m, next) = self.step(t)?;
            if budget.is_some_and(|b| m.cumulative_latency_s > b) {
                break;
            }
            self.commit(&m, next);
            rounds.push(m);
        }
        let summary = self.summarize(&rounds);
        Ok(RunReport {
            summary,
            rounds,
            config: self.config,
        })
    }

    fn summarize(&self, rounds: &[IterationMetrics]) -> Summary {
        let cfg = &self.config;
        let samples: Vec<&UserMetrics> = rounds.iter().flat_map(|r| &r.users).collect();
        let mean = |f: &dyn Fn(&UserMetrics) -> f64| {
            if samples.is_empty() {
                0.0
            } else {
                samples.iter().map(|u| f(u)).sum::<f64>() / samples.len() as f64
            }
        };
        let s_percent = 100.0 * mean(&|u| u.s);
        let b1 = cfg.quant.reference_bits;
        let d = self.model.dim() as f64;
        let shared_bits = match self.codecs.first() {
            Some(Codec::Mixed(first)) if self.codecs.iter().all(|c| *c == Codec::Mixed(*first)) => {
                Some(first.bits)
            }
            _ => None,
        };
        let r_bar_percent = match shared_bits {
            Some(b) => overhead_reduction(s_percent, b, b1),
            None => 100.0 * (1.0 - mean(&|u| (u.bits - 32) as f64) / (f64::from(b1) * d)),
        };
        let last = rounds.last();
        let mut notes = Vec::new();
        if cfg.latency.cpu_hz != LITERAL_CPU_HZ {
            notes.push(format!(
                "compute latency uses cpu_hz = {} cycles/s; the literal setting cpu_hz = {} would give {:.3e} s per round",
                cfg.latency.cpu_hz,
                LITERAL_CPU_HZ,
                computation_latency(
                    cfg.training.local_iters,
                    self.train.len(),
                    cfg.latency.cycles_per_sample,
                    cfg.num_users(),
                    LITERAL_CPU_HZ
                )
            ));
        }
        if rounds.len() < cfg.rounds {
            notes.push(format!(
                "stopped after {} of {} rounds: the next round would exceed the latency budget",
                rounds.len(),
                cfg.rounds
            ));
        }
        Summary {
            arm: self.arm.to_string(),
            seed: cfg.seed,
            rounds_run: rounds.len(),
            s_percent,
            r_bar_percent,
            reference_bits: b1,
            t_max: rounds.len(),
            budget_s: cfg.latency.budget_s,
            final_accuracy: last.map_or_else(|| evaluate(&self.model, &self.w, &self.test).accuracy, |r| r.test_accuracy),
            final_train_loss: last.map_or(self.initial_train_loss, |r| r.train_loss),
            initial_train_loss: self.initial_train_loss,
            total_latency_s: last.map_or(0.0, |r| r.cumulative_latency_s),
            model_dim: self.model.dim(),
            notes,
        }
    }
}

fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        u64::BITS - (x - 1).leading_zeros()
    }
}

/// Runs the configured primary arm.
pub fn run(config: &SimConfig) -> Result<RunReport, SimError> {
    config.validate().map_err(SimError::Config)?;
    let arm: Arm = config.arm.parse().expect("validated");
    Simulation::new(config, arm)?.run()
}

pub fn run_arm(config: &SimConfig, arm: Arm) -> Result<RunReport, SimError> {
    Simulation::new(config, arm)?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub quantizer: String,
    pub power: String,
    pub t_max: usize,
    pub final_accuracy: f64,
    pub s_percent: f64,
    pub r_bar_percent: f64,
    pub mean_round_uplink_s: f64,
    pub total_latency_s: f64,
    pub round_uplink_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_s: Option<f64>,
    pub arms: Vec<ArmResult>,
    /// Quantizer arms where optimal power was slower than full power in
    /// some round; empty when dominance holds.
    pub dominance_violations: Vec<String>,
}

/// Runs every arm on identical data, seed and channel.
pub fn compare(config: &SimConfig, arms: &[Arm]) -> Result<CompareReport, SimError> {
    config.validate().map_err(SimError::Config)?;
    let (train, test) = load_data(config)?;
    let mut results = Vec::with_capacity(arms.len());
    for &arm in arms {
        let report = Simulation::with_data(config, arm, train.clone(), test.clone())?.run()?;
        let round_uplink: Vec<f64> = report.rounds.iter().map(|r| r.uplink_latency_s).collect();
        let mean = if round_uplink.is_empty() {
            0.0
        } else {
            round_uplink.iter().sum::<f64>() / round_uplink.len() as f64
        };
        results.push(ArmResult {
            arm: arm.to_string(),
            quantizer: arm.quant.to_string(),
            power: arm.power.to_string(),
            t_max: report.summary.t_max,
            final_accuracy: report.summary.final_accuracy,
            s_percent: report.summary.s_percent,
            r_bar_percent: report.summary.r_bar_percent,
            mean_round_uplink_s: mean,
            total_latency_s: report.summary.total_latency_s,
            round_uplink_s: round_uplink,
        });
    }
    let mut dominance_violations = Vec::new();
    for opt in results.iter().filter(|r| r.power == "optimal") {
        for full in results.iter().filter(|r| r.power == "full" && r.quantizer == opt.quantizer) {
            let slower = opt
                .round_uplink_s
                .iter()
                .zip(&full.round_uplink_s)
                .any(|(a, b)| a > b);
            if slower || opt.t_max < full.t_max {
                dominance_violations.push(opt.quantizer.clone());
            }
        }
    }
    Ok(CompareReport {
        seed: config.seed,
        budget_s: config.latency.budget_s,
        arms: results,
        dominance_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        let mut c = SimConfig::default();
        c.network.num_users = 4;
        c.network.tau_p = 2;
        c.rounds = 3;
        c.training.dataset.n_train = 200;
        c.training.dataset.n_test = 100;
        c
    }

    #[test]
    fn latency_formulas() {
        assert!((uplink_latency(162, 19e6).unwrap() - 8.526_315_789_473_684e-6).abs() < 1e-18);
        assert_eq!(uplink_latency(324, 19e6).unwrap(), 2.0 * uplink_latency(162, 19e6).unwrap());
        assert_eq!(uplink_latency(10, 0.0), None);
        assert_eq!(computation_latency(5, 2000, 1e6, 20, 1e9), 0.5);
        assert_eq!(computation_latency(0, 2000, 1e6, 20, 1e9), 0.0);
        assert_eq!(computation_latency(5, 2000, 1e6, 40, 1e9), 0.25);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(162), 8);
        assert_eq!(ceil_log2(256), 8);
        assert_eq!(ceil_log2(257), 9);
    }

    #[test]
    fn run_is_deterministic_and_consistent() {
        let c = small();
        let a = run(&c).unwrap();
        assert_eq!(a, run(&c).unwrap());
        assert_eq!(a.rounds.len(), 3);
        let mut cumulative = 0.0;
        for r in &a.rounds {
            let max = r.users.iter().map(|u| u.latency_s).fold(0.0, f64::max);
            assert_eq!(r.uplink_latency_s, max);
            cumulative += r.uplink_latency_s + r.compute_latency_s;
            assert!((r.cumulative_latency_s - cumulative).abs() <= 1e-12 * cumulative);
        }
        let s_mean: f64 = a.rounds.iter().flat_map(|r| &r.users).map(|u| u.s).sum::<f64>() / 12.0;
        assert!((a.summary.s_percent - 100.0 * s_mean).abs() < 1e-12);
    }

    #[test]
    fn budget_boundaries() {
        let c = small();
        let full = run(&c).unwrap();
        let mut tight = c.clone();
        tight.latency.budget_s = Some(full.rounds[0].cumulative_latency_s * 0.5);
        let r = run(&tight).unwrap();
        assert_eq!(r.summary.t_max, 0);
        assert!(r.rounds.is_empty());

        let mut exact = c.clone();
        exact.rounds = 5;
        exact.latency.budget_s = Some(full.rounds[2].cumulative_latency_s);
        let r = run(&exact).unwrap();
        assert_eq!(r.summary.t_max, 3);
    }

    #[test]
    fn zero_updates_leave_model_unchanged() {
        let mut c = small();
        c.training.alpha = 0.0;
        c.rounds = 1;
        let sim = Simulation::new(&c, "mixed+optimal".parse().unwrap()).unwrap();
        let w0 = sim.global_model().to_vec();
        let (m, next) = sim.step(1).unwrap();
        assert_eq!(next, w0);
        let d = sim.model().dim() as u64;
        assert!(m.users.iter().all(|u| u.bits == d + 32 && u.s == 0.0));
    }

    #[test]
    fn single_user_lossless_round() {
        let mut c = small();
        c.network.num_users = 1;
        c.network.tau_p = 1;
        c.rounds = 1;
        let sim = Simulation::new(&c, "uniform-32+optimal".parse().unwrap()).unwrap();
        let w0 = sim.global_model().to_vec();
        let (m, next) = sim.step(1).unwrap();
        let mut rng = rng::stream(c.seed, &[TAG_LOCAL, 1, 0]);
        let dw = local_train(sim.model(), &w0, &sim.train, &sim.shards.indices[0], &sim.local[0], &mut rng).unwrap();
        let expected: Vec<f64> = w0.iter().zip(&dw).map(|(a, b)| a + b).collect();
        assert_eq!(next, expected);
        let co = &sim.channel().coeffs;
        let closed = co.b_tau * (1.0 + co.a_bar[0] / (co.b_bar[0] + co.i_m[0])).log2() / m.users[0].bits as f64;
        let eps = c.solver.eps_b_rel * co.b_tau * (1.0 + co.a_bar[0] / co.i_m[0]).log2() / m.users[0].bits as f64;
        assert!(closed - m.eta_star <= eps && m.eta_star <= closed);
    }

    #[test]
    fn compare_dominance_and_bits() {
        let c = small();
        let arms: Vec<Arm> = ["mixed+optimal", "mixed+full", "uniform-10+optimal"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let rep = compare(&c, &arms).unwrap();
        assert!(rep.dominance_violations.is_empty());
        let (opt, full) = (&rep.arms[0], &rep.arms[1]);
        for (a, b) in opt.round_uplink_s.iter().zip(&full.round_uplink_s) {
            assert!(a <= b);
        }
        let single = compare(&c, &arms[..1]).unwrap();
        assert_eq!(single.arms[0], rep.arms[0]);
        assert_eq!(run(&c).unwrap().summary.final_accuracy, opt.final_accuracy);
    }

    #[test]
    fn invalid_config_rejected_before_work() {
        let mut c = small();
        c.quant.lambda = 0.0;
        let err = run(&c).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
