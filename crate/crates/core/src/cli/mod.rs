//! Command-line front end.

pub mod load;
pub mod vector;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::channel::ChannelState;
use crate::orchestrator::{self, output, Arm, ConfigIssue, SimConfig, SimError};
use crate::power_control::{solve, PowerProblemFile};
use crate::quantizer::{decode_mixed, encode_mixed, error_bound, high_resolution_bound, wire, ElementClass, QuantSpec};

pub use load::{apply_override, config_from_value, load_config, parse_and_validate, parse_config_text, to_toml};
pub use vector::{parse_vector, VectorFormat};

#[derive(Debug, Parser)]
#[command(name = "cellfree-fl", version, about = "Federated learning over a cell-free massive MIMO uplink")]
pub struct Cli {
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML or JSON configuration; defaults apply when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Dotted-key override such as `quant.lambda=0.2`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory, created if absent.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
    /// Overwrite existing files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured arm and write metrics.csv and summary.json.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Also write accuracy-vs-round and accuracy-vs-latency CSVs.
        #[arg(long)]
        emit_plot_data: bool,
        /// Also write the channel coefficients under `<out>/channel/`.
        #[arg(long)]
        export_channel: bool,
    },
    /// Run several quantizer/power arms on identical data and channel.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Comma-separated arms; defaults to `arm` plus `baselines`.
        #[arg(long, value_delimiter = ',')]
        arms: Vec<String>,
    },
    /// Encode a float vector with the mixed-resolution codec.
    Quantize {
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        lambda: f64,
        #[arg(long, default_value_t = 10)]
        bits: u32,
        /// Input encoding; inferred from the extension when omitted.
        #[arg(long, value_enum)]
        format: Option<VectorFormat>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Solve one power-control problem given as JSON.
    Powerctl {
        problem: PathBuf,
        /// Relative bisection tolerance.
        #[arg(long, default_value_t = 1e-3)]
        eps_b_rel: f64,
        /// Write the solution here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Write the synthetic train/test sets as CSV.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

/// A failed command, ready for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<ConfigIssue>,
    pub exit_code: i32,
}

impl Failure {
    fn config(issues: Vec<ConfigIssue>) -> Self {
        Self {
            kind: "config".into(),
            message: "invalid configuration".into(),
            issues,
            exit_code: 2,
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self {
            kind: "input".into(),
            message: message.into(),
            issues: Vec::new(),
            exit_code: 2,
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self {
            kind: "numerical".into(),
            message: message.into(),
            issues: Vec::new(),
            exit_code: 3,
        }
    }

    pub fn render(&self, json: bool) -> String {
        if json {
            return serde_json::to_string(self).expect("failure serializes");
        }
        let mut s = format!("error: {}", self.message);
        for i in &self.issues {
            s.push_str(&format!("\n  {i}"));
        }
        s
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(issues) => Self::config(issues),
            other => Self {
                kind: other.kind().into(),
                message: other.to_string(),
                issues: Vec::new(),
                exit_code: other.exit_code(),
            },
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.render(cli.json_errors));
            f.exit_code
        }
    }
}

fn config_of(args: &ConfigArgs) -> Result<SimConfig, Failure> {
    load_config(args.config.as_deref(), &args.overrides, args.seed).map_err(Failure::config)
}

pub fn dispatch(command: &Command) -> Result<(), Failure> {
    match command {
        Command::Simulate {
            config,
            out,
            emit_plot_data,
            export_channel,
        } => {
            let cfg = config_of(config)?;
            let dir = output::OutputDir::create(&out.out, out.force)?;
            let mut names = vec![output::METRICS_FILE, output::SUMMARY_FILE, output::CONFIG_FILE];
            if *emit_plot_data {
                names.extend([output::ACCURACY_VS_ROUND_FILE, output::ACCURACY_VS_LATENCY_FILE]);
            }
            dir.check_free(&names)?;
            if *export_channel {
                let ch_dir = dir.path("channel");
                if ch_dir.exists() && !out.force {
                    return Err(SimError::Io(format!("{} exists; pass --force to overwrite", ch_dir.display())).into());
                }
                std::fs::create_dir_all(&ch_dir).map_err(|e| SimError::Io(e.to_string()))?;
                ChannelState::build(&cfg.network, cfg.seed)
                    .export_csv(&ch_dir)
                    .map_err(|e| SimError::Io(e.to_string()))?;
            }
            let report = orchestrator::run(&cfg)?;
            output::write_run(&dir, &report, *emit_plot_data)?;
            dir.write(output::CONFIG_FILE, to_toml(&cfg).as_bytes())?;
            let s = &report.summary;
            println!(
                "{}: T_max={} accuracy={:.4} s={:.4}% r_bar={:.2}% latency={:.6}s",
                s.arm, s.t_max, s.final_accuracy, s.s_percent, s.r_bar_percent, s.total_latency_s
            );
            Ok(())
        }
        Command::Compare { config, out, arms } => {
            let cfg = config_of(config)?;
            let names: Vec<String> = if arms.is_empty() {
                std::iter::once(cfg.arm.clone()).chain(cfg.baselines.iter().cloned()).collect()
            } else {
                arms.clone()
            };
            let parsed: Vec<Arm> = names
                .iter()
                .map(|a| a.parse::<Arm>().map_err(|e| ConfigIssue::new("--arms", e)))
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::config(vec![e]))?;
            let dir = output::OutputDir::create(&out.out, out.force)?;
            dir.check_free(&["compare.json", "compare.csv", "tmax_matrix.csv", "accuracy_matrix.csv"])?;
            let report = orchestrator::compare(&cfg, &parsed)?;
            output::write_compare(&dir, &report)?;
            for a in &report.arms {
                println!("{}: T_max={} accuracy={:.4}", a.arm, a.t_max, a.final_accuracy);
            }
            if !report.dominance_violations.is_empty() {
                return Err(Failure::numerical(format!(
                    "optimal power slower than full power for {}",
                    report.dominance_violations.join(", ")
                )));
            }
            Ok(())
        }
        Command::Quantize {
            input,
            lambda,
            bits,
            format,
            out,
        } => quantize(input, *lambda, *bits, *format, out),
        Command::Powerctl {
            problem,
            eps_b_rel,
            out,
            force,
        } => powerctl(problem, *eps_b_rel, out.as_deref(), *force),
        Command::GenData { config, out } => {
            let cfg = config_of(config)?;
            let dir = output::OutputDir::create(&out.out, out.force)?;
            dir.check_free(&["train.csv", "test.csv"])?;
            let (train, test) = orchestrator::load_data(&cfg)?;
            for (name, data) in [("train.csv", &train), ("test.csv", &test)] {
                let mut buf = Vec::new();
                data.write_csv(&mut buf).map_err(|e| Failure::input(e.to_string()))?;
                dir.write(name, &buf)?;
            }
            println!("wrote {} train and {} test rows to {}", train.len(), test.len(), out.out.display());
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct QuantizeSidecar {
    d: usize,
    high_count: usize,
    payload_bits: u64,
    anchor: f64,
    grid_radius: f64,
    max_abs_error: f64,
    max_high_error: f64,
    high_error_bound: f64,
    error_bound_c: f64,
    lambda: f64,
    bits: u32,
    wire_bytes: usize,
    side_info_bits: usize,
}

fn quantize(input: &Path, lambda: f64, bits: u32, format: Option<VectorFormat>, out: &OutArgs) -> Result<(), Failure> {
    let spec = QuantSpec::new(lambda, bits).map_err(|e| {
        Failure::config(vec![ConfigIssue::new(if lambda > 0.0 && lambda < 1.0 { "--bits" } else { "--lambda" }, e.to_string())])
    })?;
    let bytes = std::fs::read(input).map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
    let values = parse_vector(&bytes, format.unwrap_or_else(|| VectorFormat::from_path(input)))
        .map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
    let q = encode_mixed(&values, spec).map_err(|e| Failure::input(e.to_string()))?;
    let decoded = decode_mixed(&q).map_err(|e| Failure::numerical(e.to_string()))?;
    let img = wire::to_wire(&q);
    let max_abs = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut max_abs_error = 0.0_f64;
    let mut max_high_error = 0.0_f64;
    for ((x, y), class) in values.iter().zip(&decoded).zip(&q.classes) {
        let e = (x - y).abs();
        max_abs_error = max_abs_error.max(e);
        if *class == ElementClass::High {
            max_high_error = max_high_error.max(e);
        }
    }
    let sidecar = QuantizeSidecar {
        d: q.dim,
        high_count: q.high_count,
        payload_bits: q.payload_bits,
        anchor: q.anchor,
        grid_radius: q.grid_radius,
        max_abs_error,
        max_high_error,
        high_error_bound: high_resolution_bound(spec) * max_abs,
        error_bound_c: error_bound(spec).c,
        lambda,
        bits,
        wire_bytes: img.bytes.len(),
        side_info_bits: img.side_info_bits,
    };
    let dir = output::OutputDir::create(&out.out, out.force)?;
    dir.check_free(&["payload.bin", "payload.json"])?;
    dir.write("payload.bin", &img.bytes)?;
    let mut json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    json.push(b'\n');
    dir.write("payload.json", &json)?;
    println!(
        "d={} high={} payload_bits={} max_abs_error={}",
        q.dim, q.high_count, q.payload_bits, max_abs_error
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct PowerReport {
    powers: Vec<f64>,
    eta_star: f64,
    eta_upper: f64,
    eta_max_init: f64,
    eps_b: f64,
    iterations: usize,
    feasible: bool,
    latency_s: Vec<f64>,
    max_latency_s: f64,
}

fn powerctl(path: &Path, eps_b_rel: f64, out: Option<&Path>, force: bool) -> Result<(), Failure> {
    if !(eps_b_rel > 0.0 && eps_b_rel < 1.0) {
        return Err(Failure::config(vec![ConfigIssue::new("--eps-b-rel", "eps_b_rel must lie in (0,1)")]));
    }
    let bytes = std::fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let problem = PowerProblemFile::parse(&bytes).map_err(|e| Failure::input(e.to_string()))?;
    let cfg = crate::power_control::SolverConfig {
        eps_b_rel,
        ..Default::default()
    };
    let sol = solve(&problem, &cfg).map_err(|e| Failure::numerical(e.to_string()))?;
    let latency_s = problem.latencies(&sol.powers);
    let report = PowerReport {
        max_latency_s: latency_s.iter().copied().fold(0.0, f64::max),
        latency_s,
        powers: sol.powers,
        eta_star: sol.eta_star,
        eta_upper: sol.eta_upper,
        eta_max_init: sol.eta_max_init,
        eps_b: sol.eps_b,
        iterations: sol.iterations,
        feasible: sol.feasible,
    };
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    match out {
        None => {
            print!("{}", String::from_utf8_lossy(&json));
            Ok(())
        }
        Some(p) => {
            if p.exists() && !force {
                return Err(SimError::Io(format!("{} exists; pass --force to overwrite", p.display())).into());
            }
            std::fs::write(p, json).map_err(|e| SimError::Io(format!("{}: {e}", p.display())).into())
        }
    }
}
