//! CSV and JSON artifacts of runs and comparisons.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{CompareReport, RunReport, SimError};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
/// Resolved configuration of a run, reloadable with `--config`.
pub const CONFIG_FILE: &str = "config.toml";
pub const ACCURACY_VS_ROUND_FILE: &str = "accuracy_vs_round.csv";
pub const ACCURACY_VS_LATENCY_FILE: &str = "accuracy_vs_latency.csv";

fn io(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io(format!("{}: {e}", path.display()))
}

/// Output directory that refuses to clobber existing files unless forced.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    force: bool,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>, force: bool) -> Result<Self, SimError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io(&root, e))?;
        Ok(Self { root, force })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Fails if any of `names` already exists and overwriting is not forced.
    pub fn check_free(&self, names: &[&str]) -> Result<(), SimError> {
        if self.force {
            return Ok(());
        }
        for name in names {
            let p = self.path(name);
            if p.exists() {
                return Err(SimError::Io(format!(
                    "{} exists; pass --force to overwrite",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, SimError> {
        self.check_free(&[name])?;
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| io(&p, e))?;
        Ok(p)
    }
}

/// One row per `(t, j)`.
pub fn metrics_csv(report: &RunReport) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "t,j,b_t_j,s_t_j,rate_bps,power,latency_s,eta_star").unwrap();
    for r in &report.rounds {
        for (j, u) in r.users.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.t, j, u.bits, u.s, u.rate_bps, u.power, u.latency_s, r.eta_star
            )
            .unwrap();
        }
    }
    out
}

pub fn summary_json(report: &RunReport) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(&report.summary).expect("summary serializes");
    v.push(b'\n');
    v
}

pub fn accuracy_vs_round_csv(report: &RunReport) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "t,test_accuracy,test_loss,train_loss").unwrap();
    for r in &report.rounds {
        writeln!(out, "{},{},{},{}", r.t, r.test_accuracy, r.test_loss, r.train_loss).unwrap();
    }
    out
}

pub fn accuracy_vs_latency_csv(report: &RunReport) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "cumulative_latency_s,test_accuracy").unwrap();
    for r in &report.rounds {
        writeln!(out, "{},{}", r.cumulative_latency_s, r.test_accuracy).unwrap();
    }
    out
}

/// Writes a run's artifacts; returns the paths written.
pub fn write_run(dir: &OutputDir, report: &RunReport, plot_data: bool) -> Result<Vec<PathBuf>, SimError> {
    let mut names = vec![METRICS_FILE, SUMMARY_FILE];
    if plot_data {
        names.extend([ACCURACY_VS_ROUND_FILE, ACCURACY_VS_LATENCY_FILE]);
    }
    dir.check_free(&names)?;
    let mut written = vec![
        dir.write(METRICS_FILE, &metrics_csv(report))?,
        dir.write(SUMMARY_FILE, &summary_json(report))?,
    ];
    if plot_data {
        written.push(dir.write(ACCURACY_VS_ROUND_FILE, &accuracy_vs_round_csv(report))?);
        written.push(dir.write(ACCURACY_VS_LATENCY_FILE, &accuracy_vs_latency_csv(report))?);
    }
    Ok(written)
}

/// Rows are power-control arms, columns quantizer arms, cells
/// `T_max` or final accuracy.
fn matrix_csv(report: &CompareReport, cell: impl Fn(&super::ArmResult) -> String) -> Vec<u8> {
    let mut quants: Vec<&str> = Vec::new();
    let mut powers: Vec<&str> = Vec::new();
    for a in &report.arms {
        if !quants.contains(&a.quantizer.as_str()) {
            quants.push(&a.quantizer);
        }
        if !powers.contains(&a.power.as_str()) {
            powers.push(&a.power);
        }
    }
    let mut out = Vec::new();
    writeln!(out, "power,{}", quants.join(",")).unwrap();
    for p in &powers {
        let cells: Vec<String> = quants
            .iter()
            .map(|q| {
                report
                    .arms
                    .iter()
                    .find(|a| a.power == *p && a.quantizer == *q)
                    .map_or_else(String::new, &cell)
            })
            .collect();
        writeln!(out, "{p},{}", cells.join(",")).unwrap();
    }
    out
}

pub fn write_compare(dir: &OutputDir, report: &CompareReport) -> Result<Vec<PathBuf>, SimError> {
    let names = ["compare.json", "compare.csv", "tmax_matrix.csv", "accuracy_matrix.csv"];
    dir.check_free(&names)?;
    let mut long = Vec::new();
    writeln!(long, "arm,quantizer,power,t_max,final_accuracy,s_percent,r_bar_percent,mean_round_uplink_s,total_latency_s").unwrap();
    for a in &report.arms {
        writeln!(
            long,
            "{},{},{},{},{},{},{},{},{}",
            a.arm, a.quantizer, a.power, a.t_max, a.final_accuracy, a.s_percent, a.r_bar_percent,
            a.mean_round_uplink_s, a.total_latency_s
        )
        .unwrap();
    }
    let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
    json.push(b'\n');
    Ok(vec![
        dir.write(names[0], &json)?,
        dir.write(names[1], &long)?,
        dir.write(names[2], &matrix_csv(report, |a| a.t_max.to_string()))?,
        dir.write(names[3], &matrix_csv(report, |a| a.final_accuracy.to_string()))?,
    ])
}
