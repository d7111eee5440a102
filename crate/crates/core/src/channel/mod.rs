//! Cell-free massive MIMO uplink: geometry, large-scale fading, pilot
//! assignment and the closed-form SINR/rate under maximum-ratio combining.
//!
//! Rates depend only on large-scale statistics, so everything here is
//! computed once per geometry and then evaluated for arbitrary power
//! vectors.

mod geometry;
mod pilots;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use geometry::{generate_geometry, wrapped_distance, Geometry};
pub use pilots::{assign_pilots, PilotAssignment};

/// Network and radio parameters. Defaults reproduce the reference
/// simulation setup (16 APs with 4 antennas, 20 MHz, `τ_c = 200`,
/// `τ_p = 10`, 100 mW, -94 dBm noise, pathloss exponent 3.67).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_users: usize,
    pub area_side_m: f64,
    pub pathloss_exponent: f64,
    /// Gain at the reference distance, in dB.
    pub pathloss_intercept_db: f64,
    pub reference_distance_m: f64,
    pub min_distance_m: f64,
    pub bandwidth_hz: f64,
    pub tau_c: usize,
    pub tau_p: usize,
    pub uplink_power_w: f64,
    pub noise_power_dbm: f64,
    pub noise_figure_db: f64,
    /// When true `noise_power_dbm` already contains the noise figure.
    pub noise_figure_included: bool,
    /// Draw a fresh geometry every round instead of once per run.
    pub redraw_each_round: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_aps: 16,
            antennas_per_ap: 4,
            num_users: 20,
            area_side_m: 1000.0,
            pathloss_exponent: 3.67,
            pathloss_intercept_db: -30.5,
            reference_distance_m: 1.0,
            min_distance_m: 1.0,
            bandwidth_hz: 20e6,
            tau_c: 200,
            tau_p: 10,
            uplink_power_w: 0.1,
            noise_power_dbm: -94.0,
            noise_figure_db: 7.0,
            noise_figure_included: true,
            redraw_each_round: false,
        }
    }
}

impl NetworkConfig {
    /// Receiver noise power `σ²` in watts.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = if self.noise_figure_included {
            self.noise_power_dbm
        } else {
            self.noise_power_dbm + self.noise_figure_db
        };
        10f64.powf((dbm - 30.0) / 10.0)
    }

    /// Pre-log factor `B_τ = B (1 - τ_p/τ_c)` in Hz.
    pub fn b_tau(&self) -> f64 {
        self.bandwidth_hz * (1.0 - self.tau_p as f64 / self.tau_c as f64)
    }

    pub fn pilot_power_w(&self) -> f64 {
        self.tau_p as f64 * self.uplink_power_w
    }
}

/// Large-scale fading gains, `beta[m][j]` between AP `m` and user `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleFading {
    pub beta: Vec<Vec<f64>>,
}

impl LargeScaleFading {
    pub fn num_aps(&self) -> usize {
        self.beta.len()
    }

    pub fn num_users(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }
}

/// Power-law pathloss `β = PL0 · (d/d0)^(-α)` with `PL0` from the intercept.
pub fn pathloss_gain(distance_m: f64, config: &NetworkConfig) -> f64 {
    let pl0 = 10f64.powf(config.pathloss_intercept_db / 10.0);
    pl0 * (distance_m / config.reference_distance_m).powf(-config.pathloss_exponent)
}

pub fn large_scale_fading(geometry: &Geometry, config: &NetworkConfig) -> LargeScaleFading {
    LargeScaleFading {
        beta: geometry
            .distances
            .iter()
            .map(|row| row.iter().map(|&d| pathloss_gain(d, config)).collect())
            .collect(),
    }
}

/// Channel-estimation statistics and the coefficient block of the uplink
/// SINR expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrCoefficients {
    /// `gamma[m][j]`: mean-square of the MMSE channel estimate.
    pub gamma: Vec<Vec<f64>>,
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    /// `b_tilde[j][k]`: interference from user `k` onto user `j`. The
    /// diagonal is unused.
    pub b_tilde: Vec<Vec<f64>>,
    pub i_m: Vec<f64>,
    /// Pre-log factor in Hz.
    pub b_tau: f64,
}

impl SinrCoefficients {
    pub fn num_users(&self) -> usize {
        self.a_bar.len()
    }
}

pub fn channel_statistics(
    fading: &LargeScaleFading,
    pilots: &PilotAssignment,
    config: &NetworkConfig,
) -> SinrCoefficients {
    let beta = &fading.beta;
    let (m_aps, k_users) = (fading.num_aps(), fading.num_users());
    let n = config.antennas_per_ap as f64;
    let p_p = config.pilot_power_w();
    let p_u = config.uplink_power_w;
    let sigma2 = config.noise_power_w();

    let gamma: Vec<Vec<f64>> = beta
        .iter()
        .map(|row| {
            (0..k_users)
                .map(|j| {
                    let received: f64 = (0..k_users)
                        .map(|k| row[k] * pilots.overlap(k, j))
                        .sum();
                    p_p * row[j] * row[j] / (p_p * received + sigma2)
                })
                .collect()
        })
        .collect();

    let sum_over_aps = |f: &dyn Fn(usize) -> f64| -> f64 { (0..m_aps).map(f).sum() };

    let a_bar = (0..k_users)
        .map(|j| sum_over_aps(&|m| n * gamma[m][j]).powi(2))
        .collect();
    let b_bar = (0..k_users)
        .map(|j| sum_over_aps(&|m| n * gamma[m][j] * beta[m][j]))
        .collect();
    let i_m = (0..k_users)
        .map(|j| sum_over_aps(&|m| n * sigma2 * gamma[m][j] / p_u))
        .collect();
    let b_tilde = (0..k_users)
        .map(|j| {
            (0..k_users)
                .map(|k| {
                    if k == j {
                        return 0.0;
                    }
                    let non_coherent = sum_over_aps(&|m| n * gamma[m][j] * beta[m][k]);
                    let coherent =
                        sum_over_aps(&|m| n * gamma[m][j] * beta[m][k] / beta[m][j]).powi(2);
                    non_coherent + pilots.overlap(j, k) * coherent
                })
                .collect()
        })
        .collect();

    SinrCoefficients {
        gamma,
        a_bar,
        b_bar,
        b_tilde,
        i_m,
        b_tau: config.b_tau(),
    }
}

/// Effective SINR of user `j` for normalized powers `powers ∈ [0,1]^K`.
pub fn sinr(coeffs: &SinrCoefficients, powers: &[f64], j: usize) -> f64 {
    let interference: f64 = powers
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(k, &p)| p * coeffs.b_tilde[j][k])
        .sum();
    coeffs.a_bar[j] * powers[j] / (coeffs.b_bar[j] * powers[j] + interference + coeffs.i_m[j])
}

/// Achievable uplink rate of user `j` in bit/s.
pub fn rate(coeffs: &SinrCoefficients, powers: &[f64], j: usize) -> f64 {
    coeffs.b_tau * (1.0 + sinr(coeffs, powers, j)).log2()
}

pub fn rates(coeffs: &SinrCoefficients, powers: &[f64]) -> Vec<f64> {
    (0..coeffs.num_users())
        .map(|j| rate(coeffs, powers, j))
        .collect()
}

/// Everything the uplink model needs for one geometry draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub geometry: Geometry,
    pub fading: LargeScaleFading,
    pub pilots: PilotAssignment,
    pub coeffs: SinrCoefficients,
}

impl ChannelState {
    pub fn build(config: &NetworkConfig, seed: u64) -> Self {
        let geometry = generate_geometry(config, seed);
        let fading = large_scale_fading(&geometry, config);
        let pilots = assign_pilots(&fading, config.tau_p);
        let coeffs = channel_statistics(&fading, &pilots, config);
        Self {
            geometry,
            fading,
            pilots,
            coeffs,
        }
    }

    /// Writes `beta.csv` (M×K), `b_tilde.csv` (K×K) and
    /// `user_coefficients.csv` (per-user Ā, B̄, I_M, pilot) into `dir`.
    pub fn export_csv(&self, dir: &Path) -> std::io::Result<()> {
        write_matrix(&dir.join("beta.csv"), &self.fading.beta)?;
        write_matrix(&dir.join("b_tilde.csv"), &self.coeffs.b_tilde)?;
        let mut f = std::fs::File::create(dir.join("user_coefficients.csv"))?;
        writeln!(f, "j,pilot,a_bar,b_bar,i_m")?;
        for j in 0..self.coeffs.num_users() {
            writeln!(
                f,
                "{},{},{},{},{}",
                j,
                self.pilots.pilot_of[j],
                self.coeffs.a_bar[j],
                self.coeffs.b_bar[j],
                self.coeffs.i_m[j]
            )?;
        }
        Ok(())
    }
}

fn write_matrix(path: &Path, rows: &[Vec<f64>]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    f.flush()
}
