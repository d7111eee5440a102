use serde::{Deserialize, Serialize};

use super::LargeScaleFading;

/// Orthogonal pilot book assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotAssignment {
    pub tau_p: usize,
    pub pilot_of: Vec<usize>,
    /// Users sharing each user's pilot, excluding the user itself.
    pub copilots: Vec<Vec<usize>>,
}

impl PilotAssignment {
    fn from_indices(tau_p: usize, pilot_of: Vec<usize>) -> Self {
        let copilots = (0..pilot_of.len())
            .map(|j| {
                (0..pilot_of.len())
                    .filter(|&k| k != j && pilot_of[k] == pilot_of[j])
                    .collect()
            })
            .collect();
        Self {
            tau_p,
            pilot_of,
            copilots,
        }
    }

    pub fn num_users(&self) -> usize {
        self.pilot_of.len()
    }

    /// `|φ_j^H φ_k|²` for an orthonormal pilot book: 1 on shared pilots
    /// (including `j == k`), 0 otherwise.
    pub fn overlap(&self, j: usize, k: usize) -> f64 {
        if self.pilot_of[j] == self.pilot_of[k] {
            1.0
        } else {
            0.0
        }
    }

    pub fn reuse_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.tau_p];
        for &p in &self.pilot_of {
            counts[p] += 1;
        }
        counts
    }
}

/// Assigns pilots to users.
///
/// With `K <= tau_p` every user gets its own pilot. Otherwise users are
/// visited in descending order of total gain `Σ_m β_m^j`; each picks, among
/// the least-loaded pilots, the one minimizing `Σ_{k on pilot} max_m β_m^j β_m^k`.
/// Ties go to the lowest pilot index.
pub fn assign_pilots(fading: &LargeScaleFading, tau_p: usize) -> PilotAssignment {
    assert!(tau_p >= 1, "tau_p must be at least 1");
    let beta = &fading.beta;
    let k_users = fading.num_users();
    if k_users <= tau_p {
        return PilotAssignment::from_indices(tau_p, (0..k_users).collect());
    }

    let total_gain: Vec<f64> = (0..k_users)
        .map(|j| beta.iter().map(|row| row[j]).sum())
        .collect();
    let mut order: Vec<usize> = (0..k_users).collect();
    order.sort_by(|&a, &b| total_gain[b].total_cmp(&total_gain[a]).then(a.cmp(&b)));

    let contamination = |j: usize, k: usize| {
        beta.iter()
            .map(|row| row[j] * row[k])
            .fold(0.0_f64, f64::max)
    };

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); tau_p];
    let mut pilot_of = vec![0; k_users];
    for &j in &order {
        let min_load = members.iter().map(Vec::len).min().unwrap_or(0);
        let mut best: Option<(usize, f64)> = None;
        for (pilot, users) in members.iter().enumerate() {
            if users.len() != min_load {
                continue;
            }
            let cost: f64 = users.iter().map(|&k| contamination(j, k)).sum();
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((pilot, cost));
            }
        }
        let (pilot, _) = best.expect("at least one pilot has minimum load");
        members[pilot].push(j);
        pilot_of[j] = pilot;
    }
    PilotAssignment::from_indices(tau_p, pilot_of)
}
