use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NetworkConfig;
use crate::rng;

/// AP and user placement on a square area with toroidal wrap-around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub ap_positions: Vec<(f64, f64)>,
    pub user_positions: Vec<(f64, f64)>,
    /// `distances[m][j]`: wrapped distance between AP `m` and user `j`,
    /// never below the configured floor.
    pub distances: Vec<Vec<f64>>,
}

/// Shortest distance between two points on a torus of side `side`.
pub fn wrapped_distance(a: (f64, f64), b: (f64, f64), side: f64) -> f64 {
    let wrap = |d: f64| {
        let d = d.abs() % side;
        d.min(side - d)
    };
    wrap(a.0 - b.0).hypot(wrap(a.1 - b.1))
}

fn perfect_square_root(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Places APs on a regular grid when `M` is a perfect square (uniformly at
/// random otherwise) and users uniformly at random.
pub fn generate_geometry(config: &NetworkConfig, seed: u64) -> Geometry {
    let side = config.area_side_m;
    let mut rng = rng::stream(seed, &[rng::TAG_GEOMETRY]);

    let ap_positions: Vec<(f64, f64)> = match perfect_square_root(config.num_aps) {
        Some(per_row) => {
            let spacing = side / per_row as f64;
            (0..config.num_aps)
                .map(|m| {
                    let (row, col) = (m / per_row, m % per_row);
                    ((col as f64 + 0.5) * spacing, (row as f64 + 0.5) * spacing)
                })
                .collect()
        }
        None => (0..config.num_aps)
            .map(|_| (rng.random_range(0.0..side), rng.random_range(0.0..side)))
            .collect(),
    };
    let user_positions: Vec<(f64, f64)> = (0..config.num_users)
        .map(|_| (rng.random_range(0.0..side), rng.random_range(0.0..side)))
        .collect();

    let distances = ap_positions
        .iter()
        .map(|&ap| {
            user_positions
                .iter()
                .map(|&ue| wrapped_distance(ap, ue, side).max(config.min_distance_m))
                .collect()
        })
        .collect();

    Geometry {
        ap_positions,
        user_positions,
        distances,
    }
}
