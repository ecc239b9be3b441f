//! Closed-form link and freshness math.
//!
//! Everything here is a pure function. Positions live on the integer lattice,
//! so squared distances are exact integers and the effective distance of a
//! node is carried as its square.

use std::f64::consts::LN_2;

use crate::scenario::{Point, RadioParams};

/// Euclidean distance between two lattice points.
pub fn distance(node: Point, entity: Point) -> f64 {
    f64::from(node.dist_sq(entity)).sqrt()
}

/// Linear SNR of node `node_index` at `distance`, zero when not scheduled.
///
/// A scheduled transmission at distance zero has unbounded SNR and returns
/// `f64::INFINITY`.
pub fn snr(radio: &RadioParams, node_index: usize, distance: f64, scheduled: bool) -> f64 {
    if !scheduled {
        return 0.0;
    }
    if distance == 0.0 {
        return f64::INFINITY;
    }
    let received = radio.tx_power[node_index] * radio.ref_gain() / (distance * distance);
    received / (radio.bandwidth * radio.noise_psd())
}

/// With equal transmit powers the SNR threshold reduces to a distance
/// threshold; the boundary `distance == success_distance` succeeds.
pub fn success(radio: &RadioParams, distance: f64, scheduled: bool) -> bool {
    scheduled && distance <= radio.success_distance
}

/// Age of information and effective distance of one node, as held by the
/// entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FreshnessState {
    pub aoi: u32,
    /// Square of the distance at which the latest update was received.
    pub eff_dist_sq: u32,
}

/// One slot of the AoI / effective-distance recursion: a successful reception
/// resets the age to 1 and records the current distance; otherwise the age
/// grows by one and the effective distance is held.
pub fn step_freshness(prev: FreshnessState, success: bool, current_dist_sq: u32) -> FreshnessState {
    if success {
        FreshnessState {
            aoi: 1,
            eff_dist_sq: current_dist_sq,
        }
    } else {
        FreshnessState {
            aoi: prev.aoi + 1,
            eff_dist_sq: prev.eff_dist_sq,
        }
    }
}

/// Value of information of a node in bits/s:
/// `−B·log₂(1 − P·g₀·ρ^A / (B·N₀·q² + P·g₀))`.
///
/// `ln_1p` keeps the result accurate (and strictly positive) when `ρ^A` is
/// tiny.
pub fn voi(radio: &RadioParams, node_index: usize, correlation: f64, fresh: FreshnessState) -> f64 {
    let signal = radio.tx_power[node_index] * radio.ref_gain();
    let noise = radio.bandwidth * radio.noise_psd() * f64::from(fresh.eff_dist_sq);
    let fraction = signal * correlation.powi(fresh.aoi as i32) / (noise + signal);
    -radio.bandwidth * (-fraction).ln_1p() / LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radio() -> RadioParams {
        RadioParams::standard(3, 1.0)
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn distances() {
        assert_eq!(distance(Point::new(0, 0), Point::new(3, 4)), 5.0);
        assert_eq!(distance(Point::new(2, 2), Point::new(2, 2)), 0.0);
        assert_eq!(distance(Point::new(4, 4), Point::new(4, 3)), 1.0);
    }

    #[test]
    fn snr_values() {
        // 1 · 1e-5 / (2e6 · 1e-14) = 500
        assert!(close(snr(&radio(), 0, 1.0, true), 500.0, 1e-12));
        assert_eq!(snr(&radio(), 0, 1.0, false), 0.0);
        assert!(close(snr(&radio(), 0, 2.0, true), 125.0, 1e-12));
        assert_eq!(snr(&radio(), 0, 0.0, true), f64::INFINITY);
        assert_eq!(snr(&radio(), 0, 0.0, false), 0.0);
    }

    #[test]
    fn success_boundary() {
        let r = radio();
        assert!(success(&r, 1.0, true));
        assert!(!success(&r, 1.0001, true));
        assert!(!success(&r, 0.5, false));
        assert!(success(&r, 0.0, true));
    }

    #[test]
    fn freshness_branches() {
        let prev = FreshnessState { aoi: 4, eff_dist_sq: 9 };
        assert_eq!(step_freshness(prev, true, 1), FreshnessState { aoi: 1, eff_dist_sq: 1 });
        assert_eq!(step_freshness(prev, false, 1), FreshnessState { aoi: 5, eff_dist_sq: 9 });
        let zero = FreshnessState { aoi: 1, eff_dist_sq: 0 };
        assert_eq!(step_freshness(zero, false, 7), FreshnessState { aoi: 2, eff_dist_sq: 0 });
    }

    #[test]
    fn voi_reference_point() {
        // fraction = 5e-6 / 1.002e-5; frozen from a 40-digit mpmath evaluation.
        let v = voi(&radio(), 0, 0.5, FreshnessState { aoi: 1, eff_dist_sq: 1 });
        let fraction: f64 = 5e-6 / 1.002e-5;
        assert!(close(fraction, 0.499_001_996_007_984, 1e-12));
        assert!(close(v, 1_994_246.478_488_873, 1e-9), "{v}");
    }

    #[test]
    fn voi_zero_distance_and_stale_limit() {
        let r = radio();
        let v = voi(&r, 0, 0.3, FreshnessState { aoi: 1, eff_dist_sq: 0 });
        assert!(close(v, -2.0e6 * (0.7f64).log2(), 1e-12));
        let stale = voi(&r, 0, 0.5, FreshnessState { aoi: 1_000_000, eff_dist_sq: 4 });
        assert!((0.0..1e-300).contains(&stale));
        let old = voi(&r, 0, 0.5, FreshnessState { aoi: 60, eff_dist_sq: 4 });
        assert!(old > 0.0 && old < 1e-8);
    }
}
