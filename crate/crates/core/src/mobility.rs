//! Per-episode kinematics: platoon speed synchronization, position updates
//! with wrap-around, distances, and communication hold times.
//!
//! Positions advance with constant per-vehicle speeds and wrap modulo the
//! road length (the road is a ring). Because synchronized platoon members
//! share one speed, their pairwise gaps are exactly invariant in ring
//! distance; a member that wraps re-enters at the road start and the
//! formation re-forms once every member has crossed. Hold times are
//! evaluated at decision instants under a straight-line constant-velocity
//! projection.

use crate::scenario::{RsuState, VehicleState, WorldState};

/// Returned by hold-time computations when the link never breaks under
/// current kinematics (zero relative speed while in range).
pub const HOLD_UNBOUNDED: f64 = f64::INFINITY;

/// Set every platoon member's speed to the arithmetic mean of the members'
/// current speeds; non-members are untouched.
pub fn sync_platoon_speeds(world: &WorldState) -> WorldState {
    let mut out = world.clone();
    for platoon in &mut out.platoons {
        let n = platoon.member_ids.len();
        if n == 0 {
            continue;
        }
        let mean = platoon
            .member_ids
            .iter()
            .map(|&m| world.vehicles[m].speed_ms)
            .sum::<f64>()
            / n as f64;
        for &m in &platoon.member_ids {
            out.vehicles[m].speed_ms = mean;
        }
        platoon.speed_ms = mean;
    }
    out
}

/// Advance every vehicle by `speed * dt` and wrap modulo the road length,
/// preserving speed and platoon membership.
pub fn step_positions(world: &WorldState, dt: f64) -> WorldState {
    debug_assert!(dt > 0.0);
    let road = world.road_length_m;
    let mut out = world.clone();
    for v in &mut out.vehicles {
        v.x = (v.x + v.speed_ms * dt).rem_euclid(road);
    }
    out
}

/// Euclidean distance, clamped below at 1 m to keep the path-loss model
/// away from its singularity.
pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt().max(1.0)
}

/// Gap between two road positions measured around the ring.
pub fn ring_gap(a: f64, b: f64, road_length: f64) -> f64 {
    let d = (a - b).rem_euclid(road_length);
    d.min(road_length - d)
}

/// Time until `vehicle` leaves `rsu`'s coverage chord in its direction of
/// travel; 0 if it is currently outside the chord.
pub fn hold_time_v2i(vehicle: &VehicleState, rsu: &RsuState, road_length: f64) -> f64 {
    let (lo, hi) = rsu.chord(road_length);
    if !(lo..=hi).contains(&vehicle.x) {
        return 0.0;
    }
    if vehicle.speed_ms == 0.0 {
        return HOLD_UNBOUNDED;
    }
    let exit = if vehicle.speed_ms > 0.0 { hi } else { lo };
    (exit - vehicle.x).abs() / vehicle.speed_ms.abs()
}

/// Time until the along-road gap between `a` and `b` exceeds `range` under
/// constant speeds. Unbounded when the relative speed is zero and the pair
/// is in range; 0 when already out of range.
pub fn hold_time_v2v(a: &VehicleState, b: &VehicleState, range: f64) -> f64 {
    let gap0 = a.x - b.x;
    if gap0.abs() > range {
        return 0.0;
    }
    let dv = a.speed_ms - b.speed_ms;
    if dv == 0.0 {
        return HOLD_UNBOUNDED;
    }
    // |gap0 + dv t| first exceeds `range` at the positive root below; if the
    // pair is closing, the gap shrinks through zero and exits on the far
    // side, which the signed form captures.
    (range * dv.signum() - gap0) / dv
}
