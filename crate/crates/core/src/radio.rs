//! Channel gains, cumulative interference, and achievable link rates.
//!
//! A link's power gain composes the reference gain at 1 m, log-normal
//! shadowing, exponential small-scale fading (unit mean), and `d^-alpha`
//! path loss. Rates follow the Shannon form `W log2(1 + SINR)` where the
//! interference term sums the received power of every other vehicle that is
//! transmitting this episode:
//!
//! - at an RSU receiver, a transmitter interferes iff it lies inside that
//!   RSU's coverage chord (the association indicator of the V2I rate);
//! - at a vehicle receiver, every other transmitter interferes except the
//!   receiver itself (the V2V rate excludes both endpoints).
//!
//! Fading and shadowing are redrawn i.i.d. per (link, episode) into a
//! [`DrawTable`] that is computed once and then read-only.

use crate::mobility::distance;
use crate::rng::Stream;
use crate::scenario::{ChannelParams, WorldState};

/// Small-scale fading and shadowing for one directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDraw {
    /// Exponential, unit-mean power gain.
    pub fading: f64,
    /// Linear log-normal shadowing gain (1.0 when shadowing is disabled).
    pub shadowing: f64,
}

impl LinkDraw {
    /// Deterministic draw with no fading or shadowing variation.
    pub const UNIT: LinkDraw = LinkDraw {
        fading: 1.0,
        shadowing: 1.0,
    };
}

/// Per-episode fading/shadowing draws for every vehicle-to-RSU and
/// vehicle-to-vehicle link.
#[derive(Debug, Clone)]
pub struct DrawTable {
    /// `[tx vehicle][rsu]`
    pub v2i: Vec<Vec<LinkDraw>>,
    /// `[tx vehicle][rx vehicle]` (diagonal unused)
    pub v2v: Vec<Vec<LinkDraw>>,
}

impl DrawTable {
    /// Draw fresh fading and shadowing for every potential link.
    pub fn draw(world: &WorldState, ch: &ChannelParams, rng: &mut Stream) -> Self {
        let n = world.vehicles.len();
        let m = world.rsus.len();
        let one = |rng: &mut Stream| LinkDraw {
            fading: rng.exponential_unit_mean(),
            shadowing: 10f64.powf(rng.normal(0.0, ch.shadowing_sigma_db) / 10.0),
        };
        DrawTable {
            v2i: (0..n)
                .map(|_| (0..m).map(|_| one(rng)).collect())
                .collect(),
            v2v: (0..n)
                .map(|_| (0..n).map(|_| one(rng)).collect())
                .collect(),
        }
    }

    /// All-ones table (no fading, no shadowing) for deterministic tests and
    /// projections.
    pub fn unit(n_vehicles: usize, n_rsus: usize) -> Self {
        DrawTable {
            v2i: vec![vec![LinkDraw::UNIT; n_rsus]; n_vehicles],
            v2v: vec![vec![LinkDraw::UNIT; n_vehicles]; n_vehicles],
        }
    }
}

/// Which node a transmitting vehicle talks to this episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxTarget {
    Rsu(usize),
    Vehicle(usize),
}

/// Vehicle-to-node association for one episode. Each vehicle transmits to
/// at most one node, so membership in the V2I and V2V maps is mutually
/// exclusive by construction.
#[derive(Debug, Clone, Default)]
pub struct AssociationMap {
    targets: Vec<Option<TxTarget>>,
}

impl AssociationMap {
    pub fn idle(n_vehicles: usize) -> Self {
        AssociationMap {
            targets: vec![None; n_vehicles],
        }
    }

    /// Worst-case projection map: every vehicle counted as a transmitter.
    /// Interference sums only consult `is_transmitting`, so the nominal
    /// targets are irrelevant; rates computed under this map lower-bound
    /// the rates of any realized association.
    pub fn saturated(n_vehicles: usize) -> Self {
        AssociationMap {
            targets: vec![Some(TxTarget::Rsu(0)); n_vehicles],
        }
    }

    pub fn set(&mut self, vehicle: usize, target: TxTarget) {
        self.targets[vehicle] = Some(target);
    }

    pub fn clear(&mut self, vehicle: usize) {
        self.targets[vehicle] = None;
    }

    pub fn target(&self, vehicle: usize) -> Option<TxTarget> {
        self.targets.get(vehicle).copied().flatten()
    }

    pub fn is_transmitting(&self, vehicle: usize) -> bool {
        self.target(vehicle).is_some()
    }

    /// RSU the vehicle uplinks to, if any.
    pub fn v2i(&self, vehicle: usize) -> Option<usize> {
        match self.target(vehicle) {
            Some(TxTarget::Rsu(i)) => Some(i),
            _ => None,
        }
    }

    /// Vehicle the vehicle transmits to, if any.
    pub fn v2v(&self, vehicle: usize) -> Option<usize> {
        match self.target(vehicle) {
            Some(TxTarget::Vehicle(i)) => Some(i),
            _ => None,
        }
    }
}

/// Receiver of an interference sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    Rsu(usize),
    Vehicle(usize),
}

/// Linear channel power gain `p0 * shadowing * fading * d^-alpha`.
pub fn channel_gain(tx: (f64, f64), rx: (f64, f64), draw: LinkDraw, ch: &ChannelParams) -> f64 {
    ch.ref_gain_p0 * draw.shadowing * draw.fading * distance(tx, rx).powf(-ch.pathloss_alpha)
}

/// Cumulative interference power (watts) at `receiver` while `intended_tx`
/// transmits, summed over every other transmitting vehicle whose
/// association indicator is active for this receiver.
pub fn interference_sum(
    receiver: Receiver,
    intended_tx: usize,
    assoc: &AssociationMap,
    world: &WorldState,
    draws: &DrawTable,
    ch: &ChannelParams,
) -> f64 {
    let mut total = 0.0;
    for j in 0..world.vehicles.len() {
        if j == intended_tx || !assoc.is_transmitting(j) {
            continue;
        }
        let tx = &world.vehicles[j];
        match receiver {
            Receiver::Rsu(i) => {
                let rsu = &world.rsus[i];
                if !rsu.covers(tx.x, world.road_length_m) {
                    continue;
                }
                total +=
                    tx.tx_power_w * channel_gain(tx.position(), rsu.position(), draws.v2i[j][i], ch);
            }
            Receiver::Vehicle(i) => {
                if j == i {
                    continue;
                }
                let rx = &world.vehicles[i];
                total +=
                    tx.tx_power_w * channel_gain(tx.position(), rx.position(), draws.v2v[j][i], ch);
            }
        }
    }
    total
}

/// Uplink rate from vehicle `k` to RSU `i`, bits/s. `None` when the vehicle
/// is outside the RSU's coverage (distinct from a numeric zero rate).
pub fn rate_v2i(
    k: usize,
    i: usize,
    assoc: &AssociationMap,
    world: &WorldState,
    draws: &DrawTable,
    ch: &ChannelParams,
) -> Option<f64> {
    let v = &world.vehicles[k];
    let rsu = &world.rsus[i];
    if !rsu.covers(v.x, world.road_length_m) {
        return None;
    }
    let signal = v.tx_power_w * channel_gain(v.position(), rsu.position(), draws.v2i[k][i], ch);
    let interference = interference_sum(Receiver::Rsu(i), k, assoc, world, draws, ch);
    Some(shannon_rate(signal, interference, ch))
}

/// Rate from vehicle `k` to vehicle `i`, bits/s. `None` when the pair is
/// out of V2V range or `k == i`.
pub fn rate_v2v(
    k: usize,
    i: usize,
    assoc: &AssociationMap,
    world: &WorldState,
    draws: &DrawTable,
    ch: &ChannelParams,
) -> Option<f64> {
    if k == i {
        return None;
    }
    let tx = &world.vehicles[k];
    let rx = &world.vehicles[i];
    if distance(tx.position(), rx.position()) > ch.v2v_range_m {
        return None;
    }
    let signal = tx.tx_power_w * channel_gain(tx.position(), rx.position(), draws.v2v[k][i], ch);
    let interference = interference_sum(Receiver::Vehicle(i), k, assoc, world, draws, ch);
    Some(shannon_rate(signal, interference, ch))
}

fn shannon_rate(signal: f64, interference: f64, ch: &ChannelParams) -> f64 {
    let sinr = signal / (ch.noise_power_w + interference);
    ch.bandwidth_hz * (1.0 + sinr).log2()
}

/// Transfer delay over the RSU/MBS fiber backhaul, seconds.
pub fn fiber_transfer_delay(size_bits: f64, ch: &ChannelParams) -> f64 {
    debug_assert!(size_bits >= 0.0);
    size_bits / ch.fiber_rate_bps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Domain;
    use crate::scenario::{build_world, ChannelParams, ScenarioConfig};
    use proptest::prelude::*;

    fn test_channel() -> ChannelParams {
        ChannelParams {
            shadowing_sigma_db: 0.0,
            ..Default::default()
        }
    }

    fn micro_world(n_vehicles: usize, seed: u64) -> WorldState {
        let cfg = ScenarioConfig {
            n_vehicles,
            platoons: vec![],
            ..Default::default()
        };
        build_world(&cfg, seed)
    }

    #[test]
    fn gain_at_reference_distance() {
        let ch = test_channel();
        let g = channel_gain((0.0, 0.0), (1.0, 0.0), LinkDraw::UNIT, &ch);
        assert!((g - 3.1623e-7).abs() < 1e-10, "{g}");
    }

    #[test]
    fn gain_inverse_square_at_alpha_two() {
        let ch = ChannelParams {
            pathloss_alpha: 2.0,
            ..test_channel()
        };
        let g1 = channel_gain((0.0, 0.0), (10.0, 0.0), LinkDraw::UNIT, &ch);
        let g2 = channel_gain((0.0, 0.0), (20.0, 0.0), LinkDraw::UNIT, &ch);
        assert!((g1 / g2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn interference_empty_when_no_transmitters() {
        let world = micro_world(4, 1);
        let draws = DrawTable::unit(4, 3);
        let assoc = AssociationMap::idle(4);
        let ch = test_channel();
        assert_eq!(
            interference_sum(Receiver::Rsu(0), 0, &assoc, &world, &draws, &ch),
            0.0
        );
    }

    #[test]
    fn interference_two_interferers_matches_term_sum() {
        let mut world = micro_world(3, 2);
        // Put everyone inside RSU 0's chord [0, 400].
        world.vehicles[0].x = 100.0;
        world.vehicles[1].x = 150.0;
        world.vehicles[2].x = 250.0;
        let draws = DrawTable::unit(3, 3);
        let mut assoc = AssociationMap::idle(3);
        assoc.set(0, TxTarget::Rsu(0));
        assoc.set(1, TxTarget::Rsu(0));
        assoc.set(2, TxTarget::Rsu(0));
        let ch = test_channel();
        let got = interference_sum(Receiver::Rsu(0), 0, &assoc, &world, &draws, &ch);
        let term = |j: usize| {
            world.vehicles[j].tx_power_w
                * channel_gain(
                    world.vehicles[j].position(),
                    world.rsus[0].position(),
                    LinkDraw::UNIT,
                    &ch,
                )
        };
        assert!((got - (term(1) + term(2))).abs() <= 1e-18);
    }

    #[test]
    fn idle_vehicle_contributes_nothing() {
        let mut world = micro_world(2, 3);
        world.vehicles[0].x = 100.0;
        world.vehicles[1].x = 150.0;
        let draws = DrawTable::unit(2, 3);
        let mut assoc = AssociationMap::idle(2);
        assoc.set(0, TxTarget::Rsu(0));
        // vehicle 1 idle: association indicator 0
        let ch = test_channel();
        assert_eq!(
            interference_sum(Receiver::Rsu(0), 0, &assoc, &world, &draws, &ch),
            0.0
        );
    }

    #[test]
    fn rate_is_bandwidth_at_unit_sinr() {
        // Arrange signal power == noise power with no interference.
        let mut world = micro_world(1, 4);
        world.vehicles[0].x = 200.0; // at RSU 0, lateral distances 2 and 5
        world.vehicles[0].y = 5.0; // same lateral as RSU: distance clamps to 1
        let ch = ChannelParams {
            ref_gain_p0: 1.0,
            ..test_channel()
        };
        world.vehicles[0].tx_power_w = ch.noise_power_w; // gain 1 at d=1
        let draws = DrawTable::unit(1, 3);
        let assoc = AssociationMap::idle(1);
        let r = rate_v2i(0, 0, &assoc, &world, &draws, &ch).unwrap();
        assert!((r - 3e7).abs() < 1e-3, "{r}");
    }

    #[test]
    fn zero_power_zero_rate() {
        let mut world = micro_world(1, 4);
        world.vehicles[0].x = 200.0;
        world.vehicles[0].tx_power_w = 0.0;
        let draws = DrawTable::unit(1, 3);
        let assoc = AssociationMap::idle(1);
        let ch = test_channel();
        assert_eq!(rate_v2i(0, 0, &assoc, &world, &draws, &ch), Some(0.0));
    }

    #[test]
    fn out_of_coverage_is_distinct_none() {
        let mut world = micro_world(1, 4);
        world.vehicles[0].x = 800.0; // outside RSU 0 chord [0,400]
        let draws = DrawTable::unit(1, 3);
        let assoc = AssociationMap::idle(1);
        let ch = test_channel();
        assert_eq!(rate_v2i(0, 0, &assoc, &world, &draws, &ch), None);
    }

    #[test]
    fn v2v_lone_pair_unit_sinr() {
        let mut world = micro_world(2, 5);
        world.vehicles[0].x = 100.0;
        world.vehicles[0].y = 0.0;
        world.vehicles[1].x = 100.0;
        world.vehicles[1].y = 0.0; // distance clamps to 1
        let ch = ChannelParams {
            ref_gain_p0: 1.0,
            ..test_channel()
        };
        world.vehicles[0].tx_power_w = ch.noise_power_w;
        let draws = DrawTable::unit(2, 3);
        let assoc = AssociationMap::idle(2);
        let r = rate_v2v(0, 1, &assoc, &world, &draws, &ch).unwrap();
        assert!((r - 3e7).abs() < 1e-3);
    }

    #[test]
    fn v2v_out_of_range_is_none() {
        let mut world = micro_world(2, 5);
        world.vehicles[0].x = 0.0;
        world.vehicles[1].x = 900.0;
        let draws = DrawTable::unit(2, 3);
        let assoc = AssociationMap::idle(2);
        let ch = test_channel();
        assert_eq!(rate_v2v(0, 1, &assoc, &world, &draws, &ch), None);
    }

    #[test]
    fn fiber_delay_arithmetic() {
        let ch = test_channel();
        assert_eq!(fiber_transfer_delay(1.5e6, &ch), 1.5e-3);
        assert_eq!(fiber_transfer_delay(0.0, &ch), 0.0);
        assert_eq!(
            fiber_transfer_delay(3.0e6, &ch),
            2.0 * fiber_transfer_delay(1.5e6, &ch)
        );
    }

    /// Independent re-implementation of the V2I rate used as an oracle:
    /// every term written out from the formula, sharing nothing with the
    /// implementation above except the inputs.
    fn oracle_rate_v2i(
        k: usize,
        i: usize,
        assoc: &AssociationMap,
        world: &WorldState,
        draws: &DrawTable,
        ch: &ChannelParams,
    ) -> f64 {
        let dist = |a: (f64, f64), b: (f64, f64)| -> f64 {
            let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            if d < 1.0 {
                1.0
            } else {
                d
            }
        };
        let v = &world.vehicles[k];
        let r = &world.rsus[i];
        let d = dist(v.position(), r.position());
        let g = ch.ref_gain_p0
            * draws.v2i[k][i].shadowing
            * draws.v2i[k][i].fading
            * d.powf(-ch.pathloss_alpha);
        let mut inter = 0.0;
        for (j, u) in world.vehicles.iter().enumerate() {
            if j == k || assoc.target(j).is_none() {
                continue;
            }
            let lo = (r.x - r.coverage_m / 2.0).max(0.0);
            let hi = (r.x + r.coverage_m / 2.0).min(world.road_length_m);
            if u.x < lo || u.x > hi {
                continue;
            }
            let dj = dist(u.position(), r.position());
            inter += u.tx_power_w
                * ch.ref_gain_p0
                * draws.v2i[j][i].shadowing
                * draws.v2i[j][i].fading
                * dj.powf(-ch.pathloss_alpha);
        }
        ch.bandwidth_hz * (1.0 + v.tx_power_w * g / (ch.noise_power_w + inter)).log2()
    }

    #[test]
    fn random_topologies_match_sinr_oracle() {
        let ch = ChannelParams::default();
        for seed in 0..50 {
            let world = micro_world(5, seed);
            let mut rng = Stream::new(seed, Domain::Fading);
            let draws = DrawTable::draw(&world, &ch, &mut rng);
            let mut assoc = AssociationMap::idle(5);
            for j in 0..5 {
                if j % 2 == 0 {
                    assoc.set(j, TxTarget::Rsu(j % 3));
                }
            }
            for k in 0..5 {
                for i in 0..3 {
                    if let Some(rate) = rate_v2i(k, i, &assoc, &world, &draws, &ch) {
                        let oracle = oracle_rate_v2i(k, i, &assoc, &world, &draws, &ch);
                        let rel = (rate - oracle).abs() / oracle.abs().max(1e-30);
                        assert!(rel < 1e-9, "seed {seed} k {k} i {i}: {rate} vs {oracle}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn gain_matches_formula_oracle(d in 1.0f64..1e3, fading in 0.01f64..10.0,
                                       shadow in 0.1f64..10.0) {
            let ch = test_channel();
            let draw = LinkDraw { fading, shadowing: shadow };
            let g = channel_gain((0.0, 0.0), (d, 0.0), draw, &ch);
            let oracle = ch.ref_gain_p0 * shadow * fading * d.powf(-ch.pathloss_alpha);
            prop_assert!((g - oracle).abs() <= 1e-12 * oracle);
        }

        #[test]
        fn more_interference_never_raises_rate(extra_x in 0.0f64..400.0, seed in 0u64..50) {
            let mut world = micro_world(3, seed);
            world.vehicles[0].x = 150.0;
            world.vehicles[1].x = extra_x;
            world.vehicles[2].x = 390.0;
            let draws = DrawTable::unit(3, 3);
            let ch = test_channel();
            let mut quiet = AssociationMap::idle(3);
            quiet.set(2, TxTarget::Rsu(0));
            let mut loud = quiet.clone();
            loud.set(1, TxTarget::Rsu(0));
            let r_quiet = rate_v2i(0, 0, &quiet, &world, &draws, &ch).unwrap();
            let r_loud = rate_v2i(0, 0, &loud, &world, &draws, &ch).unwrap();
            prop_assert!(r_loud <= r_quiet + 1e-9);
        }

        #[test]
        fn rate_nondecreasing_in_power(p1 in 0.01f64..0.2, p2 in 0.01f64..0.2, seed in 0u64..20) {
            let mut world = micro_world(2, seed);
            world.vehicles[0].x = 150.0;
            world.vehicles[1].x = 300.0;
            let draws = DrawTable::unit(2, 3);
            let ch = test_channel();
            let mut assoc = AssociationMap::idle(2);
            assoc.set(1, TxTarget::Rsu(0));
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            world.vehicles[0].tx_power_w = lo;
            let r_lo = rate_v2i(0, 0, &assoc, &world, &draws, &ch).unwrap();
            world.vehicles[0].tx_power_w = hi;
            let r_hi = rate_v2i(0, 0, &assoc, &world, &draws, &ch).unwrap();
            prop_assert!(r_hi >= r_lo - 1e-9);
        }
    }
}
