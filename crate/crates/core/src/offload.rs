//! Task generation, the per-target delay models, load bookkeeping, and
//! feasibility filtering.
//!
//! Every tasked vehicle picks exactly one target per episode: its own CPU,
//! a platoon vehicle, an RSU, another RSU via fiber relay, an MBS via fiber
//! relay, or (for platoon members whose public task is already resolved) a
//! zero-delay skip. RSU compute is shared proportionally to demand among
//! the tasks committed to it within the episode; loads reset between
//! episodes since tasks either finish within one episode or count as
//! failed.

use crate::mobility::{distance, hold_time_v2i, hold_time_v2v};
use crate::radio::{rate_v2i, rate_v2v, AssociationMap, DrawTable};
use crate::rng::Stream;
use crate::scenario::{ComputeParams, ChannelParams, TaskParams, WorldState};
use serde::{Deserialize, Serialize};

/// MBS compute kept in reserve for vehicle traffic no matter how large the
/// non-vehicle Poisson draw is, cycles/s.
pub const MBS_COMPUTE_FLOOR_HZ: f64 = 0.5e9;

/// Granularity of the non-vehicle MBS load draw, cycles/s per Poisson unit.
pub const MBS_POISSON_UNIT_HZ: f64 = 1e9;

/// One offloading job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub owner: usize,
    /// Size lambda, bits.
    pub size_bits: f64,
    /// Density rho, cycles/bit.
    pub density_cycles_per_bit: f64,
    /// Deadline D^max, seconds.
    pub deadline_s: f64,
    pub is_public: bool,
}

impl Task {
    /// Total compute demand lambda * rho, cycles.
    pub fn demand_cycles(&self) -> f64 {
        self.size_bits * self.density_cycles_per_bit
    }
}

/// One-hot offloading choice for a tasked vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffloadDecision {
    /// Compute on the owner's CPU.
    Local,
    /// Offload to a platoon vehicle over V2V.
    PlatoonVehicle(usize),
    /// Offload to a covering RSU over V2I.
    Rsu(usize),
    /// Uplink to `entry`, fiber-relay to `target`, compute at `target`.
    RsuRelay { entry: usize, target: usize },
    /// Uplink to `entry`, fiber-relay to MBS `mbs`, compute there.
    MbsRelay { entry: usize, mbs: usize },
    /// Reuse the platoon's already-resolved public result at zero delay.
    SkipPublic,
}

impl std::fmt::Display for OffloadDecision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OffloadDecision::Local => write!(f, "local"),
            OffloadDecision::PlatoonVehicle(j) => write!(f, "pla:{j}"),
            OffloadDecision::Rsu(i) => write!(f, "rsu:{i}"),
            OffloadDecision::RsuRelay { entry, target } => write!(f, "rsurelay:{entry}>{target}"),
            OffloadDecision::MbsRelay { entry, mbs } => write!(f, "mbsrelay:{entry}>{mbs}"),
            OffloadDecision::SkipPublic => write!(f, "skip"),
        }
    }
}

/// Demand committed to one RSU within the current episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RsuLoad {
    /// Total committed demand zeta, cycles.
    pub demand_cycles: f64,
    /// Tasks currently served.
    pub served_count: usize,
}

/// Compute available at one MBS this episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbsLoad {
    /// Compute used by non-vehicle traffic, cycles/s.
    pub nonvehicle_hz: f64,
    /// Compute left for vehicles, cycles/s.
    pub available_hz: f64,
}

impl MbsLoad {
    /// Draw the Poisson-distributed non-vehicle usage for one episode.
    pub fn draw(compute: &ComputeParams, rng: &mut Stream) -> Self {
        let units = rng.poisson(compute.mbs_nonvehicle_mean_hz / MBS_POISSON_UNIT_HZ);
        let nonvehicle = (units as f64 * MBS_POISSON_UNIT_HZ)
            .min(compute.f_mbs_hz - MBS_COMPUTE_FLOOR_HZ)
            .max(0.0);
        MbsLoad {
            nonvehicle_hz: nonvehicle,
            available_hz: compute.f_mbs_hz - nonvehicle,
        }
    }

    /// Fully idle MBS.
    pub fn idle(compute: &ComputeParams) -> Self {
        MbsLoad {
            nonvehicle_hz: 0.0,
            available_hz: compute.f_mbs_hz,
        }
    }
}

/// Per-episode load state of every RSU and MBS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loads {
    pub rsus: Vec<RsuLoad>,
    pub mbs: Vec<MbsLoad>,
}

impl Loads {
    pub fn fresh(n_rsus: usize, mbs: Vec<MbsLoad>) -> Self {
        Loads {
            rsus: vec![RsuLoad::default(); n_rsus],
            mbs,
        }
    }

    /// Whether `rsu` can admit one more task while keeping the strict
    /// capacity bound `served_count < N` after the assignment.
    pub fn rsu_has_slot(&self, rsu: usize, capacity_n: usize) -> bool {
        self.rsus[rsu].served_count + 1 < capacity_n
    }

    pub fn commit_rsu(&mut self, rsu: usize, demand_cycles: f64) {
        self.rsus[rsu].demand_cycles += demand_cycles;
        self.rsus[rsu].served_count += 1;
    }
}

/// Generate one task per vehicle; platoon members draw the public flag with
/// the platoon ratio, free vehicles with the free ratio.
pub fn generate_tasks(world: &WorldState, params: &TaskParams, rng: &mut Stream) -> Vec<Task> {
    world
        .vehicles
        .iter()
        .map(|v| {
            let ratio = if v.platoon_id.is_some() {
                params.public_ratio_platoon
            } else {
                params.public_ratio_free
            };
            Task {
                owner: v.id,
                size_bits: params.size_bits,
                density_cycles_per_bit: params.density_cycles_per_bit,
                deadline_s: params.deadline_s,
                is_public: rng.bernoulli(ratio),
            }
        })
        .collect()
}

/// LOCAL model: lambda * rho / F.
pub fn delay_local(task: &Task, f_vehicle_hz: f64) -> f64 {
    debug_assert!(f_vehicle_hz > 0.0);
    task.demand_cycles() / f_vehicle_hz
}

/// VEH-PLA model: compute at the target vehicle plus the V2V transfer.
/// `None` when the rate is not positive (infeasible, not a numeric delay).
pub fn delay_platoon(task: &Task, rate_bps: f64, f_target_hz: f64) -> Option<f64> {
    if !(rate_bps > 0.0) {
        return None;
    }
    Some(task.demand_cycles() / f_target_hz + task.size_bits / rate_bps)
}

/// Proportional RSU CPU share `(lambda rho / zeta) * F^R`; `zeta_cycles`
/// must already include the task's own demand.
pub fn rsu_cpu_share(task: &Task, zeta_cycles: f64, f_rsu_hz: f64) -> f64 {
    debug_assert!(zeta_cycles >= task.demand_cycles() - 1e-9);
    (task.demand_cycles() / zeta_cycles) * f_rsu_hz
}

/// RSU model: compute at the allocated share plus the V2I transfer.
pub fn delay_rsu(task: &Task, rate_bps: f64, share_hz: f64) -> Option<f64> {
    if !(rate_bps > 0.0) || !(share_hz > 0.0) {
        return None;
    }
    Some(task.demand_cycles() / share_hz + task.size_bits / rate_bps)
}

/// RSU-relay model: V2I uplink, fiber hop, compute at the target RSU.
pub fn delay_rsu_relay(
    task: &Task,
    entry_rate_bps: f64,
    fiber_rate_bps: f64,
    share_at_target_hz: f64,
) -> Option<f64> {
    if !(entry_rate_bps > 0.0) || !(share_at_target_hz > 0.0) {
        return None;
    }
    Some(
        task.size_bits / entry_rate_bps
            + task.size_bits / fiber_rate_bps
            + task.demand_cycles() / share_at_target_hz,
    )
}

/// MBS-relay model: V2I uplink, fiber hop, compute at the MBS's available
/// capacity.
pub fn delay_mbs_relay(
    task: &Task,
    entry_rate_bps: f64,
    fiber_rate_bps: f64,
    mbs: &MbsLoad,
) -> Option<f64> {
    if !(entry_rate_bps > 0.0) || !(mbs.available_hz > 0.0) {
        return None;
    }
    Some(
        task.size_bits / entry_rate_bps
            + task.size_bits / fiber_rate_bps
            + task.demand_cycles() / mbs.available_hz,
    )
}

/// Realized delay of one committed decision. `loads` must reflect the
/// episode's committed assignments (RSU demand includes the task's own
/// contribution); rates are evaluated under `assoc`.
pub fn decision_delay(
    decision: OffloadDecision,
    task: &Task,
    world: &WorldState,
    assoc: &AssociationMap,
    draws: &DrawTable,
    ch: &ChannelParams,
    compute: &ComputeParams,
    loads: &Loads,
) -> Option<f64> {
    let k = task.owner;
    match decision {
        OffloadDecision::Local => Some(delay_local(task, world.vehicles[k].f_max_hz)),
        OffloadDecision::PlatoonVehicle(j) => {
            let rate = rate_v2v(k, j, assoc, world, draws, ch)?;
            delay_platoon(task, rate, world.vehicles[j].f_max_hz)
        }
        OffloadDecision::Rsu(i) => {
            let rate = rate_v2i(k, i, assoc, world, draws, ch)?;
            let share = rsu_cpu_share(task, loads.rsus[i].demand_cycles, compute.f_rsu_hz);
            delay_rsu(task, rate, share)
        }
        OffloadDecision::RsuRelay { entry, target } => {
            let rate = rate_v2i(k, entry, assoc, world, draws, ch)?;
            let share = rsu_cpu_share(task, loads.rsus[target].demand_cycles, compute.f_rsu_hz);
            delay_rsu_relay(task, rate, ch.fiber_rate_bps, share)
        }
        OffloadDecision::MbsRelay { entry, mbs } => {
            let rate = rate_v2i(k, entry, assoc, world, draws, ch)?;
            delay_mbs_relay(task, rate, ch.fiber_rate_bps, &loads.mbs[mbs])
        }
        OffloadDecision::SkipPublic => Some(0.0),
    }
}

/// Per-vehicle summed delay (Eq. 8): each tasked vehicle contributes the
/// delay of its single selected model; `None` marks an infeasible
/// realization.
pub fn total_delay(
    decisions: &[(usize, OffloadDecision)],
    tasks: &[Task],
    world: &WorldState,
    assoc: &AssociationMap,
    draws: &DrawTable,
    ch: &ChannelParams,
    compute: &ComputeParams,
    loads: &Loads,
) -> Vec<(usize, Option<f64>)> {
    decisions
        .iter()
        .map(|&(vehicle, decision)| {
            let task = tasks
                .iter()
                .find(|t| t.owner == vehicle)
                .unwrap_or_else(|| panic!("decision references vehicle {vehicle} with no task"));
            (
                vehicle,
                decision_delay(decision, task, world, assoc, draws, ch, compute, loads),
            )
        })
        .collect()
}

/// System objective (Eq. 9a): summed delay over tasked vehicles.
pub fn system_objective(delays: &[f64]) -> f64 {
    delays.iter().sum()
}

/// Candidate platoon offloading targets for vehicle `k`, in a fixed
/// deterministic order: fellow members (formation order) when `k` is
/// platooned, otherwise platoon vehicles within V2V range sorted by
/// distance then id.
pub fn platoon_targets(world: &WorldState, k: usize, ch: &ChannelParams) -> Vec<usize> {
    let me = &world.vehicles[k];
    if me.platoon_id.is_some() {
        return world.platoon_fellows(k);
    }
    let mut candidates: Vec<(f64, usize)> = world
        .vehicles
        .iter()
        .filter(|v| v.id != k && v.platoon_id.is_some())
        .map(|v| (distance(me.position(), v.position()), v.id))
        .filter(|&(d, _)| d <= ch.v2v_range_m)
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.into_iter().map(|(_, id)| id).collect()
}

/// RSUs covering vehicle `k`, nearest first.
pub fn covering_rsus(world: &WorldState, k: usize) -> Vec<usize> {
    let x = world.vehicles[k].x;
    let mut covering: Vec<(f64, usize)> = world
        .rsus
        .iter()
        .filter(|r| r.covers(x, world.road_length_m))
        .map(|r| ((r.x - x).abs(), r.id))
        .collect();
    covering.sort_by(|a, b| a.partial_cmp(b).unwrap());
    covering.into_iter().map(|(_, id)| id).collect()
}

/// Relay target for an entry RSU: the id-adjacent RSU with the lowest
/// committed demand (lower id wins ties). `None` when the entry has no
/// neighbor.
pub fn relay_target(entry: usize, loads: &Loads) -> Option<usize> {
    let n = loads.rsus.len();
    let mut best: Option<usize> = None;
    for candidate in [entry.checked_sub(1), Some(entry + 1)].into_iter().flatten() {
        if candidate >= n {
            continue;
        }
        best = match best {
            None => Some(candidate),
            Some(b) if loads.rsus[candidate].demand_cycles < loads.rsus[b].demand_cycles => {
                Some(candidate)
            }
            Some(b) => Some(b),
        };
    }
    best
}

/// Everything feasibility needs beyond the world itself.
pub struct FeasibilityContext<'a> {
    pub world: &'a WorldState,
    pub loads: &'a Loads,
    pub draws: &'a DrawTable,
    pub channel: &'a ChannelParams,
    pub compute: &'a ComputeParams,
    pub capacity_n: usize,
    /// False disables the platoon-vehicle variants (the no-platooning
    /// scheme ablation).
    pub platoon_offloading: bool,
    /// True when an identical public task is already resolved in the
    /// vehicle's platoon this episode (enables SkipPublic).
    pub public_resolved: bool,
}

/// The worst admissible RSU CPU share under the strict capacity bound:
/// tasks share one episode's common demand, so a fully loaded RSU serves
/// `N - 1` of them. `None` when the capacity admits nothing.
pub fn worst_case_share(f_rsu_hz: f64, capacity_n: usize) -> Option<f64> {
    let slots = capacity_n.checked_sub(1)?;
    if slots == 0 {
        return None;
    }
    Some(f_rsu_hz / slots as f64)
}

/// The candidate decision set for vehicle `k` with each variant's
/// projected delay, filtered by deadline, hold-time, and capacity
/// constraints.
///
/// Projections are pessimistic: rates assume every vehicle transmits
/// (worst-case interference for this episode's draws) and RSU shares
/// assume the fullest admissible co-load, so a masked action's realized
/// delay never exceeds its projection. An empty set is legal.
pub fn feasible_decisions_with_delays(
    k: usize,
    task: &Task,
    ctx: &FeasibilityContext,
) -> Vec<(OffloadDecision, f64)> {
    let mut out = Vec::new();
    let world = ctx.world;
    let me = &world.vehicles[k];
    let saturated = AssociationMap::saturated(world.vehicles.len());
    let deadline = task.deadline_s;

    let local = delay_local(task, me.f_max_hz);
    if local <= deadline {
        out.push((OffloadDecision::Local, local));
    }

    if ctx.platoon_offloading {
        for j in platoon_targets(world, k, ctx.channel) {
            let Some(rate) = rate_v2v(k, j, &saturated, world, ctx.draws, ctx.channel) else {
                continue;
            };
            let Some(delay) = delay_platoon(task, rate, world.vehicles[j].f_max_hz) else {
                continue;
            };
            let hold = hold_time_v2v(me, &world.vehicles[j], ctx.channel.v2v_range_m);
            if delay <= deadline && hold >= delay {
                out.push((OffloadDecision::PlatoonVehicle(j), delay));
            }
        }
    }

    let Some(shared) = worst_case_share(ctx.compute.f_rsu_hz, ctx.capacity_n) else {
        // No RSU can admit anything; only the skip rule below may add more.
        if task.is_public && me.platoon_id.is_some() && ctx.public_resolved {
            out.push((OffloadDecision::SkipPublic, 0.0));
        }
        return out;
    };

    for entry in covering_rsus(world, k) {
        if !ctx.loads.rsu_has_slot(entry, ctx.capacity_n) {
            continue;
        }
        let Some(rate) = rate_v2i(k, entry, &saturated, world, ctx.draws, ctx.channel) else {
            continue;
        };
        let hold = hold_time_v2i(me, &world.rsus[entry], world.road_length_m);

        if let Some(delay) = delay_rsu(task, rate, shared) {
            if delay <= deadline && delay <= hold {
                out.push((OffloadDecision::Rsu(entry), delay));
            }
        }

        if let Some(target) = relay_target(entry, ctx.loads) {
            if ctx.loads.rsu_has_slot(target, ctx.capacity_n) {
                if let Some(delay) =
                    delay_rsu_relay(task, rate, ctx.channel.fiber_rate_bps, shared)
                {
                    if delay <= deadline && delay <= hold {
                        out.push((OffloadDecision::RsuRelay { entry, target }, delay));
                    }
                }
            }
        }
    }

    // MBS relays enter through the nearest covering RSU with a free slot.
    let mbs_entry = covering_rsus(world, k)
        .into_iter()
        .find(|&i| ctx.loads.rsu_has_slot(i, ctx.capacity_n));
    if let Some(entry) = mbs_entry {
        if let Some(rate) = rate_v2i(k, entry, &saturated, world, ctx.draws, ctx.channel) {
            let hold = hold_time_v2i(me, &world.rsus[entry], world.road_length_m);
            for (m, load) in ctx.loads.mbs.iter().enumerate() {
                if let Some(delay) = delay_mbs_relay(task, rate, ctx.channel.fiber_rate_bps, load) {
                    if delay <= deadline && delay <= hold {
                        out.push((OffloadDecision::MbsRelay { entry, mbs: m }, delay));
                    }
                }
            }
        }
    }

    if task.is_public && me.platoon_id.is_some() && ctx.public_resolved {
        out.push((OffloadDecision::SkipPublic, 0.0));
    }

    out
}

/// The candidate decision set alone; see
/// [`feasible_decisions_with_delays`] for the projection rules.
pub fn feasible_decisions(k: usize, task: &Task, ctx: &FeasibilityContext) -> Vec<OffloadDecision> {
    feasible_decisions_with_delays(k, task, ctx)
        .into_iter()
        .map(|(d, _)| d)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Domain;
    use crate::scenario::{build_world, PlatoonSpec, ScenarioConfig};
    use proptest::prelude::*;

    fn table_ii_task() -> Task {
        Task {
            owner: 0,
            size_bits: 1.5e6,
            density_cycles_per_bit: 100.0,
            deadline_s: 0.5,
            is_public: false,
        }
    }

    #[test]
    fn public_ratio_platoon_members() {
        let cfg = ScenarioConfig::default();
        let world = build_world(&cfg, 1);
        let mut rng = Stream::new(7, Domain::Tasks);
        let n = 100_000;
        let mut public = 0u32;
        let mut total = 0u32;
        for _ in 0..n / cfg.n_vehicles {
            for t in generate_tasks(&world, &cfg.task, &mut rng) {
                if world.vehicles[t.owner].platoon_id.is_some() {
                    total += 1;
                    public += t.is_public as u32;
                }
            }
        }
        let frac = public as f64 / total as f64;
        assert!((frac - 0.30).abs() < 0.01, "public fraction {frac}");
    }

    #[test]
    fn public_ratio_extremes() {
        let mut cfg = ScenarioConfig::default();
        cfg.task.public_ratio_platoon = 0.0;
        cfg.task.public_ratio_free = 0.0;
        let world = build_world(&cfg, 2);
        let mut rng = Stream::new(1, Domain::Tasks);
        assert!(generate_tasks(&world, &cfg.task, &mut rng)
            .iter()
            .all(|t| !t.is_public));
        cfg.task.public_ratio_platoon = 1.0;
        cfg.task.public_ratio_free = 1.0;
        assert!(generate_tasks(&world, &cfg.task, &mut rng)
            .iter()
            .all(|t| t.is_public));
    }

    #[test]
    fn local_delay_table_ii() {
        assert_eq!(delay_local(&table_ii_task(), 0.5e9), 0.3);
        assert_eq!(delay_local(&table_ii_task(), 1.0e9), 0.15);
    }

    #[test]
    fn platoon_delay_hand_arithmetic() {
        let d = delay_platoon(&table_ii_task(), 3e7, 0.5e9).unwrap();
        assert!((d - 0.35).abs() < 1e-15);
    }

    #[test]
    fn platoon_delay_limits() {
        let t = table_ii_task();
        let d = delay_platoon(&t, 1e18, 0.5e9).unwrap();
        assert!((d - 0.3).abs() < 1e-9); // rate -> inf reduces to local at target
        assert_eq!(delay_platoon(&t, 0.0, 0.5e9), None);
    }

    #[test]
    fn cpu_share_proportional() {
        let t = table_ii_task();
        let own = t.demand_cycles();
        assert_eq!(rsu_cpu_share(&t, own, 6e9), 6e9); // sole task
        assert_eq!(rsu_cpu_share(&t, 2.0 * own, 6e9), 3e9); // two identical
        // Demands 1:2:3 split shares 1/6 : 2/6 : 3/6 and conserve F^R.
        let mk = |mult: f64| Task {
            size_bits: 1.5e6 * mult,
            ..t
        };
        let zeta: f64 = [1.0, 2.0, 3.0].iter().map(|m| mk(*m).demand_cycles()).sum();
        let shares: Vec<f64> = [1.0, 2.0, 3.0]
            .iter()
            .map(|m| rsu_cpu_share(&mk(*m), zeta, 6e9))
            .collect();
        assert!((shares[0] - 1e9).abs() < 1e-3);
        assert!((shares[1] - 2e9).abs() < 1e-3);
        assert!((shares[2] - 3e9).abs() < 1e-3);
        assert!((shares.iter().sum::<f64>() - 6e9).abs() < 1e-3);
    }

    #[test]
    fn rsu_delay_hand_arithmetic() {
        let d = delay_rsu(&table_ii_task(), 3e7, 6e9).unwrap();
        assert!((d - 0.075).abs() < 1e-15);
        // Halving the rate adds exactly lambda / R.
        let d2 = delay_rsu(&table_ii_task(), 1.5e7, 6e9).unwrap();
        assert!((d2 - d - 1.5e6 / 3e7).abs() < 1e-12);
    }

    #[test]
    fn rsu_relay_hand_arithmetic() {
        let t = table_ii_task();
        let d = delay_rsu_relay(&t, 3e7, 1e9, 6e9).unwrap();
        assert!((d - 0.0765).abs() < 1e-12);
        // Infinite fiber reduces to the plain RSU delay.
        let d_inf = delay_rsu_relay(&t, 3e7, f64::INFINITY, 6e9).unwrap();
        assert!((d_inf - 0.075).abs() < 1e-15);
        // Term-by-term oracle.
        let oracle = 1.5e6 / 3e7 + 1.5e6 / 1e9 + 1.5e8 / 6e9;
        assert!((d - oracle).abs() < 1e-12);
    }

    #[test]
    fn mbs_relay_compute_term() {
        let t = table_ii_task();
        let idle = MbsLoad {
            nonvehicle_hz: 0.0,
            available_hz: 1e10,
        };
        let d = delay_mbs_relay(&t, 3e7, 1e9, &idle).unwrap();
        let compute_term: f64 = 1.5e8 / 1e10;
        assert!((compute_term - 0.015).abs() < 1e-15);
        let oracle = 1.5e6 / 3e7 + 1.5e6 / 1e9 + compute_term;
        assert!((d - oracle).abs() < 1e-12);
        // Busier MBS is never faster.
        let busy = MbsLoad {
            nonvehicle_hz: 5e9,
            available_hz: 5e9,
        };
        assert!(delay_mbs_relay(&t, 3e7, 1e9, &busy).unwrap() > d);
    }

    #[test]
    fn system_objective_sums() {
        assert_eq!(system_objective(&[0.3, 0.5]), 0.8);
        assert_eq!(system_objective(&[]), 0.0);
    }

    #[test]
    fn mbs_draw_respects_floor() {
        let compute = ComputeParams {
            mbs_nonvehicle_mean_hz: 9.9e9,
            ..Default::default()
        };
        let mut rng = Stream::new(3, Domain::MbsLoad);
        for _ in 0..1000 {
            let load = MbsLoad::draw(&compute, &mut rng);
            assert!(load.available_hz >= MBS_COMPUTE_FLOOR_HZ);
            assert!(load.available_hz <= compute.f_mbs_hz);
        }
    }

    fn feasibility_fixture(n_vehicles: usize, seed: u64) -> (WorldState, Loads, DrawTable) {
        let cfg = ScenarioConfig {
            n_vehicles,
            platoons: vec![],
            ..Default::default()
        };
        let world = build_world(&cfg, seed);
        let loads = Loads::fresh(world.rsus.len(), vec![MbsLoad::idle(&cfg.compute)]);
        let draws = DrawTable::unit(n_vehicles, world.rsus.len());
        (world, loads, draws)
    }

    #[test]
    fn isolated_vehicle_gets_local_only() {
        let (mut world, loads, draws) = feasibility_fixture(1, 5);
        // Park the vehicle outside every RSU chord ([0,400],[400,800],[800,1200]
        // tile the whole road), so shrink coverage instead.
        for r in &mut world.rsus {
            r.coverage_m = 10.0;
        }
        world.vehicles[0].x = 500.0;
        let cfg = ScenarioConfig::default();
        let ctx = FeasibilityContext {
            world: &world,
            loads: &loads,
            draws: &draws,
            channel: &cfg.channel,
            compute: &cfg.compute,
            capacity_n: cfg.rsu_capacity,
            platoon_offloading: true,
            public_resolved: false,
        };
        let set = feasible_decisions(0, &table_ii_task(), &ctx);
        assert_eq!(set, vec![OffloadDecision::Local]);
    }

    #[test]
    fn full_rsu_offers_no_rsu_variant() {
        let (mut world, mut loads, draws) = feasibility_fixture(1, 6);
        world.vehicles[0].x = 200.0; // covered only by RSU 0
        let cfg = ScenarioConfig::default();
        // One admission below the strict bound: 4 + 1 < 6 holds, 5 + 1 < 6
        // does not.
        loads.rsus[0].served_count = 5;
        loads.rsus[0].demand_cycles = 5.0 * table_ii_task().demand_cycles();
        let ctx = FeasibilityContext {
            world: &world,
            loads: &loads,
            draws: &draws,
            channel: &cfg.channel,
            compute: &cfg.compute,
            capacity_n: cfg.rsu_capacity,
            platoon_offloading: true,
            public_resolved: false,
        };
        let set = feasible_decisions(0, &table_ii_task(), &ctx);
        assert!(
            !set.iter().any(|d| matches!(d, OffloadDecision::Rsu(0))),
            "{set:?}"
        );
    }

    /// Brute-force re-check of the feasibility filter on small worlds,
    /// applying every constraint with the documented worst-case
    /// projections (saturated interference, fullest admissible co-load).
    #[test]
    fn micro_world_matches_constraint_oracle() {
        let cfg = ScenarioConfig::default();
        for seed in 0..30 {
            let (world, loads, draws) = feasibility_fixture(3, seed);
            let saturated = AssociationMap::saturated(3);
            let worst_share = cfg.compute.f_rsu_hz / (cfg.rsu_capacity - 1) as f64;
            let task = table_ii_task();
            for k in 0..3 {
                let task = Task { owner: k, ..task };
                let ctx = FeasibilityContext {
                    world: &world,
                    loads: &loads,
                    draws: &draws,
                    channel: &cfg.channel,
                    compute: &cfg.compute,
                    capacity_n: cfg.rsu_capacity,
                    platoon_offloading: true,
                    public_resolved: false,
                };
                let got = feasible_decisions(k, &task, &ctx);
                // Oracle: test every constraint for every possible variant.
                let mut expected = Vec::new();
                if delay_local(&task, world.vehicles[k].f_max_hz) <= task.deadline_s {
                    expected.push(OffloadDecision::Local);
                }
                // No platoons in this fixture, so no platoon variants.
                for i in 0..world.rsus.len() {
                    let covered = world.rsus[i].covers(world.vehicles[k].x, 1200.0);
                    if !covered || loads.rsus[i].served_count + 1 >= cfg.rsu_capacity {
                        continue;
                    }
                    let rate = rate_v2i(k, i, &saturated, &world, &draws, &cfg.channel).unwrap();
                    let hold =
                        hold_time_v2i(&world.vehicles[k], &world.rsus[i], world.road_length_m);
                    let d = delay_rsu(&task, rate, worst_share).unwrap();
                    if d <= task.deadline_s && d <= hold {
                        expected.push(OffloadDecision::Rsu(i));
                    }
                    if let Some(t) = relay_target(i, &loads) {
                        let d = delay_rsu_relay(
                            &task,
                            rate,
                            cfg.channel.fiber_rate_bps,
                            worst_share,
                        )
                        .unwrap();
                        if d <= task.deadline_s && d <= hold {
                            expected.push(OffloadDecision::RsuRelay { entry: i, target: t });
                        }
                    }
                }
                if let Some(entry) = covering_rsus(&world, k).first().copied() {
                    let rate = rate_v2i(k, entry, &saturated, &world, &draws, &cfg.channel).unwrap();
                    let hold =
                        hold_time_v2i(&world.vehicles[k], &world.rsus[entry], world.road_length_m);
                    let d =
                        delay_mbs_relay(&task, rate, cfg.channel.fiber_rate_bps, &loads.mbs[0])
                            .unwrap();
                    if d <= task.deadline_s && d <= hold {
                        expected.push(OffloadDecision::MbsRelay { entry, mbs: 0 });
                    }
                }
                let mut got_sorted = got.clone();
                let mut expected_sorted = expected.clone();
                got_sorted.sort_by_key(|d| format!("{d}"));
                expected_sorted.sort_by_key(|d| format!("{d}"));
                assert_eq!(got_sorted, expected_sorted, "seed {seed} vehicle {k}");
            }
        }
    }

    #[test]
    fn projected_delays_bound_realized_delays() {
        // Realized delay under any association and committed load never
        // exceeds the worst-case projection that admitted the decision
        // (no platoons here, so the mate-coordination carve-out is moot).
        let cfg = ScenarioConfig::default();
        for seed in 0..20 {
            let (world, loads, draws) = feasibility_fixture(5, seed);
            let task = Task {
                owner: 0,
                ..table_ii_task()
            };
            let ctx = FeasibilityContext {
                world: &world,
                loads: &loads,
                draws: &draws,
                channel: &cfg.channel,
                compute: &cfg.compute,
                capacity_n: cfg.rsu_capacity,
                platoon_offloading: true,
                public_resolved: false,
            };
            // Realized: three other vehicles transmit, the serving RSU
            // carries three co-tasks.
            let mut assoc = AssociationMap::idle(5);
            assoc.set(1, crate::radio::TxTarget::Rsu(0));
            assoc.set(2, crate::radio::TxTarget::Vehicle(3));
            assoc.set(4, crate::radio::TxTarget::Rsu(1));
            let mut realized_loads = loads.clone();
            for rsu in 0..3 {
                realized_loads.rsus[rsu].demand_cycles = 3.0 * task.demand_cycles();
                realized_loads.rsus[rsu].served_count = 3;
            }
            for (decision, projected) in feasible_decisions_with_delays(0, &task, &ctx) {
                let realized = decision_delay(
                    decision,
                    &task,
                    &world,
                    &assoc,
                    &draws,
                    &cfg.channel,
                    &cfg.compute,
                    &realized_loads,
                )
                .expect("feasible decisions stay realizable");
                assert!(
                    realized <= projected + 1e-12,
                    "seed {seed} {decision}: realized {realized} > projected {projected}"
                );
            }
        }
    }

    #[test]
    fn skip_public_requires_platoon_and_resolution() {
        let cfg = ScenarioConfig {
            n_vehicles: 4,
            platoons: vec![PlatoonSpec {
                members: 3,
                span_m: 20.0,
            }],
            ..Default::default()
        };
        let world = build_world(&cfg, 8);
        let loads = Loads::fresh(3, vec![MbsLoad::idle(&cfg.compute)]);
        let draws = DrawTable::unit(4, 3);
        let task = Task {
            owner: 1,
            is_public: true,
            ..table_ii_task()
        };
        let mut ctx = FeasibilityContext {
            world: &world,
            loads: &loads,
            draws: &draws,
            channel: &cfg.channel,
            compute: &cfg.compute,
            capacity_n: cfg.rsu_capacity,
            platoon_offloading: true,
            public_resolved: true,
        };
        assert!(feasible_decisions(1, &task, &ctx).contains(&OffloadDecision::SkipPublic));
        ctx.public_resolved = false;
        assert!(!feasible_decisions(1, &task, &ctx).contains(&OffloadDecision::SkipPublic));
        // A free vehicle never skips.
        ctx.public_resolved = true;
        let free_task = Task {
            owner: 3,
            is_public: true,
            ..table_ii_task()
        };
        assert!(!feasible_decisions(3, &free_task, &ctx).contains(&OffloadDecision::SkipPublic));
    }

    proptest! {
        #[test]
        fn delays_increase_with_size(extra in 1.01f64..4.0) {
            let base = table_ii_task();
            let bigger = Task { size_bits: base.size_bits * extra, ..base };
            prop_assert!(delay_local(&bigger, 0.5e9) > delay_local(&base, 0.5e9));
            prop_assert!(
                delay_platoon(&bigger, 3e7, 0.5e9).unwrap()
                    > delay_platoon(&base, 3e7, 0.5e9).unwrap()
            );
            prop_assert!(delay_rsu(&bigger, 3e7, 6e9).unwrap() > delay_rsu(&base, 3e7, 6e9).unwrap());
            prop_assert!(
                delay_rsu_relay(&bigger, 3e7, 1e9, 6e9).unwrap()
                    > delay_rsu_relay(&base, 3e7, 1e9, 6e9).unwrap()
            );
            let idle = MbsLoad { nonvehicle_hz: 0.0, available_hz: 1e10 };
            prop_assert!(
                delay_mbs_relay(&bigger, 3e7, 1e9, &idle).unwrap()
                    > delay_mbs_relay(&base, 3e7, 1e9, &idle).unwrap()
            );
        }

        #[test]
        fn share_conservation(demands in proptest::collection::vec(0.1f64..10.0, 1..8)) {
            let tasks: Vec<Task> = demands
                .iter()
                .map(|&m| Task { size_bits: 1.5e6 * m, ..table_ii_task() })
                .collect();
            let zeta: f64 = tasks.iter().map(Task::demand_cycles).sum();
            let total: f64 = tasks.iter().map(|t| rsu_cpu_share(t, zeta, 6e9)).sum();
            prop_assert!((total - 6e9).abs() <= 1e-12 * 6e9);
        }

        #[test]
        fn objective_is_permutation_invariant(mut delays in proptest::collection::vec(0.0f64..2.0, 0..10)) {
            let forward = system_objective(&delays);
            delays.reverse();
            prop_assert!((system_objective(&delays) - forward).abs() < 1e-12);
        }
    }
}
