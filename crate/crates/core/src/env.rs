//! The cooperative multi-agent environment: local observations, masked
//! action spaces over a fixed enumeration, penalty-shaped shared rewards,
//! and episode stepping.
//!
//! Each decision episode: every live vehicle holds one task; agents pick
//! actions from their masks; claims commit in ascending agent id with RSU
//! capacity enforced strictly (a denied claim falls back to local compute
//! and counts as a capacity violation); realized delays are evaluated under
//! the episode's association map and committed loads; everyone receives the
//! same team reward
//!
//! `r = -sum_k D_k + pc * (eta1 * deadline_violations + eta2 * capacity_violations)`
//!
//! after which positions advance and fresh tasks, fading, and loads are
//! drawn. Worlds smaller than the configured agent arity are padded with
//! null agents that observe zeros, are masked to the local action, and
//! contribute zero delay.

use crate::mobility::{distance, step_positions, sync_platoon_speeds};
use crate::offload::{
    decision_delay, delay_local, feasible_decisions_with_delays, generate_tasks, platoon_targets,
    covering_rsus, FeasibilityContext, Loads, MbsLoad, OffloadDecision, Task,
};
use crate::radio::{AssociationMap, DrawTable, TxTarget};
use crate::rng::{Domain, Stream};
use crate::scenario::{build_world, ScenarioConfig, WorldState, MAX_MBS, MAX_RSUS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Platoon-target slots in the fixed enumeration (largest platoon minus
/// the agent itself).
pub const MAX_PLATOON_TARGETS: usize = crate::scenario::MAX_PLATOON_MEMBERS - 1;

/// Ordered (entry, target) RSU pairs.
pub const N_RSU_PAIRS: usize = MAX_RSUS * (MAX_RSUS - 1);

/// Fixed action enumeration:
/// `[Local | platoon slot x 11 | RSU x 4 | RSU pair x 12 | MBS x 2 | Skip]`.
pub const N_ACTIONS: usize = 1 + MAX_PLATOON_TARGETS + MAX_RSUS + N_RSU_PAIRS + MAX_MBS + 1;

pub const ACTION_LOCAL: usize = 0;
pub const ACTION_PLATOON_BASE: usize = 1;
pub const ACTION_RSU_BASE: usize = ACTION_PLATOON_BASE + MAX_PLATOON_TARGETS;
pub const ACTION_RSU_PAIR_BASE: usize = ACTION_RSU_BASE + MAX_RSUS;
pub const ACTION_MBS_BASE: usize = ACTION_RSU_PAIR_BASE + N_RSU_PAIRS;
pub const ACTION_SKIP: usize = ACTION_MBS_BASE + MAX_MBS;

/// Index of ordered pair (entry, target) with entry != target.
pub fn rsu_pair_index(entry: usize, target: usize) -> usize {
    debug_assert!(entry != target && entry < MAX_RSUS && target < MAX_RSUS);
    entry * (MAX_RSUS - 1) + if target < entry { target } else { target - 1 }
}

/// Inverse of [`rsu_pair_index`].
pub fn rsu_pair_from_index(idx: usize) -> (usize, usize) {
    let entry = idx / (MAX_RSUS - 1);
    let rem = idx % (MAX_RSUS - 1);
    let target = if rem < entry { rem } else { rem + 1 };
    (entry, target)
}

/// The number of fields in a local observation.
pub const OBS_DIM: usize = 5;

/// One agent's local observation; every field is normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    /// Road position / road length.
    pub position: f64,
    /// Task size / configured task size.
    pub task_size: f64,
    /// Task compute demand / configured demand.
    pub task_cycles: f64,
    /// Local processing delay / deadline, clamped to 1.
    pub local_delay: f64,
    /// 1 when a platoon vehicle is within V2V range.
    pub platoon_link: f64,
}

impl Observation {
    pub fn to_array(self) -> [f64; OBS_DIM] {
        [
            self.position,
            self.task_size,
            self.task_cycles,
            self.local_delay,
            self.platoon_link,
        ]
    }
}

/// Boolean flag per action index, packed into a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionMask {
    bits: u64,
}

impl ActionMask {
    pub fn empty() -> Self {
        ActionMask { bits: 0 }
    }

    pub fn local_only() -> Self {
        let mut m = Self::empty();
        m.set(ACTION_LOCAL);
        m
    }

    pub fn set(&mut self, index: usize) {
        debug_assert!(index < N_ACTIONS);
        self.bits |= 1 << index;
    }

    pub fn allows(&self, index: usize) -> bool {
        index < N_ACTIONS && self.bits & (1 << index) != 0
    }

    pub fn any(&self) -> bool {
        self.bits != 0
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..N_ACTIONS).filter(move |&i| self.allows(i))
    }
}

/// Penalty shaping for constraint violations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Penalty coefficient; must be negative.
    pub pc: f64,
    /// Weight per deadline violation.
    pub eta1: f64,
    /// Weight per capacity violation.
    pub eta2: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            pc: -5.0,
            eta1: 1.0,
            eta2: 1.0,
        }
    }
}

/// Environment-level settings stored in the experiment config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    pub penalty: PenaltyConfig,
    /// Enables public-task resolution and the skip action.
    pub task_categorization: bool,
    /// Enables offloading to platoon vehicles. Disabling this (together
    /// with task categorization) ablates the platoon resource pool while
    /// keeping the physical traffic pattern identical, so scheme
    /// comparisons stay paired on the same worlds.
    pub platoon_offloading: bool,
    /// Agent arity; worlds with fewer vehicles are padded. Defaults to the
    /// scenario's vehicle count.
    pub n_agents: Option<usize>,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            penalty: PenaltyConfig::default(),
            task_categorization: true,
            platoon_offloading: true,
            n_agents: None,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.penalty.pc < 0.0) {
            return Err(format!("penalty.pc < 0 violated ({})", self.penalty.pc));
        }
        if self.penalty.eta1 < 0.0 || self.penalty.eta2 < 0.0 {
            return Err("penalty.eta1/eta2 must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("joint action arity {got} does not match agent count {expected}")]
    ArityMismatch { got: usize, expected: usize },
}

/// Everything a step reports back to the harness.
#[derive(Debug, Clone)]
pub struct StepInfo {
    /// Per-agent rewards; identical values (shared team reward).
    pub rewards: Vec<f64>,
    /// The shared per-agent reward.
    pub shared_reward: f64,
    /// Instantaneous global reward, the sum of per-agent rewards.
    pub r_tot: f64,
    /// Next joint observation.
    pub observations: Vec<Observation>,
    /// Realized decision per agent (after out-of-mask remaps and capacity
    /// bounces); `None` for padding agents.
    pub decisions: Vec<Option<OffloadDecision>>,
    /// Realized per-agent delay; `None` for padding agents.
    pub delays: Vec<Option<f64>>,
    /// Per-agent flag: this agent's task missed its deadline or lost a
    /// capacity claim this step.
    pub violated: Vec<bool>,
    pub deadline_violations: usize,
    pub capacity_violations: usize,
    /// Largest RSU served count after the commit phase.
    pub max_rsu_served: usize,
    pub done: bool,
}

/// The Dec-POMDP environment.
pub struct VecEnv {
    pub scenario: ScenarioConfig,
    pub params: EnvParams,
    n_agents: usize,
    world: WorldState,
    tasks: Vec<Task>,
    loads: Loads,
    draws: DrawTable,
    /// Per-platoon resolver of this episode's public task, when task
    /// categorization is on: the first member (formation order) holding a
    /// public task.
    resolvers: Vec<Option<usize>>,
    masks: Vec<ActionMask>,
    /// Projected delay per (agent, action); infinity when infeasible.
    projected: Vec<Vec<f64>>,
    platoon_target_cache: Vec<Vec<usize>>,
    episode: usize,
    fading_rng: Stream,
    task_rng: Stream,
    mbs_rng: Stream,
}

impl VecEnv {
    /// Build the world, synchronize platoon speeds, draw the first
    /// episode's tasks and fading, and emit the initial joint observation.
    pub fn reset(scenario: &ScenarioConfig, params: &EnvParams, seed: u64) -> (Self, Vec<Observation>) {
        let world = sync_platoon_speeds(&build_world(scenario, seed));
        let n_agents = params.n_agents.unwrap_or(scenario.n_vehicles).max(scenario.n_vehicles);
        let mut env = VecEnv {
            scenario: scenario.clone(),
            params: *params,
            n_agents,
            world,
            tasks: Vec::new(),
            loads: Loads::fresh(0, Vec::new()),
            draws: DrawTable::unit(0, 0),
            resolvers: Vec::new(),
            masks: Vec::new(),
            projected: Vec::new(),
            platoon_target_cache: Vec::new(),
            episode: 0,
            fading_rng: Stream::new(seed, Domain::Fading),
            task_rng: Stream::new(seed, Domain::Tasks),
            mbs_rng: Stream::new(seed, Domain::MbsLoad),
        };
        env.begin_episode();
        let obs = env.observations();
        (env, obs)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_live(&self) -> usize {
        self.world.vehicles.len()
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn loads(&self) -> &Loads {
        &self.loads
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Draw the episode's tasks, fading, and MBS loads, then refresh the
    /// feasibility caches.
    fn begin_episode(&mut self) {
        self.tasks = generate_tasks(&self.world, &self.scenario.task, &mut self.task_rng);
        self.draws = DrawTable::draw(&self.world, &self.scenario.channel, &mut self.fading_rng);
        let mbs = self
            .world
            .mbs
            .iter()
            .map(|_| MbsLoad::draw(&self.scenario.compute, &mut self.mbs_rng))
            .collect();
        self.loads = Loads::fresh(self.world.rsus.len(), mbs);
        self.resolvers = self.compute_resolvers();
        self.refresh_masks();
    }

    fn compute_resolvers(&self) -> Vec<Option<usize>> {
        if !self.params.task_categorization {
            return vec![None; self.world.platoons.len()];
        }
        self.world
            .platoons
            .iter()
            .map(|p| {
                p.member_ids
                    .iter()
                    .copied()
                    .find(|&m| self.tasks[m].is_public)
            })
            .collect()
    }

    /// Whether agent `k`'s public task has already been resolved by an
    /// earlier platoon member this episode.
    fn public_resolved(&self, k: usize) -> bool {
        if !self.params.task_categorization || !self.tasks[k].is_public {
            return false;
        }
        match self.world.vehicles[k].platoon_id {
            Some(p) => matches!(self.resolvers[p], Some(r) if r != k),
            None => false,
        }
    }

    fn refresh_masks(&mut self) {
        let n_live = self.n_live();
        let mut masks = Vec::with_capacity(self.n_agents);
        let mut projected = Vec::with_capacity(self.n_agents);
        let mut target_cache = Vec::with_capacity(self.n_agents);
        for k in 0..self.n_agents {
            if k >= n_live {
                masks.push(ActionMask::local_only());
                let mut row = vec![f64::INFINITY; N_ACTIONS];
                row[ACTION_LOCAL] = 0.0;
                projected.push(row);
                target_cache.push(Vec::new());
                continue;
            }
            let targets = platoon_targets(&self.world, k, &self.scenario.channel);
            let ctx = FeasibilityContext {
                world: &self.world,
                loads: &self.loads,
                draws: &self.draws,
                channel: &self.scenario.channel,
                compute: &self.scenario.compute,
                capacity_n: self.scenario.rsu_capacity,
                platoon_offloading: self.params.platoon_offloading,
                public_resolved: self.public_resolved(k),
            };
            let feasible = feasible_decisions_with_delays(k, &self.tasks[k], &ctx);
            let mut mask = ActionMask::empty();
            let mut row = vec![f64::INFINITY; N_ACTIONS];
            for (decision, projected) in feasible {
                if let Some(idx) = self.encode(decision, &targets) {
                    mask.set(idx);
                    row[idx] = projected;
                }
            }
            if !mask.any() {
                // Forced-local fallback keeps the decision process total;
                // the deadline penalty reports the miss.
                mask.set(ACTION_LOCAL);
                row[ACTION_LOCAL] = delay_local(&self.tasks[k], self.world.vehicles[k].f_max_hz);
            }
            masks.push(mask);
            projected.push(row);
            target_cache.push(targets);
        }
        self.masks = masks;
        self.projected = projected;
        self.platoon_target_cache = target_cache;
    }

    fn encode(&self, decision: OffloadDecision, targets: &[usize]) -> Option<usize> {
        match decision {
            OffloadDecision::Local => Some(ACTION_LOCAL),
            OffloadDecision::PlatoonVehicle(j) => {
                let slot = targets.iter().position(|&t| t == j)?;
                (slot < MAX_PLATOON_TARGETS).then_some(ACTION_PLATOON_BASE + slot)
            }
            OffloadDecision::Rsu(i) => (i < MAX_RSUS).then_some(ACTION_RSU_BASE + i),
            OffloadDecision::RsuRelay { entry, target } => {
                (entry < MAX_RSUS && target < MAX_RSUS)
                    .then_some(ACTION_RSU_PAIR_BASE + rsu_pair_index(entry, target))
            }
            OffloadDecision::MbsRelay { mbs, .. } => {
                (mbs < MAX_MBS).then_some(ACTION_MBS_BASE + mbs)
            }
            OffloadDecision::SkipPublic => Some(ACTION_SKIP),
        }
    }

    /// Map an action index back to a decision for agent `k`; `None` when the
    /// index has no referent in this world (absent slot).
    pub fn decode(&self, k: usize, action: usize) -> Option<OffloadDecision> {
        if k >= self.n_live() {
            return (action == ACTION_LOCAL).then_some(OffloadDecision::Local);
        }
        match action {
            ACTION_LOCAL => Some(OffloadDecision::Local),
            a if (ACTION_PLATOON_BASE..ACTION_RSU_BASE).contains(&a) => {
                let slot = a - ACTION_PLATOON_BASE;
                self.platoon_target_cache[k]
                    .get(slot)
                    .map(|&j| OffloadDecision::PlatoonVehicle(j))
            }
            a if (ACTION_RSU_BASE..ACTION_RSU_PAIR_BASE).contains(&a) => {
                let i = a - ACTION_RSU_BASE;
                (i < self.world.rsus.len()).then_some(OffloadDecision::Rsu(i))
            }
            a if (ACTION_RSU_PAIR_BASE..ACTION_MBS_BASE).contains(&a) => {
                let (entry, target) = rsu_pair_from_index(a - ACTION_RSU_PAIR_BASE);
                (entry < self.world.rsus.len() && target < self.world.rsus.len())
                    .then_some(OffloadDecision::RsuRelay { entry, target })
            }
            a if (ACTION_MBS_BASE..ACTION_SKIP).contains(&a) => {
                let m = a - ACTION_MBS_BASE;
                if m >= self.world.mbs.len() {
                    return None;
                }
                let entry = covering_rsus(&self.world, k)
                    .into_iter()
                    .find(|&i| self.loads.rsu_has_slot(i, self.scenario.rsu_capacity))?;
                Some(OffloadDecision::MbsRelay { entry, mbs: m })
            }
            ACTION_SKIP => Some(OffloadDecision::SkipPublic),
            _ => None,
        }
    }

    /// The action mask for `agent`; padding agents are local-only.
    pub fn action_mask(&self, agent: usize) -> ActionMask {
        self.masks[agent]
    }

    /// Projected (worst-case) delay per action index for `agent`; realized
    /// delays of masked actions never exceed these.
    pub fn projected_delays(&self, agent: usize) -> &[f64] {
        &self.projected[agent]
    }

    /// Current joint observation.
    pub fn observations(&self) -> Vec<Observation> {
        let task_cfg = &self.scenario.task;
        (0..self.n_agents)
            .map(|k| {
                if k >= self.n_live() {
                    return Observation::default();
                }
                let v = &self.world.vehicles[k];
                let task = &self.tasks[k];
                let link = self.world.vehicles.iter().any(|u| {
                    u.id != k
                        && u.platoon_id.is_some()
                        && distance(v.position(), u.position()) <= self.scenario.channel.v2v_range_m
                });
                Observation {
                    position: (v.x / self.world.road_length_m).clamp(0.0, 1.0),
                    task_size: (task.size_bits / task_cfg.size_bits).clamp(0.0, 1.0),
                    task_cycles: (task.demand_cycles()
                        / (task_cfg.size_bits * task_cfg.density_cycles_per_bit))
                        .clamp(0.0, 1.0),
                    local_delay: (delay_local(task, v.f_max_hz) / task.deadline_s).clamp(0.0, 1.0),
                    platoon_link: if link { 1.0 } else { 0.0 },
                }
            })
            .collect()
    }

    /// Execute a joint action. Out-of-mask actions are remapped to local
    /// compute and counted as violations; RSU claims commit in ascending
    /// agent id with losers bounced to local compute.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepInfo, EnvError> {
        if actions.len() != self.n_agents {
            return Err(EnvError::ArityMismatch {
                got: actions.len(),
                expected: self.n_agents,
            });
        }
        let n_live = self.n_live();
        let mut capacity_violations = 0usize;
        let mut violated = vec![false; self.n_agents];
        let mut decisions: Vec<Option<OffloadDecision>> = vec![None; self.n_agents];

        // Commit phase, ascending agent id.
        for k in 0..n_live {
            let requested = if self.masks[k].allows(actions[k]) {
                self.decode(k, actions[k])
            } else {
                None
            };
            let mut decision = match requested {
                Some(d) => d,
                None => {
                    // Out-of-mask or undecodable: forced local, penalized.
                    capacity_violations += 1;
                    violated[k] = true;
                    OffloadDecision::Local
                }
            };
            let demand = self.tasks[k].demand_cycles();
            decision = match decision {
                OffloadDecision::Rsu(i) => {
                    if self.loads.rsu_has_slot(i, self.scenario.rsu_capacity) {
                        self.loads.commit_rsu(i, demand);
                        OffloadDecision::Rsu(i)
                    } else {
                        capacity_violations += 1;
                        violated[k] = true;
                        OffloadDecision::Local
                    }
                }
                OffloadDecision::RsuRelay { entry, target } => {
                    if self.loads.rsu_has_slot(target, self.scenario.rsu_capacity) {
                        self.loads.commit_rsu(target, demand);
                        OffloadDecision::RsuRelay { entry, target }
                    } else {
                        capacity_violations += 1;
                        violated[k] = true;
                        OffloadDecision::Local
                    }
                }
                other => other,
            };
            decisions[k] = Some(decision);
        }

        // Association map under the committed decisions.
        let mut assoc = AssociationMap::idle(n_live);
        for k in 0..n_live {
            match decisions[k] {
                Some(OffloadDecision::PlatoonVehicle(j)) => assoc.set(k, TxTarget::Vehicle(j)),
                Some(OffloadDecision::Rsu(i))
                | Some(OffloadDecision::RsuRelay { entry: i, .. })
                | Some(OffloadDecision::MbsRelay { entry: i, .. }) => {
                    assoc.set(k, TxTarget::Rsu(i))
                }
                _ => {}
            }
        }

        // Realized delays and deadline violations.
        let mut delays: Vec<Option<f64>> = vec![None; self.n_agents];
        let mut deadline_violations = 0usize;
        for k in 0..n_live {
            let decision = decisions[k].unwrap();
            let realized = decision_delay(
                decision,
                &self.tasks[k],
                &self.world,
                &assoc,
                &self.draws,
                &self.scenario.channel,
                &self.scenario.compute,
                &self.loads,
            )
            .unwrap_or_else(|| delay_local(&self.tasks[k], self.world.vehicles[k].f_max_hz));
            if realized > self.tasks[k].deadline_s {
                deadline_violations += 1;
                violated[k] = true;
            }
            delays[k] = Some(realized);
        }

        let delay_sum: f64 = delays.iter().flatten().sum();
        let penalty = self.params.penalty.pc
            * (self.params.penalty.eta1 * deadline_violations as f64
                + self.params.penalty.eta2 * capacity_violations as f64);
        let shared_reward = -delay_sum + penalty;
        let rewards = vec![shared_reward; self.n_agents];
        let r_tot = shared_reward * self.n_agents as f64;
        let max_rsu_served = self
            .loads
            .rsus
            .iter()
            .map(|l| l.served_count)
            .max()
            .unwrap_or(0);

        // Advance the world and draw the next episode.
        self.world = step_positions(&self.world, self.scenario.mobility.dt_s);
        self.episode += 1;
        let done = self.episode >= self.scenario.episodes_per_epoch;
        self.begin_episode();

        Ok(StepInfo {
            rewards,
            shared_reward,
            r_tot,
            observations: self.observations(),
            decisions,
            delays,
            violated,
            deadline_violations,
            capacity_violations,
            max_rsu_served,
            done,
        })
    }
}
