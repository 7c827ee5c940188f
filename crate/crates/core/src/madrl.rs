//! Centralized training with decentralized execution.
//!
//! One parameter set is shared by every agent (weight sharing); each agent
//! runs the same Q-network on its own observation window and picks actions
//! epsilon-greedily under its mask. Training regresses either the summed
//! joint value (value decomposition) or per-agent values (independent
//! Q-learning) toward bootstrapped targets from a periodically synced
//! target copy. Replay stores whole joint transitions with the observation
//! windows needed to rebuild recurrent state.

use crate::env::{ActionMask, Observation, StepInfo, VecEnv, ACTION_LOCAL, ACTION_SKIP, N_ACTIONS};
use crate::nn::{Adam, NetDims, NnError, QNetwork};
use crate::rng::{fold_seed, Domain, Stream};
use crate::scenario::ExperimentConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged: {0}")]
    Diverged(#[from] NnError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error("invalid training config: {0}")]
    Invalid(String),
}

/// Joint-value decomposition mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Value decomposition: regress the summed chosen Q-values.
    Vdn,
    /// Independent Q-learning: one TD term per agent.
    Iql,
}

/// Training hyper-parameters; all fields have paper-scale defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Per-episode multiplicative decay; `None` picks the rate that reaches
    /// `epsilon_end` at 80% of the total episode budget.
    pub epsilon_decay: Option<f64>,
    /// Mini-batch size X.
    pub batch_size: usize,
    /// Target-network sync interval, in episodes.
    pub target_sync_every: usize,
    /// Epochs (T_max); each epoch resets the environment.
    pub epochs: usize,
    /// Episodes per epoch (t_max); `None` uses the scenario's value.
    pub episodes_per_epoch: Option<usize>,
    /// Gradient update interval, in episodes.
    pub update_every: usize,
    pub replay_capacity: usize,
    /// Hidden units (P2).
    pub hidden: usize,
    /// Observation-window length (V).
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Vdn,
            gamma: 0.9,
            lr: 3e-4,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: None,
            batch_size: 64,
            target_sync_every: 100,
            epochs: 200,
            episodes_per_epoch: None,
            update_every: 1,
            replay_capacity: 2000,
            hidden: 64,
            window: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("train.gamma in [0,1] violated ({})", self.gamma));
        }
        if self.epsilon_end > self.epsilon_start {
            return Err("train.epsilon_end must be <= epsilon_start".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || self.epsilon_end < 0.0 {
            return Err("train epsilon bounds must lie in [0,1]".into());
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return Err("train.batch_size and replay_capacity must be >= 1".into());
        }
        if self.epochs == 0 || self.update_every == 0 || self.target_sync_every == 0 {
            return Err("train intervals must be >= 1".into());
        }
        if self.hidden == 0 || self.window == 0 {
            return Err("train.hidden and window must be >= 1".into());
        }
        Ok(())
    }

    pub fn net_dims(&self) -> NetDims {
        NetDims {
            input: crate::env::OBS_DIM,
            hidden: self.hidden,
            actions: N_ACTIONS,
            window: self.window,
        }
    }

    /// The per-episode decay factor, defaulting to the 80%-of-budget rule.
    pub fn decay_factor(&self, total_episodes: usize) -> f64 {
        if let Some(d) = self.epsilon_decay {
            return d;
        }
        let horizon = (total_episodes as f64 * 0.8).max(1.0);
        (self.epsilon_end / self.epsilon_start).powf(1.0 / horizon)
    }
}

/// One joint transition with the observation windows needed to rebuild the
/// recurrent state on replay.
#[derive(Debug, Clone)]
pub struct Transition {
    /// Flat `window * OBS_DIM` slice per agent at selection time.
    pub windows: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    /// Shared per-agent reward.
    pub reward: f64,
    /// Instantaneous global reward (sum over agents).
    pub r_tot: f64,
    pub next_windows: Vec<Vec<f64>>,
    pub next_masks: Vec<ActionMask>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform without-replacement sampling.
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform sample of `batch` distinct transitions (indices drawn by
    /// partial Fisher-Yates).
    pub fn sample<'a>(&'a self, batch: usize, rng: &mut Stream) -> Vec<&'a Transition> {
        assert!(batch <= self.items.len());
        let mut indices: Vec<usize> = (0..self.items.len()).collect();
        for i in 0..batch {
            let j = i + rng.below(indices.len() - i);
            indices.swap(i, j);
        }
        indices[..batch].iter().map(|&i| &self.items[i]).collect()
    }
}

/// Epsilon-greedy action selection over a masked Q-vector: the masked
/// argmax (lowest index wins ties) with probability `1 - epsilon`, a
/// uniform masked action otherwise.
pub fn select_action(q: &[f64], mask: ActionMask, epsilon: f64, rng: &mut Stream) -> usize {
    debug_assert!(mask.any());
    if rng.next_f64() < epsilon {
        let n = mask.count();
        let pick = rng.below(n);
        mask.indices().nth(pick).expect("mask has an index")
    } else {
        masked_argmax(q, mask)
    }
}

/// Masked argmax, lowest index on ties.
pub fn masked_argmax(q: &[f64], mask: ActionMask) -> usize {
    let mut best = None::<(usize, f64)>;
    for i in mask.indices() {
        let v = q[i];
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.expect("mask must have at least one action").0
}

/// Joint value under value decomposition: the sum of the chosen per-agent
/// Q-values.
pub fn q_tot(per_agent_chosen: &[f64]) -> f64 {
    per_agent_chosen.iter().sum()
}

/// Bootstrapped joint target `r + gamma * sum_i max_masked Q_i^-`;
/// terminal transitions use the reward alone.
pub fn td_target(
    r_tot: f64,
    next_windows: &[Vec<f64>],
    target_net: &QNetwork,
    next_masks: &[ActionMask],
    gamma: f64,
    done: bool,
) -> f64 {
    if done {
        return r_tot;
    }
    let bootstrap: f64 = next_windows
        .iter()
        .zip(next_masks)
        .map(|(w, &mask)| {
            let q = target_net.forward(w);
            q[masked_argmax(&q, mask)]
        })
        .sum();
    r_tot + gamma * bootstrap
}

/// Mean-squared joint TD error over a batch and its gradient with respect
/// to the shared online parameters.
pub fn vdn_loss(
    batch: &[&Transition],
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
) -> (f64, Vec<f64>) {
    let x = batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; online.n_params()];
    for t in batch {
        let mut tapes = Vec::with_capacity(t.windows.len());
        let mut chosen = Vec::with_capacity(t.windows.len());
        for (w, &a) in t.windows.iter().zip(&t.actions) {
            let (q, tape) = online.forward_cached(w);
            chosen.push(q[a]);
            tapes.push(tape);
        }
        let q_joint = q_tot(&chosen);
        let y = td_target(t.r_tot, &t.next_windows, target, &t.next_masks, gamma, t.done);
        let err = y - q_joint;
        loss += err * err / x;
        let d = -2.0 * err / x;
        for (tape, &a) in tapes.iter().zip(&t.actions) {
            let mut d_q = vec![0.0; N_ACTIONS];
            d_q[a] = d;
            online.backward(tape, &d_q, &mut grads);
        }
    }
    (loss, grads)
}

/// Independent Q-learning: one TD term per agent with per-agent targets
/// `y_i = r + gamma * max Q_i^-`, averaged over batch and agents.
pub fn iql_loss(
    batch: &[&Transition],
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
) -> (f64, Vec<f64>) {
    let n_terms: usize = batch.iter().map(|t| t.actions.len()).sum();
    let scale = n_terms as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; online.n_params()];
    for t in batch {
        for i in 0..t.actions.len() {
            let (q, tape) = online.forward_cached(&t.windows[i]);
            let chosen = q[t.actions[i]];
            let y = if t.done {
                t.reward
            } else {
                let tq = target.forward(&t.next_windows[i]);
                t.reward + gamma * tq[masked_argmax(&tq, t.next_masks[i])]
            };
            let err = y - chosen;
            loss += err * err / scale;
            let mut d_q = vec![0.0; N_ACTIONS];
            d_q[t.actions[i]] = -2.0 * err / scale;
            online.backward(&tape, &d_q, &mut grads);
        }
    }
    (loss, grads)
}

/// Scripted baseline policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicKind {
    /// Always compute locally.
    LocalOnly,
    /// Cheapest of local compute and the best direct RSU.
    LocalRsu,
    /// Feasible decision with the smallest projected delay.
    GreedyMinDelay,
    /// Uniform over the mask.
    Random,
}

/// Pick a heuristic action for `agent` in the environment's current
/// episode.
pub fn heuristic_action(
    kind: HeuristicKind,
    env: &VecEnv,
    agent: usize,
    rng: &mut Stream,
) -> usize {
    let mask = env.action_mask(agent);
    let projected = env.projected_delays(agent);
    match kind {
        HeuristicKind::LocalOnly => ACTION_LOCAL,
        HeuristicKind::LocalRsu => {
            let rsu_range =
                crate::env::ACTION_RSU_BASE..crate::env::ACTION_RSU_BASE + crate::scenario::MAX_RSUS;
            let mut best = (ACTION_LOCAL, projected[ACTION_LOCAL]);
            for i in rsu_range {
                if mask.allows(i) && projected[i] < best.1 {
                    best = (i, projected[i]);
                }
            }
            if mask.allows(best.0) {
                best.0
            } else {
                ACTION_LOCAL
            }
        }
        HeuristicKind::GreedyMinDelay => {
            let mut best = None::<(usize, f64)>;
            for i in mask.indices() {
                match best {
                    Some((_, bv)) if projected[i] >= bv => {}
                    _ => best = Some((i, projected[i])),
                }
            }
            best.map(|(i, _)| i).unwrap_or(ACTION_LOCAL)
        }
        HeuristicKind::Random => {
            let pick = rng.below(mask.count());
            mask.indices().nth(pick).unwrap_or(ACTION_LOCAL)
        }
    }
}

/// An executable policy: a trained network or a scripted baseline.
#[derive(Clone)]
pub enum Policy {
    Heuristic(HeuristicKind),
    Net(QNetwork),
}

impl Policy {
    /// Act for one agent. Network policies follow the public-skip rule
    /// first (a resolved public task is skipped outright), then run
    /// epsilon-greedy on the masked Q-values.
    pub fn act(
        &self,
        env: &VecEnv,
        agent: usize,
        window: &[f64],
        epsilon: f64,
        rng: &mut Stream,
    ) -> usize {
        match self {
            Policy::Heuristic(kind) => heuristic_action(*kind, env, agent, rng),
            Policy::Net(net) => {
                let mask = env.action_mask(agent);
                if mask.allows(ACTION_SKIP) {
                    return ACTION_SKIP;
                }
                let q = net.forward(window);
                select_action(&q, mask, epsilon, rng)
            }
        }
    }
}

/// Rolling per-agent observation windows (zero-padded on reset).
pub struct AgentWindows {
    dim: usize,
    window: usize,
    data: Vec<Vec<f64>>,
}

impl AgentWindows {
    pub fn new(n_agents: usize, dims: NetDims) -> Self {
        AgentWindows {
            dim: dims.input,
            window: dims.window,
            data: vec![vec![0.0; dims.input * dims.window]; n_agents],
        }
    }

    pub fn push(&mut self, obs: &[Observation]) {
        for (slot, o) in self.data.iter_mut().zip(obs) {
            slot.copy_within(self.dim.., 0);
            let tail = (self.window - 1) * self.dim;
            slot[tail..].copy_from_slice(&o.to_array());
        }
    }

    pub fn flat(&self, agent: usize) -> &[f64] {
        &self.data[agent]
    }

    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.data.clone()
    }
}

/// Per-epoch training metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean shared reward per episode step.
    pub mean_reward: f64,
    /// Sum of the instantaneous global reward over the epoch.
    pub cumulative_reward: f64,
    /// Mean realized delay per task.
    pub mean_delay_s: f64,
    pub violations: usize,
    pub epsilon: f64,
}

/// Per-step record for constraint audits and debugging, one row per live
/// agent per episode.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub epoch: usize,
    pub episode: usize,
    pub agent: usize,
    pub action: String,
    pub delay_s: f64,
    pub reward: f64,
    pub deadline_violations: usize,
    pub capacity_violations: usize,
    pub max_rsu_served: usize,
}

fn emit_trace(
    sink: &mut Option<&mut dyn FnMut(TraceRow)>,
    epoch: usize,
    episode: usize,
    info: &StepInfo,
) {
    if let Some(f) = sink.as_mut() {
        for (agent, decision) in info.decisions.iter().enumerate() {
            let Some(d) = decision else { continue };
            f(TraceRow {
                epoch,
                episode,
                agent,
                action: d.to_string(),
                delay_s: info.delays[agent].unwrap_or(0.0),
                reward: info.rewards[agent],
                deadline_violations: info.deadline_violations,
                capacity_violations: info.capacity_violations,
                max_rsu_served: info.max_rsu_served,
            });
        }
    }
}

/// Result of a training run.
pub struct TrainOutput {
    pub net: QNetwork,
    pub metrics: Vec<EpochMetrics>,
    pub mode: TrainMode,
}

/// Run the full training loop: epochs of environment interaction with
/// epsilon-greedy exploration, replay storage, periodic gradient updates on
/// the shared parameters, and target-network syncs. Deterministic per
/// `(config, seed)`.
pub fn train(
    cfg: &ExperimentConfig,
    seed: u64,
    mut trace: Option<&mut dyn FnMut(TraceRow)>,
) -> Result<TrainOutput, TrainError> {
    let tc = &cfg.train;
    tc.validate().map_err(TrainError::Invalid)?;
    let dims = tc.net_dims();
    let t_max = tc
        .episodes_per_epoch
        .unwrap_or(cfg.scenario.episodes_per_epoch);
    let mut scenario = cfg.scenario.clone();
    scenario.episodes_per_epoch = t_max;

    let total_episodes = tc.epochs * t_max;
    let decay = tc.decay_factor(total_episodes);

    let mut init_rng = Stream::new(seed, Domain::WeightInit);
    let mut online = QNetwork::init(dims, &mut init_rng);
    let mut target = online.clone();
    let mut optimizer = Adam::new(tc.lr, online.n_params());
    let mut replay = ReplayBuffer::new(tc.replay_capacity);
    let mut explore = Stream::new(seed, Domain::Exploration);

    let mut epsilon = tc.epsilon_start;
    let mut episode_count = 0usize;
    let mut metrics = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        let (mut env, obs0) = VecEnv::reset(&scenario, &cfg.env, fold_seed(seed, epoch as u64));
        let n_agents = env.n_agents();
        let mut windows = AgentWindows::new(n_agents, dims);
        windows.push(&obs0);

        let mut reward_sum = 0.0;
        let mut cum_reward = 0.0;
        let mut delay_sum = 0.0;
        let mut task_count = 0usize;
        let mut violations = 0usize;
        let mut steps = 0usize;

        loop {
            let actions: Vec<usize> = (0..n_agents)
                .map(|k| {
                    let mask = env.action_mask(k);
                    if mask.allows(ACTION_SKIP) {
                        return ACTION_SKIP;
                    }
                    let q = online.forward(windows.flat(k));
                    select_action(&q, mask, epsilon, &mut explore)
                })
                .collect();
            let pre_windows = windows.snapshot();
            let info = env.step(&actions)?;
            emit_trace(&mut trace, epoch, env.episode() - 1, &info);
            windows.push(&info.observations);
            let next_masks: Vec<ActionMask> =
                (0..n_agents).map(|k| env.action_mask(k)).collect();
            replay.push(Transition {
                windows: pre_windows,
                actions,
                reward: info.shared_reward,
                r_tot: info.r_tot,
                next_windows: windows.snapshot(),
                next_masks,
                done: info.done,
            });

            reward_sum += info.shared_reward;
            cum_reward += info.r_tot;
            delay_sum += info.delays.iter().flatten().sum::<f64>();
            task_count += info.delays.iter().flatten().count();
            violations += info.deadline_violations + info.capacity_violations;
            steps += 1;
            episode_count += 1;
            epsilon = (epsilon * decay).max(tc.epsilon_end);

            if episode_count % tc.update_every == 0 && replay.len() >= tc.batch_size {
                let batch = replay.sample(tc.batch_size, &mut explore);
                let (loss, grads) = match tc.mode {
                    TrainMode::Vdn => vdn_loss(&batch, &online, &target, tc.gamma),
                    TrainMode::Iql => iql_loss(&batch, &online, &target, tc.gamma),
                };
                if !loss.is_finite() {
                    return Err(TrainError::Diverged(NnError::NonFinite { what: "loss" }));
                }
                optimizer.step(&mut online.params, &grads)?;
            }
            if episode_count % tc.target_sync_every == 0 {
                target = online.clone();
            }
            if info.done {
                break;
            }
        }

        metrics.push(EpochMetrics {
            epoch,
            mean_reward: reward_sum / steps.max(1) as f64,
            cumulative_reward: cum_reward,
            mean_delay_s: delay_sum / task_count.max(1) as f64,
            violations,
            epsilon,
        });
    }

    Ok(TrainOutput {
        net: online,
        metrics,
        mode: tc.mode,
    })
}
