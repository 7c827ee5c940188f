//! Built-in oracle suites for the `check` CLI verb.
//!
//! Each suite re-derives expected values independently of the
//! implementation path it verifies: the SINR check recodes the rate
//! formulas inline, the gradient check uses central finite differences,
//! the argmax check enumerates joint actions exhaustively, and the delay
//! check pins hand-computed arithmetic.

use crate::env::OBS_DIM;
use crate::nn::{NetDims, QNetwork};
use crate::offload::{delay_local, delay_rsu, rsu_cpu_share, Task};
use crate::radio::{rate_v2i, rate_v2v, AssociationMap, DrawTable, TxTarget};
use crate::rng::{Domain, Stream};
use crate::scenario::{build_world, sample_truncated_gaussian, ScenarioConfig};

/// Outcome of one suite: `Ok(summary)` or `Err(diagnostic)`.
pub type CheckResult = Result<String, String>;

/// Run every suite, returning `(name, outcome)` pairs.
pub fn run_all() -> Vec<(&'static str, CheckResult)> {
    vec![
        ("sinr-oracle", sinr_oracle_equivalence(200)),
        ("delay-arithmetic", delay_arithmetic()),
        ("gradient-check", gradient_check(5)),
        ("argmax-consistency", argmax_consistency()),
        ("truncated-gaussian", truncated_gaussian(20_000)),
    ]
}

/// Compare the V2I and V2V rates against inline recodings of the SINR
/// formulas on random micro-topologies.
pub fn sinr_oracle_equivalence(topologies: u64) -> CheckResult {
    let cfg = ScenarioConfig {
        n_vehicles: 6,
        platoons: vec![],
        ..Default::default()
    };
    let ch = &cfg.channel;
    let mut checked = 0usize;
    for seed in 0..topologies {
        let world = build_world(&cfg, seed);
        let mut rng = Stream::derive(seed, Domain::Fading, 7);
        let draws = DrawTable::draw(&world, ch, &mut rng);
        let mut assoc = AssociationMap::idle(6);
        for j in 0..6 {
            match j % 3 {
                0 => assoc.set(j, TxTarget::Rsu(j % world.rsus.len())),
                1 => assoc.set(j, TxTarget::Vehicle((j + 1) % 6)),
                _ => {}
            }
        }

        let dist = |a: (f64, f64), b: (f64, f64)| -> f64 {
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt().max(1.0)
        };
        let gain = |d: f64, fading: f64, shadow: f64| -> f64 {
            ch.ref_gain_p0 * shadow * fading * d.powf(-ch.pathloss_alpha)
        };

        for k in 0..6 {
            for i in 0..world.rsus.len() {
                let Some(rate) = rate_v2i(k, i, &assoc, &world, &draws, ch) else {
                    continue;
                };
                let rsu = &world.rsus[i];
                let signal = world.vehicles[k].tx_power_w
                    * gain(
                        dist(world.vehicles[k].position(), rsu.position()),
                        draws.v2i[k][i].fading,
                        draws.v2i[k][i].shadowing,
                    );
                let mut interference = 0.0;
                for j in 0..6 {
                    if j == k || assoc.target(j).is_none() {
                        continue;
                    }
                    if !rsu.covers(world.vehicles[j].x, world.road_length_m) {
                        continue;
                    }
                    interference += world.vehicles[j].tx_power_w
                        * gain(
                            dist(world.vehicles[j].position(), rsu.position()),
                            draws.v2i[j][i].fading,
                            draws.v2i[j][i].shadowing,
                        );
                }
                let oracle =
                    ch.bandwidth_hz * (1.0 + signal / (ch.noise_power_w + interference)).log2();
                let rel = (rate - oracle).abs() / oracle.abs().max(1e-30);
                if rel >= 1e-9 {
                    return Err(format!(
                        "v2i rate mismatch seed {seed} k {k} rsu {i}: {rate} vs {oracle}"
                    ));
                }
                checked += 1;
            }
            for i in 0..6 {
                let Some(rate) = rate_v2v(k, i, &assoc, &world, &draws, ch) else {
                    continue;
                };
                let rx = &world.vehicles[i];
                let signal = world.vehicles[k].tx_power_w
                    * gain(
                        dist(world.vehicles[k].position(), rx.position()),
                        draws.v2v[k][i].fading,
                        draws.v2v[k][i].shadowing,
                    );
                let mut interference = 0.0;
                for j in 0..6 {
                    if j == k || j == i || assoc.target(j).is_none() {
                        continue;
                    }
                    interference += world.vehicles[j].tx_power_w
                        * gain(
                            dist(world.vehicles[j].position(), rx.position()),
                            draws.v2v[j][i].fading,
                            draws.v2v[j][i].shadowing,
                        );
                }
                let oracle =
                    ch.bandwidth_hz * (1.0 + signal / (ch.noise_power_w + interference)).log2();
                let rel = (rate - oracle).abs() / oracle.abs().max(1e-30);
                if rel >= 1e-9 {
                    return Err(format!(
                        "v2v rate mismatch seed {seed} k {k} i {i}: {rate} vs {oracle}"
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} rates matched within 1e-9 over {topologies} topologies"))
}

/// Pin the hand-computed delay values from the default parameter set.
pub fn delay_arithmetic() -> CheckResult {
    let task = Task {
        owner: 0,
        size_bits: 1.5e6,
        density_cycles_per_bit: 100.0,
        deadline_s: 0.5,
        is_public: false,
    };
    if delay_local(&task, 0.5e9) != 0.3 {
        return Err(format!("local delay {} != 0.3", delay_local(&task, 0.5e9)));
    }
    let sole_share = rsu_cpu_share(&task, task.demand_cycles(), 6e9);
    if sole_share != 6e9 {
        return Err(format!("sole-task share {sole_share} != 6e9"));
    }
    let compute_term = task.demand_cycles() / sole_share;
    if compute_term != 0.025 {
        return Err(format!("rsu compute term {compute_term} != 0.025"));
    }
    let d = delay_rsu(&task, 3e7, sole_share).ok_or("rsu delay infeasible")?;
    if (d - 0.075).abs() > 1e-15 {
        return Err(format!("rsu delay {d} != 0.075"));
    }
    // Share conservation over random demand splits.
    let mut rng = Stream::new(11, Domain::Tasks);
    for trial in 0..1000 {
        let n = 1 + rng.below(7);
        let tasks: Vec<Task> = (0..n)
            .map(|_| Task {
                size_bits: rng.uniform(0.5e6, 4e6),
                ..task
            })
            .collect();
        let zeta: f64 = tasks.iter().map(Task::demand_cycles).sum();
        let total: f64 = tasks.iter().map(|t| rsu_cpu_share(t, zeta, 6e9)).sum();
        if (total - 6e9).abs() > 1e-12 * 6e9 {
            return Err(format!("share conservation broke on trial {trial}: {total}"));
        }
    }
    Ok("local 0.3 s, sole-share compute 0.025 s, share conservation on 1000 splits".into())
}

/// Central finite differences against the analytic gradients on random
/// small networks.
pub fn gradient_check(nets: u64) -> CheckResult {
    let dims = NetDims {
        input: OBS_DIM,
        hidden: 6,
        actions: 8,
        window: 3,
    };
    let mut worst_overall: f64 = 0.0;
    for seed in 0..nets {
        let mut rng = Stream::derive(1234, Domain::WeightInit, seed);
        let net = QNetwork::init(dims, &mut rng);
        let window: Vec<f64> = (0..dims.input * dims.window)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        let target: Vec<f64> = (0..dims.actions).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let loss = |net: &QNetwork| -> f64 {
            net.forward(&window)
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        let (q, tape) = net.forward_cached(&window);
        let d_q: Vec<f64> = q.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
        let mut grads = vec![0.0; net.n_params()];
        net.backward(&tape, &d_q, &mut grads);

        let h = 1e-5;
        let mut probe = net.clone();
        for p in 0..net.n_params() {
            let orig = probe.params[p];
            probe.params[p] = orig + h;
            let up = loss(&probe);
            probe.params[p] = orig - h;
            let down = loss(&probe);
            probe.params[p] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grads[p]).abs() / fd.abs().max(grads[p].abs()).max(1e-3);
            worst_overall = worst_overall.max(rel);
            if rel >= 1e-4 {
                return Err(format!(
                    "gradient mismatch net {seed} param {p}: fd {fd} vs {}",
                    grads[p]
                ));
            }
        }
    }
    Ok(format!(
        "{nets} nets, max relative error {worst_overall:.2e} (< 1e-4)"
    ))
}

/// Exhaustive joint-argmax consistency of summed per-agent Q-tables.
pub fn argmax_consistency() -> CheckResult {
    let mut rng = Stream::new(2024, Domain::Exploration);
    let mut cases = 0usize;
    for n_agents in [2usize, 3] {
        for n_actions in 2usize..=5 {
            for _ in 0..100 {
                let tables: Vec<Vec<f64>> = (0..n_agents)
                    .map(|_| (0..n_actions).map(|_| rng.uniform(-10.0, 10.0)).collect())
                    .collect();
                let per_agent: Vec<usize> = tables
                    .iter()
                    .map(|t| {
                        (0..n_actions)
                            .max_by(|&a, &b| t[a].partial_cmp(&t[b]).unwrap())
                            .unwrap()
                    })
                    .collect();
                let joint_count = n_actions.pow(n_agents as u32);
                let mut best_joint = 0usize;
                let mut best_value = f64::NEG_INFINITY;
                for code in 0..joint_count {
                    let mut c = code;
                    let mut total = 0.0;
                    for t in &tables {
                        total += t[c % n_actions];
                        c /= n_actions;
                    }
                    if total > best_value {
                        best_value = total;
                        best_joint = code;
                    }
                }
                let mut decoded = Vec::with_capacity(n_agents);
                let mut c = best_joint;
                for _ in 0..n_agents {
                    decoded.push(c % n_actions);
                    c /= n_actions;
                }
                if decoded != per_agent {
                    return Err(format!(
                        "joint argmax {decoded:?} != per-agent {per_agent:?} for {tables:?}"
                    ));
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} random Q-tables consistent"))
}

/// Bounds and mean of the truncated-Gaussian speed sampler.
pub fn truncated_gaussian(samples: usize) -> CheckResult {
    let mut rng = Stream::new(60, Domain::Mobility);
    let mut sum = 0.0;
    for _ in 0..samples {
        let v = sample_truncated_gaussian(60.0, 5.0, &mut rng);
        if !(45.0..=75.0).contains(&v) {
            return Err(format!("sample {v} escaped [45, 75]"));
        }
        sum += v;
    }
    let mean = sum / samples as f64;
    if (mean - 60.0).abs() >= 0.5 {
        return Err(format!("sample mean {mean} outside 60 +- 0.5"));
    }
    Ok(format!("{samples} samples in [45, 75], mean {mean:.3}"))
}
