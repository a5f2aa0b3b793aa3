#![allow(dead_code)]

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use td3_sched::agents::Algorithm;
use td3_sched::domain::{NodeSpec, ServiceSpec};
use td3_sched::harness::{ExperimentConfig, Scenario};
use td3_sched::nn::Mlp;

/// Central finite differences of `L = sum(w * net(x))` against the analytic
/// backward pass. Returns the largest relative error over all parameters and
/// all input entries.
pub fn gradient_check(net: &Mlp, x: &Array2<f64>, w: &Array2<f64>, h: f64) -> f64 {
    let loss = |n: &Mlp, x: &Array2<f64>| (&n.predict(x.view()).unwrap() * w).sum();
    let (_, cache) = net.forward(x.view()).unwrap();
    let (grads, input_grad) = net.backward(&cache, w.view()).unwrap();

    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-7);
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for (li, g) in grads.layers.iter().enumerate() {
        for idx in 0..g.weights.len() {
            let (r, c) = (idx / g.weights.ncols(), idx % g.weights.ncols());
            let orig = net.layers()[li].weights[[r, c]];
            probe.layers_mut()[li].weights[[r, c]] = orig + h;
            let up = loss(&probe, x);
            probe.layers_mut()[li].weights[[r, c]] = orig - h;
            let down = loss(&probe, x);
            probe.layers_mut()[li].weights[[r, c]] = orig;
            worst = worst.max(rel(g.weights[[r, c]], (up - down) / (2.0 * h)));
        }
        for j in 0..g.bias.len() {
            let orig = net.layers()[li].bias[j];
            probe.layers_mut()[li].bias[j] = orig + h;
            let up = loss(&probe, x);
            probe.layers_mut()[li].bias[j] = orig - h;
            let down = loss(&probe, x);
            probe.layers_mut()[li].bias[j] = orig;
            worst = worst.max(rel(g.bias[j], (up - down) / (2.0 * h)));
        }
    }
    let mut xp = x.clone();
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let orig = x[[r, c]];
            xp[[r, c]] = orig + h;
            let up = loss(net, &xp);
            xp[[r, c]] = orig - h;
            let down = loss(net, &xp);
            xp[[r, c]] = orig;
            worst = worst.max(rel(input_grad[[r, c]], (up - down) / (2.0 * h)));
        }
    }
    worst
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

/// Step reward computed term by term with plain loops, from raw quantities.
pub struct RewardCase {
    pub latency: Vec<f64>,
    pub l_target: f64,
    pub cpu_alloc: Vec<f64>,
    pub mem_alloc: Vec<f64>,
    pub cpu_used: Vec<f64>,
    pub mem_used: Vec<f64>,
    pub prev_cpu: Vec<f64>,
    pub prev_mem: Vec<f64>,
}

pub fn brute_force_reward(c: &RewardCase, alpha: f64, beta: f64, lambda: f64, mu: f64) -> f64 {
    let n = c.latency.len();
    let mut over = 0.0;
    let mut met = 0.0;
    let mut idle = 0.0;
    let mut moved = 0.0;
    for i in 0..n {
        if c.latency[i] > c.l_target {
            over += (c.latency[i] - c.l_target) / c.l_target;
        } else {
            met += 1.0;
        }
        let cu = if c.cpu_used[i] > c.cpu_alloc[i] { c.cpu_alloc[i] } else { c.cpu_used[i] };
        let mu_ = if c.mem_used[i] > c.mem_alloc[i] { c.mem_alloc[i] } else { c.mem_used[i] };
        idle += 1.0 - cu / c.cpu_alloc[i];
        idle += 1.0 - mu_ / c.mem_alloc[i];
        moved += (c.cpu_alloc[i] - c.prev_cpu[i]).abs() / 1.9;
        moved += (c.mem_alloc[i] - c.prev_mem[i]).abs() / 1984.0;
    }
    alpha * (-over) + beta * (-idle) + lambda * met + mu * (-moved)
}

/// One edge service whose SLO holds exactly when it has at least one core:
/// idle latency 75 ms, demand 0.5 cores, so latency is 150 ms at 1.0 core.
pub fn single_service_config(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.sim.latency.base_service_ms = 70.0;
    c.sim.latency.jitter_sigma = 0.0;
    c.sim.nodes = vec![NodeSpec::edge(0)];
    c.sim.services = vec![ServiceSpec {
        service_id: 0,
        name: "svc".into(),
        home_node: 0,
        cpu_cost_per_request: 0.01,
        mem_floor: 64.0,
        mem_per_qps: 0.0,
        initial_cpu_request: 0.5,
        initial_mem_request: 256.0,
    }];
    let trace = out.join("trace_50.csv");
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(&trace, "step,service,qps\n0,0,50\n").unwrap();
    c.scenario = Scenario::Trace(trace);
    c.record_wall_time = false;
    c.output_dir = out.join("run");
    c
}

pub fn small_config(algorithm: Algorithm, out: &Path, episodes: u64, steps: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.algorithm = algorithm;
    c.episodes = episodes;
    c.steps_per_episode = steps;
    c.seeds = vec![0, 1];
    c.record_wall_time = false;
    c.td3.hidden_width = 32;
    c.td3.batch_size = 16;
    c.td3.warmup_transitions = 10;
    c.dqn.hidden_width = 32;
    c.dqn.batch_size = 16;
    c.output_dir = out.to_path_buf();
    c
}
