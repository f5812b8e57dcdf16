//! Forward simulation of the controlled system: mean-field mode, finite
//! populations, and the no-storage baseline.

use rayon::prelude::*;
use thiserror::Error;

use crate::accounting::{CostAccumulator, CostComponents};
use crate::config::{ScenarioConfig, TimeGrid};
use crate::market::{spot_price_mean_field, PriceInput};
use crate::processes::{
    initial_pair, normal_draws, role, simulate_exogenous_path, simulate_node, steppers, ExogenousPath, OuStepper,
};
use crate::solver::{feedback_control, mean_field_plan, psi_at, MeanFieldPlan, Policy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("policy grid ({policy:?}) does not match scenario grid ({scenario:?})")]
    GridMismatch { policy: TimeGrid, scenario: TimeGrid },
    #[error("policy has {policy} regions, scenario has {scenario}")]
    RegionMismatch { policy: usize, scenario: usize },
    #[error("population size must be at least one")]
    EmptyPopulation,
}

/// One simulated path of the representative node of every region.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub q0: Vec<f64>,
    /// `[region][k]`.
    pub q: Vec<Vec<f64>>,
    pub qbar: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub abar: Vec<Vec<f64>>,
    pub sbar: Vec<Vec<f64>>,
    pub price: Vec<f64>,
}

impl PathRecord {
    pub fn terminal_storage(&self, region: usize) -> f64 {
        *self.s[region].last().expect("non-empty path")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub label: String,
    pub grid: TimeGrid,
    pub seed: u64,
    pub paths: Vec<PathRecord>,
}

fn check(cfg: &ScenarioConfig, policy: &Policy) -> Result<(), EngineError> {
    if policy.grid != cfg.grid {
        return Err(EngineError::GridMismatch { policy: policy.grid, scenario: cfg.grid });
    }
    if policy.num_regions() != cfg.num_regions() {
        return Err(EngineError::RegionMismatch { policy: policy.num_regions(), scenario: cfg.num_regions() });
    }
    Ok(())
}

fn region_slice(v: &[Vec<f64>], k: usize) -> Vec<f64> {
    v.iter().map(|x| x[k]).collect()
}

/// Runs the feedback law of `region` along `q`, starting from storage `s0`.
/// Returns `(S, alpha)` on the grid.
pub fn control_path(
    policy: &Policy,
    plan: &MeanFieldPlan,
    exo: &ExogenousPath,
    region: usize,
    q: &[f64],
    s0: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = policy.grid.steps;
    let h = policy.grid.dt();
    let mut s = Vec::with_capacity(n + 1);
    let mut alpha = Vec::with_capacity(n + 1);
    s.push(s0);
    for k in 0..=n {
        let qbar = region_slice(&exo.qbar, k);
        let psi = psi_at(policy, plan, region, k, q[k]);
        let a = feedback_control(policy, region, k, s[k], q[k], exo.q0[k], &qbar, plan.abar[k].as_slice(), psi);
        alpha.push(a);
        if k < n {
            s.push(s[k] + h * a);
        }
    }
    (s, alpha)
}

fn record(plan: MeanFieldPlan, exo: ExogenousPath, s: Vec<Vec<f64>>, alpha: Vec<Vec<f64>>) -> PathRecord {
    let g = exo.q.len();
    PathRecord {
        abar: (0..g).map(|j| plan.abar.iter().map(|a| a[j]).collect()).collect(),
        sbar: (0..g).map(|j| plan.sbar.iter().map(|a| a[j]).collect()).collect(),
        price: plan.price,
        q0: exo.q0,
        q: exo.q,
        qbar: exo.qbar,
        s,
        alpha,
    }
}

pub fn simulate_mean_field_path(
    cfg: &ScenarioConfig,
    policy: &Policy,
    st: &[OuStepper],
    seed: u64,
    path: usize,
) -> PathRecord {
    let exo = simulate_exogenous_path(cfg, st, seed, path);
    let s0: Vec<f64> = cfg
        .regions
        .iter()
        .enumerate()
        .map(|(g, r)| initial_pair(&r.ou.initial_law(), &r.initial_storage, seed, path as u64, role::region_initial(g)).1)
        .collect();
    controlled_path(policy, exo, &s0)
}

/// Representative nodes of every region controlled along given exogenous states.
pub fn controlled_path(policy: &Policy, exo: ExogenousPath, s0: &[f64]) -> PathRecord {
    let plan = mean_field_plan(policy, &exo.q0, &exo.qbar);
    let (mut s, mut alpha) = (Vec::new(), Vec::new());
    for (g, &start) in s0.iter().enumerate() {
        let (sg, ag) = control_path(policy, &plan, &exo, g, &exo.q[g], start);
        s.push(sg);
        alpha.push(ag);
    }
    record(plan, exo, s, alpha)
}

pub fn simulate_mean_field(
    cfg: &ScenarioConfig,
    policy: &Policy,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle, EngineError> {
    check(cfg, policy)?;
    let st = steppers(cfg);
    let paths = (0..n_paths).into_par_iter().map(|p| simulate_mean_field_path(cfg, policy, &st, seed, p)).collect();
    Ok(PathBundle { label: policy.mode.to_string(), grid: cfg.grid, seed, paths })
}

/// No storage anywhere: `alpha = 0`, storage frozen at its initial level.
pub fn baseline_no_storage(cfg: &ScenarioConfig, n_paths: usize, seed: u64) -> PathBundle {
    let st = steppers(cfg);
    let n = cfg.grid.steps;
    let weights = cfg.weights();
    let zeros = vec![0.0; cfg.num_regions()];
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let exo = simulate_exogenous_path(cfg, &st, seed, p);
            let s = cfg
                .regions
                .iter()
                .enumerate()
                .map(|(g, r)| {
                    let (_, s0) = initial_pair(&r.ou.initial_law(), &r.initial_storage, seed, p as u64, role::region_initial(g));
                    vec![s0; n + 1]
                })
                .collect();
            let price = (0..=n)
                .map(|k| {
                    let qbar = region_slice(&exo.qbar, k);
                    spot_price_mean_field(&cfg.pricing, &PriceInput { q0: exo.q0[k], qbar: &qbar, abar: &zeros, weights: &weights })
                })
                .collect();
            PathRecord {
                abar: vec![vec![0.0; n + 1]; cfg.num_regions()],
                sbar: cfg.regions.iter().map(|r| vec![r.initial_storage.mean(); n + 1]).collect(),
                alpha: vec![vec![0.0; n + 1]; cfg.num_regions()],
                price,
                q0: exo.q0,
                q: exo.q,
                qbar: exo.qbar,
                s,
            }
        })
        .collect();
    PathBundle { label: "baseline".into(), grid: cfg.grid, seed, paths }
}

/// Alternative strategy for one node of a finite population.
#[derive(Debug, Clone, Copy)]
pub enum Deviation<'a> {
    /// `c alpha`.
    Scaled(f64),
    /// The equilibrium feedback evaluated `lag` grid steps late.
    Lagged(usize),
    /// Another policy sharing the same population plan.
    Policy(&'a Policy),
}

/// Which nodes get their realized costs computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CostScope {
    #[default]
    None,
    All,
    Node(usize),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NPlayerOptions<'a> {
    pub record_nodes: bool,
    pub costs: CostScope,
    pub deviator: Option<(usize, Deviation<'a>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeStates {
    pub q: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NPlayerPath {
    pub q0: Vec<f64>,
    pub price: Vec<f64>,
    pub price_mean_field: Vec<f64>,
    /// Costs of the nodes selected by `CostScope`, in label order.
    pub node_costs: Vec<CostComponents>,
    pub nodes: Option<NodeStates>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NPlayerBundle {
    pub grid: TimeGrid,
    pub seed: u64,
    pub labels: Vec<usize>,
    pub paths: Vec<NPlayerPath>,
}

/// `floor(pi_g N)` nodes per region, remainder to the largest region; nodes
/// are labelled in region order.
pub fn assign_regions(weights: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = weights.iter().map(|w| (w * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let largest = weights
        .iter()
        .enumerate()
        .fold(0, |best, (i, w)| if *w > weights[best] { i } else { best });
    counts[largest] += n.saturating_sub(assigned);
    counts.iter().enumerate().flat_map(|(g, &c)| std::iter::repeat_n(g, c)).collect()
}

struct NodeRun<'a> {
    policy: &'a Policy,
    plan: &'a MeanFieldPlan,
    exo: &'a ExogenousPath,
    qbar: &'a [Vec<f64>],
}

impl NodeRun<'_> {
    fn run(&self, region: usize, q: &[f64], s0: f64, deviation: Option<&Deviation>, mut visit: impl FnMut(usize, f64, f64, f64)) -> f64 {
        let pol = self.policy;
        let n = pol.grid.steps;
        let h = pol.grid.dt();
        let abar = |k: usize| self.plan.abar[k].as_slice();
        let equilibrium = |p: &Policy, k: usize, s: f64| {
            let psi = psi_at(p, self.plan, region, k, q[k]);
            feedback_control(p, region, k, s, q[k], self.exo.q0[k], &self.qbar[k], abar(k), psi)
        };
        let mut s = s0;
        let mut history = Vec::new();
        for k in 0..=n {
            let a = match deviation {
                None => equilibrium(pol, k, s),
                Some(Deviation::Scaled(c)) => c * equilibrium(pol, k, s),
                Some(Deviation::Lagged(lag)) => {
                    history.push(equilibrium(pol, k, s));
                    history[k.saturating_sub(*lag)]
                }
                Some(Deviation::Policy(alt)) => equilibrium(alt, k, s),
            };
            visit(k, q[k], s, a);
            if k < n {
                s += h * a;
            }
        }
        s
    }
}

#[derive(Clone)]
struct NodeSpec {
    q: Vec<f64>,
    s0: f64,
}

fn node_spec(cfg: &ScenarioConfig, st: &[OuStepper], exo: &ExogenousPath, seed: u64, path: usize, i: usize, region: usize) -> NodeSpec {
    let r = &cfg.regions[region];
    let (q_start, s0) = initial_pair(&r.ou.initial_law(), &r.initial_storage, seed, path as u64, role::node_initial(i));
    let idio = normal_draws(seed, path as u64, role::node(i), cfg.grid.steps);
    NodeSpec { q: simulate_node(&st[region + 1], q_start, &idio, &exo.common), s0 }
}

pub fn simulate_n_player_path(
    cfg: &ScenarioConfig,
    policy: &Policy,
    st: &[OuStepper],
    labels: &[usize],
    seed: u64,
    path: usize,
    opts: &NPlayerOptions,
) -> NPlayerPath {
    let n = cfg.grid.steps;
    let n_nodes = labels.len();
    let exo = simulate_exogenous_path(cfg, st, seed, path);
    let plan = mean_field_plan(policy, &exo.q0, &exo.qbar);
    let qbar: Vec<Vec<f64>> = (0..=n).map(|k| region_slice(&exo.qbar, k)).collect();
    let runner = NodeRun { policy, plan: &plan, exo: &exo, qbar: &qbar };
    let deviation_of = |i: usize| opts.deviator.as_ref().filter(|(j, _)| *j == i).map(|(_, d)| d);

    let mut net = vec![0.0; n + 1];
    let mut nodes = opts.record_nodes.then(|| NodeStates { q: Vec::new(), s: Vec::new(), alpha: Vec::new() });
    for (i, &g) in labels.iter().enumerate() {
        let spec = node_spec(cfg, st, &exo, seed, path, i, g);
        let (mut s_rec, mut a_rec) = (Vec::new(), Vec::new());
        runner.run(g, &spec.q, spec.s0, deviation_of(i), |k, q, s, a| {
            net[k] += q - a;
            if nodes.is_some() {
                s_rec.push(s);
                a_rec.push(a);
            }
        });
        if let Some(ns) = nodes.as_mut() {
            ns.q.push(spec.q);
            ns.s.push(s_rec);
            ns.alpha.push(a_rec);
        }
    }
    let w = cfg.pricing.prosumer_weight;
    let price: Vec<f64> = (0..=n)
        .map(|k| cfg.pricing.p0 + cfg.pricing.p1 * (-exo.q0[k] - w * net[k] / n_nodes as f64))
        .collect();

    let cost_of = |i: usize| {
        let g = labels[i];
        let spec = node_spec(cfg, st, &exo, seed, path, i, g);
        let mut acc = CostAccumulator::new(cfg.storage, cfg.regions[g].demand_charge, &cfg.grid);
        let s_t = runner.run(g, &spec.q, spec.s0, deviation_of(i), |k, q, s, a| acc.add(k, price[k], q, s, a));
        acc.finish(s_t)
    };
    let node_costs = match opts.costs {
        CostScope::None => Vec::new(),
        CostScope::All => (0..n_nodes).map(cost_of).collect(),
        CostScope::Node(i) => vec![cost_of(i)],
    };
    NPlayerPath { q0: exo.q0.clone(), price, price_mean_field: plan.price.clone(), node_costs, nodes }
}

pub fn simulate_n_player(
    cfg: &ScenarioConfig,
    policy: &Policy,
    population: usize,
    n_paths: usize,
    seed: u64,
    opts: &NPlayerOptions,
) -> Result<NPlayerBundle, EngineError> {
    check(cfg, policy)?;
    if population == 0 {
        return Err(EngineError::EmptyPopulation);
    }
    let st = steppers(cfg);
    let labels = assign_regions(&cfg.weights(), population);
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|p| simulate_n_player_path(cfg, policy, &st, &labels, seed, p, opts))
        .collect();
    Ok(NPlayerBundle { grid: cfg.grid, seed, labels, paths })
}
