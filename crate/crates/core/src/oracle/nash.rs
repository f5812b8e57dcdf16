//! Unilateral deviation gains in finite populations.

use crate::accounting::Estimate;
use crate::config::ScenarioConfig;
use crate::engine::{simulate_n_player, CostScope, Deviation, EngineError, NPlayerOptions};
use crate::solver::{Policy, SolverError};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NashError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A named alternative strategy for the deviating node.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub label: &'a str,
    pub deviation: Deviation<'a>,
}

/// Fixed part of the family: rescalings, a one-step delay, and optionally
/// another policy (e.g. a price taker sharing the population plan).
pub fn default_family<'a>(alternative: Option<&'a Policy>) -> Vec<Candidate<'a>> {
    let mut v = vec![
        Candidate { label: "scaled 0.95", deviation: Deviation::Scaled(0.95) },
        Candidate { label: "scaled 1.05", deviation: Deviation::Scaled(1.05) },
        Candidate { label: "lagged 1", deviation: Deviation::Lagged(1) },
    ];
    if let Some(p) = alternative {
        v.push(Candidate { label: "alternative policy", deviation: Deviation::Policy(p) });
    }
    v
}

/// Best response of a node that internalizes its own price impact `p1 w / N`:
/// same population plan, individual demand charge `K + 2 p1 w / N`.
pub fn own_impact_policy(cfg: &ScenarioConfig, policy: &Policy, population: usize) -> Result<Policy, SolverError> {
    let own = cfg.pricing.p1 * cfg.pricing.prosumer_weight / population as f64;
    let ks: Vec<f64> = cfg.regions.iter().map(|r| r.demand_charge + 2.0 * own).collect();
    Policy::build_individual(cfg, policy.mode, policy.matrices.lambda, policy.response_lambda, &ks)
}

/// Cost reductions of node 0 for one population size. Gains are lower bounds
/// on the true epsilon, since the family is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct NashGain {
    pub population: usize,
    /// `J(equilibrium) - J(deviation)` per candidate, on paired paths.
    pub gains: Vec<(String, Estimate)>,
}

impl NashGain {
    pub fn best(&self) -> (&str, Estimate) {
        self.gains
            .iter()
            .max_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
            .map(|(l, e)| (l.as_str(), *e))
            .expect("non-empty family")
    }
}

/// Gains of node 0 for every population size, over `family` plus the
/// own-impact best response for that size.
pub fn nash_deviation_gain(
    cfg: &ScenarioConfig,
    policy: &Policy,
    populations: &[usize],
    family: &[Candidate],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<NashGain>, NashError> {
    fn node_cost(cfg: &ScenarioConfig, policy: &Policy, n: usize, n_paths: usize, seed: u64, deviator: Option<(usize, Deviation)>) -> Result<Vec<f64>, EngineError> {
        let opts = NPlayerOptions { record_nodes: false, costs: CostScope::Node(0), deviator };
        let b = simulate_n_player(cfg, policy, n, n_paths, seed, &opts)?;
        Ok(b.paths.iter().map(|p| p.node_costs[0].total()).collect())
    }
    let cost = |n: usize, deviator: Option<(usize, Deviation)>| node_cost(cfg, policy, n, n_paths, seed, deviator);
    populations
        .iter()
        .map(|&n| {
            let base = cost(n, None)?;
            let gain = |d: Deviation| -> Result<Estimate, EngineError> { Ok(Estimate::paired_difference(&base, &cost(n, Some((0, d)))?)) };
            let mut gains = family
                .iter()
                .map(|c| Ok((c.label.to_string(), gain(c.deviation)?)))
                .collect::<Result<Vec<_>, EngineError>>()?;
            let own = own_impact_policy(cfg, policy, n)?;
            gains.push(("own impact".to_string(), gain(Deviation::Policy(&own))?));
            Ok(NashGain { population: n, gains })
        })
        .collect()
}

/// `gain(N_{i+1}) <= gain(N_i) + z * SE` for consecutive population sizes.
pub fn gains_non_increasing(gains: &[NashGain], z: f64) -> bool {
    gains.windows(2).all(|w| {
        let (a, b) = (w[0].best().1, w[1].best().1);
        b.mean <= a.mean + z * (a.se * a.se + b.se * b.se).sqrt()
    })
}
