//! Finite-difference optimality test: perturb the controls along fixed
//! directions on paired paths and look at the change in cost.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::accounting::{trapezoid, CostAccumulator, Estimate};
use crate::config::{GameMode, ScenarioConfig, TimeGrid};
use crate::engine::{controlled_path, simulate_mean_field_path, PathRecord};
use crate::processes::{
    initial_pair, role, sample_law, simulate_common, simulate_node, steppers, NoiseGrid, OuStepper,
};
use crate::solver::Policy;

/// Deterministic perturbation `beta[region][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub beta: Vec<Vec<f64>>,
}

impl Direction {
    /// `sqrt(int sum_g beta_g^2 dt)`.
    pub fn norm(&self, grid: &TimeGrid) -> f64 {
        self.beta.iter().map(|b| trapezoid(&b.iter().map(|x| x * x).collect::<Vec<_>>(), grid.dt())).sum::<f64>().sqrt()
    }

    /// Random trigonometric direction of unit norm.
    pub fn random(rng: &mut ChaCha8Rng, regions: usize, grid: &TimeGrid) -> Self {
        const MODES: usize = 5;
        let beta = (0..regions)
            .map(|_| {
                let c: Vec<(f64, f64)> = (0..MODES).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..std::f64::consts::TAU))).collect();
                (0..=grid.steps)
                    .map(|k| {
                        let t = grid.time(k) / grid.horizon;
                        c.iter().enumerate().map(|(m, (a, ph))| a * ((m as f64 + 1.0) * std::f64::consts::PI * t + ph).sin()).sum()
                    })
                    .collect()
            })
            .collect();
        let mut d = Self { beta };
        let norm = d.norm(grid);
        d.beta.iter_mut().flatten().for_each(|x| *x /= norm);
        d
    }

    pub fn random_family(count: usize, regions: usize, grid: &TimeGrid, seed: u64) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| Self::random(&mut rng, regions, grid)).collect()
    }
}

/// Outcome for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GateauxEstimate {
    pub norm: f64,
    /// `(J(eps) - J(-eps)) / (2 eps)`.
    pub slope: Estimate,
    /// `(eps, J(eps) - J(0))` per tested step.
    pub increases: Vec<(f64, Estimate)>,
}

impl GateauxEstimate {
    pub fn passes(&self, slope_tolerance: f64) -> bool {
        self.slope.mean.abs() < slope_tolerance * self.norm && self.increases.iter().all(|(_, e)| e.mean >= -3.0 * e.se)
    }
}

fn cumulative(beta: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(beta.len());
    let mut acc = 0.0;
    for b in beta {
        out.push(acc);
        acc += h * b;
    }
    out
}

/// Cost of a path whose controls are shifted by `eps beta`.
///
/// Planner: every node of a region shifts, so the price moves with them and the
/// criterion is the central cost. Game: the representative node deviates alone
/// against the frozen price; the criterion is `sum_g pi_g J_g`.
fn perturbed_cost(cfg: &ScenarioConfig, mode: GameMode, rec: &PathRecord, dir: &Direction, shifts: &[Vec<f64>], eps: f64) -> f64 {
    let grid = &cfg.grid;
    let n = grid.steps;
    let w = cfg.pricing.prosumer_weight;
    let price: Vec<f64> = match mode {
        GameMode::Mfc => (0..=n)
            .map(|k| rec.price[k] + cfg.pricing.p1 * w * eps * cfg.regions.iter().zip(&dir.beta).map(|(r, b)| r.weight * b[k]).sum::<f64>())
            .collect(),
        GameMode::Mfg => rec.price.clone(),
    };
    let mut total = 0.0;
    for (g, r) in cfg.regions.iter().enumerate() {
        let mut acc = CostAccumulator::new(cfg.storage, r.demand_charge, grid);
        for k in 0..=n {
            acc.add(k, price[k], rec.q[g][k], rec.s[g][k] + eps * shifts[g][k], rec.alpha[g][k] + eps * dir.beta[g][k]);
        }
        total += r.weight * acc.finish(rec.s[g][n] + eps * shifts[g][n]).total();
    }
    match mode {
        GameMode::Mfc => {
            let k0 = cfg.rest_of_world.demand_charge;
            let rest: Vec<f64> = (0..=n).map(|k| -price[k] * rec.q0[k] + 0.5 * k0 * rec.q0[k] * rec.q0[k]).collect();
            trapezoid(&rest, grid.dt()) + w * total
        }
        GameMode::Mfg => total,
    }
}

/// Path `path` with every Gaussian draw negated: increments change sign and
/// random initial values are reflected about their means.
pub fn mirrored_path(cfg: &ScenarioConfig, policy: &Policy, st: &[OuStepper], seed: u64, path: usize) -> PathRecord {
    let p = path as u64;
    let reflect = |mean: f64, v: f64| 2.0 * mean - v;
    let mut noise = NoiseGrid::draw(cfg, seed, path);
    noise.common.iter_mut().chain(noise.idio.iter_mut().flatten()).for_each(|z| *z = -*z);
    let law0 = cfg.rest_of_world.ou.initial_law();
    let q0_start = reflect(law0.mean(), sample_law(&law0, seed, p, role::COMMON_INITIAL));
    let qbar_start: Vec<f64> = cfg.regions.iter().map(|r| r.ou.initial_law().mean()).collect();
    let (q0, qbar) = simulate_common(st, q0_start, &qbar_start, &noise.common);
    let mut q = Vec::new();
    let mut s0 = Vec::new();
    for (g, r) in cfg.regions.iter().enumerate() {
        let law = r.ou.initial_law();
        let (qs, ss) = initial_pair(&law, &r.initial_storage, seed, p, role::region_initial(g));
        q.push(simulate_node(&st[g + 1], reflect(law.mean(), qs), &noise.idio[g], &noise.common));
        s0.push(reflect(r.initial_storage.mean(), ss));
    }
    let exo = crate::processes::ExogenousPath { q0, q, qbar, common: noise.common };
    controlled_path(policy, exo, &s0)
}

/// Finite-difference derivatives of the mode's criterion at `policy` along
/// every direction, on `n_paths` paired paths. With `antithetic`, every sample
/// averages a path with its mirror image; the model is linear-Gaussian, so
/// slopes and increases are then free of sampling noise.
#[allow(clippy::too_many_arguments)]
pub fn gateaux_test(
    cfg: &ScenarioConfig,
    mode: GameMode,
    policy: &Policy,
    directions: &[Direction],
    eps: &[f64],
    n_paths: usize,
    seed: u64,
    antithetic: bool,
) -> Vec<GateauxEstimate> {
    let st = steppers(cfg);
    let h = cfg.grid.dt();
    let shifts: Vec<Vec<Vec<f64>>> = directions.iter().map(|d| d.beta.iter().map(|b| cumulative(b, h)).collect()).collect();
    // per path: for each direction, [slope, increase per eps]
    let samples: Vec<Vec<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut recs = vec![simulate_mean_field_path(cfg, policy, &st, seed, p)];
            if antithetic {
                recs.push(mirrored_path(cfg, policy, &st, seed, p));
            }
            let cost = |d: &Direction, s: &[Vec<f64>], e: f64| {
                recs.iter().map(|r| perturbed_cost(cfg, mode, r, d, s, e)).sum::<f64>() / recs.len() as f64
            };
            let base = cost(&directions[0], &shifts[0], 0.0);
            let step = eps.iter().copied().fold(0.0, |a: f64, e| a.max(e.abs()));
            directions
                .iter()
                .zip(&shifts)
                .map(|(d, s)| {
                    let slope = (cost(d, s, step) - cost(d, s, -step)) / (2.0 * step);
                    std::iter::once(slope).chain(eps.iter().map(|&e| cost(d, s, e) - base)).collect()
                })
                .collect()
        })
        .collect();
    directions
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let col = |j: usize| Estimate::from_samples(&samples.iter().map(|s| s[i][j]).collect::<Vec<_>>());
            GateauxEstimate {
                norm: d.norm(&cfg.grid),
                slope: col(0),
                increases: eps.iter().enumerate().map(|(j, &e)| (e, col(j + 1))).collect(),
            }
        })
        .collect()
}
