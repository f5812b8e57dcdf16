//! Nested Monte Carlo: re-simulate the future from a point of an outer path
//! and average the integrands of the conditional-expectation representations.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::accounting::Estimate;
use crate::config::TimeGrid;
use crate::engine::PathRecord;
use crate::processes::{normal_draws, role, OuStepper};
use crate::solver::{mean_alpha_forecast, mean_field_plan, psi_at, scalar_kernel, scalar_riccati, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NestedTarget {
    /// Mean-field adjoint offset, all regions.
    PsiBar,
    /// The representative node's offset in one region.
    Psi { region: usize },
    /// `E[abar_{t_horizon} | F0_t]`, all regions.
    Forecast { horizon: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedEstimate {
    pub solver: Vec<f64>,
    pub reference: Vec<Estimate>,
}

impl NestedEstimate {
    /// Largest `|solver - reference| / SE`; zero differences count as zero.
    pub fn max_z(&self) -> f64 {
        self.solver
            .iter()
            .zip(&self.reference)
            .map(|(s, r)| {
                let d = (s - r.mean).abs();
                if d == 0.0 {
                    0.0
                } else {
                    d / r.se
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_difference(&self) -> f64 {
        self.solver.iter().zip(&self.reference).map(|(s, r)| (s - r.mean).abs()).fold(0.0, f64::max)
    }
}

fn trapezoid_weight(i: usize, first: usize, last: usize, h: f64) -> f64 {
    if i == first || i == last {
        0.5 * h
    } else {
        h
    }
}

/// Inner simulation of the sources on the refined grid from fine node `start`.
struct FineSources {
    steppers: Vec<OuStepper>,
    start: usize,
    end: usize,
}

impl FineSources {
    fn new(policy: &Policy, start: usize) -> Self {
        let nf = policy.fine.times.len() - 1;
        let grid = TimeGrid::new(policy.grid.horizon, nf);
        Self { steppers: policy.cfg.sources().iter().map(|ou| OuStepper::new(ou, &grid)).collect(), start, end: nf }
    }

    fn common_draws(&self, seed: u64, p: usize) -> Vec<f64> {
        normal_draws(seed, p as u64, role::COMMON, self.end - self.start)
    }
}

fn column_estimates(samples: &[Vec<f64>]) -> Vec<Estimate> {
    let dim = samples.first().map_or(0, Vec::len);
    (0..dim).map(|j| Estimate::from_samples(&samples.iter().map(|s| s[j]).collect::<Vec<_>>())).collect()
}

fn psi_bar_samples(policy: &Policy, outer: &PathRecord, k: usize, inner: usize, seed: u64) -> Vec<Vec<f64>> {
    let fine = &policy.fine;
    let g = policy.num_regions();
    let st = &policy.cfg.storage;
    let it = k * fine.substeps;
    let src = FineSources::new(policy, it);
    let hf = policy.grid.dt() / fine.substeps as f64;
    let m = &policy.matrices.m;
    let p0 = DVector::from_element(g, policy.cfg.pricing.p0);
    let a1 = DVector::from_element(g, st.a1);
    // integrand c_i + C_i Y_i, with R(u_i, t) folded in
    let mut c = Vec::new();
    let mut cm = Vec::new();
    for i in it..=src.end {
        let r = fine.transition(i, it);
        let rpm = &r * &fine.phi[i] * m;
        c.push(&rpm * &p0 + &r * &a1);
        cm.push(&rpm * &policy.driver);
    }
    let terminal = fine.transition(src.end, it) * DVector::from_element(g, -st.b1);
    let y0 = DVector::from_iterator(g + 1, std::iter::once(outer.q0[k]).chain(outer.qbar.iter().map(|q| q[k])));
    (0..inner)
        .into_par_iter()
        .map(|p| {
            let xi = src.common_draws(seed, p);
            let mut y = y0.clone();
            let mut acc = terminal.clone();
            let mut tmp = DVector::zeros(g);
            for i in it..=src.end {
                let w = trapezoid_weight(i, it, src.end, hf);
                tmp.gemv(1.0, &cm[i - it], &y, 0.0);
                tmp += &c[i - it];
                acc.axpy(w, &tmp, 1.0);
                if i < src.end {
                    for (j, s) in src.steppers.iter().enumerate() {
                        y[j] = s.step_common(i, y[j], xi[i - it]);
                    }
                }
            }
            acc.as_slice().to_vec()
        })
        .collect()
}

fn psi_samples(policy: &Policy, outer: &PathRecord, k: usize, region: usize, inner: usize, seed: u64) -> Vec<Vec<f64>> {
    let fine = &policy.fine;
    let cfg = &policy.cfg;
    let g = policy.num_regions();
    let st = &cfg.storage;
    let horizon = policy.grid.horizon;
    let it = k * fine.substeps;
    let src = FineSources::new(policy, it);
    let hf = policy.grid.dt() / fine.substeps as f64;
    let m = &policy.matrices.m;
    let coef = &policy.regions[region];
    let delta = coef.delta;
    let t = fine.times[it];
    let p0 = DVector::from_element(g, cfg.pricing.p0);
    // abar = As_i Sbar + a0_i + Ay_i Y on the refined grid
    let mut as_ = Vec::new();
    let mut a0 = Vec::new();
    let mut ay = Vec::new();
    let mut kern = Vec::new();
    let mut kappa = Vec::new();
    for i in it..=src.end {
        let u = fine.times[i];
        let resp = DVector::from_iterator(g + 1, src.steppers.iter().map(|s| s.response[i]));
        as_.push(m * &fine.phi[i]);
        a0.push(m * (&fine.d[i] - &fine.g[i] * &resp + &p0));
        ay.push(m * (&fine.g[i] + &policy.driver));
        kern.push(scalar_kernel(st.a2, delta, st.b2, horizon, t, u));
        kappa.push(delta * scalar_riccati(st.a2, delta, st.b2, horizon, u));
    }
    let terminal = -st.b1 * scalar_kernel(st.a2, delta, st.b2, horizon, t, horizon);
    let y0 = DVector::from_iterator(g + 1, std::iter::once(outer.q0[k]).chain(outer.qbar.iter().map(|q| q[k])));
    let sbar0 = DVector::from_iterator(g, outer.sbar.iter().map(|s| s[k]));
    let q_start = outer.q[region][k];
    let weights = cfg.weights();
    let w = cfg.pricing.prosumer_weight;
    let node = &src.steppers[region + 1];
    (0..inner)
        .into_par_iter()
        .map(|p| {
            let xi = src.common_draws(seed, p);
            let idio = normal_draws(seed, p as u64, role::region(region), src.end - it);
            let (mut y, mut sbar, mut q) = (y0.clone(), sbar0.clone(), q_start);
            let mut abar = DVector::zeros(g);
            let mut acc = terminal;
            for i in it..=src.end {
                let j = i - it;
                abar.gemv(1.0, &as_[j], &sbar, 0.0);
                abar.gemv(1.0, &ay[j], &y, 1.0);
                abar += &a0[j];
                let net: f64 = (0..g).map(|r| weights[r] * (y[r + 1] - abar[r])).sum();
                let bhat = cfg.pricing.p0 - policy.response_lambda * (y[0] + w * net) - coef.demand_charge * q;
                acc -= trapezoid_weight(i, it, src.end, hf) * kern[j] * (kappa[j] * bhat - st.a1);
                if i < src.end {
                    sbar.axpy(hf, &abar, 1.0);
                    q = node.step(i, q, idio[j], xi[j]);
                    for (r, s) in src.steppers.iter().enumerate() {
                        y[r] = s.step_common(i, y[r], xi[j]);
                    }
                }
            }
            vec![acc]
        })
        .collect()
}

fn forecast_samples(policy: &Policy, outer: &PathRecord, k: usize, horizon: usize, inner: usize, seed: u64) -> Vec<Vec<f64>> {
    let g = policy.num_regions();
    let h = policy.grid.dt();
    let steppers: Vec<OuStepper> = policy.cfg.sources().iter().map(|ou| OuStepper::new(ou, &policy.grid)).collect();
    let y0: Vec<f64> = std::iter::once(outer.q0[k]).chain(outer.qbar.iter().map(|q| q[k])).collect();
    let sbar0 = DVector::from_iterator(g, outer.sbar.iter().map(|s| s[k]));
    (0..inner)
        .into_par_iter()
        .map(|p| {
            let xi = normal_draws(seed, p as u64, role::COMMON, horizon - k);
            let mut y = y0.clone();
            let mut sbar = sbar0.clone();
            let mut i = k;
            loop {
                let x = DVector::from_iterator(g + 1, y.iter().zip(&steppers).map(|(v, s)| s.deviation(i, *v)));
                let abar: DVector<f64> = &policy.alpha_s[i] * &sbar + &policy.alpha_0[i] + &policy.alpha_x[i] * x;
                if i == horizon {
                    return abar.as_slice().to_vec();
                }
                sbar.axpy(h, &abar, 1.0);
                for (j, s) in steppers.iter().enumerate() {
                    y[j] = s.step_common(i, y[j], xi[i - k]);
                }
                i += 1;
            }
        })
        .collect()
}

/// Compares the solver's value of `target` at grid point `k` of `outer` with
/// a nested Monte Carlo estimate over `inner` re-simulated futures.
pub fn nested_mc_conditional(
    policy: &Policy,
    outer: &PathRecord,
    k: usize,
    target: NestedTarget,
    inner: usize,
    seed: u64,
) -> NestedEstimate {
    let plan = mean_field_plan(policy, &outer.q0, &outer.qbar);
    let (solver, samples) = match target {
        NestedTarget::PsiBar => (plan.psi_bar[k].as_slice().to_vec(), psi_bar_samples(policy, outer, k, inner, seed)),
        NestedTarget::Psi { region } => (
            vec![psi_at(policy, &plan, region, k, outer.q[region][k])],
            psi_samples(policy, outer, k, region, inner, seed),
        ),
        NestedTarget::Forecast { horizon } => (
            mean_alpha_forecast(policy, &plan, k, horizon).as_slice().to_vec(),
            forecast_samples(policy, outer, k, horizon, inner, seed),
        ),
    };
    NestedEstimate { solver, reference: column_estimates(&samples) }
}
