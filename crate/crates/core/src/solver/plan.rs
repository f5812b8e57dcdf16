//! Per-path quantities: the mean-field plan along a common-noise path,
//! conditional forecasts, and individual feedback controls.

use nalgebra::DVector;

use super::driver_matrix;
use super::sweep::Policy;
use crate::config::{GameMode, ScenarioConfig};
use crate::market::{effective_slope, spot_price_mean_field, PriceInput};
use crate::processes::ou_conditional_mean;

/// Step-1 solution along one common-noise path.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldPlan {
    pub x: Vec<DVector<f64>>,
    pub psi_bar: Vec<DVector<f64>>,
    pub abar: Vec<DVector<f64>>,
    pub sbar: Vec<DVector<f64>>,
    pub price: Vec<f64>,
}

pub fn mean_field_plan(policy: &Policy, q0: &[f64], qbar: &[Vec<f64>]) -> MeanFieldPlan {
    let n = policy.grid.steps;
    let h = policy.grid.dt();
    let weights = policy.cfg.weights();
    let mut plan = MeanFieldPlan {
        x: Vec::with_capacity(n + 1),
        psi_bar: Vec::with_capacity(n + 1),
        abar: Vec::with_capacity(n + 1),
        sbar: Vec::with_capacity(n + 1),
        price: Vec::with_capacity(n + 1),
    };
    let mut sbar = policy.initial_storage_mean.clone();
    let mut qb = vec![0.0; qbar.len()];
    for k in 0..=n {
        for (j, q) in qbar.iter().enumerate() {
            qb[j] = q[k];
        }
        let x = policy.deviation(k, q0[k], &qb);
        let psi_bar = &policy.d[k] + &policy.g[k] * &x;
        let abar = &policy.alpha_s[k] * &sbar + &policy.alpha_0[k] + &policy.alpha_x[k] * &x;
        let price = spot_price_mean_field(
            &policy.cfg.pricing,
            &PriceInput { q0: q0[k], qbar: &qb, abar: abar.as_slice(), weights: &weights },
        );
        let next = &sbar + &abar * h;
        plan.x.push(x);
        plan.psi_bar.push(psi_bar);
        plan.abar.push(abar);
        plan.sbar.push(sbar);
        plan.price.push(price);
        sbar = next;
    }
    plan
}

/// `E[b_u | F0_t]` from the sources' conditional means.
pub fn conditional_driver_mean(
    cfg: &ScenarioConfig,
    mode: GameMode,
    q0: f64,
    qbar: &[f64],
    t: f64,
    u: f64,
) -> DVector<f64> {
    let sources = cfg.sources();
    let state = std::iter::once(q0).chain(qbar.iter().copied());
    let means = DVector::from_iterator(
        sources.len(),
        sources.iter().zip(state).map(|(ou, q)| ou_conditional_mean(ou, q, t, u)),
    );
    let l = driver_matrix(cfg, effective_slope(mode, &cfg.pricing));
    DVector::from_element(cfg.num_regions(), cfg.pricing.p0) + l * means
}

/// `E[abar_{t_j} | F0_{t_k}]`, propagated with the same recursion as `Sbar`.
pub fn mean_alpha_forecast(policy: &Policy, plan: &MeanFieldPlan, k: usize, j: usize) -> DVector<f64> {
    assert!(j >= k, "forecast horizon precedes the information time");
    let h = policy.grid.dt();
    let mut m = plan.sbar[k].clone();
    let mut i = k;
    loop {
        let dt = policy.grid.time(i) - policy.grid.time(k);
        let ex = DVector::from_iterator(
            plan.x[k].len(),
            plan.x[k].iter().zip(policy.rates.iter()).map(|(x, a)| x * (-a * dt).exp()),
        );
        let abar = &policy.alpha_s[i] * &m + &policy.alpha_0[i] + &policy.alpha_x[i] * ex;
        if i == j {
            return abar;
        }
        m += abar * h;
        i += 1;
    }
}

/// `psi` of a node of region `region` at grid point `k` given its production `q`.
#[inline]
pub fn psi_at(policy: &Policy, plan: &MeanFieldPlan, region: usize, k: usize, q: f64) -> f64 {
    let c = &policy.regions[region];
    c.e[k] + c.eta_s[k].dot(&plan.sbar[k]) + c.eta_x[k].dot(&plan.x[k])
        + c.theta[k] * (q - policy.response[k][region + 1])
}

pub fn individual_psi(policy: &Policy, plan: &MeanFieldPlan, region: usize, q: &[f64]) -> Vec<f64> {
    q.iter().enumerate().map(|(k, &qk)| psi_at(policy, plan, region, k, qk)).collect()
}

/// `b_hat = p0 - lambda (Q0 + w sum pi (Qbar - abar)) - K Q` as seen by one node.
#[inline]
pub fn individual_driver(policy: &Policy, region: usize, q: f64, q0: f64, qbar: &[f64], abar: &[f64]) -> f64 {
    let cfg = &policy.cfg;
    let net: f64 = cfg.regions.iter().zip(qbar.iter().zip(abar)).map(|(r, (qb, ab))| r.weight * (qb - ab)).sum();
    cfg.pricing.p0
        - policy.response_lambda * (q0 + cfg.pricing.prosumer_weight * net)
        - policy.regions[region].demand_charge * q
}

/// `alpha = -delta (phi S + psi + b_hat)`.
#[allow(clippy::too_many_arguments)]
pub fn feedback_control(
    policy: &Policy,
    region: usize,
    k: usize,
    s: f64,
    q: f64,
    q0: f64,
    qbar: &[f64],
    abar: &[f64],
    psi: f64,
) -> f64 {
    let c = &policy.regions[region];
    -c.delta * (c.phi[k] * s + psi + individual_driver(policy, region, q, q0, qbar, abar))
}
