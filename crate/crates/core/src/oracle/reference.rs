//! Reference Riccati solutions and the coupling-condition residual.

use nalgebra::DMatrix;

use crate::config::{GameMode, ScenarioConfig, TimeGrid};
use crate::engine::PathBundle;
use crate::solver::{mean_field_plan, psi_at, Policy};

/// Refinement factor of the reference grids.
pub const REFINEMENT: usize = 10;

/// Scalar Riccati `phi' - delta phi^2 + a2 = 0`, `phi(T) = b2`, on the grid.
///
/// Integrates the reciprocal `w = 1/phi` (`w' = -delta + a2 w^2`), which is
/// free of the terminal boundary layer, by RK4 on a 10x refined grid.
pub fn riccati_reference_scalar(a2: f64, delta: f64, b2: f64, grid: &TimeGrid) -> Vec<f64> {
    let m = riccati_reference_matrix(&DMatrix::from_element(1, 1, -delta), a2, b2, grid);
    m.into_iter().map(|p| p[(0, 0)] + b2).collect()
}

/// `phi_bar` (terminal value zero) of `Phi' + Phi M Phi + a2 = 0`, `Phi(T) = b2 I`.
///
/// Works with `W = Phi^{-1}`, which solves `W' = M + a2 W^2`, `W(T) = I / b2`.
pub fn riccati_reference_matrix(m: &DMatrix<f64>, a2: f64, b2: f64, grid: &TimeGrid) -> Vec<DMatrix<f64>> {
    let g = m.nrows();
    let id = DMatrix::<f64>::identity(g, g);
    let f = |w: &DMatrix<f64>| m + w * w * a2;
    let n = grid.steps;
    let sub = REFINEMENT;
    let h = grid.dt() / sub as f64;
    let mut out = vec![DMatrix::zeros(g, g); n + 1];
    let mut w = &id / b2;
    for k in (0..n).rev() {
        for _ in 0..sub {
            let k1 = f(&w);
            let k2 = f(&(&w - &k1 * (0.5 * h)));
            let k3 = f(&(&w - &k2 * (0.5 * h)));
            let k4 = f(&(&w - &k3 * h));
            w -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let phi = w.clone().try_inverse().expect("reciprocal Riccati stays invertible");
        out[k] = phi - &id * b2;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingResidual {
    /// Largest `|residual| / (1 + max |Y|)` over all cells.
    pub max: f64,
    pub p99: f64,
    pub max_abs_y: f64,
}

/// Evaluates the first-order coupling condition of `mode` at every cell:
/// `Y + P + K (alpha - Q) + C alpha` for the game, plus `p1 x` for the planner.
pub fn coupling_residual(bundle: &PathBundle, policy: &Policy, cfg: &ScenarioConfig, mode: GameMode) -> CouplingResidual {
    let n = cfg.grid.steps;
    let w = cfg.pricing.prosumer_weight;
    let mut raw = Vec::new();
    let mut max_abs_y = 0.0f64;
    for rec in &bundle.paths {
        let plan = mean_field_plan(policy, &rec.q0, &rec.qbar);
        for k in 0..=n {
            let x = -rec.q0[k]
                - w * cfg.regions.iter().enumerate().map(|(g, r)| r.weight * (rec.qbar[g][k] - rec.abar[g][k])).sum::<f64>();
            let impact = match mode {
                GameMode::Mfg => 0.0,
                GameMode::Mfc => cfg.pricing.p1 * x,
            };
            for (g, r) in cfg.regions.iter().enumerate() {
                let psi = psi_at(policy, &plan, g, k, rec.q[g][k]);
                let y = policy.regions[g].phi[k] * rec.s[g][k] + psi;
                max_abs_y = max_abs_y.max(y.abs());
                let a = rec.alpha[g][k];
                raw.push(y + rec.price[k] + impact + r.demand_charge * (a - rec.q[g][k]) + cfg.storage.c * a);
            }
        }
    }
    let scale = 1.0 + max_abs_y;
    let mut rel: Vec<f64> = raw.iter().map(|r| r.abs() / scale).collect();
    rel.sort_by(f64::total_cmp);
    let max = rel.last().copied().unwrap_or(0.0);
    let p99 = if rel.is_empty() { 0.0 } else { rel[((rel.len() - 1) as f64 * 0.99).round() as usize] };
    CouplingResidual { max, p99, max_abs_y }
}
