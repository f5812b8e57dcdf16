//! Optimal feedback storage controls for the decentralized game and the
//! planner problem.

mod plan;
pub mod riccati;
mod sweep;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::{GameMode, ScenarioConfig};
use crate::market::effective_slope;
use crate::processes::StatePaths;

pub use plan::{
    conditional_driver_mean, feedback_control, individual_psi, mean_alpha_forecast, mean_field_plan,
    individual_driver, psi_at, MeanFieldPlan,
};
pub use riccati::{block_exponential_phi, scalar_kernel, scalar_riccati, scalar_riccati_limit};
pub use sweep::{ExponentialCheck, FineTrajectory, MeanFieldRiccati, Policy, RegionCoefficients};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("interaction matrix is singular (det = {det})")]
    Singular { det: f64 },
    #[error("Riccati integration and block-exponential formula disagree by {mismatch:e} at t = {t}")]
    ExponentialMismatch { t: f64, mismatch: f64 },
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
}

/// `M_mode = diag(C + K) + lambda w 1 pi^T` and `M = -M_mode^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrices {
    pub lambda: f64,
    pub khat: DVector<f64>,
    pub m_mode: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub det: f64,
}

impl InteractionMatrices {
    pub fn with_slope(cfg: &ScenarioConfig, lambda: f64) -> Result<Self, SolverError> {
        let g = cfg.num_regions();
        let khat = DVector::from_iterator(g, cfg.regions.iter().map(|r| cfg.storage.c + r.demand_charge));
        let w = cfg.pricing.prosumer_weight;
        let m_mode = DMatrix::from_fn(g, g, |i, j| {
            let diag = if i == j { khat[i] } else { 0.0 };
            diag + lambda * w * cfg.regions[j].weight
        });
        let det = m_mode.determinant();
        if !(det.is_finite() && det.abs() > f64::MIN_POSITIVE) {
            return Err(SolverError::Singular { det });
        }
        let inv = m_mode.clone().lu().try_inverse().ok_or(SolverError::Singular { det })?;
        Ok(Self { lambda, khat, m_mode, m: -inv, det })
    }
}

pub fn interaction_matrices(cfg: &ScenarioConfig, mode: GameMode) -> Result<InteractionMatrices, SolverError> {
    InteractionMatrices::with_slope(cfg, effective_slope(mode, &cfg.pricing))
}

/// Linear part of the mean-field driver: `b_t = p0 1 + L (Q0_t, Qbar_t)`.
///
/// Column 0 is `-lambda 1`; column `j` is `-lambda w pi_j 1 - K_j e_j`, with
/// `C + K_j` in place of `K_j` when the scenario asks for the literal form.
pub fn driver_matrix(cfg: &ScenarioConfig, lambda: f64) -> DMatrix<f64> {
    let g = cfg.num_regions();
    let w = cfg.pricing.prosumer_weight;
    DMatrix::from_fn(g, g + 1, |i, j| {
        if j == 0 {
            return -lambda;
        }
        let r = &cfg.regions[j - 1];
        let own = if i == j - 1 {
            r.demand_charge + if cfg.paper_literal_b { cfg.storage.c } else { 0.0 }
        } else {
            0.0
        };
        -lambda * w * r.weight - own
    })
}

/// Policy together with the per-path mean-field plans and the representative
/// node's `psi` on every path.
#[derive(Debug, Clone)]
pub struct SolvedPolicy {
    pub policy: Policy,
    pub plans: Vec<MeanFieldPlan>,
    /// `psi[path][region][k]` for the simulated representative node.
    pub psi: Vec<Vec<Vec<f64>>>,
}

pub fn solve(cfg: &ScenarioConfig, mode: GameMode, paths: &StatePaths) -> Result<SolvedPolicy, SolverError> {
    use rayon::prelude::*;

    let violations = cfg.validate();
    if let Some(v) = violations.first() {
        return Err(SolverError::InvalidConfig(v.to_string()));
    }
    let policy = Policy::build(cfg, mode)?;
    let (plans, psi) = paths
        .paths
        .par_iter()
        .map(|p| {
            let plan = mean_field_plan(&policy, &p.q0, &p.qbar);
            let psi = (0..cfg.num_regions()).map(|g| individual_psi(&policy, &plan, g, &p.q[g])).collect();
            (plan, psi)
        })
        .unzip();
    Ok(SolvedPolicy { policy, plans, psi })
}
