//! Independent checks of the solver: reference ODE solutions, coupling
//! residuals, finite-difference optimality, a deterministic quadratic-program
//! reference, nested Monte Carlo conditional expectations and unilateral
//! deviation gains in finite populations.

mod gateaux;
mod nash;
mod nested;
mod qp;
mod reference;
mod suite;

pub use gateaux::{gateaux_test, Direction, GateauxEstimate};
pub use reference::{coupling_residual, riccati_reference_matrix, riccati_reference_scalar, CouplingResidual, REFINEMENT};
pub use qp::{deterministic_qp_reference, relative_l2_error, QpError, QpOptions, QpSolution};
pub use nested::{nested_mc_conditional, NestedEstimate, NestedTarget};
pub use nash::{default_family, gains_non_increasing, nash_deviation_gain, own_impact_policy, Candidate, NashError, NashGain};
pub use suite::{
    coupling_checks, gateaux_checks, nash_checks, nested_checks, poa_check, policy_for, qp_checks, riccati_checks, run_suite,
    Check, OracleReport, SuiteError, SuiteOptions, COUPLING_TOLERANCE, GATEAUX_STEPS, NASH_POPULATIONS, NASH_STEPS,
    NESTED_INNER, NESTED_STEPS, QP_SOLVER_STEPS, QP_TOLERANCE, SLOPE_TOLERANCE,
};
