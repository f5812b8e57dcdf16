//! The full battery of checks with explicit tolerances.

use std::fmt;
use std::time::Instant;

use thiserror::Error;

use super::{
    coupling_residual, default_family, deterministic_qp_reference, gains_non_increasing, gateaux_test,
    nash_deviation_gain, nested_mc_conditional, relative_l2_error, riccati_reference_matrix, riccati_reference_scalar,
    Direction, NashError, NestedTarget, QpError, QpOptions,
};
use crate::accounting::{price_of_anarchy, realized_costs, AccountingError};
use crate::config::{GameMode, ScenarioConfig, TimeGrid};
use crate::engine::{simulate_mean_field, EngineError};
use crate::market::effective_slope;
use crate::output::{num, Csv};
use crate::solver::{scalar_riccati, Policy, SolverError};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Nash(#[from] NashError),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
}

/// One named check: `pass` means `statistic` is on the right side of `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub context: String,
    /// Wall-clock seconds; shown in text output, never written to files.
    pub seconds: f64,
}

impl Check {
    /// Passes when `statistic < tolerance`.
    pub fn below(name: &str, statistic: f64, tolerance: f64, context: String) -> Self {
        Self { name: name.into(), statistic, tolerance, pass: statistic < tolerance, context, seconds: 0.0 }
    }

    pub fn timed(mut self, start: Instant) -> Self {
        self.seconds = start.elapsed().as_secs_f64();
        self
    }

    /// Passes when `statistic >= tolerance`.
    pub fn at_least(name: &str, statistic: f64, tolerance: f64, context: String) -> Self {
        Self { name: name.into(), statistic, tolerance, pass: statistic >= tolerance, context, seconds: 0.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut csv = Csv::with_header(&["check", "statistic", "tolerance", "pass", "context"]);
        for c in &self.checks {
            csv.row([c.name.clone(), num(c.statistic), num(c.tolerance), c.pass.to_string(), c.context.clone()]);
        }
        csv.finish()
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<28} statistic={:<12.4e} tolerance={:<10.3e} ({:.2}s) {}", self.name, self.statistic, self.tolerance, self.seconds, self.context)
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub paths: usize,
    pub seed: u64,
    /// Build every policy with the other mode's price slope (negative control).
    pub corrupt_lambda: bool,
    /// Skip the finite-population check, the slowest one.
    pub skip_nash: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { paths: 200, seed: 20180101, corrupt_lambda: false, skip_nash: false }
    }
}

pub const COUPLING_TOLERANCE: f64 = 1e-4;
pub const QP_TOLERANCE: f64 = 1e-3;
pub const SLOPE_TOLERANCE: f64 = 1e-2;
pub const GATEAUX_STEPS: usize = 16384;
pub const QP_SOLVER_STEPS: usize = 4096;
pub const NESTED_STEPS: usize = 64;
pub const NESTED_INNER: usize = 500;
pub const NASH_STEPS: usize = 1024;
pub const NASH_POPULATIONS: [usize; 3] = [10, 50, 200];

pub fn policy_for(cfg: &ScenarioConfig, mode: GameMode, corrupt: bool) -> Result<Policy, SolverError> {
    if corrupt {
        let wrong = effective_slope(mode.other(), &cfg.pricing);
        Policy::build_with(cfg, mode, wrong, wrong)
    } else {
        Policy::build(cfg, mode)
    }
}


/// Closed form against the reciprocal reference, per region, on a 512-step grid.
pub fn riccati_checks(cfg: &ScenarioConfig, corrupt: bool) -> Result<Vec<Check>, SuiteError> {
    let t0 = Instant::now();
    let st = &cfg.storage;
    let grid = TimeGrid::new(cfg.grid.horizon, 512);
    let mut scalar_err = 0.0f64;
    for r in &cfg.regions {
        let delta = 1.0 / (st.c + r.demand_charge);
        let reference = riccati_reference_scalar(st.a2, delta, st.b2, &grid);
        for (k, v) in reference.iter().enumerate() {
            scalar_err = scalar_err.max((scalar_riccati(st.a2, delta, st.b2, grid.horizon, grid.time(k)) - v).abs());
        }
    }
    let mut checks = vec![Check::below("riccati_scalar", scalar_err, 1e-8, "512 steps".into()).timed(t0)];
    for mode in [GameMode::Mfg, GameMode::Mfc] {
        let t0 = Instant::now();
        let policy = policy_for(&cfg.clone().with_grid_steps(512), mode, corrupt)?;
        let reference = riccati_reference_matrix(&policy.matrices.m, st.a2, st.b2, &policy.grid);
        let rk4 = reference
            .iter()
            .zip(&policy.riccati.phi_bar)
            .map(|(r, p)| (r - p).amax() / (1.0 + r.amax()))
            .fold(0.0, f64::max);
        checks.push(Check::below(
            &format!("riccati_matrix_{mode}"),
            policy.exponential.max_mismatch().max(rk4),
            1e-6,
            format!(
                "exponential {:.2e} ({} points, {} skipped), reference {:.2e}",
                policy.exponential.max_mismatch(),
                policy.exponential.checked.len(),
                policy.exponential.skipped.len(),
                rk4,
            ),
        )
        .timed(t0));
    }
    Ok(checks)
}

pub fn coupling_checks(cfg: &ScenarioConfig, opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let mut checks = Vec::new();
    for mode in [GameMode::Mfg, GameMode::Mfc] {
        let t0 = Instant::now();
        let policy = policy_for(cfg, mode, opts.corrupt_lambda)?;
        let bundle = simulate_mean_field(cfg, &policy, opts.paths, opts.seed)?;
        let r = coupling_residual(&bundle, &policy, cfg, mode);
        checks.push(Check::below(
            &format!("coupling_{mode}"),
            r.p99,
            COUPLING_TOLERANCE,
            format!("99th percentile of |residual|/(1+max|Y|); max {:.2e}, max|Y| {:.3e}", r.max, r.max_abs_y),
        )
        .timed(t0));
    }
    Ok(checks)
}

pub fn qp_checks(cfg: &ScenarioConfig, corrupt: bool) -> Result<Vec<Check>, SuiteError> {
    let det = cfg.clone().deterministic().with_grid_steps(QP_SOLVER_STEPS);
    let mut checks = Vec::new();
    for mode in [GameMode::Mfg, GameMode::Mfc] {
        let t0 = Instant::now();
        let reference = deterministic_qp_reference(&det, mode, &QpOptions::default())?;
        let policy = policy_for(&det, mode, corrupt)?;
        let bundle = simulate_mean_field(&det, &policy, 1, 0)?;
        let err = relative_l2_error(&bundle.paths[0].alpha, &reference, &det.grid.times());
        checks.push(Check::below(
            &format!("deterministic_qp_{mode}"),
            err,
            QP_TOLERANCE,
            format!(
                "relative L2, solver {} steps vs {} intervals, {} best-response rounds",
                QP_SOLVER_STEPS,
                QpOptions::default().intervals,
                reference.iterations,
            ),
        )
        .timed(t0));
    }
    Ok(checks)
}

pub fn nested_checks(cfg: &ScenarioConfig, opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let coarse = cfg.clone().with_grid_steps(NESTED_STEPS);
    let probes = [NESTED_STEPS / 4, NESTED_STEPS / 2, 3 * NESTED_STEPS / 4];
    let mut checks = Vec::new();
    for mode in [GameMode::Mfg, GameMode::Mfc] {
        let t0 = Instant::now();
        let policy = policy_for(&coarse, mode, opts.corrupt_lambda)?;
        let outer = simulate_mean_field(&coarse, &policy, 1, opts.seed)?;
        let mut targets = vec![("psi_bar", NestedTarget::PsiBar)];
        targets.extend((0..coarse.num_regions()).map(|region| ("psi", NestedTarget::Psi { region })));
        for (name, target) in targets {
            let z = probes
                .iter()
                .map(|&k| nested_mc_conditional(&policy, &outer.paths[0], k, target, NESTED_INNER, opts.seed ^ 0x5eed).max_z())
                .fold(0.0, f64::max);
            checks.push(Check::below(&format!("nested_{name}_{mode}"), z, 3.0, "max |z| over t in {0.25, 0.5, 0.75}".into()).timed(t0));
        }
        let z = probes
            .iter()
            .map(|&k| {
                let target = NestedTarget::Forecast { horizon: (k + NESTED_STEPS / 4).min(NESTED_STEPS) };
                nested_mc_conditional(&policy, &outer.paths[0], k, target, NESTED_INNER, opts.seed ^ 0x5eed).max_z()
            })
            .fold(0.0, f64::max);
        checks.push(Check::below(&format!("nested_forecast_{mode}"), z, 3.0, "max |z|, horizon t + 0.25".into()).timed(t0));
    }
    Ok(checks)
}

pub fn gateaux_checks(cfg: &ScenarioConfig, opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let fine = cfg.clone().with_grid_steps(GATEAUX_STEPS);
    let directions = Direction::random_family(10, fine.num_regions(), &fine.grid, opts.seed);
    let mut checks = Vec::new();
    for mode in [GameMode::Mfc, GameMode::Mfg] {
        let t0 = Instant::now();
        let policy = policy_for(&fine, mode, opts.corrupt_lambda)?;
        let est = gateaux_test(&fine, mode, &policy, &directions, &[1e-2, -1e-2], 8, opts.seed, true);
        let slope = est.iter().map(|e| e.slope.mean.abs() / e.norm).fold(0.0, f64::max);
        let worst = est
            .iter()
            .flat_map(|e| e.increases.iter().map(|(_, i)| if i.se > 0.0 { i.mean / i.se } else { i.mean.signum() * f64::INFINITY }))
            .fold(f64::INFINITY, f64::min);
        let frozen = if mode == GameMode::Mfg { ", mean field frozen" } else { "" };
        checks.push(Check::below(
            &format!("gateaux_slope_{mode}"),
            slope,
            SLOPE_TOLERANCE,
            format!("max |dJ|/||beta||, 10 directions, {} steps, antithetic pairs{frozen}", GATEAUX_STEPS),
        )
        .timed(t0));
        checks.push(Check::at_least(
            &format!("gateaux_increase_{mode}"),
            worst,
            -3.0,
            format!("min (J(a+eps b)-J(a))/SE over eps = +-1e-2{frozen}"),
        ));
    }
    Ok(checks)
}

pub fn poa_check(cfg: &ScenarioConfig, opts: &SuiteOptions) -> Result<Check, SuiteError> {
    let t0 = Instant::now();
    let reports = [GameMode::Mfg, GameMode::Mfc]
        .iter()
        .map(|&m| Ok(realized_costs(&simulate_mean_field(cfg, &policy_for(cfg, m, opts.corrupt_lambda)?, opts.paths, opts.seed)?, cfg)))
        .collect::<Result<Vec<_>, SuiteError>>()?;
    let poa = price_of_anarchy(&reports[0], &reports[1])?;
    let z = if poa.difference.se > 0.0 { poa.difference.mean / poa.difference.se } else { 0.0 };
    Ok(Check::at_least(
        "poa_difference",
        z,
        -3.0,
        format!(
            "(J_C(MFG)-J_C(MFC))/SE; difference {:.4e} +- {:.1e}, ratio {:.6}",
            poa.difference.mean,
            poa.difference.se,
            poa.ratio,
        ),
    )
    .timed(t0))
}

pub fn nash_checks(cfg: &ScenarioConfig, opts: &SuiteOptions) -> Result<Vec<Check>, SuiteError> {
    let t0 = Instant::now();
    let c = cfg.clone().with_grid_steps(NASH_STEPS);
    let policy = policy_for(&c, GameMode::Mfg, opts.corrupt_lambda)?;
    let reference = if opts.corrupt_lambda { Some(Policy::build(&c, GameMode::Mfg)?) } else { None };
    let gains = nash_deviation_gain(&c, &policy, &NASH_POPULATIONS, &default_family(reference.as_ref()), 400, opts.seed)?;
    let summary: Vec<String> = gains
        .iter()
        .map(|g| {
            let (label, e) = g.best();
            format!("N={}: {:.2e}+-{:.1e} ({label})", g.population, e.mean, e.se)
        })
        .collect();
    let trend = Check {
        name: "nash_gain_trend".into(),
        statistic: gains.last().map_or(f64::NAN, |g| g.best().1.mean),
        tolerance: 3.0,
        pass: gains_non_increasing(&gains, 3.0),
        context: format!("best gain non-increasing in N within 3 SE; {}", summary.join("; ")),
        seconds: 0.0,
    }
    .timed(t0);
    let (label, largest) = gains.last().expect("populations").best();
    let z = match (largest.se > 0.0, largest.mean > 0.0) {
        (true, _) => largest.mean / largest.se,
        (false, true) => f64::INFINITY,
        (false, false) => 0.0,
    };
    let limit = Check::below(
        "nash_gain_largest_n",
        z,
        3.0,
        format!("best gain / SE at N = {} ({label})", NASH_POPULATIONS[NASH_POPULATIONS.len() - 1]),
    )
    .timed(t0);
    Ok(vec![trend, limit])
}

/// Every check at the sizes used by the acceptance criteria.
pub fn run_suite(cfg: &ScenarioConfig, opts: &SuiteOptions) -> Result<OracleReport, SuiteError> {
    let mut checks = riccati_checks(cfg, opts.corrupt_lambda)?;
    checks.extend(coupling_checks(cfg, opts)?);
    checks.extend(qp_checks(cfg, opts.corrupt_lambda)?);
    checks.extend(nested_checks(cfg, opts)?);
    checks.extend(gateaux_checks(cfg, opts)?);
    checks.push(poa_check(cfg, opts)?);
    if !opts.skip_nash {
        checks.extend(nash_checks(cfg, opts)?);
    }
    Ok(OracleReport { checks })
}
