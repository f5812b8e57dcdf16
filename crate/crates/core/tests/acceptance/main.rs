//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::io::Write;
use std::time::Instant;

use gridmfg::accounting::{price_of_anarchy, realized_costs, CostReport, Estimate, PathCosts, Reduction};
use gridmfg::config::{GameMode, ScenarioConfig};
use gridmfg::engine::{simulate_mean_field, PathBundle};
use gridmfg::oracle::{
    coupling_checks, gateaux_checks, nash_checks, nested_checks, policy_for, qp_checks, riccati_checks, Check, SuiteOptions,
};
use gridmfg::scenarios;

mod directional;
mod determinism;

pub struct Outcome {
    pub name: &'static str,
    pub pass: bool,
    pub details: Vec<String>,
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

/// Runs a criterion, timing it against its budget.
fn criterion(name: &'static str, budget_s: f64, body: impl FnOnce() -> (bool, Vec<String>)) -> Outcome {
    let t0 = Instant::now();
    let (ok, mut details) = body();
    let secs = t0.elapsed().as_secs_f64();
    let in_time = secs < budget_s;
    details.push(format!("runtime {secs:.1}s (budget {budget_s:.0}s){}", if in_time { "" } else { " EXCEEDED" }));
    let pass = ok && in_time;
    say(&format!("{} {name}", if pass { "PASS" } else { "FAIL" }));
    for d in &details {
        say(&format!("     {d}"));
    }
    Outcome { name, pass, details }
}

fn checks(list: Vec<Check>) -> (bool, Vec<String>) {
    (list.iter().all(|c| c.pass), list.iter().map(|c| c.to_string()).collect())
}

fn opts() -> SuiteOptions {
    SuiteOptions::default()
}

fn mean_field(cfg: &ScenarioConfig, mode: GameMode) -> PathBundle {
    let mc = cfg.monte_carlo;
    simulate_mean_field(cfg, &policy_for(cfg, mode, false).expect("policy"), mc.paths, mc.seed).expect("simulation")
}

fn costs(cfg: &ScenarioConfig, mode: GameMode) -> CostReport {
    realized_costs(&mean_field(cfg, mode), cfg)
}

fn poa() -> (bool, Vec<String>) {
    let mut details = Vec::new();
    let mut ok = true;
    for (label, cfg) in [("base", scenarios::paper_base()), ("two zones", scenarios::two_zone())] {
        let cfg = cfg.with_paths(opts().paths);
        let p = price_of_anarchy(&costs(&cfg, GameMode::Mfg), &costs(&cfg, GameMode::Mfc)).expect("paired");
        let z = p.difference.mean / p.difference.se;
        let gap_hi = (p.difference.mean + 1.96 * p.difference.se) / p.mfc_total.abs();
        ok &= z >= -3.0;
        details.push(format!(
            "{label}: J_C(MFG)-J_C(MFC) = {:.4e} +- {:.1e} (z = {z:.2}, need >= -3); ratio {:.6} +- {:.1e}",
            p.difference.mean, p.difference.se, p.ratio, p.ratio_se
        ));
        if label == "two zones" {
            ok &= gap_hi < 0.05;
            details.push(format!(
                "two zones: relative gap {:.3e}, 95% CI [{:.3e}, {gap_hi:.3e}] (need upper < 5e-2; paper: PoA close to 1)",
                p.relative_gap(),
                (p.difference.mean - 1.96 * p.difference.se) / p.mfc_total.abs()
            ));
        }
    }
    (ok, details)
}

pub(crate) fn paired_reduction(controlled: &CostReport, base: &CostReport, f: fn(&PathCosts) -> f64) -> Reduction {
    let c: Vec<f64> = controlled.samples.iter().map(f).collect();
    let b: Vec<f64> = base.samples.iter().map(f).collect();
    Reduction::paired(&c, &b)
}

pub(crate) fn diff(a: &[f64], b: &[f64]) -> Estimate {
    Estimate::paired_difference(a, b)
}

fn main() {
    let started = Instant::now();
    say("acceptance criteria");
    let base = scenarios::paper_base();
    let outcomes = vec![
        criterion("riccati accuracy", 1.0, || checks(riccati_checks(&base, false).expect("riccati"))),
        criterion("coupling residual", 30.0, || checks(coupling_checks(&base.clone().with_paths(200), &opts()).expect("coupling"))),
        criterion("deterministic oracle", 30.0, || checks(qp_checks(&base, false).expect("qp"))),
        criterion("nested conditional expectations", 120.0, || checks(nested_checks(&base, &opts()).expect("nested"))),
        criterion("gateaux optimality", 120.0, || checks(gateaux_checks(&base, &opts()).expect("gateaux"))),
        criterion("price of anarchy", 120.0, poa),
        criterion("epsilon-nash trend", 300.0, || {
            let list = nash_checks(&base, &opts()).expect("nash");
            let trend = list.iter().find(|c| c.name == "nash_gain_trend").expect("trend").pass;
            (trend, list.iter().map(|c| c.to_string()).collect())
        }),
        criterion("directional reproduction", 600.0, directional::run),
        criterion("determinism", 300.0, determinism::run),
    ];
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    say(&format!(
        "{} of {} criteria passed in {:.1}s{}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        started.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    ));
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
