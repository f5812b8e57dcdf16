//! Command-line driver: `solve`, `simulate`, `compare`, `verify`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accounting::{price_of_anarchy, realized_costs, reduction_stats, CostReport, Estimate, Reduction};
use crate::config::{parse_scenario, ConfigError, GameMode, ScenarioConfig, Violation};
use crate::engine::{baseline_no_storage, simulate_mean_field, EngineError, PathBundle};
use crate::oracle::{run_suite, OracleReport, SuiteError, SuiteOptions};
use crate::output::{num, Csv};
use crate::solver::{Policy, SolverError};

pub const THREADS_ENV: &str = "GRIDMFG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gridmfg", version, about = "Storage games and central planning on a power grid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the Riccati solutions (phi.csv, phibar.csv).
    Solve(RunArgs),
    /// Simulate one mode: price.csv, storage.csv, costs.csv.
    Simulate(RunArgs),
    /// MFG vs MFC vs no storage: poa.csv, reductions.csv, price_curves.csv.
    Compare(RunArgs),
    /// Run the oracle suite; exits nonzero if any check fails.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Build the policies with the other mode's price slope (negative control).
        #[arg(long)]
        corrupt_lambda: bool,
        /// Skip the finite-population deviation study.
        #[arg(long)]
        skip_nash: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    #[arg(long, default_value = "mfg")]
    pub mode: GameMode,
    /// Monte Carlo paths (default: the scenario's).
    #[arg(long)]
    pub paths: Option<usize>,
    /// Master seed (default: the scenario's).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Time steps (default: the scenario's).
    #[arg(long)]
    pub grid_steps: Option<usize>,
    /// Also simulate the no-storage baseline on the same paths.
    #[arg(long)]
    pub baseline: bool,
    /// Use `C + K` on the own-region term of the mean-field driver.
    #[arg(long)]
    pub paper_literal_b: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("{path}: invalid scenario:\n{}", list(.violations))]
    Invalid { path: PathBuf, violations: Vec<Violation> },
    #[error("{THREADS_ENV}: {0}")]
    Threads(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Accounting(#[from] crate::accounting::AccountingError),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

/// Reads the scenario and applies the command-line overrides, then validates.
pub fn load_scenario(args: &RunArgs) -> Result<ScenarioConfig, CliError> {
    let path = &args.scenario;
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    let mut cfg = parse_scenario(&text).map_err(|source| CliError::Config { path: path.clone(), source })?;
    if let Some(p) = args.paths {
        cfg.monte_carlo.paths = p;
    }
    if let Some(s) = args.seed {
        cfg.monte_carlo.seed = s;
    }
    if let Some(n) = args.grid_steps {
        cfg.grid.steps = n;
    }
    cfg.paper_literal_b |= args.paper_literal_b;
    let violations = cfg.validate();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Invalid { path: path.clone(), violations })
    }
}

/// Worker count from the environment; `None` means all cores.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Threads(format!("expected a positive integer, got `{v}`"))),
        },
    }
}

/// Files written by one command, with their SHA-256 digests.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub scenario: PathBuf,
    pub scenario_sha256: String,
    pub modes: Vec<GameMode>,
    pub seed: u64,
    pub n_paths: usize,
    pub grid_steps: usize,
    pub paper_literal_b: bool,
    pub out: PathBuf,
    pub files: Vec<(String, String)>,
}

impl RunManifest {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "command": self.command,
            "scenario": self.scenario.display().to_string(),
            "scenario_sha256": self.scenario_sha256,
            "modes": self.modes.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "seed": self.seed,
            "n_paths": self.n_paths,
            "grid_steps": self.grid_steps,
            "paper_literal_b": self.paper_literal_b,
            "out": self.out.display().to_string(),
            "files": self.files.iter().map(|(n, h)| json!({ "name": n, "sha256": h })).collect::<Vec<_>>(),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Output {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
        self.files.push((name.to_string(), sha256_hex(text.as_bytes())));
        Ok(())
    }

    fn finish(self, command: &str, args: &RunArgs, cfg: &ScenarioConfig, modes: Vec<GameMode>) -> Result<RunManifest, CliError> {
        let bytes = fs::read(&args.scenario).map_err(|source| CliError::Io { path: args.scenario.clone(), source })?;
        let manifest = RunManifest {
            command: command.to_string(),
            scenario: args.scenario.clone(),
            scenario_sha256: sha256_hex(&bytes),
            modes,
            seed: cfg.monte_carlo.seed,
            n_paths: cfg.monte_carlo.paths,
            grid_steps: cfg.grid.steps,
            paper_literal_b: cfg.paper_literal_b,
            out: self.dir.clone(),
            files: self.files,
        };
        let text = serde_json::to_string_pretty(&manifest.to_json()).expect("manifest serializes") + "\n";
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
        Ok(manifest)
    }
}

fn phi_tables(policy: &Policy) -> (String, String) {
    let g = policy.num_regions();
    let times = policy.grid.times();
    let mut header = vec!["t".to_string()];
    header.extend((0..g).map(|r| format!("phi_{r}")));
    let mut phi = Csv::with_header(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let mut header = vec!["t".to_string()];
    header.extend((0..g).flat_map(|i| (0..g).map(move |j| format!("phibar_{i}_{j}"))));
    let mut phibar = Csv::with_header(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (k, &t) in times.iter().enumerate() {
        phi.row(std::iter::once(num(t)).chain(policy.regions.iter().map(|r| num(r.phi[k]))));
        let m = &policy.riccati.phi_bar[k];
        phibar.row(std::iter::once(num(t)).chain((0..g).flat_map(|i| (0..g).map(move |j| num(m[(i, j)])))));
    }
    (phi.finish(), phibar.finish())
}

pub fn cmd_solve(args: &RunArgs) -> Result<RunManifest, CliError> {
    let cfg = load_scenario(args)?;
    let policy = Policy::build(&cfg, args.mode)?;
    let (phi, phibar) = phi_tables(&policy);
    let mut out = Output::new(&args.out)?;
    out.write("phi.csv", &phi)?;
    out.write("phibar.csv", &phibar)?;
    out.finish("solve", args, &cfg, vec![args.mode])
}

const COMPONENTS: [&str; 7] = ["volumetric", "demand", "storage_running", "terminal", "bill", "total", "max_power"];

fn components(report: &CostReport, g: usize) -> [Estimate; 7] {
    let r = &report.regions[g];
    [r.volumetric, r.demand, r.storage_running, r.terminal, r.bill, r.total, r.max_power]
}

fn reductions(controlled: &CostReport, baseline: &CostReport) -> Result<Vec<Vec<(String, String, Reduction)>>, CliError> {
    let per_region = reduction_stats(controlled, baseline)?;
    let mut rows: Vec<Vec<(String, String, Reduction)>> = per_region
        .iter()
        .enumerate()
        .map(|(g, r)| {
            let values = [
                ("volumetric", r.volumetric),
                ("demand", r.demand),
                ("bill", r.bill),
                ("total", r.total),
                ("max_power", r.max_power),
            ];
            values.iter().map(|(c, v)| (g.to_string(), c.to_string(), *v)).collect()
        })
        .collect();
    let collect = |rep: &CostReport, f: fn(&crate::accounting::PathCosts) -> f64| rep.samples.iter().map(f).collect::<Vec<f64>>();
    rows.push(vec![
        ("rest_of_world".into(), "bill".into(), Reduction::paired(&collect(controlled, |s| s.rest_of_world), &collect(baseline, |s| s.rest_of_world))),
        ("central".into(), "total".into(), Reduction::paired(&collect(controlled, |s| s.central), &collect(baseline, |s| s.central))),
    ]);
    Ok(rows)
}

fn costs_table(report: &CostReport, baseline: Option<&CostReport>) -> Result<String, CliError> {
    let mut header = vec!["region", "component", "mean", "stderr"];
    if baseline.is_some() {
        header.extend(["baseline_mean", "baseline_stderr", "reduction", "reduction_stderr", "reduction_unit"]);
    }
    let mut csv = Csv::with_header(&header);
    let mut rows: Vec<(String, String, Estimate, Option<Estimate>)> = Vec::new();
    for g in 0..report.regions.len() {
        let base = baseline.map(|b| components(b, g));
        for (i, (c, e)) in COMPONENTS.iter().zip(components(report, g)).enumerate() {
            rows.push((g.to_string(), c.to_string(), e, base.map(|b| b[i])));
        }
    }
    rows.push(("rest_of_world".into(), "bill".into(), report.rest_of_world, baseline.map(|b| b.rest_of_world)));
    rows.push(("central".into(), "total".into(), report.central, baseline.map(|b| b.central)));
    let red = match baseline {
        Some(b) => reductions(report, b)?.into_iter().flatten().collect(),
        None => Vec::new(),
    };
    for (region, component, e, b) in rows {
        let mut fields = vec![region.clone(), component.clone(), num(e.mean), num(e.se)];
        if let Some(b) = b {
            fields.extend([num(b.mean), num(b.se)]);
            match red.iter().find(|(r, c, _)| *r == region && *c == component) {
                Some((_, _, r)) => fields.extend([num(r.value), num(r.se), unit(r).to_string()]),
                None => fields.extend([String::new(), String::new(), String::new()]),
            }
        }
        csv.row(fields);
    }
    Ok(csv.finish())
}

fn unit(r: &Reduction) -> &'static str {
    if r.absolute {
        "absolute"
    } else {
        "percent"
    }
}

fn path_tables(bundle: &PathBundle, baseline: Option<&PathBundle>) -> (String, String) {
    let times = bundle.grid.times();
    let mut price = Csv::with_header(if baseline.is_some() { &["path", "t", "price", "baseline_price"] } else { &["path", "t", "price"] });
    let mut storage = Csv::with_header(&["path", "t", "region", "S", "alpha"]);
    for (p, rec) in bundle.paths.iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            let mut row = vec![p.to_string(), num(t), num(rec.price[k])];
            if let Some(b) = baseline {
                row.push(num(b.paths[p].price[k]));
            }
            price.row(row);
            for g in 0..rec.s.len() {
                storage.row([p.to_string(), num(t), g.to_string(), num(rec.s[g][k]), num(rec.alpha[g][k])]);
            }
        }
    }
    (price.finish(), storage.finish())
}

pub fn cmd_simulate(args: &RunArgs) -> Result<RunManifest, CliError> {
    let cfg = load_scenario(args)?;
    let mc = cfg.monte_carlo;
    let policy = Policy::build(&cfg, args.mode)?;
    let bundle = simulate_mean_field(&cfg, &policy, mc.paths, mc.seed)?;
    let report = realized_costs(&bundle, &cfg);
    let base = args.baseline.then(|| baseline_no_storage(&cfg, mc.paths, mc.seed));
    let base_report = base.as_ref().map(|b| realized_costs(b, &cfg));
    let (price, storage) = path_tables(&bundle, base.as_ref());
    let mut out = Output::new(&args.out)?;
    out.write("price.csv", &price)?;
    out.write("storage.csv", &storage)?;
    out.write("costs.csv", &costs_table(&report, base_report.as_ref())?)?;
    out.finish("simulate", args, &cfg, vec![args.mode])
}

fn mean_curve(bundle: &PathBundle) -> Vec<f64> {
    let n = bundle.paths.len() as f64;
    (0..=bundle.grid.steps).map(|k| bundle.paths.iter().map(|p| p.price[k]).sum::<f64>() / n).collect()
}

pub fn cmd_compare(args: &RunArgs) -> Result<RunManifest, CliError> {
    let cfg = load_scenario(args)?;
    let mc = cfg.monte_carlo;
    let modes = [GameMode::Mfg, GameMode::Mfc];
    let mut bundles = Vec::new();
    for mode in modes {
        bundles.push(simulate_mean_field(&cfg, &Policy::build(&cfg, mode)?, mc.paths, mc.seed)?);
    }
    let base = baseline_no_storage(&cfg, mc.paths, mc.seed);
    let reports: Vec<CostReport> = bundles.iter().map(|b| realized_costs(b, &cfg)).collect();
    let base_report = realized_costs(&base, &cfg);

    const Z: f64 = 1.96;
    let mut poa = Csv::with_header(&["quantity", "value", "ci_lo", "ci_hi"]);
    let mut row = |name: &str, value: f64, se: f64| poa.row([name.to_string(), num(value), num(value - Z * se), num(value + Z * se)]);
    for (label, rep) in [("mfg", &reports[0]), ("mfc", &reports[1]), ("baseline", &base_report)] {
        row(&format!("central_cost_{label}"), rep.central.mean, rep.central.se);
        row(&format!("rest_of_world_bill_{label}"), rep.rest_of_world.mean, rep.rest_of_world.se);
    }
    let p = price_of_anarchy(&reports[0], &reports[1])?;
    row("central_cost_difference", p.difference.mean, p.difference.se);
    row("poa_ratio", p.ratio, p.ratio_se);
    row("relative_gap", p.relative_gap(), p.difference.se / p.mfc_total.abs());
    row("ratio_shift", p.shift, 0.0);

    let mut red = Csv::with_header(&["mode", "region", "component", "value", "stderr", "unit"]);
    for (mode, rep) in modes.iter().zip(&reports) {
        for (region, component, r) in reductions(rep, &base_report)?.into_iter().flatten() {
            red.row([mode.to_string(), region, component, num(r.value), num(r.se), unit(&r).to_string()]);
        }
    }

    let mut curves = Csv::with_header(&["t", "baseline", "mfg", "mfc"]);
    let (b, g, c) = (mean_curve(&base), mean_curve(&bundles[0]), mean_curve(&bundles[1]));
    for (k, t) in cfg.grid.times().into_iter().enumerate() {
        curves.row([num(t), num(b[k]), num(g[k]), num(c[k])]);
    }

    let mut out = Output::new(&args.out)?;
    out.write("poa.csv", &poa.finish())?;
    out.write("reductions.csv", &red.finish())?;
    out.write("price_curves.csv", &curves.finish())?;
    out.finish("compare", args, &cfg, modes.to_vec())
}

pub fn cmd_verify(args: &RunArgs, corrupt_lambda: bool, skip_nash: bool) -> Result<(RunManifest, OracleReport), CliError> {
    let cfg = load_scenario(args)?;
    let opts = SuiteOptions {
        paths: args.paths.unwrap_or(SuiteOptions::default().paths),
        seed: cfg.monte_carlo.seed,
        corrupt_lambda,
        skip_nash,
    };
    let report = run_suite(&cfg, &opts)?;
    let mut out = Output::new(&args.out)?;
    out.write("report.csv", &report.to_csv())?;
    let manifest = out.finish("verify", args, &cfg, vec![GameMode::Mfg, GameMode::Mfc])?;
    Ok((manifest, report))
}

fn dispatch(cli: &Cli) -> Result<bool, CliError> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::Compare(a) => cmd_compare(a).map(|_| true),
        Command::Verify { run, corrupt_lambda, skip_nash } => {
            let (_, report) = cmd_verify(run, *corrupt_lambda, *skip_nash)?;
            print!("{report}");
            Ok(report.all_passed())
        }
    }
}

/// Parses arguments, sizes the worker pool and runs the command. Exit code 0
/// iff the command succeeded and, for `verify`, every check passed.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = threads_from_env().and_then(|threads| {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            pool = pool.num_threads(n);
        }
        let pool = pool.build().map_err(|e| CliError::Threads(e.to_string()))?;
        pool.install(|| dispatch(&cli))
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
