//! Realized cost functionals, bill decomposition, cost reductions and the
//! price of anarchy.

use thiserror::Error;

use crate::config::{ScenarioConfig, StorageCostSpec, TimeGrid};
use crate::engine::PathBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountingError {
    #[error("reports are not paired: {0}")]
    Unpaired(String),
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }

    /// Paired difference `a - b`.
    pub fn paired_difference(a: &[f64], b: &[f64]) -> Self {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self::from_samples(&d)
    }
}

/// Cost components of one node along one path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostComponents {
    pub volumetric: f64,
    pub demand: f64,
    pub storage_running: f64,
    pub terminal: f64,
}

impl CostComponents {
    pub fn bill(&self) -> f64 {
        self.volumetric + self.demand
    }

    pub fn storage(&self) -> f64 {
        self.storage_running + self.terminal
    }

    pub fn total(&self) -> f64 {
        self.bill() + self.storage()
    }
}

/// Trapezoidal accumulation of a node's running costs, one grid point at a time.
#[derive(Debug, Clone)]
pub struct CostAccumulator {
    storage: StorageCostSpec,
    demand_charge: f64,
    steps: usize,
    dt: f64,
    acc: CostComponents,
}

impl CostAccumulator {
    pub fn new(storage: StorageCostSpec, demand_charge: f64, grid: &TimeGrid) -> Self {
        Self { storage, demand_charge, steps: grid.steps, dt: grid.dt(), acc: CostComponents::default() }
    }

    #[inline]
    pub fn add(&mut self, k: usize, price: f64, q: f64, s: f64, alpha: f64) {
        let w = if k == 0 || k == self.steps { 0.5 * self.dt } else { self.dt };
        let net = alpha - q;
        self.acc.volumetric += w * price * net;
        self.acc.demand += w * 0.5 * self.demand_charge * net * net;
        self.acc.storage_running += w * self.storage.running(s, alpha);
    }

    pub fn finish(mut self, terminal_storage: f64) -> CostComponents {
        self.acc.terminal = self.storage.terminal(terminal_storage);
        self.acc
    }
}

pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Per-path realized costs.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCosts {
    pub regions: Vec<CostComponents>,
    pub rest_of_world: f64,
    pub central: f64,
    /// `max_t |Q_t - alpha_t|` per region.
    pub max_power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    pub volumetric: Estimate,
    pub demand: Estimate,
    pub storage_running: Estimate,
    pub terminal: Estimate,
    pub bill: Estimate,
    pub total: Estimate,
    pub max_power: Estimate,
}

impl RegionReport {
    /// Volumetric share of the bill.
    pub fn volumetric_share(&self) -> f64 {
        self.volumetric.mean / (self.volumetric.mean + self.demand.mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub label: String,
    pub grid: TimeGrid,
    pub seed: u64,
    pub regions: Vec<RegionReport>,
    pub rest_of_world: Estimate,
    pub central: Estimate,
    pub samples: Vec<PathCosts>,
}

impl CostReport {
    pub fn central_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.central).collect()
    }

    fn collect(&self, f: &dyn Fn(&PathCosts) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }
}

pub fn path_costs(bundle: &PathBundle, cfg: &ScenarioConfig, path: usize) -> PathCosts {
    let rec = &bundle.paths[path];
    let grid = &bundle.grid;
    let dt = grid.dt();
    let n = grid.steps;
    let regions: Vec<CostComponents> = cfg
        .regions
        .iter()
        .enumerate()
        .map(|(g, r)| {
            let mut acc = CostAccumulator::new(cfg.storage, r.demand_charge, grid);
            for k in 0..=n {
                acc.add(k, rec.price[k], rec.q[g][k], rec.s[g][k], rec.alpha[g][k]);
            }
            acc.finish(rec.s[g][n])
        })
        .collect();
    let k0 = cfg.rest_of_world.demand_charge;
    let rest: Vec<f64> = (0..=n).map(|k| -rec.price[k] * rec.q0[k] + 0.5 * k0 * rec.q0[k] * rec.q0[k]).collect();
    let rest_of_world = trapezoid(&rest, dt);
    let w = cfg.pricing.prosumer_weight;
    let central = rest_of_world + w * cfg.regions.iter().zip(&regions).map(|(r, c)| r.weight * c.total()).sum::<f64>();
    let max_power = (0..cfg.num_regions())
        .map(|g| (0..=n).map(|k| (rec.q[g][k] - rec.alpha[g][k]).abs()).fold(0.0, f64::max))
        .collect();
    PathCosts { regions, rest_of_world, central, max_power }
}

pub fn realized_costs(bundle: &PathBundle, cfg: &ScenarioConfig) -> CostReport {
    use rayon::prelude::*;
    let samples: Vec<PathCosts> = (0..bundle.paths.len()).into_par_iter().map(|p| path_costs(bundle, cfg, p)).collect();
    let est = |f: &dyn Fn(&PathCosts) -> f64| Estimate::from_samples(&samples.iter().map(f).collect::<Vec<_>>());
    let regions = (0..cfg.num_regions())
        .map(|g| RegionReport {
            volumetric: est(&|s| s.regions[g].volumetric),
            demand: est(&|s| s.regions[g].demand),
            storage_running: est(&|s| s.regions[g].storage_running),
            terminal: est(&|s| s.regions[g].terminal),
            bill: est(&|s| s.regions[g].bill()),
            total: est(&|s| s.regions[g].total()),
            max_power: est(&|s| s.max_power[g]),
        })
        .collect();
    CostReport {
        label: bundle.label.clone(),
        grid: bundle.grid,
        seed: bundle.seed,
        regions,
        rest_of_world: est(&|s| s.rest_of_world),
        central: est(&|s| s.central),
        samples,
    }
}

fn check_paired(a: &CostReport, b: &CostReport) -> Result<(), AccountingError> {
    if a.grid != b.grid {
        return Err(AccountingError::Unpaired("time grids differ".into()));
    }
    if a.seed != b.seed {
        return Err(AccountingError::Unpaired(format!("seeds differ ({} vs {})", a.seed, b.seed)));
    }
    if a.samples.len() != b.samples.len() {
        return Err(AccountingError::Unpaired("path counts differ".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceOfAnarchy {
    /// `J_C(MFG) - J_C(MFC)` on paired paths; non-negative in theory.
    pub difference: Estimate,
    /// `(J_C(MFG) + shift) / (J_C(MFC) + shift)`.
    pub ratio: f64,
    pub ratio_se: f64,
    /// Zero when both totals are positive, otherwise `|J_C(MFG)| + |J_C(MFC)|`.
    pub shift: f64,
    pub mfc_total: f64,
}

impl PriceOfAnarchy {
    /// `(J_C(MFG) - J_C(MFC)) / |J_C(MFC)|`.
    pub fn relative_gap(&self) -> f64 {
        if self.difference.mean == 0.0 {
            0.0
        } else {
            self.difference.mean / self.mfc_total.abs()
        }
    }
}

pub fn price_of_anarchy(mfg: &CostReport, mfc: &CostReport) -> Result<PriceOfAnarchy, AccountingError> {
    check_paired(mfg, mfc)?;
    let a = mfg.central_samples();
    let b = mfc.central_samples();
    let difference = Estimate::paired_difference(&a, &b);
    let (ma, mb) = (mfg.central.mean, mfc.central.mean);
    let shift = if ma > 0.0 && mb > 0.0 { 0.0 } else { ma.abs() + mb.abs() };
    let (ea, eb) = (ma + shift, mb + shift);
    let ratio = if ea == eb { 1.0 } else { ea / eb };
    let ratio_se = if a.len() > 1 {
        let resid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| ((x + shift) - ratio * (y + shift)) / eb).collect();
        Estimate::from_samples(&resid).se
    } else {
        0.0
    };
    Ok(PriceOfAnarchy { difference, ratio, ratio_se, shift, mfc_total: mb })
}

/// Percentage reduction (`100 (base - controlled) / |base|`), or the absolute
/// reduction when the baseline is indistinguishable from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reduction {
    pub value: f64,
    pub se: f64,
    pub absolute: bool,
}

impl Reduction {
    pub fn paired(controlled: &[f64], baseline: &[f64]) -> Self {
        let base = Estimate::from_samples(baseline);
        let diff = Estimate::paired_difference(baseline, controlled);
        if base.mean == 0.0 || base.mean.abs() <= 3.0 * base.se {
            return Self { value: diff.mean, se: diff.se, absolute: true };
        }
        let scale = 100.0 / base.mean.abs();
        Self { value: diff.mean * scale, se: diff.se * scale, absolute: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReductions {
    pub volumetric: Reduction,
    pub demand: Reduction,
    pub bill: Reduction,
    /// Bill plus storage costs.
    pub total: Reduction,
    /// `E[max |Q - alpha|]` against `E[max |Q|]`.
    pub max_power: Reduction,
}

pub fn reduction_stats(controlled: &CostReport, baseline: &CostReport) -> Result<Vec<RegionReductions>, AccountingError> {
    check_paired(controlled, baseline)?;
    let regions = controlled.regions.len();
    Ok((0..regions)
        .map(|g| {
            let red = |f: &dyn Fn(&PathCosts) -> f64| Reduction::paired(&controlled.collect(f), &baseline.collect(f));
            RegionReductions {
                volumetric: red(&|s| s.regions[g].volumetric),
                demand: red(&|s| s.regions[g].demand),
                bill: red(&|s| s.regions[g].bill()),
                total: red(&|s| s.regions[g].total()),
                max_power: red(&|s| s.max_power[g]),
            }
        })
        .collect())
}
