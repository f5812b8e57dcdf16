//! Signed 3-sigma tests of the qualitative findings, with reference values.

use gridmfg::accounting::{reduction_stats, CostReport, Estimate, Reduction};
use gridmfg::config::{GameMode, ScenarioConfig};
use gridmfg::engine::{baseline_no_storage, PathBundle};
use gridmfg::scenarios;

use super::{diff, mean_field, paired_reduction};

fn pct(r: &Reduction) -> String {
    if r.absolute {
        format!("{:.3} +- {:.3} (absolute)", r.value, r.se)
    } else {
        format!("{:.2}% +- {:.2}", r.value, r.se)
    }
}

fn positive(e: &Estimate) -> bool {
    e.mean - 3.0 * e.se > 0.0
}

fn reduction_positive(r: &Reduction) -> bool {
    r.value - 3.0 * r.se > 0.0
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Per path, the time average of `(P_t - E[P_t])^2`; its mean is the price
/// variance averaged over the horizon.
fn price_dispersion(bundle: &PathBundle) -> Vec<f64> {
    let n = bundle.paths.len() as f64;
    let steps = bundle.grid.steps + 1;
    let mean: Vec<f64> = (0..steps).map(|k| bundle.paths.iter().map(|p| p.price[k]).sum::<f64>() / n).collect();
    bundle.paths.iter().map(|p| p.price.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>() / steps as f64).collect()
}

/// Everything one scenario contributes: paths and costs with storage (MFG and
/// MFC) and without it, on the same draws.
struct Run {
    mfg: PathBundle,
    base: PathBundle,
    mfg_costs: CostReport,
    mfc_costs: CostReport,
    base_costs: CostReport,
}

impl Run {
    fn new(cfg: &ScenarioConfig) -> Self {
        let mfg = mean_field(cfg, GameMode::Mfg);
        let mfc = mean_field(cfg, GameMode::Mfc);
        let base = baseline_no_storage(cfg, cfg.monte_carlo.paths, cfg.monte_carlo.seed);
        let rc = |b: &PathBundle| gridmfg::accounting::realized_costs(b, cfg);
        Self { mfg_costs: rc(&mfg), mfc_costs: rc(&mfc), base_costs: rc(&base), mfg, base }
    }

    fn region_bill_savings(&self, g: usize) -> Vec<f64> {
        self.base_costs.samples.iter().zip(&self.mfg_costs.samples).map(|(b, c)| b.regions[g].bill() - c.regions[g].bill()).collect()
    }
}

/// Fraction of the bill saving that comes from the volumetric charge, with
/// its per-path linearization (for delta-method standard errors).
fn volumetric_share(run: &Run) -> (f64, Vec<f64>) {
    let dv: Vec<f64> = run.base_costs.samples.iter().zip(&run.mfg_costs.samples).map(|(b, c)| b.regions[0].volumetric - c.regions[0].volumetric).collect();
    let db = run.region_bill_savings(0);
    let (v, b) = (Estimate::from_samples(&dv), Estimate::from_samples(&db));
    let share = v.mean / b.mean;
    (share, dv.iter().zip(&db).map(|(x, y)| (x - share * y) / b.mean).collect())
}

fn peak_storage(bundle: &PathBundle, g: usize) -> Vec<f64> {
    bundle.paths.iter().map(|p| p.s[g].iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
}

fn storage_range(bundle: &PathBundle, g: usize) -> Vec<f64> {
    bundle
        .paths
        .iter()
        .map(|p| {
            let hi = p.s[g].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = p.s[g].iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect()
}

pub fn run() -> (bool, Vec<String>) {
    let mut ok = true;
    let mut details = Vec::new();
    let mut record = |label: &str, pass: bool, text: String| {
        ok &= pass;
        details.push(format!("({label}) {} {text}", if pass { "pass" } else { "FAIL" }));
    };

    let none = Run::new(&scenarios::no_influence());
    let equal = Run::new(&scenarios::equal_influence());

    // (a)
    let corr = |b: &PathBundle, price: &dyn Fn(usize) -> Vec<f64>| {
        Estimate::from_samples(&b.paths.iter().enumerate().map(|(i, p)| pearson(&p.alpha[0], &price(i))).collect::<Vec<f64>>())
    };
    let c = corr(&none.mfg, &|i| none.mfg.paths[i].price.clone());
    let ce = corr(&equal.mfg, &|i| equal.mfg.paths[i].price.clone());
    let cb = corr(&equal.mfg, &|i| equal.base.paths[i].price.clone());
    record(
        "a",
        c.mean + 3.0 * c.se < 0.0,
        format!(
            "no influence: corr(alpha_t, P_t) per path = {:.3} +- {:.3}; paper: store when prices are low              [equal influence: {:.3} +- {:.3} against the realized price, {:.3} +- {:.3} against the no-storage price]",
            c.mean, c.se, ce.mean, ce.se, cb.mean, cb.se
        ),
    );

    // (b)
    for (label, run) in [("no influence", &none), ("equal influence", &equal)] {
        let red = &reduction_stats(&run.mfg_costs, &run.base_costs).expect("paired")[0];
        let net = paired_reduction(&run.mfg_costs, &run.base_costs, |s| s.regions[0].bill() + s.regions[0].storage_running);
        record(
            "b",
            reduction_positive(&red.bill),
            format!("{label}: bill reduction {}, net of running storage cost {}; paper: >13%, 7% net", pct(&red.bill), pct(&net)),
        );
    }

    // (c)
    for (label, run, paper) in [("no influence", &none, "21%"), ("equal influence", &equal, "~30%")] {
        let red = &reduction_stats(&run.mfg_costs, &run.base_costs).expect("paired")[0];
        record("c", reduction_positive(&red.max_power), format!("{label}: max power reduction {}; paper: {paper}", pct(&red.max_power)));
    }

    // (d)
    let dv = diff(&price_dispersion(&equal.base), &price_dispersion(&equal.mfg));
    record(
        "d",
        positive(&dv),
        format!("equal influence: time-averaged Var(P_t), baseline - storage = {:.4} +- {:.4} (baseline {:.4})", dv.mean, dv.se, Estimate::from_samples(&price_dispersion(&equal.base)).mean),
    );
    let ((sn, lin_none), (se, lin_equal)) = (volumetric_share(&none), volumetric_share(&equal));
    let d = Estimate { mean: sn - se, se: diff(&lin_none, &lin_equal).se };
    let rn = &reduction_stats(&none.mfg_costs, &none.base_costs).expect("paired")[0];
    let re = &reduction_stats(&equal.mfg_costs, &equal.base_costs).expect("paired")[0];
    record(
        "d",
        positive(&d),
        format!(
            "volumetric share of the bill saving (paired seeds): no influence {:.3} +- {:.3}, equal influence {:.3} +- {:.3}; \
             volumetric/demand reductions {} / {} vs {} / {}; paper: 21%/8% -> 13%/16%",
            sn, Estimate::from_samples(&lin_none).se, se, Estimate::from_samples(&lin_equal).se, pct(&rn.volumetric), pct(&rn.demand), pct(&re.volumetric), pct(&re.demand)
        ),
    );

    // (e)
    for (mode, costs, paper) in [("MFG", &equal.mfg_costs, "5%"), ("MFC", &equal.mfc_costs, "7%")] {
        let r = paired_reduction(costs, &equal.base_costs, |s| s.rest_of_world);
        record("e", reduction_positive(&r), format!("rest-of-world bill reduction, {mode}: {}; paper: {paper}", pct(&r)));
    }

    // (f)
    let high = Run::new(&scenarios::high_volatility());
    let peak = diff(&peak_storage(&high.mfg, 0), &peak_storage(&equal.mfg, 0));
    record("f", positive(&peak), format!("2.5x volatility: E[max_t S] increase {:.4} +- {:.4}", peak.mean, peak.se));
    let saving = diff(&high.region_bill_savings(0), &equal.region_bill_savings(0));
    let rh = &reduction_stats(&high.mfg_costs, &high.base_costs).expect("paired")[0];
    record(
        "f",
        positive(&saving),
        format!("2.5x volatility: bill saving increase {:.3} +- {:.3} (reduction {} vs {})", saving.mean, saving.se, pct(&rh.bill), pct(&re.bill)),
    );

    // (g)
    let two = Run::new(&scenarios::two_zone());
    let same = Run::new(&scenarios::two_identical());
    let range = diff(&storage_range(&two.mfg, 0), &storage_range(&two.mfg, 1));
    record("g", positive(&range), format!("storage range in-phase - de-phased zone = {:.4} +- {:.4}", range.mean, range.se));
    let row = |r: &Run| r.mfg_costs.samples.iter().map(|s| s.rest_of_world).collect::<Vec<f64>>();
    let rise = diff(&row(&two), &row(&same));
    let level = same.mfg_costs.rest_of_world.mean.abs();
    record(
        "g",
        positive(&rise),
        format!(
            "rest-of-world volumetric cost with de-phased zone - without = {:.4} +- {:.4} ({:+.2}%); paper: 1% increase",
            rise.mean,
            rise.se,
            100.0 * rise.mean / level
        ),
    );
    (ok, details)
}
