//! Zero-volatility reference: the control problem becomes a finite quadratic
//! program over piecewise-constant controls, solved by conjugate gradients.

use thiserror::Error;

use crate::config::{GameMode, ScenarioConfig};
use crate::processes::ou_conditional_mean;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("scenario is not deterministic")]
    NotDeterministic,
    #[error("best-response iteration did not converge after {iterations} iterations (relative change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Number of control intervals on `[0, T]`.
    pub intervals: usize,
    /// Weight of the new best response in the damped fixed-point update.
    pub damping: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { intervals: 16384, damping: 0.5, max_iterations: 500, tolerance: 1e-9 }
    }
}

/// Optimal piecewise-constant controls.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub horizon: f64,
    /// `alpha[region][i]` on interval `i`.
    pub alpha: Vec<Vec<f64>>,
    /// Best-response rounds (zero for the planner).
    pub iterations: usize,
}

impl QpSolution {
    /// Linear interpolation between interval midpoints (extrapolated at the ends).
    pub fn at(&self, region: usize, t: f64) -> f64 {
        let a = &self.alpha[region];
        let n = a.len();
        if n == 1 {
            return a[0];
        }
        let h = self.horizon / n as f64;
        let pos = (t / h - 0.5).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let x = t / h - 0.5 - i as f64;
        a[i] + x * (a[i + 1] - a[i])
    }
}

const GAUSS: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Discretized cost with three-point Gauss quadrature on every interval; the
/// storage level is exactly linear within an interval.
struct Program<'a> {
    cfg: &'a ScenarioConfig,
    n: usize,
    h: f64,
    /// `(offset within interval, weight)`.
    nodes: [(f64, f64); 3],
    q0: Vec<[f64; 3]>,
    q: Vec<Vec<[f64; 3]>>,
    s0: Vec<f64>,
}

impl<'a> Program<'a> {
    fn new(cfg: &'a ScenarioConfig, n: usize) -> Self {
        let h = cfg.grid.horizon / n as f64;
        let nodes = GAUSS.map(|(x, w)| (0.5 * h * (1.0 + x), 0.5 * h * w));
        let sample = |ou: &crate::config::OUParams| -> Vec<[f64; 3]> {
            let start = ou.initial_law().mean();
            (0..n).map(|i| nodes.map(|(tau, _)| ou_conditional_mean(ou, start, 0.0, i as f64 * h + tau))).collect()
        };
        Self {
            cfg,
            n,
            h,
            nodes,
            q0: sample(&cfg.rest_of_world.ou),
            q: cfg.regions.iter().map(|r| sample(&r.ou)).collect(),
            s0: cfg.regions.iter().map(|r| r.initial_storage.mean()).collect(),
        }
    }

    fn price(&self, abar: &[Vec<f64>]) -> Vec<[f64; 3]> {
        let pr = &self.cfg.pricing;
        (0..self.n)
            .map(|i| {
                std::array::from_fn(|j| {
                    let net: f64 = self.cfg.regions.iter().enumerate().map(|(g, r)| r.weight * (self.q[g][i][j] - abar[g][i])).sum();
                    pr.p0 + pr.p1 * (-self.q0[i][j] - pr.prosumer_weight * net)
                })
            })
            .collect()
    }

    /// Gradient of `scale * J_g` in the region's controls; `marginal[i][j]` is
    /// the per-unit price term seen at each quadrature node.
    fn region_gradient(&self, g: usize, a: &[f64], marginal: &[[f64; 3]], scale: f64) -> Vec<f64> {
        let st = &self.cfg.storage;
        let k = self.cfg.regions[g].demand_charge;
        let mut grad = vec![0.0; self.n];
        let mut ds = vec![0.0; self.n];
        let mut s = self.s0[g];
        for i in 0..self.n {
            for (j, &(tau, w)) in self.nodes.iter().enumerate() {
                let si = s + a[i] * tau;
                let fs = st.a2 * si + st.a1;
                grad[i] += scale * w * (marginal[i][j] + k * (a[i] - self.q[g][i][j]) + st.c * a[i] + fs * tau);
                ds[i] += scale * w * fs;
            }
            s += self.h * a[i];
        }
        let mut adjoint = scale * st.terminal_slope(s);
        for i in (0..self.n).rev() {
            grad[i] += self.h * adjoint;
            adjoint += ds[i];
        }
        grad
    }

    fn planner_gradient(&self, a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let pr = &self.cfg.pricing;
        let price = self.price(a);
        // P + p'(x) x with x = (P - p0) / p1
        let marginal: Vec<[f64; 3]> = price.iter().map(|p| p.map(|v| 2.0 * v - pr.p0)).collect();
        self.cfg
            .regions
            .iter()
            .enumerate()
            .map(|(g, r)| self.region_gradient(g, &a[g], &marginal, pr.prosumer_weight * r.weight))
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes a quadratic from its gradient map by conjugate gradients.
fn conjugate_gradient(grad: &dyn Fn(&[f64]) -> Vec<f64>, start: Vec<f64>, tol: f64) -> Vec<f64> {
    let n = start.len();
    let g0 = grad(&vec![0.0; n]);
    let hess = |v: &[f64]| -> Vec<f64> { grad(v).iter().zip(&g0).map(|(a, b)| a - b).collect() };
    let mut x = start;
    let mut r: Vec<f64> = grad(&x).iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = tol * tol * dot(&g0, &g0).max(f64::MIN_POSITIVE);
    for _ in 0..n.max(100) {
        if rr <= stop {
            break;
        }
        let hp = hess(&p);
        let step = rr / dot(&p, &hp);
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += step * p);
        r.iter_mut().zip(&hp).for_each(|(r, h)| *r -= step * h);
        let next = dot(&r, &r);
        let beta = next / rr;
        p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
        rr = next;
    }
    x
}

fn flatten(a: &[Vec<f64>]) -> Vec<f64> {
    a.iter().flatten().copied().collect()
}

fn split(v: &[f64], n: usize) -> Vec<Vec<f64>> {
    v.chunks(n).map(<[f64]>::to_vec).collect()
}

/// Reference controls of the zero-volatility problem: the planner's minimizer
/// of the central cost, or the game's fixed point of damped best responses
/// against a frozen price path.
pub fn deterministic_qp_reference(cfg: &ScenarioConfig, mode: GameMode, opts: &QpOptions) -> Result<QpSolution, QpError> {
    if !cfg.is_deterministic() {
        return Err(QpError::NotDeterministic);
    }
    let prog = Program::new(cfg, opts.intervals);
    let n = prog.n;
    let regions = cfg.num_regions();
    let cg_tol = 1e-11;
    match mode {
        GameMode::Mfc => {
            let grad = |v: &[f64]| flatten(&prog.planner_gradient(&split(v, n)));
            let a = conjugate_gradient(&grad, vec![0.0; n * regions], cg_tol);
            Ok(QpSolution { horizon: cfg.grid.horizon, alpha: split(&a, n), iterations: 0 })
        }
        GameMode::Mfg => {
            let mut abar = vec![vec![0.0; n]; regions];
            for it in 1..=opts.max_iterations {
                let price = prog.price(&abar);
                let response: Vec<Vec<f64>> = (0..regions)
                    .map(|g| {
                        let grad = |v: &[f64]| prog.region_gradient(g, v, &price, 1.0);
                        conjugate_gradient(&grad, abar[g].clone(), cg_tol)
                    })
                    .collect();
                let (old, new) = (flatten(&abar), flatten(&response));
                let change = old.iter().zip(&new).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                    / dot(&new, &new).sqrt().max(f64::MIN_POSITIVE);
                for (a, r) in abar.iter_mut().zip(&response) {
                    a.iter_mut().zip(r).for_each(|(a, r)| *a += opts.damping * (r - *a));
                }
                if change < opts.tolerance {
                    return Ok(QpSolution { horizon: cfg.grid.horizon, alpha: response, iterations: it });
                }
                if it == opts.max_iterations {
                    return Err(QpError::NoConvergence { iterations: it, change });
                }
            }
            Err(QpError::NoConvergence { iterations: 0, change: f64::NAN })
        }
    }
}

/// `||alpha - reference|| / ||reference||` over every region and grid point.
pub fn relative_l2_error(alpha: &[Vec<f64>], reference: &QpSolution, times: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (g, a) in alpha.iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            let r = reference.at(g, t);
            num += (a[k] - r).powi(2);
            den += r * r;
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
