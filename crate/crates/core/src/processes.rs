//! Exogenous net-production processes: exact seasonal OU transitions, closed-form
//! conditional means, and reproducible path simulation on counter-based streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::{InitialLaw, OUParams, ScenarioConfig, SeasonalFn, TimeGrid};

pub fn seasonal_mean(f: &SeasonalFn, t: f64) -> f64 {
    f.value(t)
}

/// `H(t) = int_0^t a e^{-a(t-s)} mu(s) ds`, in closed form for offset + cosine.
///
/// The conditional mean of the OU process is then
/// `E[Q_u | Q_t] = H(u) + e^{-a(u-t)} (Q_t - H(t))`.
pub fn seasonal_response(params: &OUParams, t: f64) -> f64 {
    let a = params.a;
    if a == 0.0 {
        return 0.0;
    }
    let f = &params.seasonal;
    let decay = (-a * t).exp();
    let constant = -f.offset * (-a * t).exp_m1();
    if f.amplitude == 0.0 {
        return constant;
    }
    let (w, phi) = (f.omega, f.phase);
    let re = (w * t + phi).cos() - decay * phi.cos();
    let im = (w * t + phi).sin() - decay * phi.sin();
    constant + f.amplitude * a * (a * re + w * im) / (a * a + w * w)
}

/// Variance factor `(1 - e^{-2 a dt}) / (2a)` of an OU increment per unit loading.
pub fn ou_variance_factor(a: f64, dt: f64) -> f64 {
    if a == 0.0 {
        dt
    } else {
        -(-2.0 * a * dt).exp_m1() / (2.0 * a)
    }
}

/// One exact-in-distribution OU step from `(t, q)` to `t + dt`.
pub fn ou_step(params: &OUParams, q: f64, t: f64, dt: f64, xi_idio: f64, xi_common: f64) -> f64 {
    let decay = (-params.a * dt).exp();
    let sd = ou_variance_factor(params.a, dt).sqrt();
    let h0 = seasonal_response(params, t);
    let h1 = seasonal_response(params, t + dt);
    h1 + decay * (q - h0) + sd * (params.sigma * xi_idio + params.sigma_common * xi_common)
}

pub fn ou_conditional_mean(params: &OUParams, q_t: f64, t: f64, u: f64) -> f64 {
    if u == t {
        return q_t;
    }
    let decay = (-params.a * (u - t)).exp();
    seasonal_response(params, u) + decay * (q_t - seasonal_response(params, t))
}

/// Precomputed exact transition of one OU process on a uniform grid.
#[derive(Debug, Clone)]
pub struct OuStepper {
    pub params: OUParams,
    /// `H(t_k)` at every grid point.
    pub response: Vec<f64>,
    pub decay: f64,
    pub sd: f64,
}

impl OuStepper {
    pub fn new(params: &OUParams, grid: &TimeGrid) -> Self {
        let dt = grid.dt();
        Self {
            params: *params,
            response: grid.times().iter().map(|&t| seasonal_response(params, t)).collect(),
            decay: (-params.a * dt).exp(),
            sd: ou_variance_factor(params.a, dt).sqrt(),
        }
    }

    /// Advances from grid point `k` to `k + 1`.
    #[inline]
    pub fn step(&self, k: usize, q: f64, xi_idio: f64, xi_common: f64) -> f64 {
        self.response[k + 1]
            + self.decay * (q - self.response[k])
            + self.sd * (self.params.sigma * xi_idio + self.params.sigma_common * xi_common)
    }

    /// Same transition with the idiosyncratic loading switched off.
    #[inline]
    pub fn step_common(&self, k: usize, q: f64, xi_common: f64) -> f64 {
        self.response[k + 1]
            + self.decay * (q - self.response[k])
            + self.sd * self.params.sigma_common * xi_common
    }

    /// Deviation `q - H(t_k)`, the part of the state that decays at rate `a`.
    #[inline]
    pub fn deviation(&self, k: usize, q: f64) -> f64 {
        q - self.response[k]
    }
}

/// Stream roles. Each `(path, role)` pair owns a distinct ChaCha stream.
pub mod role {
    pub const COMMON: u64 = 0;
    pub const COMMON_INITIAL: u64 = 1;

    pub fn region(gamma: usize) -> u64 {
        16 + 2 * gamma as u64
    }

    pub fn region_initial(gamma: usize) -> u64 {
        17 + 2 * gamma as u64
    }

    pub fn node(i: usize) -> u64 {
        (1 << 20) + 2 * i as u64
    }

    pub fn node_initial(i: usize) -> u64 {
        (1 << 20) + 2 * i as u64 + 1
    }
}

/// Counter-based generator for `(seed, path, role)`.
pub fn stream_rng(seed: u64, path: u64, role: u64) -> ChaCha8Rng {
    debug_assert!(role < 1 << 24 && path < 1 << 40);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((path << 24) | role);
    rng
}

pub fn normal_draws(seed: u64, path: u64, role: u64, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, path, role);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn sample_law(law: &InitialLaw, seed: u64, path: u64, role: u64) -> f64 {
    match *law {
        InitialLaw::Fixed(v) => v,
        InitialLaw::Gaussian { mean, std } => {
            let z: f64 = StandardNormal.sample(&mut stream_rng(seed, path, role));
            mean + std * z
        }
    }
}

/// Initial production and storage of one node, from a single stream: the
/// first draw feeds production (as in `sample_law`), the second storage.
pub fn initial_pair(q_law: &InitialLaw, s_law: &InitialLaw, seed: u64, path: u64, role: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, path, role);
    let z1: f64 = StandardNormal.sample(&mut rng);
    let z2: f64 = StandardNormal.sample(&mut rng);
    (q_law.mean() + q_law.std() * z1, s_law.mean() + s_law.std() * z2)
}

/// Standard normal increments (unit variance; the steppers apply the scaling).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    pub common: Vec<f64>,
    pub idio: Vec<Vec<f64>>,
}

impl NoiseGrid {
    pub fn draw(cfg: &ScenarioConfig, seed: u64, path: usize) -> Self {
        let n = cfg.grid.steps;
        let p = path as u64;
        Self {
            common: normal_draws(seed, p, role::COMMON, n),
            idio: (0..cfg.num_regions()).map(|g| normal_draws(seed, p, role::region(g), n)).collect(),
        }
    }
}

/// One realization of the exogenous states on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousPath {
    pub q0: Vec<f64>,
    /// Representative node of each region.
    pub q: Vec<Vec<f64>>,
    /// `E[Q^g_t | F0_t]`, simulated as its own common-noise-driven OU.
    pub qbar: Vec<Vec<f64>>,
    pub common: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePaths {
    pub grid: TimeGrid,
    pub seed: u64,
    pub paths: Vec<ExogenousPath>,
}

impl StatePaths {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Steppers for the rest of the world (index 0) and each region.
pub fn steppers(cfg: &ScenarioConfig) -> Vec<OuStepper> {
    cfg.sources().iter().map(|ou| OuStepper::new(ou, &cfg.grid)).collect()
}

/// Rest-of-world and conditional-mean paths driven by the given common draws.
pub fn simulate_common(
    steppers: &[OuStepper],
    q0_start: f64,
    qbar_start: &[f64],
    common: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = common.len();
    let mut q0 = Vec::with_capacity(n + 1);
    q0.push(q0_start);
    for k in 0..n {
        q0.push(steppers[0].step_common(k, q0[k], common[k]));
    }
    let qbar = qbar_start
        .iter()
        .enumerate()
        .map(|(g, &start)| {
            let st = &steppers[g + 1];
            let mut v = Vec::with_capacity(n + 1);
            v.push(start);
            for k in 0..n {
                v.push(st.step_common(k, v[k], common[k]));
            }
            v
        })
        .collect();
    (q0, qbar)
}

/// A full node path with its own idiosyncratic draws and the shared common draws.
pub fn simulate_node(stepper: &OuStepper, start: f64, idio: &[f64], common: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(common.len() + 1);
    v.push(start);
    for k in 0..common.len() {
        v.push(stepper.step(k, v[k], idio[k], common[k]));
    }
    v
}

pub fn simulate_exogenous_path(cfg: &ScenarioConfig, steppers: &[OuStepper], seed: u64, path: usize) -> ExogenousPath {
    let noise = NoiseGrid::draw(cfg, seed, path);
    let p = path as u64;
    let q0_start = sample_law(&cfg.rest_of_world.ou.initial_law(), seed, p, role::COMMON_INITIAL);
    let qbar_start: Vec<f64> = cfg.regions.iter().map(|r| r.ou.initial_law().mean()).collect();
    let (q0, qbar) = simulate_common(steppers, q0_start, &qbar_start, &noise.common);
    let q = cfg
        .regions
        .iter()
        .enumerate()
        .map(|(g, r)| {
            let start = sample_law(&r.ou.initial_law(), seed, p, role::region_initial(g));
            simulate_node(&steppers[g + 1], start, &noise.idio[g], &noise.common)
        })
        .collect();
    ExogenousPath { q0, q, qbar, common: noise.common }
}

/// Simulates `n_paths` independent realizations. Output does not depend on
/// the number of worker threads.
pub fn simulate_exogenous(cfg: &ScenarioConfig, n_paths: usize, seed: u64) -> StatePaths {
    let st = steppers(cfg);
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|p| simulate_exogenous_path(cfg, &st, seed, p))
        .collect();
    StatePaths { grid: cfg.grid, seed, paths }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn base_rest_of_world() -> OUParams {
        scenarios::paper_base().rest_of_world.ou
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, depth)
    }

    #[test]
    fn seasonal_values() {
        let ou = base_rest_of_world();
        assert!((seasonal_mean(&ou.seasonal, 0.0) + 3.0).abs() < 1e-14);
        assert!((seasonal_mean(&ou.seasonal, 0.125) + 1.0).abs() < 1e-14);
        let region = scenarios::paper_base().regions[0].ou;
        assert!((seasonal_mean(&region.seasonal, 0.0) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn ou_step_fixed_point_and_driftless_limit() {
        let mut ou = OUParams {
            a: 1.0,
            sigma: 0.0,
            sigma_common: 0.0,
            seasonal: SeasonalFn::constant(2.5),
            initial: None,
        };
        assert!((ou_step(&ou, 2.5, 0.3, 0.1, 0.7, -0.2) - 2.5).abs() < 1e-14);

        ou.a = 0.0;
        ou.sigma = 1.0;
        ou.seasonal = SeasonalFn { offset: 1.0, amplitude: 3.0, omega: 2.0, phase: 0.4 };
        let (q, dt, xi) = (0.3, 0.04, 1.7);
        assert!((ou_step(&ou, q, 0.2, dt, xi, 0.0) - (q + xi * dt.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn ou_step_closed_form_matches_fine_euler() {
        let ou = OUParams {
            a: 1.0,
            sigma: 0.0,
            sigma_common: 0.0,
            seasonal: SeasonalFn::constant(-3.0),
            initial: None,
        };
        let exact = ou_step(&ou, 0.0, 0.0, 1.0, 0.0, 0.0);
        assert!((exact - (-3.0 * (1.0 - (-1.0f64).exp()))).abs() < 1e-13);
        assert!((exact + 1.8964).abs() < 1e-4);
        // fine-step Euler of dq = -(q + 3) dt
        let n = 200_000;
        let h = 1.0 / n as f64;
        let mut q = 0.0;
        for _ in 0..n {
            q += -(q + 3.0) * h;
        }
        assert!((q - exact).abs() < 1e-5);
    }

    #[test]
    fn conditional_mean_identity_and_limit() {
        let ou = base_rest_of_world();
        assert_eq!(ou_conditional_mean(&ou, 0.7, 0.3, 0.3), 0.7);
        let c = OUParams { seasonal: SeasonalFn::constant(4.0), ..ou };
        assert!((ou_conditional_mean(&c, -10.0, 0.0, 60.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_mean_matches_quadrature() {
        let ou = base_rest_of_world();
        let (t, u, q) = (0.0, 0.5, 0.0);
        let a = ou.a;
        let integral = simpson(&|s: f64| a * (-a * (u - s)).exp() * ou.seasonal.value(s), t, u, 1e-14, 40);
        let oracle = q * (-a * (u - t)).exp() + integral;
        assert!((ou_conditional_mean(&ou, q, t, u) - oracle).abs() < 1e-10);

        // non-zero start time, different frequency and phase
        let ou2 = OUParams {
            a: 2.3,
            seasonal: SeasonalFn { offset: 0.4, amplitude: -1.2, omega: 3.0, phase: 0.9 },
            ..ou
        };
        let (t, u, q) = (0.35, 0.9, 1.25);
        let integral = simpson(&|s: f64| 2.3 * (-2.3 * (u - s)).exp() * ou2.seasonal.value(s), t, u, 1e-14, 40);
        let oracle = q * (-2.3 * (u - t)).exp() + integral;
        assert!((ou_conditional_mean(&ou2, q, t, u) - oracle).abs() < 1e-10);
    }

    #[test]
    fn exact_one_step_moments() {
        // constant mu: mean and variance of one step match the OU closed forms
        let ou = OUParams {
            a: 1.7,
            sigma: 0.8,
            sigma_common: 0.3,
            seasonal: SeasonalFn::constant(-1.0),
            initial: None,
        };
        let (q, dt) = (0.5, 0.2);
        let mean = ou_step(&ou, q, 0.0, dt, 0.0, 0.0);
        let slope_idio = ou_step(&ou, q, 0.0, dt, 1.0, 0.0) - mean;
        let slope_common = ou_step(&ou, q, 0.0, dt, 0.0, 1.0) - mean;
        let var = slope_idio.powi(2) + slope_common.powi(2);
        let decay = (-1.7f64 * dt).exp();
        let exact_mean = -1.0 + (q + 1.0) * decay;
        let exact_var = (0.64 + 0.09) * (1.0 - decay * decay) / (2.0 * 1.7);
        assert!((mean - exact_mean).abs() < 1e-12);
        assert!((var - exact_var).abs() < 1e-12);
    }

    #[test]
    fn degenerate_noise_gives_mean_curves() {
        let cfg = scenarios::paper_base().deterministic().with_grid_steps(32);
        let sp = simulate_exogenous(&cfg, 3, 1);
        let ou0 = cfg.rest_of_world.ou;
        let ou1 = cfg.regions[0].ou;
        for path in &sp.paths {
            for (k, t) in cfg.grid.times().into_iter().enumerate() {
                let m0 = ou_conditional_mean(&ou0, ou0.initial_law().mean(), 0.0, t);
                let m1 = ou_conditional_mean(&ou1, ou1.initial_law().mean(), 0.0, t);
                assert!((path.q0[k] - m0).abs() < 1e-12);
                assert!((path.q[0][k] - m1).abs() < 1e-12);
                assert!((path.qbar[0][k] - m1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn no_common_loading_gives_deterministic_conditional_mean() {
        let mut cfg = scenarios::paper_base().with_grid_steps(32);
        cfg.regions[0].ou.sigma_common = 0.0;
        let sp = simulate_exogenous(&cfg, 4, 9);
        let ou1 = cfg.regions[0].ou;
        for path in &sp.paths {
            for (k, t) in cfg.grid.times().into_iter().enumerate() {
                let m1 = ou_conditional_mean(&ou1, ou1.initial_law().mean(), 0.0, t);
                assert!((path.qbar[0][k] - m1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn terminal_mean_within_three_standard_errors() {
        let cfg = scenarios::paper_base().with_grid_steps(64);
        let sp = simulate_exogenous(&cfg, 10_000, 77);
        let n = cfg.grid.steps;
        let xs: Vec<f64> = sp.paths.iter().map(|p| p.q[0][n]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let se = (var / xs.len() as f64).sqrt();
        let ou = cfg.regions[0].ou;
        let exact = ou_conditional_mean(&ou, ou.initial_law().mean(), 0.0, cfg.grid.horizon);
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} exact {exact} se {se}");
    }

    #[test]
    fn tower_property_with_fixed_common_path() {
        let cfg = scenarios::paper_base().with_grid_steps(32);
        let st = steppers(&cfg);
        let path = simulate_exogenous_path(&cfg, &st, 5, 0);
        let n = cfg.grid.steps;
        let start = cfg.regions[0].ou.initial_law().mean();
        let cloud: Vec<f64> = (0..4000)
            .map(|i| {
                let idio = normal_draws(5, 0, role::node(i), n);
                simulate_node(&st[1], start, &idio, &path.common)[n]
            })
            .collect();
        let mean = cloud.iter().sum::<f64>() / cloud.len() as f64;
        let var = cloud.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (cloud.len() - 1) as f64;
        let se = (var / cloud.len() as f64).sqrt();
        assert!((mean - path.qbar[0][n]).abs() < 3.0 * se, "{mean} vs {} (se {se})", path.qbar[0][n]);
    }

    #[test]
    fn simulation_independent_of_thread_count() {
        let cfg = scenarios::two_zone().with_grid_steps(16);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_exogenous(&cfg, 50, 3));
        let b = four.install(|| simulate_exogenous(&cfg, 50, 3));
        assert_eq!(a, b);
        let c = simulate_exogenous(&cfg, 50, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn streams_do_not_overlap() {
        let a = normal_draws(1, 0, role::COMMON, 64);
        let b = normal_draws(1, 0, role::region(0), 64);
        let c = normal_draws(1, 1, role::COMMON, 64);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
        assert!(a.iter().zip(&c).all(|(x, y)| x != y));
    }
}
