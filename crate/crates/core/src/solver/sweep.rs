//! Path-independent part of the solution: one backward RK4 sweep over a
//! refined grid carrying the matrix Riccati solution, the fundamental matrix,
//! and the affine coefficients of `psi_bar` and of every region's `psi`.

use nalgebra::{DMatrix, DVector};

use super::riccati::{block_exponential_phi, scalar_riccati};
use super::{driver_matrix, InteractionMatrices, SolverError};
use crate::config::{GameMode, OUParams, ScenarioConfig, TimeGrid};
use crate::market::effective_slope;
use crate::processes::seasonal_response;

/// Target for `h * stiffness` on the refined grid.
const STEP_STIFFNESS: f64 = 0.05;
const EXPONENTIAL_TOLERANCE: f64 = 1e-6;
const EXPONENTIAL_STRIDE: usize = 10;

/// Step-1 objects at every refined node (`substeps` per grid interval).
#[derive(Debug, Clone)]
pub struct FineTrajectory {
    pub substeps: usize,
    pub times: Vec<f64>,
    /// `Phi = phi_bar + B2 I`.
    pub phi: Vec<DMatrix<f64>>,
    /// `U(t) = R(T, t)`.
    pub u: Vec<DMatrix<f64>>,
    pub d: Vec<DVector<f64>>,
    pub g: Vec<DMatrix<f64>>,
}

impl FineTrajectory {
    /// `R(u, t) = U(t) U(u)^{-1}` between refined node indices.
    pub fn transition(&self, iu: usize, it: usize) -> DMatrix<f64> {
        if iu == it {
            return DMatrix::identity(self.u[it].nrows(), self.u[it].ncols());
        }
        let inv = self.u[iu].clone().try_inverse().expect("fundamental matrix is invertible");
        &self.u[it] * inv
    }
}

/// Matrix Riccati solution and transition matrices on the solver grid.
#[derive(Debug, Clone)]
pub struct MeanFieldRiccati {
    pub grid: TimeGrid,
    /// `phi_bar(t_k)`, zero at the horizon.
    pub phi_bar: Vec<DMatrix<f64>>,
    u: Vec<DMatrix<f64>>,
}

impl MeanFieldRiccati {
    /// Left fundamental solution `R(t_ku, t_kt)` of `dR/du = R (phi_bar(u) + B2) M`.
    pub fn transition(&self, ku: usize, kt: usize) -> DMatrix<f64> {
        if ku == kt {
            return DMatrix::identity(self.u[kt].nrows(), self.u[kt].ncols());
        }
        let inv = self.u[ku].clone().try_inverse().expect("fundamental matrix is invertible");
        &self.u[kt] * inv
    }
}

/// Comparison of the integrated `phi_bar` with the block-exponential formula.
#[derive(Debug, Clone, Default)]
pub struct ExponentialCheck {
    /// `(t, max |difference| / (1 + max |phi_bar|))` at checked points.
    pub checked: Vec<(f64, f64)>,
    /// Times where the exponential block was not invertible.
    pub skipped: Vec<f64>,
}

impl ExponentialCheck {
    pub fn max_mismatch(&self) -> f64 {
        self.checked.iter().map(|c| c.1).fold(0.0, f64::max)
    }
}

/// Affine coefficients of one region's `psi`:
/// `psi = e + eta_s . Sbar + eta_x . X + theta (Q - H)`, with
/// `X = (Q0, Qbar) - H` the deviations of the sources from their seasonal response.
#[derive(Debug, Clone)]
pub struct RegionCoefficients {
    pub delta: f64,
    pub demand_charge: f64,
    pub phi: Vec<f64>,
    pub e: Vec<f64>,
    pub eta_s: Vec<DVector<f64>>,
    pub eta_x: Vec<DVector<f64>>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub mode: GameMode,
    pub cfg: ScenarioConfig,
    pub grid: TimeGrid,
    pub matrices: InteractionMatrices,
    /// Slope of the price seen by an individual node when responding.
    pub response_lambda: f64,
    pub driver: DMatrix<f64>,
    /// Mean-reversion rates of the sources, rest of the world first.
    pub rates: DVector<f64>,
    /// `H_j(t_k)` per source.
    pub response: Vec<DVector<f64>>,
    pub riccati: MeanFieldRiccati,
    pub d: Vec<DVector<f64>>,
    pub g: Vec<DMatrix<f64>>,
    /// `abar = alpha_s Sbar + alpha_0 + alpha_x X` on the grid.
    pub alpha_s: Vec<DMatrix<f64>>,
    pub alpha_0: Vec<DVector<f64>>,
    pub alpha_x: Vec<DMatrix<f64>>,
    pub regions: Vec<RegionCoefficients>,
    pub fine: FineTrajectory,
    pub exponential: ExponentialCheck,
    pub initial_storage_mean: DVector<f64>,
}

struct Layout {
    g: usize,
    s: usize,
}

impl Layout {
    fn phi(&self) -> usize {
        0
    }
    fn u(&self) -> usize {
        self.g * self.g
    }
    fn d(&self) -> usize {
        2 * self.g * self.g
    }
    fn gm(&self) -> usize {
        self.d() + self.g
    }
    fn region(&self, r: usize) -> usize {
        self.gm() + self.g * self.s + r * self.region_len()
    }
    fn region_len(&self) -> usize {
        2 + self.g + self.s
    }
    fn len(&self) -> usize {
        self.region(self.g)
    }
}

fn mat(y: &[f64], off: usize, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(r, c, &y[off..off + r * c])
}

fn vecn(y: &[f64], off: usize, n: usize) -> DVector<f64> {
    DVector::from_column_slice(&y[off..off + n])
}

fn put(out: &mut [f64], off: usize, src: &[f64]) {
    out[off..off + src.len()].copy_from_slice(src);
}

struct Sweep<'a> {
    cfg: &'a ScenarioConfig,
    lay: Layout,
    m: DMatrix<f64>,
    l: DMatrix<f64>,
    pi: DVector<f64>,
    rates: DVector<f64>,
    sources: Vec<OUParams>,
    lambda_r: f64,
    /// Demand charge each region's individual node optimizes against.
    individual_k: Vec<f64>,
}

impl Sweep<'_> {
    fn response(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.sources.len(), self.sources.iter().map(|ou| seasonal_response(ou, t)))
    }

    fn terminal(&self) -> Vec<f64> {
        let g = self.lay.g;
        let b2 = self.cfg.storage.b2;
        let b1 = self.cfg.storage.b1;
        let mut y = vec![0.0; self.lay.len()];
        put(&mut y, self.lay.phi(), (DMatrix::<f64>::identity(g, g) * b2).as_slice());
        put(&mut y, self.lay.u(), DMatrix::<f64>::identity(g, g).as_slice());
        put(&mut y, self.lay.d(), &vec![-b1; g]);
        for r in 0..g {
            y[self.lay.region(r)] = -b1;
        }
        y
    }

    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let (g, s) = (self.lay.g, self.lay.s);
        let st = &self.cfg.storage;
        let p0 = self.cfg.pricing.p0;
        let w = self.cfg.pricing.prosumer_weight;
        let lr = self.lambda_r;
        let phi = mat(y, self.lay.phi(), g, g);
        let u = mat(y, self.lay.u(), g, g);
        let d = vecn(y, self.lay.d(), g);
        let gm = mat(y, self.lay.gm(), g, s);
        let h = self.response(t);

        let a = &phi * &self.m;
        let b_det = DVector::from_element(g, p0) + &self.l * &h;
        let dphi = -(&a * &phi) - DMatrix::<f64>::identity(g, g) * st.a2;
        let du = -(&a * &u);
        let d_plus_b = &d + &b_det;
        let dd = -(&a * &d_plus_b) - DVector::from_element(g, st.a1);
        let dg = -(&a * &gm) + &gm * DMatrix::from_diagonal(&self.rates) - &a * &self.l;
        put(out, self.lay.phi(), dphi.as_slice());
        put(out, self.lay.u(), du.as_slice());
        put(out, self.lay.d(), dd.as_slice());
        put(out, self.lay.gm(), dg.as_slice());

        let m_phi = &self.m * &phi;
        let m_db = &self.m * &d_plus_b;
        let m_gl = &self.m * (&gm + &self.l);
        let beta_s = m_phi.tr_mul(&self.pi) * (lr * w);
        let mut beta_x = m_gl.tr_mul(&self.pi) * (lr * w);
        beta_x[0] -= lr;
        for j in 0..g {
            beta_x[j + 1] -= lr * w * self.pi[j];
        }
        let common0 = p0 - lr * (h[0] + w * self.pi.dot(&h.rows(1, g))) + lr * w * self.pi.dot(&m_db);

        for (r, &k) in self.individual_k.iter().enumerate() {
            let off = self.lay.region(r);
            let delta = 1.0 / (st.c + k);
            let kappa = delta * scalar_riccati(st.a2, delta, st.b2, self.cfg.grid.horizon, t);
            let e = y[off];
            let eta_s = vecn(y, off + 1, g);
            let eta_x = vecn(y, off + 1 + g, s);
            let theta = y[off + 1 + g + s];
            let beta0 = common0 - k * h[r + 1];
            out[off] = kappa * e + kappa * beta0 - st.a1 - eta_s.dot(&m_db);
            let ds = &eta_s * kappa + &beta_s * kappa - m_phi.tr_mul(&eta_s);
            let dx = &eta_x * kappa + &beta_x * kappa - m_gl.tr_mul(&eta_s) + self.rates.component_mul(&eta_x);
            put(out, off + 1, ds.as_slice());
            put(out, off + 1 + g, dx.as_slice());
            out[off + 1 + g + s] = (kappa + self.rates[r + 1]) * theta - kappa * k;
        }
    }

    fn stiffness(&self) -> f64 {
        let st = &self.cfg.storage;
        let norm_inf = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let m_norm = norm_inf(&self.m);
        let mode_norm = self.m.clone().try_inverse().map(|x| norm_inf(&x)).unwrap_or(0.0);
        let phi_max = st.b2.max((st.a2 * mode_norm).sqrt());
        let riccati = 2.0 * phi_max * m_norm;
        let individual = self
            .individual_k
            .iter()
            .map(|k| {
                let delta = 1.0 / (st.c + k);
                delta * st.b2.max((st.a2 / delta).sqrt())
            })
            .fold(0.0, f64::max);
        let a_max = self.rates.iter().fold(0.0f64, |x, y| x.max(y.abs()));
        riccati + individual + a_max + 1.0
    }
}

impl Policy {
    pub fn build(cfg: &ScenarioConfig, mode: GameMode) -> Result<Self, SolverError> {
        let lambda = effective_slope(mode, &cfg.pricing);
        Self::build_with(cfg, mode, lambda, lambda)
    }

    /// Same population plan as `build`, but individual nodes respond to the
    /// price slope `p1` of a price taker.
    pub fn price_taker(cfg: &ScenarioConfig, mode: GameMode) -> Result<Self, SolverError> {
        Self::build_with(cfg, mode, effective_slope(mode, &cfg.pricing), cfg.pricing.p1)
    }

    pub fn build_with(
        cfg: &ScenarioConfig,
        mode: GameMode,
        plan_lambda: f64,
        response_lambda: f64,
    ) -> Result<Self, SolverError> {
        let ks: Vec<f64> = cfg.regions.iter().map(|r| r.demand_charge).collect();
        Self::build_individual(cfg, mode, plan_lambda, response_lambda, &ks)
    }

    /// Equilibrium population plan of `mode`, with individual nodes optimizing
    /// against the demand charges `individual_k` instead of the scenario's.
    pub fn build_individual(
        cfg: &ScenarioConfig,
        mode: GameMode,
        plan_lambda: f64,
        response_lambda: f64,
        individual_k: &[f64],
    ) -> Result<Self, SolverError> {
        if individual_k.len() != cfg.num_regions() {
            return Err(SolverError::InvalidConfig("one individual demand charge per region expected".into()));
        }
        let matrices = InteractionMatrices::with_slope(cfg, plan_lambda)?;
        let g = cfg.num_regions();
        let sources = cfg.sources();
        let sweep = Sweep {
            cfg,
            lay: Layout { g, s: g + 1 },
            m: matrices.m.clone(),
            l: driver_matrix(cfg, plan_lambda),
            pi: DVector::from_vec(cfg.weights()),
            rates: DVector::from_iterator(g + 1, sources.iter().map(|o| o.a)),
            sources,
            lambda_r: response_lambda,
            individual_k: individual_k.to_vec(),
        };
        let grid = cfg.grid;
        let n = grid.steps;
        let h = grid.dt();
        let substeps = ((h * sweep.stiffness() / STEP_STIFFNESS).ceil() as usize).max(1);
        let hf = h / substeps as f64;
        let nf = n * substeps;

        let len = sweep.lay.len();
        let mut states: Vec<Vec<f64>> = vec![Vec::new(); nf + 1];
        let mut y = sweep.terminal();
        states[nf] = y.clone();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        let mut tmp = vec![0.0; len];
        for i in (0..nf).rev() {
            let t = if i + 1 == nf { grid.horizon } else { grid.horizon * (i + 1) as f64 / nf as f64 };
            sweep.rhs(t, &y, &mut k1);
            axpy(&mut tmp, &y, -0.5 * hf, &k1);
            sweep.rhs(t - 0.5 * hf, &tmp, &mut k2);
            axpy(&mut tmp, &y, -0.5 * hf, &k2);
            sweep.rhs(t - 0.5 * hf, &tmp, &mut k3);
            axpy(&mut tmp, &y, -hf, &k3);
            sweep.rhs(t - hf, &tmp, &mut k4);
            for j in 0..len {
                y[j] -= hf / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]);
            }
            states[i] = y.clone();
        }

        let lay = &sweep.lay;
        let s = lay.s;
        let times: Vec<f64> = (0..=nf).map(|i| if i == nf { grid.horizon } else { grid.horizon * i as f64 / nf as f64 }).collect();
        let fine = FineTrajectory {
            substeps,
            phi: states.iter().map(|y| mat(y, lay.phi(), g, g)).collect(),
            u: states.iter().map(|y| mat(y, lay.u(), g, g)).collect(),
            d: states.iter().map(|y| vecn(y, lay.d(), g)).collect(),
            g: states.iter().map(|y| mat(y, lay.gm(), g, s)).collect(),
            times,
        };

        let at_grid = |k: usize| &states[k * substeps];
        let b2 = cfg.storage.b2;
        let id = DMatrix::<f64>::identity(g, g);
        let phi_grid: Vec<DMatrix<f64>> = (0..=n).map(|k| mat(at_grid(k), lay.phi(), g, g)).collect();
        let mut phi_bar: Vec<DMatrix<f64>> = phi_grid.iter().map(|p| p - &id * b2).collect();
        phi_bar[n] = DMatrix::zeros(g, g);
        let riccati = MeanFieldRiccati {
            grid,
            phi_bar,
            u: (0..=n).map(|k| mat(at_grid(k), lay.u(), g, g)).collect(),
        };
        let d: Vec<DVector<f64>> = (0..=n).map(|k| vecn(at_grid(k), lay.d(), g)).collect();
        let gmat: Vec<DMatrix<f64>> = (0..=n).map(|k| mat(at_grid(k), lay.gm(), g, s)).collect();
        let response: Vec<DVector<f64>> = grid.times().iter().map(|&t| sweep.response(t)).collect();
        let p0 = DVector::from_element(g, cfg.pricing.p0);
        let alpha_s = phi_grid.iter().map(|p| &sweep.m * p).collect();
        let alpha_0 = (0..=n).map(|k| &sweep.m * (&d[k] + &p0 + &sweep.l * &response[k])).collect();
        let alpha_x = gmat.iter().map(|gk| &sweep.m * (gk + &sweep.l)).collect();

        let regions = individual_k
            .iter()
            .enumerate()
            .map(|(r, &k)| {
                let off = lay.region(r);
                let delta = 1.0 / (cfg.storage.c + k);
                let st = &cfg.storage;
                RegionCoefficients {
                    delta,
                    demand_charge: k,
                    phi: grid.times().iter().map(|&t| scalar_riccati(st.a2, delta, st.b2, grid.horizon, t)).collect(),
                    e: (0..=n).map(|k| at_grid(k)[off]).collect(),
                    eta_s: (0..=n).map(|k| vecn(at_grid(k), off + 1, g)).collect(),
                    eta_x: (0..=n).map(|k| vecn(at_grid(k), off + 1 + g, s)).collect(),
                    theta: (0..=n).map(|k| at_grid(k)[off + 1 + g + s]).collect(),
                }
            })
            .collect();

        let mut exponential = ExponentialCheck::default();
        for k in (0..=n).step_by(EXPONENTIAL_STRIDE) {
            let t = grid.time(k);
            match block_exponential_phi(&sweep.m, cfg.storage.a2, b2, grid.horizon - t) {
                Some(reference) => {
                    let diff = (&reference - &riccati.phi_bar[k]).amax();
                    let mismatch = diff / (1.0 + riccati.phi_bar[k].amax());
                    exponential.checked.push((t, mismatch));
                    if mismatch > EXPONENTIAL_TOLERANCE {
                        return Err(SolverError::ExponentialMismatch { t, mismatch });
                    }
                }
                None => exponential.skipped.push(t),
            }
        }

        let initial_storage_mean = DVector::from_iterator(g, cfg.regions.iter().map(|r| r.initial_storage.mean()));
        Ok(Self {
            mode,
            cfg: cfg.clone(),
            grid,
            matrices,
            response_lambda,
            driver: sweep.l.clone(),
            rates: sweep.rates.clone(),
            response,
            riccati,
            d,
            g: gmat,
            alpha_s,
            alpha_0,
            alpha_x,
            regions,
            fine,
            exponential,
            initial_storage_mean,
        })
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// Source deviations `X_k = (Q0, Qbar) - H(t_k)`.
    pub fn deviation(&self, k: usize, q0: f64, qbar: &[f64]) -> DVector<f64> {
        let h = &self.response[k];
        DVector::from_iterator(qbar.len() + 1, std::iter::once(q0 - h[0]).chain(qbar.iter().enumerate().map(|(j, q)| q - h[j + 1])))
    }
}

fn axpy(out: &mut [f64], y: &[f64], a: f64, x: &[f64]) {
    for ((o, yi), xi) in out.iter_mut().zip(y).zip(x) {
        *o = yi + a * xi;
    }
}
