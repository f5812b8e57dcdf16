//! Scalar Riccati closed forms and the block-exponential representation of the
//! matrix Riccati solution.

use nalgebra::DMatrix;

/// Solution of `phi' - delta phi^2 + a2 = 0`, `phi(T) = b2`, at time `t`.
pub fn scalar_riccati(a2: f64, delta: f64, b2: f64, horizon: f64, t: f64) -> f64 {
    let tau = (horizon - t).max(0.0);
    if tau == 0.0 {
        return b2;
    }
    let rho = (a2 * delta).sqrt();
    let r = (rho - b2 * delta) / (rho + b2 * delta);
    let e = (-2.0 * rho * tau).exp();
    rho / delta * (1.0 - r * e) / (1.0 + r * e)
}

/// `exp(-int_t^u delta phi(v) dv)` for the scalar Riccati solution, `t <= u`.
pub fn scalar_kernel(a2: f64, delta: f64, b2: f64, horizon: f64, t: f64, u: f64) -> f64 {
    let rho = (a2 * delta).sqrt();
    let (tau_t, tau_u) = ((horizon - t).max(0.0), (horizon - u).max(0.0));
    let (plus, minus) = (rho + b2 * delta, rho - b2 * delta);
    let num = plus + minus * (-2.0 * rho * tau_u).exp();
    let den = plus + minus * (-2.0 * rho * tau_t).exp();
    (-rho * (tau_t - tau_u)).exp() * num / den
}

/// Long-horizon limit `sqrt(a2 / delta)`.
pub fn scalar_riccati_limit(a2: f64, delta: f64) -> f64 {
    (a2 / delta).sqrt()
}

/// `phi_bar(t)` (terminal value zero) from
/// `-[(0, I) e^{A tau} (0; I)]^{-1} [(0, I) e^{A tau} (I; 0)]` with
/// `A = [B2 M, M; -A2 - B2^2 M, -B2 M]`. `None` when the block is singular.
pub fn block_exponential_phi(m: &DMatrix<f64>, a2: f64, b2: f64, tau: f64) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(m * b2));
    big.view_mut((0, n), (n, n)).copy_from(m);
    big.view_mut((n, 0), (n, n)).copy_from(&(-(&id * a2) - m * (b2 * b2)));
    big.view_mut((n, n), (n, n)).copy_from(&(m * (-b2)));
    let e = (big * tau).exp();
    let lower_right = e.view((n, n), (n, n)).clone_owned();
    let lower_left = e.view((n, 0), (n, n)).clone_owned();
    if lower_right.determinant() <= 0.0 {
        return None;
    }
    lower_right.lu().solve(&lower_left).map(|x| -x)
}
