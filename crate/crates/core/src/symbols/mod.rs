//! Mass expansion symbols: the one-parameter family of kernel weights
//! `T^(n)` attached to the regularized world function, together with the
//! algebraic and differential identities the family satisfies.
//!
//! `T^(n)(sigma) = -((-2 m^2)^{1-n} / (16 pi^3)) K_{1-n}(z) / z^{1-n}` with
//! `z = m sqrt(-2 sigma)` on the principal branch. The regularization moves
//! `sigma` slightly off the real axis so `z` stays off the branch cut; the
//! purely spacelike case is real and needs no shift.

pub mod bessel;

use crate::error::{Error, Result};
use crate::linalg::C64;
pub use bessel::bessel_k;

/// Degree of `T^(n)` in the mass expansion: homogeneity order `1 - n`.
pub fn t_degree(n: i32) -> i32 {
    1 - n
}

/// Argument `z = m sqrt(-2 sigma)` of the kernel weight, principal branch.
pub fn t_argument(sigma_eps: C64, m: f64) -> C64 {
    (-2.0 * sigma_eps).sqrt() * m
}

/// Kernel weight `T^(n)` at regularized world function value `sigma_eps`.
pub fn t_symbol(n: i32, sigma_eps: C64, m: f64) -> Result<C64> {
    if m <= 0.0 {
        return Err(Error::SpecialFunction(format!("mass {m} must be positive")));
    }
    let nu = t_degree(n);
    let z = t_argument(sigma_eps, m);
    if z.re <= 0.0 {
        return Err(Error::SpecialFunction(format!(
            "kernel argument {z} on the branch cut; regularize sigma = {sigma_eps} off the real axis"
        )));
    }
    let k = bessel_k(nu as f64, z)?;
    let base = -2.0 * m * m;
    let pref = base.powi(nu) / (16.0 * std::f64::consts::PI.powi(3));
    Ok(-pref * k / z.powi(nu))
}

/// Residual of the three-term mass recurrence
/// `-(sigma/2) T^(n-1) = (n-1) T^(n) + m^2 T^(n+1)`, relative to the
/// largest participating magnitude.
pub fn t_recurrence_residual(n: i32, sigma_eps: C64, m: f64) -> Result<f64> {
    let tm = t_symbol(n - 1, sigma_eps, m)?;
    let t0 = t_symbol(n, sigma_eps, m)?;
    let tp = t_symbol(n + 1, sigma_eps, m)?;
    let lhs = -sigma_eps * 0.5 * tm;
    let rhs = (n - 1) as f64 * t0 + m * m * tp;
    let scale = lhs.norm().max(rhs.norm()).max(1e-300);
    Ok((lhs - rhs).norm() / scale)
}

/// Conjugating the regularized world function conjugates the weight.
pub fn t_conjugation_residual(n: i32, sigma_eps: C64, m: f64) -> Result<f64> {
    let a = t_symbol(n, sigma_eps.conj(), m)?;
    let b = t_symbol(n, sigma_eps, m)?.conj();
    Ok((a - b).norm() / b.norm().max(1e-300))
}

/// Flat-chart pair model used by the finite difference identity checks: the
/// regularized world function of a pair whose separation has time component
/// `tau - i eps`, evaluated at a point displaced from the first endpoint.
#[derive(Clone, Copy, Debug)]
pub struct FlatPairModel {
    /// Separation `y - x` of the base pair.
    pub xi: [f64; 4],
    pub eps: f64,
}

impl FlatPairModel {
    /// Regularized world function as a function of a first-slot displacement.
    pub fn sigma(&self, dx: &[f64; 4]) -> C64 {
        // First-slot displacement shrinks the separation.
        let t = C64::new(self.xi[0] - dx[0], -self.eps);
        let mut s = t * t;
        for i in 1..4 {
            let d = self.xi[i] - dx[i];
            s -= d * d;
        }
        s * 0.5
    }

    /// First-slot gradient with the index lowered, `d sigma / d x^mu`.
    pub fn grad1(&self, dx: &[f64; 4]) -> [C64; 4] {
        let t = C64::new(self.xi[0] - dx[0], -self.eps);
        let mut g = [C64::new(0.0, 0.0); 4];
        g[0] = -t;
        for i in 1..4 {
            g[i] = C64::new(self.xi[i] - dx[i], 0.0);
        }
        g
    }
}

/// Residual of `d_mu T^(n) = -(1/2) (d_mu sigma) T^(n-1)` on the flat pair
/// model, with the left side from central differences of step `h`. Shrinks
/// like `h^2` until roundoff.
pub fn t_derivative_residual(
    n: i32,
    model: &FlatPairModel,
    m: f64,
    h: f64,
) -> Result<f64> {
    let grad = model.grad1(&[0.0; 4]);
    let tm = t_symbol(n - 1, model.sigma(&[0.0; 4]), m)?;
    let mut worst: f64 = 0.0;
    for mu in 0..4 {
        let mut dp = [0.0; 4];
        dp[mu] = h;
        let mut dm = [0.0; 4];
        dm[mu] = -h;
        let fd =
            (t_symbol(n, model.sigma(&dp), m)? - t_symbol(n, model.sigma(&dm), m)?) / (2.0 * h);
        let exact = -0.5 * grad[mu] * tm;
        let scale = exact.norm().max(fd.norm()).max(1e-300);
        worst = worst.max((fd - exact).norm() / scale);
    }
    Ok(worst)
}

/// Residual of the wave identity
/// `(-box - m^2) T^(n) = (n + (box sigma - 4)/2) T^(n-1)` on the flat pair
/// model, where `box sigma = 4` exactly, with the flat d'Alembertian from
/// second differences of step `h`.
pub fn t_wave_residual(n: i32, model: &FlatPairModel, m: f64, h: f64) -> Result<f64> {
    let center = t_symbol(n, model.sigma(&[0.0; 4]), m)?;
    let mut box_t = C64::new(0.0, 0.0);
    for mu in 0..4 {
        let mut dp = [0.0; 4];
        dp[mu] = h;
        let mut dm = [0.0; 4];
        dm[mu] = -h;
        let second = (t_symbol(n, model.sigma(&dp), m)? - 2.0 * center
            + t_symbol(n, model.sigma(&dm), m)?)
            / (h * h);
        if mu == 0 {
            box_t += second;
        } else {
            box_t -= second;
        }
    }
    let lhs = -box_t - m * m * center;
    let rhs = n as f64 * t_symbol(n - 1, model.sigma(&[0.0; 4]), m)?;
    // Scale by the operator pieces, not the right side, which vanishes
    // identically at n = 0.
    let scale = box_t.norm().max(m * m * center.norm()).max(1e-300);
    Ok((lhs - rhs).norm() / scale)
}
