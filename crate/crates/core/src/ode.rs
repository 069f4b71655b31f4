//! Extrapolated midpoint integration for smooth ODE systems.
//!
//! One macro step runs the modified midpoint rule with 2, 4, 6, 8 substeps
//! and cancels the even error expansion by Neville extrapolation in h^2.
//! With all four levels a single step is eighth order, which keeps the
//! geodesic and transport solves cheap at the tolerances used here.

use crate::error::{Error, Result};

pub const SUBSTEPS: [usize; 4] = [2, 4, 6, 8];

#[derive(Clone, Copy, Debug)]
pub struct StepResult<const N: usize> {
    pub y: [f64; N],
    /// Max-norm difference of the two highest extrapolation orders.
    pub err: f64,
}

fn modified_midpoint<const N: usize, F>(f: &F, t: f64, y: &[f64; N], big_h: f64, n: usize) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let h = big_h / n as f64;
    let mut z_prev = *y;
    let d0 = f(t, y);
    let mut z: [f64; N] = std::array::from_fn(|i| y[i] + h * d0[i]);
    for k in 1..n {
        let d = f(t + k as f64 * h, &z);
        let z_next: [f64; N] = std::array::from_fn(|i| z_prev[i] + 2.0 * h * d[i]);
        z_prev = z;
        z = z_next;
    }
    let d_end = f(t + big_h, &z);
    std::array::from_fn(|i| 0.5 * (z[i] + z_prev[i] + h * d_end[i]))
}

/// One extrapolated step of size `big_h`. `levels` picks how many midpoint
/// refinements enter the Neville table (2..=4); the step is order `2*levels`.
pub fn gbs_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], big_h: f64, levels: usize) -> StepResult<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let levels = levels.clamp(2, SUBSTEPS.len());
    // prev_row[k] holds T[j-1][k]; cur[k] holds T[j][k].
    let mut prev_row: Vec<[f64; N]> = Vec::new();
    let mut err = f64::INFINITY;
    for j in 0..levels {
        let mut cur: Vec<[f64; N]> = Vec::with_capacity(j + 1);
        cur.push(modified_midpoint(f, t, y, big_h, SUBSTEPS[j]));
        for k in 1..=j {
            let ratio = (SUBSTEPS[j] as f64 / SUBSTEPS[j - k] as f64).powi(2);
            let a = cur[k - 1];
            let b = prev_row[k - 1];
            cur.push(std::array::from_fn(|i| a[i] + (a[i] - b[i]) / (ratio - 1.0)));
        }
        if j > 0 {
            let diag = cur[j];
            let sub = cur[j - 1];
            err = (0..N).map(|i| (diag[i] - sub[i]).abs()).fold(0.0, f64::max);
        }
        prev_row = cur;
    }
    StepResult { y: prev_row[levels - 1], err }
}

/// Integrates from `t0` to `t1` with a fixed number of equal macro steps.
/// Deterministic work per call; the workhorse for boundary value iteration.
pub fn integrate_fixed<const N: usize, F>(
    f: &F,
    t0: f64,
    y0: &[f64; N],
    t1: f64,
    macro_steps: usize,
    levels: usize,
) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let n = macro_steps.max(1);
    let h = (t1 - t0) / n as f64;
    let mut y = *y0;
    for k in 0..n {
        y = gbs_step(f, t0 + k as f64 * h, &y, h, levels).y;
    }
    y
}

/// Like `integrate_fixed` but also returns the state at every macro node,
/// including both endpoints.
pub fn integrate_fixed_path<const N: usize, F>(
    f: &F,
    t0: f64,
    y0: &[f64; N],
    t1: f64,
    macro_steps: usize,
    levels: usize,
) -> Vec<(f64, [f64; N])>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let n = macro_steps.max(1);
    let h = (t1 - t0) / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut y = *y0;
    out.push((t0, y));
    for k in 0..n {
        y = gbs_step(f, t0 + k as f64 * h, &y, h, levels).y;
        out.push((t0 + (k + 1) as f64 * h, y));
    }
    out
}

/// Adaptive driver with step rejection. The error test is absolute on the
/// max norm, so callers should scale their state to order one.
pub fn integrate_adaptive<const N: usize, F>(
    f: &F,
    t0: f64,
    y0: &[f64; N],
    t1: f64,
    tol: f64,
) -> Result<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let levels = 4;
    let order = 2.0 * levels as f64;
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(*y0);
    }
    let mut t = t0;
    let mut y = *y0;
    let mut h = span / 8.0;
    let mut steps = 0usize;
    while (span > 0.0 && t < t1) || (span < 0.0 && t > t1) {
        if steps > 100_000 {
            return Err(Error::Ode("step budget exhausted".into()));
        }
        if (span > 0.0 && t + h > t1) || (span < 0.0 && t + h < t1) {
            h = t1 - t;
        }
        let trial = gbs_step(f, t, &y, h, levels);
        steps += 1;
        if !trial.err.is_finite() {
            h *= 0.25;
            if h.abs() < 1e-14 * span.abs() {
                return Err(Error::Ode("step underflow on non-finite error".into()));
            }
            continue;
        }
        if trial.err <= tol {
            t += h;
            y = trial.y;
            let grow = (tol / trial.err.max(1e-300)).powf(1.0 / order);
            h *= 0.8 * grow.min(5.0);
        } else {
            let shrink = (tol / trial.err).powf(1.0 / order);
            h *= (0.8 * shrink).max(0.1);
            if h.abs() < 1e-14 * span.abs() {
                return Err(Error::Ode("step underflow".into()));
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_is_exact_to_order() {
        let f = |_t: f64, y: &[f64; 1]| [y[0]];
        let coarse = integrate_fixed(&f, 0.0, &[1.0], 1.0, 2, 4)[0];
        let fine = integrate_fixed(&f, 0.0, &[1.0], 1.0, 4, 4)[0];
        let e = std::f64::consts::E;
        let err_coarse = (coarse - e).abs();
        let err_fine = (fine - e).abs();
        // Order 8: halving the step should gain roughly 2^8; allow slack.
        assert!(err_fine < err_coarse / 60.0, "{err_coarse} {err_fine}");
        assert!(err_fine < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let y = integrate_fixed(&f, 0.0, &[1.0, 0.0], 20.0, 80, 4);
        let energy = y[0] * y[0] + y[1] * y[1];
        assert!((energy - 1.0).abs() < 1e-9, "{energy}");
        assert!((y[0] - (20.0f64).cos()).abs() < 1e-9);
    }

    #[test]
    fn adaptive_matches_exact() {
        let f = |t: f64, y: &[f64; 1]| [t * y[0]];
        let y = integrate_adaptive(&f, 0.0, &[1.0], 2.0, 1e-12).unwrap()[0];
        assert!((y - (2.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let f = |_t: f64, y: &[f64; 1]| [y[0]];
        let y = integrate_fixed(&f, 1.0, &[std::f64::consts::E], 0.0, 8, 4)[0];
        assert!((y - 1.0).abs() < 1e-12);
    }
}
