//! Geodesics between point pairs and the world function built on them.
//!
//! The two-point connecting geodesic comes from shooting: Newton iteration
//! on the initial velocity, with the exact Jacobian obtained by integrating
//! the variational equations alongside the flow. That Jacobian is reused
//! twice, first for the Newton step and then for the transport map and the
//! van Vleck determinant, with no finite differencing of endpoints.
//!
//! Conventions: the geodesic is affinely parametrized on [0, 1] with
//! `gamma(0) = x`, `gamma(1) = y`. The world function is
//! `sigma(x, y) = (1/2) int_0^1 g(gdot, gdot) ds`, its index-raised
//! gradients are `grad1 = -gdot(0)` at `x` and `grad2 = +gdot(1)` at `y`,
//! and the transport map satisfies `transport * grad1 = -grad2`.

use crate::error::{Error, Result};
use crate::geometry::curvature::{christoffel_raw, d_christoffel_raw};
use crate::geometry::metric::MetricChart;
use crate::linalg::{bilinear, inverse, mat_mul, norm, solve, sub, transpose, Mat4, Vec4};
use crate::ode;

#[derive(Clone, Copy, Debug)]
pub struct BvpOptions {
    /// Macro steps of the extrapolated integrator over [0, 1].
    pub macro_steps: usize,
    /// Extrapolation levels per macro step (order = 2 * levels).
    pub levels: usize,
    /// Endpoint residual tolerance relative to the chart extent.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions { macro_steps: 12, levels: 4, newton_tol: 1e-12, max_newton: 25 }
    }
}

#[derive(Clone, Debug)]
pub struct Geodesic {
    pub x: Vec4,
    pub y: Vec4,
    /// Initial velocity `gdot(0)`.
    pub v0: Vec4,
    /// Final velocity `gdot(1)`.
    pub v1: Vec4,
    /// `(s, position, velocity)` at the macro nodes, s from 0 to 1.
    pub nodes: Vec<(f64, Vec4, Vec4)>,
    /// Sensitivity of the endpoint to the initial velocity,
    /// `jac[mu][k] = d gamma^mu(1) / d v0^k`.
    pub jac: Mat4,
    pub endpoint_residual: f64,
    pub newton_iters: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct WorldFunction {
    pub sigma: f64,
    /// Index-raised first-slot gradient at `x`.
    pub grad1: Vec4,
    /// Index-raised second-slot gradient at `y`.
    pub grad2: Vec4,
    /// Tangent map `T_x M -> T_y M`, rows at `y`, columns at `x`.
    pub transport: Mat4,
    /// Relative variation of g(gdot, gdot) along the path; a geodesic
    /// quality indicator, zero in exact arithmetic.
    pub speed_drift: f64,
}

/// Geodesic flow on the 8-dimensional (position, velocity) state.
fn flow_rhs(chart: &MetricChart, state: &[f64; 8]) -> [f64; 8] {
    let x: Vec4 = [state[0], state[1], state[2], state[3]];
    let v: Vec4 = [state[4], state[5], state[6], state[7]];
    let gamma = christoffel_raw(chart, &x);
    let mut out = [0.0; 8];
    out[..4].copy_from_slice(&v);
    for mu in 0..4 {
        let mut a = 0.0;
        for al in 0..4 {
            for be in 0..4 {
                a -= gamma[mu][al][be] * v[al] * v[be];
            }
        }
        out[4 + mu] = a;
    }
    out
}

/// Flow plus variational equations for the endpoint Jacobian.
/// Layout: x(0..4), v(4..8), Jx(8..24), Jv(24..40), both row-major with
/// `J[mu][k]` the sensitivity of component mu to `v0^k`.
fn augmented_rhs(chart: &MetricChart, state: &[f64; 40]) -> [f64; 40] {
    let x: Vec4 = [state[0], state[1], state[2], state[3]];
    let v: Vec4 = [state[4], state[5], state[6], state[7]];
    let gamma = christoffel_raw(chart, &x);
    let dgamma = d_christoffel_raw(chart, &x);
    let mut out = [0.0; 40];
    out[..4].copy_from_slice(&v);
    for mu in 0..4 {
        let mut a = 0.0;
        for al in 0..4 {
            for be in 0..4 {
                a -= gamma[mu][al][be] * v[al] * v[be];
            }
        }
        out[4 + mu] = a;
    }
    // dJx/ds = Jv
    for idx in 0..16 {
        out[8 + idx] = state[24 + idx];
    }
    // dJv^mu_k = -dGamma^mu_{al be, rho} v^al v^be Jx^rho_k - 2 Gamma^mu_{al be} v^al Jv^be_k
    for mu in 0..4 {
        for k in 0..4 {
            let mut a = 0.0;
            for al in 0..4 {
                for be in 0..4 {
                    let vv = v[al] * v[be];
                    if vv != 0.0 {
                        for rho in 0..4 {
                            a -= dgamma[rho][mu][al][be] * vv * state[8 + 4 * rho + k];
                        }
                    }
                    // fold the second term into the same loops: only al runs
                }
            }
            for al in 0..4 {
                for be in 0..4 {
                    a -= 2.0 * gamma[mu][al][be] * v[al] * state[24 + 4 * be + k];
                }
            }
            out[24 + 4 * mu + k] = a;
        }
    }
    out
}

fn finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Solves the two-point boundary value problem by single shooting from the
/// straight-line initial guess, which is reliable inside a normal
/// neighborhood.
pub fn solve_geodesic(chart: &MetricChart, x: &Vec4, y: &Vec4, opts: &BvpOptions) -> Result<Geodesic> {
    chart.check_contains(x)?;
    chart.check_contains(y)?;
    let scale = chart.extent().max(norm(&sub(y, x)));
    let tol = opts.newton_tol * scale;
    let mut v0 = sub(y, x);
    let mut last_res = f64::INFINITY;
    let mut jac = crate::linalg::identity();
    let mut iters = 0;
    let rhs = |_s: f64, st: &[f64; 40]| augmented_rhs(chart, st);
    for it in 0..opts.max_newton {
        iters = it + 1;
        let mut state = [0.0f64; 40];
        state[..4].copy_from_slice(x);
        state[4..8].copy_from_slice(&v0);
        for k in 0..4 {
            state[24 + 4 * k + k] = 1.0;
        }
        let end = ode::integrate_fixed(&rhs, 0.0, &state, 1.0, opts.macro_steps, opts.levels);
        if !finite(&end) {
            return Err(Error::Geodesic(format!(
                "flow left the regular region between {x:?} and {y:?}"
            )));
        }
        let endpoint: Vec4 = [end[0], end[1], end[2], end[3]];
        let f = sub(&endpoint, y);
        let res = norm(&f);
        jac = std::array::from_fn(|mu| std::array::from_fn(|k| end[8 + 4 * mu + k]));
        if res < tol {
            last_res = res;
            break;
        }
        if res > 10.0 * last_res.max(scale) {
            return Err(Error::Geodesic(format!(
                "shooting diverged at iteration {it} (residual {res:.3e})"
            )));
        }
        last_res = res;
        let dv = solve(&jac, &f).ok_or_else(|| {
            Error::Geodesic("singular endpoint sensitivity; pair may be conjugate".into())
        })?;
        for mu in 0..4 {
            v0[mu] -= dv[mu];
        }
        if it + 1 == opts.max_newton {
            return Err(Error::Geodesic(format!(
                "no convergence after {} iterations (residual {res:.3e})",
                opts.max_newton
            )));
        }
    }

    // Final pass storing the macro-node path on the plain flow.
    let mut st8 = [0.0f64; 8];
    st8[..4].copy_from_slice(x);
    st8[4..].copy_from_slice(&v0);
    let rhs8 = |_s: f64, st: &[f64; 8]| flow_rhs(chart, st);
    let path = ode::integrate_fixed_path(&rhs8, 0.0, &st8, 1.0, opts.macro_steps, opts.levels);
    let nodes: Vec<(f64, Vec4, Vec4)> = path
        .iter()
        .map(|(s, st)| {
            (
                *s,
                [st[0], st[1], st[2], st[3]],
                [st[4], st[5], st[6], st[7]],
            )
        })
        .collect();
    let v1 = nodes.last().unwrap().2;
    Ok(Geodesic {
        x: *x,
        y: *y,
        v0,
        v1,
        nodes,
        jac,
        endpoint_residual: last_res,
        newton_iters: iters,
    })
}

/// World function data from a solved geodesic.
pub fn world_function(chart: &MetricChart, geo: &Geodesic) -> WorldFunction {
    // sigma as the path integral of the conserved speed; trapezoid over the
    // macro nodes keeps the identity tests sensitive to integration quality.
    let speeds: Vec<f64> = geo
        .nodes
        .iter()
        .map(|(_, p, v)| bilinear(&chart.metric_raw(p), v, v))
        .collect();
    let n = speeds.len();
    let mut integral = 0.0;
    for k in 0..n - 1 {
        let ds = geo.nodes[k + 1].0 - geo.nodes[k].0;
        integral += 0.5 * (speeds[k] + speeds[k + 1]) * ds;
    }
    let sigma = 0.5 * integral;
    let vmax = speeds.iter().fold(0.0f64, |a, &s| a.max(s.abs()));
    let vscale = geo
        .nodes
        .iter()
        .map(|(_, _, v)| crate::linalg::dot(v, v))
        .fold(0.0f64, f64::max);
    let smin = speeds.iter().fold(f64::INFINITY, |a, &s| a.min(s));
    let smax = speeds.iter().fold(f64::NEG_INFINITY, |a, &s| a.max(s));
    let speed_drift = (smax - smin) / vmax.max(vscale).max(1e-300);

    let grad1 = crate::linalg::scale(&geo.v0, -1.0);
    let grad2 = geo.v1;

    let gx = chart.metric_raw(&geo.x);
    let gy = chart.metric_raw(&geo.y);
    let gy_inv = inverse(&gy).expect("metric invertible");
    let jac_inv_t = transpose(&inverse(&geo.jac).expect("endpoint sensitivity invertible"));
    let transport = mat_mul(&gy_inv, &mat_mul(&jac_inv_t, &gx));

    WorldFunction { sigma, grad1, grad2, transport, speed_drift }
}

/// Convenience wrapper solving the pair and assembling the world function.
pub fn solve_world_function(
    chart: &MetricChart,
    x: &Vec4,
    y: &Vec4,
    opts: &BvpOptions,
) -> Result<(Geodesic, WorldFunction)> {
    let geo = solve_geodesic(chart, x, y, opts)?;
    let wf = world_function(chart, &geo);
    Ok((geo, wf))
}

/// Position and velocity at parameter `s`, also outside [0, 1], by
/// integrating the flow from the nearest stored node.
pub fn point_at(chart: &MetricChart, geo: &Geodesic, s: f64) -> (Vec4, Vec4) {
    let rhs8 = |_t: f64, st: &[f64; 8]| flow_rhs(chart, st);
    // Nearest node not past s in integration direction.
    let mut best = &geo.nodes[0];
    for n in geo.nodes.iter() {
        if (n.0 - s).abs() < (best.0 - s).abs() {
            best = n;
        }
    }
    let (s0, p, v) = best;
    if (s - s0).abs() < 1e-15 {
        return (*p, *v);
    }
    let mut st = [0.0f64; 8];
    st[..4].copy_from_slice(p);
    st[4..].copy_from_slice(v);
    let steps = (2.0 + 8.0 * (s - s0).abs()).ceil() as usize;
    let end = ode::integrate_fixed(&rhs8, *s0, &st, s, steps, 4);
    ([end[0], end[1], end[2], end[3]], [end[4], end[5], end[6], end[7]])
}

/// First-order response of the geodesic state at an interior parameter to
/// displacements of the two endpoints, under the fixed-endpoint boundary
/// condition. Row index is the state component, column the endpoint
/// component: `dvel_dx[mu][nu] = d gdot^mu(c) / d x^nu`.
#[derive(Clone, Copy, Debug)]
pub struct EndpointSensitivity {
    pub pos_c: Vec4,
    pub vel_c: Vec4,
    pub dpos_dx: Mat4,
    pub dpos_dy: Mat4,
    pub dvel_dx: Mat4,
    pub dvel_dy: Mat4,
}

/// Flow plus the full 8x8 fundamental matrix of the variational equations.
/// Layout: x(0..4), v(4..8), then Phi column-major in blocks of 8 with
/// `Phi[i][j] = state[8 + 8*j + i]`; columns are initial (dx, dv0) basis
/// directions, rows the propagated (dgamma, dgdot).
fn fundamental_rhs(chart: &MetricChart, state: &[f64; 72]) -> [f64; 72] {
    let x: Vec4 = [state[0], state[1], state[2], state[3]];
    let v: Vec4 = [state[4], state[5], state[6], state[7]];
    let gamma = christoffel_raw(chart, &x);
    let dgamma = d_christoffel_raw(chart, &x);
    let mut out = [0.0; 72];
    out[..4].copy_from_slice(&v);
    for mu in 0..4 {
        let mut a = 0.0;
        for al in 0..4 {
            for be in 0..4 {
                a -= gamma[mu][al][be] * v[al] * v[be];
            }
        }
        out[4 + mu] = a;
    }
    for j in 0..8 {
        let col = 8 + 8 * j;
        for i in 0..4 {
            out[col + i] = state[col + 4 + i];
        }
        for mu in 0..4 {
            let mut a = 0.0;
            for al in 0..4 {
                for be in 0..4 {
                    let vv = v[al] * v[be];
                    if vv != 0.0 {
                        for rho in 0..4 {
                            a -= dgamma[rho][mu][al][be] * vv * state[col + rho];
                        }
                    }
                }
            }
            for al in 0..4 {
                for be in 0..4 {
                    a -= 2.0 * gamma[mu][al][be] * v[al] * state[col + 4 + be];
                }
            }
            out[col + 4 + mu] = a;
        }
    }
    out
}

fn phi_blocks(state: &[f64; 72]) -> (Mat4, Mat4, Mat4, Mat4) {
    let get = |i: usize, j: usize| state[8 + 8 * j + i];
    let px: Mat4 = std::array::from_fn(|i| std::array::from_fn(|j| get(i, j)));
    let pv: Mat4 = std::array::from_fn(|i| std::array::from_fn(|j| get(i, 4 + j)));
    let vx: Mat4 = std::array::from_fn(|i| std::array::from_fn(|j| get(4 + i, j)));
    let vv: Mat4 = std::array::from_fn(|i| std::array::from_fn(|j| get(4 + i, 4 + j)));
    (px, pv, vx, vv)
}

/// Exact (to integrator tolerance) derivatives of the interior state at
/// parameter `c` with respect to both endpoints, by one pass of the
/// fundamental matrix along the stored solution and elimination of the
/// initial velocity through the endpoint constraint. No finite differences
/// of re-solved pairs, so the result is smooth under pair perturbations at
/// roundoff level.
pub fn endpoint_sensitivity(
    chart: &MetricChart,
    geo: &Geodesic,
    c: f64,
    macro_steps: usize,
    levels: usize,
) -> Result<EndpointSensitivity> {
    let rhs = |_s: f64, st: &[f64; 72]| fundamental_rhs(chart, st);
    let mut st = [0.0f64; 72];
    st[..4].copy_from_slice(&geo.x);
    st[4..8].copy_from_slice(&geo.v0);
    for j in 0..8 {
        st[8 + 8 * j + j] = 1.0;
    }
    let steps_c = ((macro_steps as f64) * c.abs()).ceil().max(2.0) as usize;
    let at_c = ode::integrate_fixed(&rhs, 0.0, &st, c, steps_c, levels);
    let steps_tail = ((macro_steps as f64) * (1.0 - c).abs()).ceil().max(2.0) as usize;
    let at_one = ode::integrate_fixed(&rhs, c, &at_c, 1.0, steps_tail, levels);
    if !finite(&at_c) || !finite(&at_one) {
        return Err(Error::Geodesic(
            "variational flow left the regular region".into(),
        ));
    }
    let (pxc, pvc, vxc, vvc) = phi_blocks(&at_c);
    let (px1, pv1, _, _) = phi_blocks(&at_one);
    let pv1_inv = inverse(&pv1).ok_or_else(|| {
        Error::Geodesic("singular endpoint sensitivity; pair may be conjugate".into())
    })?;
    // dv0 = pv1^{-1} (dy - px1 dx), propagated to c through the blocks.
    let feed = mat_mul(&pv1_inv, &px1);
    let dpos_dx = crate::linalg::mat_sub(&pxc, &mat_mul(&pvc, &feed));
    let dpos_dy = mat_mul(&pvc, &pv1_inv);
    let dvel_dx = crate::linalg::mat_sub(&vxc, &mat_mul(&vvc, &feed));
    let dvel_dy = mat_mul(&vvc, &pv1_inv);
    Ok(EndpointSensitivity {
        pos_c: [at_c[0], at_c[1], at_c[2], at_c[3]],
        vel_c: [at_c[4], at_c[5], at_c[6], at_c[7]],
        dpos_dx,
        dpos_dy,
        dvel_dx,
        dvel_dy,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SigmaResiduals {
    /// `|2 sigma - g_x(grad1, grad1)|` over a pair scale.
    pub first_slot: f64,
    /// `|2 sigma - g_y(grad2, grad2)|` over the same scale.
    pub second_slot: f64,
    /// `|transport * grad1 + grad2|` over the gradient scale.
    pub eikonal: f64,
}

/// Defining identity residuals of the world function, all relative.
pub fn identity_residuals(chart: &MetricChart, geo: &Geodesic, wf: &WorldFunction) -> SigmaResiduals {
    let gx = chart.metric_raw(&geo.x);
    let gy = chart.metric_raw(&geo.y);
    let q1 = bilinear(&gx, &wf.grad1, &wf.grad1);
    let q2 = bilinear(&gy, &wf.grad2, &wf.grad2);
    let scale = (2.0 * wf.sigma)
        .abs()
        .max(crate::linalg::dot(&wf.grad1, &wf.grad1))
        .max(crate::linalg::dot(&wf.grad2, &wf.grad2))
        .max(1e-300);
    let mapped = crate::linalg::mat_vec(&wf.transport, &wf.grad1);
    let eik_num = norm(&crate::linalg::add(&mapped, &wf.grad2));
    let eik_scale = norm(&wf.grad2).max(norm(&wf.grad1)).max(1e-300);
    SigmaResiduals {
        first_slot: (2.0 * wf.sigma - q1).abs() / scale,
        second_slot: (2.0 * wf.sigma - q2).abs() / scale,
        eikonal: eik_num / eik_scale,
    }
}

/// First-slot gradient by endpoint finite differences; a cross-check used
/// by the test suites, never by the pipeline itself.
pub fn grad1_fd(chart: &MetricChart, x: &Vec4, y: &Vec4, opts: &BvpOptions, h: f64) -> Result<Vec4> {
    let mut grad_low = [0.0f64; 4];
    for mu in 0..4 {
        let mut vals = [0.0f64; 4];
        for (i, d) in [-2.0 * h, -h, h, 2.0 * h].iter().enumerate() {
            let mut xs = *x;
            xs[mu] += d;
            let (geo, wf) = solve_world_function(chart, &xs, y, opts)?;
            let _ = geo;
            vals[i] = wf.sigma;
        }
        grad_low[mu] = (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h);
    }
    let ginv = chart.inverse_metric_raw(x);
    Ok(crate::geometry::raise(&ginv, &grad_low))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn flat_pair_check(x: Vec4, y: Vec4) {
        let chart = MetricChart::minkowski();
        let opts = BvpOptions::default();
        let (geo, wf) = solve_world_function(&chart, &x, &y, &opts).unwrap();
        let xi = sub(&y, &x);
        let eta = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
        ];
        let sig = 0.5 * bilinear(&eta, &xi, &xi);
        assert!((wf.sigma - sig).abs() < 1e-12, "{} vs {sig}", wf.sigma);
        for mu in 0..4 {
            assert!((wf.grad1[mu] + xi[mu]).abs() < 1e-12);
            assert!((wf.grad2[mu] - xi[mu]).abs() < 1e-12);
            for nu in 0..4 {
                let want = if mu == nu { 1.0 } else { 0.0 };
                assert!((wf.transport[mu][nu] - want).abs() < 1e-12);
                assert!((geo.jac[mu][nu] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn minkowski_closed_forms() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let x: Vec4 = std::array::from_fn(|_| rng.gen_range(-0.4..0.4));
            let d: Vec4 = std::array::from_fn(|_| rng.gen_range(-0.25..0.25));
            let y = crate::linalg::add(&x, &d);
            flat_pair_check(x, y);
        }
    }

    #[test]
    fn curved_identities_hold() {
        let charts = [MetricChart::de_sitter(0.35), MetricChart::schwarzschild(1.0)];
        let opts = BvpOptions::default();
        let mut rng = StdRng::seed_from_u64(11);
        for chart in &charts {
            for _ in 0..6 {
                let x: Vec4 = std::array::from_fn(|i| {
                    let (lo, hi) = chart.domain()[i];
                    let c = 0.5 * (lo + hi);
                    let w = 0.5 * (hi - lo);
                    c + rng.gen_range(-0.5..0.5) * w
                });
                let sep = 0.08 * chart.extent();
                let d: Vec4 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let y = crate::linalg::add(&x, &crate::linalg::scale(&d, sep / norm(&d).max(1.0)));
                if !chart.contains(&y) {
                    continue;
                }
                let (geo, wf) = solve_world_function(chart, &x, &y, &opts).unwrap();
                let r = identity_residuals(chart, &geo, &wf);
                assert!(r.first_slot < 1e-8, "{} {r:?}", chart.name());
                assert!(r.second_slot < 1e-8, "{} {r:?}", chart.name());
                assert!(r.eikonal < 1e-8, "{} {r:?}", chart.name());
                assert!(wf.speed_drift < 1e-9, "{}", wf.speed_drift);
            }
        }
    }

    #[test]
    fn gradient_matches_endpoint_differentiation() {
        let chart = MetricChart::de_sitter(0.4);
        let opts = BvpOptions::default();
        let x = [0.1, -0.2, 0.15, 0.3];
        let y = [0.22, 0.01, 0.05, 0.18];
        let (_, wf) = solve_world_function(&chart, &x, &y, &opts).unwrap();
        let fd = grad1_fd(&chart, &x, &y, &opts, 2e-4).unwrap();
        for mu in 0..4 {
            assert!(
                (wf.grad1[mu] - fd[mu]).abs() < 1e-7,
                "mu={mu}: {} vs {}",
                wf.grad1[mu],
                fd[mu]
            );
        }
    }

    #[test]
    fn subsegment_is_affine_reparametrization() {
        let chart = MetricChart::de_sitter(0.45);
        let opts = BvpOptions::default();
        let x = [0.05, 0.1, -0.2, 0.0];
        let y = [0.3, -0.15, 0.1, 0.22];
        let geo = solve_geodesic(&chart, &x, &y, &opts).unwrap();
        let (pa, va) = point_at(&chart, &geo, 0.3);
        let (pb, _) = point_at(&chart, &geo, 0.8);
        let sub_geo = solve_geodesic(&chart, &pa, &pb, &opts).unwrap();
        for mu in 0..4 {
            // v0 of the subsegment equals (b - a) * gdot(a).
            assert!(
                (sub_geo.v0[mu] - 0.5 * va[mu]).abs() < 1e-9,
                "{} vs {}",
                sub_geo.v0[mu],
                0.5 * va[mu]
            );
        }
    }

    #[test]
    fn point_at_hits_endpoints() {
        let chart = MetricChart::schwarzschild(1.0);
        let opts = BvpOptions::default();
        let x = [0.0, 5.0, 1.3, -0.4];
        let y = [0.4, 5.8, 1.5, -0.1];
        let geo = solve_geodesic(&chart, &x, &y, &opts).unwrap();
        let (p1, _) = point_at(&chart, &geo, 1.0);
        let (p0, _) = point_at(&chart, &geo, 0.0);
        assert!(norm(&sub(&p1, &y)) < 1e-10);
        assert!(norm(&sub(&p0, &x)) < 1e-14);
        // Extension beyond the endpoints stays on the same solution curve.
        let (pe, ve) = point_at(&chart, &geo, 1.3);
        let back = ode::integrate_fixed(
            &|_s: f64, st: &[f64; 8]| super::flow_rhs(&chart, st),
            1.3,
            &{
                let mut st = [0.0; 8];
                st[..4].copy_from_slice(&pe);
                st[4..].copy_from_slice(&ve);
                st
            },
            1.0,
            4,
            4,
        );
        assert!(norm(&sub(&[back[0], back[1], back[2], back[3]], &y)) < 1e-10);
    }

    #[test]
    fn endpoint_sensitivity_matches_differenced_interior_state() {
        let chart = MetricChart::de_sitter(0.4);
        let opts = BvpOptions::default();
        let x = [0.05, 0.1, -0.2, 0.0];
        let y = [0.4, -0.1, 0.1, 0.2];
        let c = 0.4;
        let geo = solve_geodesic(&chart, &x, &y, &opts).unwrap();
        let sens = endpoint_sensitivity(&chart, &geo, c, 12, 4).unwrap();
        let (pc, vc) = point_at(&chart, &geo, c);
        assert!(norm(&sub(&sens.pos_c, &pc)) < 1e-9);
        assert!(norm(&sub(&sens.vel_c, &vc)) < 1e-9);
        let h = 1e-5;
        for nu in 0..4 {
            let probe = |dx: f64, dy: f64| -> (Vec4, Vec4) {
                let mut xs = x;
                let mut ys = y;
                xs[nu] += dx;
                ys[nu] += dy;
                let g = solve_geodesic(&chart, &xs, &ys, &opts).unwrap();
                point_at(&chart, &g, c)
            };
            let (pxp, vxp) = probe(h, 0.0);
            let (pxm, vxm) = probe(-h, 0.0);
            let (pyp, vyp) = probe(0.0, h);
            let (pym, vym) = probe(0.0, -h);
            for mu in 0..4 {
                let fd = (pxp[mu] - pxm[mu]) / (2.0 * h);
                assert!((sens.dpos_dx[mu][nu] - fd).abs() < 1e-6, "dpos_dx[{mu}][{nu}]");
                let fd = (vxp[mu] - vxm[mu]) / (2.0 * h);
                assert!((sens.dvel_dx[mu][nu] - fd).abs() < 1e-6, "dvel_dx[{mu}][{nu}]");
                let fd = (pyp[mu] - pym[mu]) / (2.0 * h);
                assert!((sens.dpos_dy[mu][nu] - fd).abs() < 1e-6, "dpos_dy[{mu}][{nu}]");
                let fd = (vyp[mu] - vym[mu]) / (2.0 * h);
                assert!((sens.dvel_dy[mu][nu] - fd).abs() < 1e-6, "dvel_dy[{mu}][{nu}]");
            }
        }
    }
}
