//! Bi-tensor fields along connecting geodesics: the van Vleck determinant
//! and parallel transport in the spinor bundle.
//!
//! The van Vleck determinant comes from the endpoint sensitivity matrix of
//! the shooting solve, `Delta = det(d y / d v0) * sqrt(|g_y| / |g_x|)`,
//! normalized so that `Delta(x, x) = 1`, `Delta = 1` identically in flat
//! spacetime, and the short-distance expansion of `Delta^{1/2}` carries the
//! Ricci correction `+ (1/12) R_{mu nu} sigma^mu sigma^nu` in this signature
//! and curvature orientation. The literature also uses the reciprocal
//! normalization; the two satisfy radial transport equations of opposite
//! sign, and every formula downstream of this module assumes the `+1/12`
//! branch. Spin transport integrates the parallel transport equation
//! with the spinor connection; the two orientations of a pair are solved as
//! independent initial value problems, so their composition is a real check
//! and not an algebraic identity.

use crate::error::{Error, Result};
use crate::geometry::dirac::{spinor_connection_at, DiracRep};
use crate::geometry::metric::MetricChart;
use crate::geometry::{curvature_at, gamma_at};
use crate::linalg::{
    cfrobenius, cidentity, cmat_mul, csub, czero_mat, det, CMat4, Vec4, C64,
};
use crate::ode;
use crate::worldfunc::{point_at, solve_geodesic, solve_world_function, BvpOptions, Geodesic};

/// Van Vleck determinant of a solved pair.
pub fn van_vleck(chart: &MetricChart, geo: &Geodesic) -> Result<f64> {
    let dj = det(&geo.jac);
    if dj <= 0.0 {
        return Err(Error::Geodesic(format!(
            "endpoint sensitivity determinant {dj:.3e} not positive; pair near conjugate locus"
        )));
    }
    let gx = det(&chart.metric_raw(&geo.x));
    let gy = det(&chart.metric_raw(&geo.y));
    Ok(dj * (gy / gx).abs().sqrt())
}

pub fn van_vleck_sqrt(chart: &MetricChart, geo: &Geodesic) -> Result<f64> {
    Ok(van_vleck(chart, geo)?.sqrt())
}

/// Wave operator of the world function in its first slot,
/// `g^{mu nu} (d_mu d_nu - Gamma^lam_{mu nu} d_lam) sigma`, by finite
/// differences of re-solved pairs around `x`. Equals 4 in flat spacetime.
pub fn box_sigma_first_slot(
    chart: &MetricChart,
    x: &Vec4,
    y: &Vec4,
    opts: &BvpOptions,
    h: f64,
) -> Result<f64> {
    let sigma_of = |xs: &Vec4| -> Result<f64> {
        Ok(solve_world_function(chart, xs, y, opts)?.1.sigma)
    };
    let s0 = sigma_of(x)?;
    let mut hess = [[0.0f64; 4]; 4];
    let mut grad_sigma_low = [0.0f64; 4];
    for mu in 0..4 {
        let shift = |d: f64| {
            let mut xs = *x;
            xs[mu] += d;
            xs
        };
        let sp = sigma_of(&shift(h))?;
        let sm = sigma_of(&shift(-h))?;
        let sp2 = sigma_of(&shift(2.0 * h))?;
        let sm2 = sigma_of(&shift(-2.0 * h))?;
        grad_sigma_low[mu] = (sm2 - 8.0 * sm + 8.0 * sp - sp2) / (12.0 * h);
        hess[mu][mu] = (-sp2 + 16.0 * sp - 30.0 * s0 + 16.0 * sm - sm2) / (12.0 * h * h);
    }
    for mu in 0..4 {
        for nu in mu + 1..4 {
            let shift2 = |dmu: f64, dnu: f64| {
                let mut xs = *x;
                xs[mu] += dmu;
                xs[nu] += dnu;
                xs
            };
            let spp = sigma_of(&shift2(h, h))?;
            let spm = sigma_of(&shift2(h, -h))?;
            let smp = sigma_of(&shift2(-h, h))?;
            let smm = sigma_of(&shift2(-h, -h))?;
            let v = (spp - spm - smp + smm) / (4.0 * h * h);
            hess[mu][nu] = v;
            hess[nu][mu] = v;
        }
    }
    let bundle = curvature_at(chart, x)?;
    let mut box_sigma = 0.0;
    for mu in 0..4 {
        for nu in 0..4 {
            let mut cov = hess[mu][nu];
            for lam in 0..4 {
                cov -= bundle.christoffel[lam][mu][nu] * grad_sigma_low[lam];
            }
            box_sigma += bundle.inverse_metric[mu][nu] * cov;
        }
    }
    Ok(box_sigma)
}

/// Left-hand side minus right-hand side of the radial transport equation
/// `sigma^mu d_mu Delta^{1/2} = (1/2)(box sigma - 4) Delta^{1/2}`,
/// both built from finite differences of re-solved pairs. The sign of the
/// right-hand side matches this module's normalization of `Delta`; the
/// reciprocal normalization satisfies the same equation with `4 - box sigma`.
/// Returns the residual relative to the magnitude of the two sides.
pub fn van_vleck_transport_residual(
    chart: &MetricChart,
    x: &Vec4,
    y: &Vec4,
    opts: &BvpOptions,
    h: f64,
) -> Result<f64> {
    let (geo, wf) = solve_world_function(chart, x, y, opts)?;
    let sqrt_d = van_vleck_sqrt(chart, &geo)?;

    // Gradient of Delta^{1/2} in the first slot (lowered index).
    let mut grad_low = [0.0f64; 4];
    for mu in 0..4 {
        let mut vals = [0.0f64; 4];
        for (i, d) in [-2.0 * h, -h, h, 2.0 * h].iter().enumerate() {
            let mut xs = *x;
            xs[mu] += d;
            let g = solve_geodesic(chart, &xs, y, opts)?;
            vals[i] = van_vleck_sqrt(chart, &g)?;
        }
        grad_low[mu] = (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h);
    }

    let box_sigma = box_sigma_first_slot(chart, x, y, opts, h)?;

    let mut lhs = 0.0;
    for mu in 0..4 {
        // sigma^mu (raised) contracted with the lowered gradient.
        lhs += wf.grad1[mu] * grad_low[mu];
    }
    let rhs = 0.5 * (box_sigma - 4.0) * sqrt_d;
    let scale = lhs.abs().max(rhs.abs()).max(1e-12);
    Ok((lhs - rhs).abs() / scale)
}

/// Deviation of `Delta^{1/2}` from its short-distance expansion
/// `1 + (1/12) R_{mu nu} sigma^mu sigma^nu` at the first endpoint.
pub fn van_vleck_expansion_remainder(
    chart: &MetricChart,
    x: &Vec4,
    y: &Vec4,
    opts: &BvpOptions,
) -> Result<f64> {
    let (geo, wf) = solve_world_function(chart, x, y, opts)?;
    let sqrt_d = van_vleck_sqrt(chart, &geo)?;
    let bundle = curvature_at(chart, x)?;
    let mut quad = 0.0;
    for mu in 0..4 {
        for nu in 0..4 {
            quad += bundle.ricci[mu][nu] * wf.grad1[mu] * wf.grad1[nu];
        }
    }
    Ok(sqrt_d - 1.0 - quad / 12.0)
}

fn cmat_to_flat(m: &CMat4) -> [f64; 32] {
    let mut out = [0.0; 32];
    for r in 0..4 {
        for c in 0..4 {
            out[2 * (4 * r + c)] = m[r][c].re;
            out[2 * (4 * r + c) + 1] = m[r][c].im;
        }
    }
    out
}

fn flat_to_cmat(f: &[f64]) -> CMat4 {
    std::array::from_fn(|r| {
        std::array::from_fn(|c| C64::new(f[2 * (4 * r + c)], f[2 * (4 * r + c) + 1]))
    })
}

#[derive(Clone, Debug)]
pub struct SpinTransport {
    /// Transport `S_y -> S_x` (second slot to first).
    pub u_xy: CMat4,
    /// Transport `S_x -> S_y`.
    pub u_yx: CMat4,
}

fn transport_one_way(
    chart: &MetricChart,
    rep: &DiracRep,
    start: &Vec4,
    v_start: &Vec4,
    macro_steps: usize,
    levels: usize,
) -> Result<CMat4> {
    // State: position, velocity, transport matrix (re/im interleaved).
    let rhs = |_s: f64, st: &[f64; 40]| -> [f64; 40] {
        let pos: Vec4 = [st[0], st[1], st[2], st[3]];
        let vel: Vec4 = [st[4], st[5], st[6], st[7]];
        let gamma = crate::geometry::curvature::christoffel_raw(chart, &pos);
        let mut out = [0.0f64; 40];
        out[..4].copy_from_slice(&vel);
        for mu in 0..4 {
            let mut a = 0.0;
            for al in 0..4 {
                for be in 0..4 {
                    a -= gamma[mu][al][be] * vel[al] * vel[be];
                }
            }
            out[4 + mu] = a;
        }
        let omega = match spinor_connection_at(chart, &pos, rep) {
            Ok(o) => o,
            Err(_) => return [f64::NAN; 40],
        };
        let u = flat_to_cmat(&st[8..40]);
        // dU/ds = -(vel^mu Omega_mu) U
        let mut gen = czero_mat();
        for mu in 0..4 {
            let v = vel[mu];
            if v == 0.0 {
                continue;
            }
            for r in 0..4 {
                for c in 0..4 {
                    gen[r][c] += v * omega[mu][r][c];
                }
            }
        }
        let du = cmat_mul(&gen, &u);
        for r in 0..4 {
            for c in 0..4 {
                out[8 + 2 * (4 * r + c)] = -du[r][c].re;
                out[8 + 2 * (4 * r + c) + 1] = -du[r][c].im;
            }
        }
        out
    };
    let mut st = [0.0f64; 40];
    st[..4].copy_from_slice(start);
    st[4..8].copy_from_slice(v_start);
    let id = cmat_to_flat(&cidentity());
    st[8..].copy_from_slice(&id);
    let end = ode::integrate_fixed(&rhs, 0.0, &st, 1.0, macro_steps, levels);
    if !end.iter().all(|v| v.is_finite()) {
        return Err(Error::Ode("spin transport left the regular region".into()));
    }
    Ok(flat_to_cmat(&end[8..40]))
}

/// Parallel transport operators of a solved pair, both orientations.
pub fn spin_transport(
    chart: &MetricChart,
    geo: &Geodesic,
    rep: &DiracRep,
    opts: &BvpOptions,
) -> Result<SpinTransport> {
    // Forward curve x -> y carries spinors from x to y.
    let u_yx = transport_one_way(chart, rep, &geo.x, &geo.v0, opts.macro_steps, opts.levels)?;
    // Reversed curve starts at y with the negated final velocity.
    let v_back = crate::linalg::scale(&geo.v1, -1.0);
    let u_xy = transport_one_way(chart, rep, &geo.y, &v_back, opts.macro_steps, opts.levels)?;
    Ok(SpinTransport { u_xy, u_yx })
}

/// First-slot covariant derivative of the pair transport compared with its
/// curvature expansion
/// `nabla_mu U(x,y) = (i/8) R_{al be mu nu}(x) sigma^nu Sigma^{al be} U + ...`.
/// The coefficient sign is tied to the orientation conventions of
/// `curvature_at` and `sigma_flat` and is pinned by the convergence test.
/// Returns the residual relative to the candidate term's size.
pub fn transport_derivative_residual(
    chart: &MetricChart,
    x: &Vec4,
    y: &Vec4,
    rep: &DiracRep,
    opts: &BvpOptions,
    h: f64,
) -> Result<f64> {
    let (geo, wf) = solve_world_function(chart, x, y, opts)?;
    let st = spin_transport(chart, &geo, rep, opts)?;
    let omega_x = spinor_connection_at(chart, x, rep)?;
    let bundle = curvature_at(chart, x)?;
    let gam_x = gamma_at(chart, x, rep)?;

    // Curved Sigma^{al be} with both indices raised.
    let mut sigma_up = [[czero_mat(); 4]; 4];
    for al in 0..4 {
        for be in 0..4 {
            let comm = csub(&cmat_mul(&gam_x[al], &gam_x[be]), &cmat_mul(&gam_x[be], &gam_x[al]));
            sigma_up[al][be] = crate::linalg::cscale(&comm, C64::new(0.0, 0.5));
        }
    }

    let mut worst: f64 = 0.0;
    for mu in 0..4 {
        // FD of U(x, y) over the first argument.
        let mut mats: Vec<CMat4> = Vec::new();
        for d in [-2.0 * h, -h, h, 2.0 * h] {
            let mut xs = *x;
            xs[mu] += d;
            let g = solve_geodesic(chart, &xs, y, opts)?;
            let s = spin_transport(chart, &g, rep, opts)?;
            mats.push(s.u_xy);
        }
        let mut deriv = czero_mat();
        for r in 0..4 {
            for c in 0..4 {
                deriv[r][c] = (mats[0][r][c] - 8.0 * mats[1][r][c] + 8.0 * mats[2][r][c]
                    - mats[3][r][c])
                    / (12.0 * h);
            }
        }
        let cov = crate::linalg::cadd(&deriv, &cmat_mul(&omega_x[mu], &st.u_xy));

        let mut coeff = czero_mat();
        for al in 0..4 {
            for be in 0..4 {
                let mut r_contr = 0.0;
                for nu in 0..4 {
                    r_contr += bundle.riemann_low[al][be][mu][nu] * wf.grad1[nu];
                }
                if r_contr == 0.0 {
                    continue;
                }
                for r in 0..4 {
                    for c in 0..4 {
                        coeff[r][c] += r_contr * sigma_up[al][be][r][c];
                    }
                }
            }
        }
        let candidate = crate::linalg::cscale(
            &cmat_mul(&coeff, &st.u_xy),
            C64::new(0.0, 1.0 / 8.0),
        );
        let resid = cfrobenius(&csub(&cov, &candidate));
        let scale = cfrobenius(&candidate).max(1e-14);
        worst = worst.max(resid / scale);
    }
    Ok(worst)
}

/// Transport along an explicit segment of an extended geodesic, from
/// parameter `s_from` to `s_to`; used when building fields along the curve.
pub fn spin_transport_segment(
    chart: &MetricChart,
    geo: &Geodesic,
    rep: &DiracRep,
    s_from: f64,
    s_to: f64,
    opts: &BvpOptions,
) -> Result<CMat4> {
    let (p, v) = point_at(chart, geo, s_from);
    let span = s_to - s_from;
    if span.abs() < 1e-15 {
        return Ok(cidentity());
    }
    // Reparametrize the segment to unit length: velocity scales by span.
    let v_seg = crate::linalg::scale(&v, span);
    let steps = ((opts.macro_steps as f64) * span.abs()).ceil().max(2.0) as usize;
    transport_one_way(chart, rep, &p, &v_seg, steps, opts.levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dirac::DiracRep;

    #[test]
    fn flat_space_is_trivial() {
        let chart = MetricChart::minkowski();
        let opts = BvpOptions::default();
        let rep = DiracRep::standard();
        let x = [0.1, -0.3, 0.2, 0.0];
        let y = [0.35, 0.1, -0.1, 0.25];
        let geo = solve_geodesic(&chart, &x, &y, &opts).unwrap();
        assert!((van_vleck(&chart, &geo).unwrap() - 1.0).abs() < 1e-12);
        let st = spin_transport(&chart, &geo, &rep, &opts).unwrap();
        assert!(cfrobenius(&csub(&st.u_xy, &cidentity())) < 1e-11);
        assert!(cfrobenius(&csub(&st.u_yx, &cidentity())) < 1e-11);
    }

    #[test]
    fn coincidence_limit_is_one() {
        let chart = MetricChart::de_sitter(0.4);
        let opts = BvpOptions::default();
        let x = [0.2, 0.1, -0.05, 0.3];
        let geo = solve_geodesic(&chart, &x, &x, &opts).unwrap();
        assert!((van_vleck(&chart, &geo).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn van_vleck_two_expressions_agree() {
        // The reciprocal of det(transport) * sqrt(|g_y|/|g_x|) must
        // reproduce Delta from the endpoint sensitivity route.
        let chart = MetricChart::de_sitter(0.5);
        let opts = BvpOptions::default();
        let x = [0.0, 0.12, -0.2, 0.05];
        let y = [0.31, -0.1, 0.07, 0.2];
        let (geo, wf) = solve_world_function(&chart, &x, &y, &opts).unwrap();
        let d1 = van_vleck(&chart, &geo).unwrap();
        let gx = det(&chart.metric_raw(&x));
        let gy = det(&chart.metric_raw(&y));
        let d2 = 1.0 / (det(&wf.transport) * (gy / gx).abs().sqrt());
        assert!((d1 - d2).abs() < 1e-10 * d1.abs().max(1.0), "{d1} {d2}");
    }

    #[test]
    fn quadratic_ricci_term_and_remainder_scaling() {
        // On the exponentially expanding chart the quadratic term of
        // Delta^{1/2} is + (1/12) R_{mu nu} sigma^mu sigma^nu exactly in
        // this normalization, for timelike and spacelike displacements
        // alike; the remainder falls off at least one power faster than
        // cubic here because the curvature gradient vanishes.
        let chart = MetricChart::de_sitter(0.4);
        let opts = BvpOptions::default();
        let y = [0.05, 0.1, -0.1, 0.2];
        for dir in [[1.0, 0.0, 0.0, 0.0], [0.0, 0.6, -0.8, 0.0]] {
            let rem_of = |s: f64| {
                let x = std::array::from_fn(|i| y[i] + s * dir[i]);
                van_vleck_expansion_remainder(&chart, &x, &y, &opts).unwrap()
            };
            assert!(rem_of(0.05).abs() < 1e-7, "{}", rem_of(0.05));
            let lo = rem_of(0.1).abs();
            let hi = rem_of(0.2).abs();
            assert!(hi > 7.0 * lo, "remainder ratio {} not cubic or faster", hi / lo);
        }
    }

    #[test]
    fn transport_equation_residual_small() {
        let chart = MetricChart::de_sitter(0.4);
        let opts = BvpOptions::default();
        let x = [0.05, 0.1, -0.1, 0.2];
        let y = [0.25, -0.05, 0.12, 0.02];
        let r = van_vleck_transport_residual(&chart, &x, &y, &opts, 3e-4).unwrap();
        assert!(r < 1e-5, "residual {r}");
    }

    #[test]
    fn group_property_and_unitarity() {
        let rep = DiracRep::standard();
        let opts = BvpOptions::default();
        for chart in [MetricChart::de_sitter(0.4), MetricChart::schwarzschild(1.0)] {
            let x: Vec4 = std::array::from_fn(|i| {
                let (lo, hi) = chart.domain()[i];
                lo + 0.45 * (hi - lo)
            });
            let y: Vec4 = std::array::from_fn(|i| {
                let (lo, hi) = chart.domain()[i];
                lo + 0.55 * (hi - lo)
            });
            let geo = solve_geodesic(&chart, &x, &y, &opts).unwrap();
            let st = spin_transport(&chart, &geo, &rep, &opts).unwrap();
            let prod = cmat_mul(&st.u_xy, &st.u_yx);
            assert!(
                cfrobenius(&csub(&prod, &cidentity())) < 1e-9,
                "{} composition {}",
                chart.name(),
                cfrobenius(&csub(&prod, &cidentity()))
            );
            // The spin product adjoint inverts a transport operator.
            let adj = rep.spin_adjoint(&st.u_yx);
            assert!(
                cfrobenius(&csub(&adj, &st.u_xy)) < 1e-9,
                "{} adjoint {}",
                chart.name(),
                cfrobenius(&csub(&adj, &st.u_xy))
            );
        }
    }

    #[test]
    fn segment_transport_composes() {
        let chart = MetricChart::de_sitter(0.45);
        let rep = DiracRep::standard();
        let opts = BvpOptions::default();
        let x = [0.0, 0.05, -0.1, 0.12];
        let y = [0.3, -0.1, 0.15, 0.0];
        let geo = solve_geodesic(&chart, &x, &y, &opts).unwrap();
        let full = spin_transport_segment(&chart, &geo, &rep, 0.0, 1.0, &opts).unwrap();
        let first = spin_transport_segment(&chart, &geo, &rep, 0.0, 0.4, &opts).unwrap();
        let second = spin_transport_segment(&chart, &geo, &rep, 0.4, 1.0, &opts).unwrap();
        let comp = cmat_mul(&second, &first);
        assert!(cfrobenius(&csub(&comp, &full)) < 1e-9);
        // Also matches the pair transport in the same orientation.
        let st = spin_transport(&chart, &geo, &rep, &opts).unwrap();
        assert!(cfrobenius(&csub(&full, &st.u_yx)) < 1e-10);
    }

    #[test]
    fn derivative_expansion_converges() {
        let chart = MetricChart::de_sitter(0.5);
        let rep = DiracRep::standard();
        let opts = BvpOptions::default();
        let x = [0.1, -0.05, 0.12, 0.0];
        let mk_y = |s: f64| [0.1 + 0.8 * s, -0.05 + 0.3 * s, 0.12 - 0.4 * s, 0.3 * s];
        let r_far = transport_derivative_residual(&chart, &x, &mk_y(0.25), &rep, &opts, 2e-4).unwrap();
        let r_near = transport_derivative_residual(&chart, &x, &mk_y(0.125), &rep, &opts, 2e-4).unwrap();
        // The candidate is the leading term of an expansion in the
        // separation, so the relative residual must shrink roughly linearly.
        assert!(r_near < 0.75 * r_far, "near {r_near} far {r_far}");
        assert!(r_far < 0.5, "far residual too large: {r_far}");
    }
}
