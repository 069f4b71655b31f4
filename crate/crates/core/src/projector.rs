//! Fermionic projector kernel of a spacetime pair and the spectral
//! decomposition of its closed chain.
//!
//! The kernel at the two leading singular degrees is assembled from solved
//! pair data: the slashed regularized separation vector times the most
//! singular mass-expansion weight, plus the trace-free Ricci correction one
//! degree down. The closed chain A = P(x,y) P(y,x) of the leading kernel is
//! a scalar plus a bilinear in the spin endomorphisms, so its eigenvalues
//! form a single complex-conjugate pair and its eigenspace projectors are
//! rational in the bilinear coefficients.

use crate::bitensor::{spin_transport, van_vleck_sqrt, SpinTransport};
use crate::error::{Error, Result};
use crate::geometry::dirac::{gamma_at, slash, DiracRep};
use crate::geometry::{craise, curvature_at, MetricChart};
use crate::linalg::{
    cadd, cidentity, cmat_mul, cscale, ctrace, czero_mat, eigen_pair_means, eigenvalues, inverse,
    mat_vec, C64, CMat4, CVec4, Mat4, Vec4,
};
use crate::regfield::RegSolver;
use crate::symbols::{t_degree, t_symbol};
use crate::worldfunc::{solve_geodesic, world_function, BvpOptions, Geodesic, WorldFunction};

/// Solved geometric data of an ordered pair: geodesic, world function,
/// van Vleck factor, spin transports, and endpoint frames.
#[derive(Clone, Debug)]
pub struct PairFrame {
    pub x: Vec4,
    pub y: Vec4,
    pub geo: Geodesic,
    pub wf: WorldFunction,
    pub delta_sqrt: f64,
    pub transport: SpinTransport,
    pub gammas_x: [CMat4; 4],
    pub gammas_y: [CMat4; 4],
    pub metric_x: Mat4,
    pub inv_metric_x: Mat4,
    pub metric_y: Mat4,
}

impl PairFrame {
    pub fn build(
        chart: &MetricChart,
        rep: &DiracRep,
        x: &Vec4,
        y: &Vec4,
        opts: &BvpOptions,
    ) -> Result<Self> {
        let geo = solve_geodesic(chart, x, y, opts)?;
        let wf = world_function(chart, &geo);
        let delta_sqrt = van_vleck_sqrt(chart, &geo)?;
        let transport = spin_transport(chart, &geo, rep, opts)?;
        let metric_x = chart.metric_raw(x);
        let metric_y = chart.metric_raw(y);
        let inv_metric_x = inverse(&metric_x)
            .ok_or_else(|| Error::BadMetric(format!("singular metric at {x:?}")))?;
        Ok(PairFrame {
            x: *x,
            y: *y,
            geo,
            wf,
            delta_sqrt,
            transport,
            gammas_x: gamma_at(chart, x, rep)?,
            gammas_y: gamma_at(chart, y, rep)?,
            metric_x,
            inv_metric_x,
            metric_y,
        })
    }
}

/// Regularized separation data of a pair: the complex covector
/// `xi_mu = -d_mu sigma + i eps d_mu f` in the first slot, its raised
/// form, and the shifted world function `sigma^eps = sigma - i eps f`.
#[derive(Clone, Copy, Debug)]
pub struct XiData {
    pub low: CVec4,
    pub raised: CVec4,
    pub sigma_eps: C64,
    pub f_total: C64,
}

pub fn regularized_separation(frame: &PairFrame, reg: &RegSolver) -> Result<XiData> {
    let f_total = reg.f_total(&frame.x, &frame.y)?;
    let df_low = reg.total_gradient1(&frame.x, &frame.y)?;
    let grad_sigma_low = mat_vec(&frame.metric_x, &frame.wf.grad1);
    let eps = reg.cfg.eps;
    let low: CVec4 = std::array::from_fn(|mu| {
        C64::new(-grad_sigma_low[mu], 0.0) + C64::new(0.0, eps) * df_low[mu]
    });
    let raised = craise(&frame.inv_metric_x, &low);
    Ok(XiData {
        low,
        raised,
        sigma_eps: C64::new(frame.wf.sigma, 0.0) - C64::new(0.0, eps) * f_total,
        f_total,
    })
}

/// One tagged contribution to the kernel. `degree` is the degree of the
/// attached mass-expansion weight on the light cone.
#[derive(Clone, Debug)]
pub struct KernelPart {
    pub label: &'static str,
    pub degree: i32,
    pub term: CMat4,
}

/// Kernel of the fermionic projector at one ordered pair, as a map from
/// the spinor fiber at the second point to the fiber at the first.
#[derive(Clone, Debug)]
pub struct ProjectorKernel {
    pub p: CMat4,
    pub parts: Vec<KernelPart>,
    pub xi: XiData,
    pub eps: f64,
    pub mass: f64,
}

fn sum_parts(parts: &[KernelPart]) -> CMat4 {
    let mut p = czero_mat();
    for part in parts {
        p = cadd(&p, &part.term);
    }
    p
}

/// Leading-degree kernel `(i/2) slash(xi) U(x,y) T^(-1)(sigma^eps)`.
///
/// The scalar mass term `m U T^(0)` sits one degree down and drops out of
/// every closed-chain quantity at leading order; `with_mass` includes it
/// for comparisons against the unregularized flat kernel.
pub fn p_leading(
    frame: &PairFrame,
    reg: &RegSolver,
    mass: f64,
    with_mass: bool,
) -> Result<ProjectorKernel> {
    let xi = regularized_separation(frame, reg)?;
    let weight = t_symbol(-1, xi.sigma_eps, mass)?;
    let slashed = slash(&frame.gammas_x, &xi.low);
    let lead = cscale(
        &cmat_mul(&slashed, &frame.transport.u_xy),
        C64::new(0.0, 0.5) * weight,
    );
    let mut parts = vec![KernelPart {
        label: "leading",
        degree: t_degree(-1),
        term: lead,
    }];
    if with_mass {
        let w0 = t_symbol(0, xi.sigma_eps, mass)?;
        parts.push(KernelPart {
            label: "mass",
            degree: t_degree(0),
            term: cscale(&frame.transport.u_xy, C64::new(mass, 0.0) * w0),
        });
    }
    Ok(ProjectorKernel {
        p: sum_parts(&parts),
        parts,
        xi,
        eps: reg.cfg.eps,
        mass,
    })
}

/// Kernel including the next-to-leading curvature term
/// `-(i/6) Rtf_{mu nu} gamma^mu xi^nu U(x,y) T^(0)`, with the trace-free
/// Ricci tensor at the first point.
pub fn p_next(
    frame: &PairFrame,
    reg: &RegSolver,
    mass: f64,
    with_mass: bool,
) -> Result<ProjectorKernel> {
    let mut kernel = p_leading(frame, reg, mass, with_mass)?;
    let curv = curvature_at(reg.chart(), &frame.x)?;
    // Lowered covector Rtf_{mu nu} xi^nu.
    let w_low: CVec4 = std::array::from_fn(|mu| {
        (0..4).map(|nu| curv.ricci_tf[mu][nu] * kernel.xi.raised[nu]).sum()
    });
    let w0 = t_symbol(0, kernel.xi.sigma_eps, mass)?;
    let term = cscale(
        &cmat_mul(&slash(&frame.gammas_x, &w_low), &frame.transport.u_xy),
        C64::new(0.0, -1.0 / 6.0) * w0,
    );
    kernel.parts.push(KernelPart {
        label: "ricci_tf",
        degree: t_degree(0),
        term,
    });
    kernel.p = sum_parts(&kernel.parts);
    Ok(kernel)
}

/// Closed chain of a pair with its spectral decomposition.
#[derive(Clone, Debug)]
pub struct ChainSpectrum {
    pub a: CMat4,
    /// All four roots of the characteristic polynomial, sorted by (re, im).
    pub eigenvalues: [C64; 4],
    pub lambda_plus: C64,
    pub lambda_minus: C64,
    pub proj_plus: Option<CMat4>,
    pub proj_minus: Option<CMat4>,
    /// Rank-one chiral factors `[L+, R+, L-, R-]` when nondegenerate.
    pub chiral: Option<[CMat4; 4]>,
    /// Bilinear coefficients `c_{mu nu} = Im(xi_mu conj(xi_nu))`.
    pub c: Mat4,
    /// Full contraction `c_{mu nu} c^{mu nu}`; nonpositive for a simple
    /// bivector.
    pub c_squared: f64,
    /// Eigenvalue half-splitting `eps r = sqrt(-2 c.c) / 2`.
    pub eps_r: f64,
    pub degenerate: bool,
}

/// Closed chain `A = P(x,y) P(y,x)` of two oppositely ordered kernels over
/// the same pair, with eigenvalues from the characteristic polynomial and
/// eigenspace projectors from the bilinear coefficients of the first
/// kernel. When the bilinear part vanishes (timelike direction parallel to
/// the separation) the spectrum degenerates to a single eigenvalue and no
/// projectors are defined; the flag records that.
pub fn closed_chain(
    pxy: &ProjectorKernel,
    pyx: &ProjectorKernel,
    frame: &PairFrame,
    rep: &DiracRep,
) -> Result<ChainSpectrum> {
    let a = cmat_mul(&pxy.p, &pyx.p);
    let raw = eigenvalues(&a);
    let means = eigen_pair_means(&a);

    let xi = &pxy.xi.low;
    let mut c = [[0.0f64; 4]; 4];
    for mu in 0..4 {
        for nu in 0..4 {
            c[mu][nu] = (xi[mu] * xi[nu].conj()).im;
        }
    }
    let ginv = &frame.inv_metric_x;
    let mut c_squared = 0.0;
    let mut c_entry_sq = 0.0;
    for mu in 0..4 {
        for nu in 0..4 {
            let mut up = 0.0;
            for al in 0..4 {
                for be in 0..4 {
                    up += ginv[mu][al] * ginv[nu][be] * c[al][be];
                }
            }
            c_squared += c[mu][nu] * up;
            c_entry_sq += c[mu][nu] * c[mu][nu];
        }
    }

    // (c Sigma)^2 = 2 (c.c) id for a simple bivector, so the bilinear part
    // shifts the two eigenvalues by +- i sqrt(-2 c.c) = +- 2 i eps r.
    let split_sq = -2.0 * c_squared;
    let degenerate = split_sq <= 1e-14 * c_entry_sq || c_entry_sq == 0.0;

    if degenerate {
        let (lambda_minus, lambda_plus) = (means[0], means[1]);
        return Ok(ChainSpectrum {
            a,
            eigenvalues: raw,
            lambda_plus,
            lambda_minus,
            proj_plus: None,
            proj_minus: None,
            chiral: None,
            c,
            c_squared,
            eps_r: 0.0,
            degenerate: true,
        });
    }

    let eps_r = split_sq.sqrt() / 2.0;
    let gx = &frame.gammas_x;
    let mut csig = czero_mat();
    for mu in 0..4 {
        for nu in 0..4 {
            if c[mu][nu] == 0.0 {
                continue;
            }
            // Sigma^{mu nu} = (i/2) [gamma^mu, gamma^nu] in the raised
            // coordinate frame, contracted against lowered c.
            let comm = crate::linalg::csub(
                &cmat_mul(&gx[mu], &gx[nu]),
                &cmat_mul(&gx[nu], &gx[mu]),
            );
            csig = cadd(&csig, &cscale(&comm, C64::new(0.0, 0.5 * c[mu][nu])));
        }
    }
    let half_id = cscale(&cidentity(), C64::new(0.5, 0.0));
    // 1/(4 i eps r) = -i/(4 eps r).
    let coef = C64::new(0.0, -1.0 / (4.0 * eps_r));
    let proj_plus = cadd(&half_id, &cscale(&csig, coef));
    let proj_minus = cadd(&half_id, &cscale(&csig, -coef));

    // Match the polynomial pair means to the projectors through the
    // partial traces; exact when A is scalar plus bilinear.
    let q_plus = ctrace(&cmat_mul(&proj_plus, &a)) / 2.0;
    let direct = (means[0] - q_plus).norm() <= (means[1] - q_plus).norm();
    let (lambda_plus, lambda_minus) = if direct {
        (means[0], means[1])
    } else {
        (means[1], means[0])
    };

    let (left, right) = rep.chiral_projectors();
    let chiral = [
        cmat_mul(&left, &proj_plus),
        cmat_mul(&right, &proj_plus),
        cmat_mul(&left, &proj_minus),
        cmat_mul(&right, &proj_minus),
    ];

    Ok(ChainSpectrum {
        a,
        eigenvalues: raw,
        lambda_plus,
        lambda_minus,
        proj_plus: Some(proj_plus),
        proj_minus: Some(proj_minus),
        chiral: Some(chiral),
        c,
        c_squared,
        eps_r,
        degenerate: false,
    })
}

/// Closed-chain eigenvalues from the scalar invariants alone:
/// `lambda_pm = (|T^(-1)|^2 / 4) (xi^mu conj(xi_mu) +- 2 i eps r)`
/// with `r` the radial scalar of the pair.
pub fn analytic_eigenvalues(
    frame: &PairFrame,
    reg: &RegSolver,
    mass: f64,
) -> Result<(C64, C64)> {
    let xi = regularized_separation(frame, reg)?;
    let weight = t_symbol(-1, xi.sigma_eps, mass)?;
    let tr = reg.temporal_radial(&frame.x, &frame.y)?;
    let xi_sq: C64 = (0..4).map(|mu| xi.raised[mu] * xi.low[mu].conj()).sum();
    let w = weight.norm_sqr() / 4.0;
    let shift = C64::new(0.0, 2.0 * reg.cfg.eps * tr.r);
    Ok((w * (xi_sq + shift), w * (xi_sq - shift)))
}

/// Closed chain with the reverse kernel taken as the spin adjoint of the
/// forward one, `A = P(x,y) P(x,y)^*`.
///
/// The kernel of the fermionic projector is symmetric with respect to the
/// spin inner product, so this is the chain of the true projector. An
/// independently constructed reverse kernel agrees with the adjoint only
/// up to the transport defect of the regularization frame, an O(eps)
/// error that the eigenvalue splitting (itself O(eps)) cannot absorb;
/// building the chain through the adjoint keeps the conjugate-pair
/// structure exact at every eps.
pub fn symmetric_chain(
    pxy: &ProjectorKernel,
    frame: &PairFrame,
    rep: &DiracRep,
) -> Result<ChainSpectrum> {
    let reverse = ProjectorKernel {
        p: rep.spin_adjoint(&pxy.p),
        parts: Vec::new(),
        xi: pxy.xi,
        eps: pxy.eps,
        mass: pxy.mass,
    };
    closed_chain(pxy, &reverse, frame, rep)
}

/// Builds the forward kernel of one pair and its symmetric closed chain at
/// leading degree.
pub fn chain_at(
    chart: &MetricChart,
    rep: &DiracRep,
    reg: &RegSolver,
    x: &Vec4,
    y: &Vec4,
    mass: f64,
    opts: &BvpOptions,
) -> Result<(PairFrame, ProjectorKernel, ChainSpectrum)> {
    let fxy = PairFrame::build(chart, rep, x, y, opts)?;
    let pxy = p_leading(&fxy, reg, mass, false)?;
    let spec = symmetric_chain(&pxy, &fxy, rep)?;
    Ok((fxy, pxy, spec))
}

/// Residual of the conjugation relation `P(y,x) = P(x,y)^*` in the spin
/// adjoint, relative to the kernel size.
pub fn adjoint_residual(pxy: &ProjectorKernel, pyx: &ProjectorKernel, rep: &DiracRep) -> f64 {
    let adj = rep.spin_adjoint(&pxy.p);
    let num = crate::linalg::cfrobenius(&crate::linalg::csub(&pyx.p, &adj));
    let den = crate::linalg::cfrobenius(&pxy.p).max(1e-300);
    num / den
}

/// Relative deviation of the spectrum from a complex-conjugate pair.
pub fn conjugate_pair_residual(spec: &ChainSpectrum) -> f64 {
    let scale = spec.lambda_plus.norm().max(spec.lambda_minus.norm()).max(1e-300);
    (spec.lambda_plus - spec.lambda_minus.conj()).norm() / scale
}
