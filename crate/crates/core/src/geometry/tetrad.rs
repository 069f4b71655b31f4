//! Orthonormal frames and the spin connection.
//!
//! The frame at a point comes from Gram-Schmidt on the coordinate basis,
//! timelike leg first, which makes it a smooth deterministic function of the
//! point on each chart. Frame derivatives are fourth-order finite
//! differences of that construction.

use super::curvature::christoffel_raw;
use super::metric::{shift, MetricChart};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, Mat4, Vec4, ZERO_VEC4};

pub const ETA: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

#[derive(Clone, Copy, Debug)]
pub struct Tetrad {
    /// `frame[a]` is the vector `e_a^mu` with coordinate index up.
    pub frame: [Vec4; 4],
    /// `coframe[a]` is the covector `e^a_mu`.
    pub coframe: [Vec4; 4],
}

pub fn tetrad_at(chart: &MetricChart, x: &Vec4) -> Result<Tetrad> {
    chart.check_contains(x)?;
    tetrad_raw(chart, x)
}

pub fn tetrad_raw(chart: &MetricChart, x: &Vec4) -> Result<Tetrad> {
    let g = chart.metric_raw(x);
    let mut frame = [ZERO_VEC4; 4];
    for a in 0..4 {
        let mut v = ZERO_VEC4;
        v[a] = 1.0;
        // Remove components along the frame legs already fixed, with the
        // pseudo-Euclidean projection sign.
        for b in 0..a {
            let coeff = ETA[b] * bilinear(&g, &v, &frame[b]);
            for mu in 0..4 {
                v[mu] -= coeff * frame[b][mu];
            }
        }
        let n = bilinear(&g, &v, &v);
        let want_timelike = a == 0;
        if want_timelike {
            if n <= 0.0 {
                return Err(Error::BadMetric(format!("coordinate time leg not timelike at {x:?}")));
            }
            let inv = 1.0 / n.sqrt();
            for mu in 0..4 {
                frame[a][mu] = v[mu] * inv;
            }
        } else {
            if n >= 0.0 {
                return Err(Error::BadMetric(format!("spatial frame leg not spacelike at {x:?}")));
            }
            let inv = 1.0 / (-n).sqrt();
            for mu in 0..4 {
                frame[a][mu] = v[mu] * inv;
            }
        }
    }
    let mut coframe = [ZERO_VEC4; 4];
    for a in 0..4 {
        for mu in 0..4 {
            let mut s = 0.0;
            for nu in 0..4 {
                s += g[mu][nu] * frame[a][nu];
            }
            coframe[a][mu] = ETA[a] * s;
        }
    }
    Ok(Tetrad { frame, coframe })
}

/// `d_mu e_a^nu` by finite differences, indexed `[mu][a][nu]`.
pub fn d_frame_at(chart: &MetricChart, x: &Vec4) -> Result<[[Vec4; 4]; 4]> {
    let h = 4e-4 * chart.extent().max(1e-2);
    let mut out = [[ZERO_VEC4; 4]; 4];
    for mu in 0..4 {
        let fp2 = tetrad_raw(chart, &shift(x, mu, 2.0 * h))?.frame;
        let fp1 = tetrad_raw(chart, &shift(x, mu, h))?.frame;
        let fm1 = tetrad_raw(chart, &shift(x, mu, -h))?.frame;
        let fm2 = tetrad_raw(chart, &shift(x, mu, -2.0 * h))?.frame;
        for a in 0..4 {
            for nu in 0..4 {
                out[mu][a][nu] =
                    (-fp2[a][nu] + 8.0 * fp1[a][nu] - 8.0 * fm1[a][nu] + fm2[a][nu]) / (12.0 * h);
            }
        }
    }
    Ok(out)
}

/// Spin connection coefficients `omega_mu^a_b = e^a_nu (d_mu e_b^nu +
/// Gamma^nu_{mu lam} e_b^lam)`, indexed `[mu][a][b]` with the first frame
/// index up and the second down.
pub fn spin_connection_at(chart: &MetricChart, x: &Vec4) -> Result<[Mat4; 4]> {
    chart.check_contains(x)?;
    let tet = tetrad_raw(chart, x)?;
    let dframe = d_frame_at(chart, x)?;
    let gamma = christoffel_raw(chart, x);
    let mut omega = [[[0.0f64; 4]; 4]; 4];
    for mu in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                let mut s = 0.0;
                for nu in 0..4 {
                    let mut cov = dframe[mu][b][nu];
                    for lam in 0..4 {
                        cov += gamma[nu][mu][lam] * tet.frame[b][lam];
                    }
                    s += tet.coframe[a][nu] * cov;
                }
                omega[mu][a][b] = s;
            }
        }
    }
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn frames_are_orthonormal() {
        for name in MetricChart::catalogue() {
            let chart = MetricChart::from_name(name, &HashMap::new()).unwrap();
            let x: Vec4 = std::array::from_fn(|i| {
                let (lo, hi) = chart.domain()[i];
                lo + 0.55 * (hi - lo)
            });
            let g = chart.metric_raw(&x);
            let tet = tetrad_at(&chart, &x).unwrap();
            for a in 0..4 {
                for b in 0..4 {
                    let want = if a == b { ETA[a] } else { 0.0 };
                    let got = bilinear(&g, &tet.frame[a], &tet.frame[b]);
                    assert!((got - want).abs() < 1e-12, "{name}: g(e_{a}, e_{b}) = {got}");
                    // Coframe duality.
                    let dual: f64 = (0..4).map(|mu| tet.coframe[a][mu] * tet.frame[b][mu]).sum();
                    let want_d = if a == b { 1.0 } else { 0.0 };
                    assert!((dual - want_d).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spin_connection_is_antisymmetric_when_lowered() {
        let chart = MetricChart::de_sitter(0.4);
        let x = [0.12, -0.22, 0.31, 0.05];
        let omega = spin_connection_at(&chart, &x).unwrap();
        for mu in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    let low_ab = ETA[a] * omega[mu][a][b];
                    let low_ba = ETA[b] * omega[mu][b][a];
                    assert!(
                        (low_ab + low_ba).abs() < 1e-8,
                        "omega_{mu}{a}{b} lowered: {low_ab} vs {low_ba}"
                    );
                }
            }
        }
    }

    #[test]
    fn minkowski_connection_vanishes() {
        let chart = MetricChart::minkowski();
        let omega = spin_connection_at(&chart, &[0.1, 0.2, -0.3, 0.0]).unwrap();
        for m in omega.iter().flatten().flatten() {
            assert!(m.abs() < 1e-12);
        }
    }
}
