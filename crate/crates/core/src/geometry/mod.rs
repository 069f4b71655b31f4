//! Spacetime charts, curvature, orthonormal frames and the Clifford layer.

pub mod metric;
pub mod curvature;
pub mod tetrad;
pub mod dirac;

pub use curvature::{christoffel_at, curvature_at, d_christoffel_at, CurvatureBundle};
pub use dirac::{gamma_at, DiracBasis, DiracRep};
pub use metric::MetricChart;
pub use tetrad::{spin_connection_at, tetrad_at, Tetrad};

use crate::linalg::{CVec4, Mat4, Vec4, C64};

/// Lowers an index with the metric: `v_mu = g_{mu nu} v^nu`.
pub fn lower(g: &Mat4, v: &Vec4) -> Vec4 {
    std::array::from_fn(|mu| (0..4).map(|nu| g[mu][nu] * v[nu]).sum())
}

/// Raises an index with the inverse metric.
pub fn raise(ginv: &Mat4, v: &Vec4) -> Vec4 {
    lower(ginv, v)
}

pub fn clower(g: &Mat4, v: &CVec4) -> CVec4 {
    std::array::from_fn(|mu| (0..4).map(|nu| g[mu][nu] * v[nu]).sum())
}

pub fn craise(ginv: &Mat4, v: &CVec4) -> CVec4 {
    clower(ginv, v)
}

/// Metric contraction of two complex vectors with upper indices,
/// `g_{mu nu} u^mu v^nu` (bilinear, no conjugation).
pub fn cmetric_dot(g: &Mat4, u: &CVec4, v: &CVec4) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for mu in 0..4 {
        for nu in 0..4 {
            s += g[mu][nu] * u[mu] * v[nu];
        }
    }
    s
}
