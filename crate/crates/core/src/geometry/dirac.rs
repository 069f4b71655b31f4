//! Clifford algebra layer: flat gamma matrices, the indefinite spin scalar
//! product, curved gamma fields through the tetrad, and the spinor
//! connection.
//!
//! The spin scalar product is `<u|v> = u^dag gamma^0 v` with signature
//! (2,2); the adjoint of an operator with respect to it is
//! `M^* = gamma^0 M^dag gamma^0`.

use super::metric::MetricChart;
use super::tetrad::{spin_connection_at, tetrad_at, ETA};
use crate::error::Result;
use crate::linalg::{
    cdagger, cidentity, cmat_mul, cone, cscale, czero, czero_mat, CMat4, CVec4, Vec4, C64,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiracBasis {
    /// Diagonal `gamma^0`.
    Standard,
    /// Off-diagonal `gamma^0`, diagonal chirality operator.
    Chiral,
}

#[derive(Clone, Debug)]
pub struct DiracRep {
    pub basis: DiracBasis,
    /// Flat-frame matrices `gamma^a`, frame index up.
    pub gamma_flat: [CMat4; 4],
}

fn pauli() -> [[[C64; 2]; 2]; 3] {
    let z = czero();
    let o = cone();
    let i = C64::new(0.0, 1.0);
    [
        [[z, o], [o, z]],
        [[z, -i], [i, z]],
        [[o, z], [z, -o]],
    ]
}

fn block(ul: [[C64; 2]; 2], ur: [[C64; 2]; 2], ll: [[C64; 2]; 2], lr: [[C64; 2]; 2]) -> CMat4 {
    let mut m = czero_mat();
    for r in 0..2 {
        for c in 0..2 {
            m[r][c] = ul[r][c];
            m[r][c + 2] = ur[r][c];
            m[r + 2][c] = ll[r][c];
            m[r + 2][c + 2] = lr[r][c];
        }
    }
    m
}

impl DiracRep {
    pub fn new(basis: DiracBasis) -> Self {
        let z2 = [[czero(); 2]; 2];
        let id2 = [[cone(), czero()], [czero(), cone()]];
        let neg_id2 = [[-cone(), czero()], [czero(), -cone()]];
        let p = pauli();
        let gamma0 = match basis {
            DiracBasis::Standard => block(id2, z2, z2, neg_id2),
            DiracBasis::Chiral => block(z2, id2, id2, z2),
        };
        let mut gamma_flat = [czero_mat(); 4];
        gamma_flat[0] = gamma0;
        for k in 0..3 {
            let s = p[k];
            let mut neg = [[czero(); 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    neg[r][c] = -s[r][c];
                }
            }
            gamma_flat[k + 1] = block(z2, s, neg, z2);
        }
        DiracRep { basis, gamma_flat }
    }

    pub fn standard() -> Self {
        Self::new(DiracBasis::Standard)
    }

    pub fn chiral() -> Self {
        Self::new(DiracBasis::Chiral)
    }

    /// `gamma^5 = i gamma^0 gamma^1 gamma^2 gamma^3`.
    pub fn gamma5(&self) -> CMat4 {
        let g = &self.gamma_flat;
        let m = cmat_mul(&g[0], &cmat_mul(&g[1], &cmat_mul(&g[2], &g[3])));
        cscale(&m, C64::new(0.0, 1.0))
    }

    /// Left and right handed projectors `(1 -+ gamma^5)/2`.
    pub fn chiral_projectors(&self) -> (CMat4, CMat4) {
        let g5 = self.gamma5();
        let id = cidentity();
        let half = C64::new(0.5, 0.0);
        let left = cscale(&crate::linalg::csub(&id, &g5), half);
        let right = cscale(&crate::linalg::cadd(&id, &g5), half);
        (left, right)
    }

    /// Flat `Sigma^{ab} = (i/2)[gamma^a, gamma^b]`.
    pub fn sigma_flat(&self, a: usize, b: usize) -> CMat4 {
        let comm = crate::linalg::csub(
            &cmat_mul(&self.gamma_flat[a], &self.gamma_flat[b]),
            &cmat_mul(&self.gamma_flat[b], &self.gamma_flat[a]),
        );
        cscale(&comm, C64::new(0.0, 0.5))
    }

    /// Adjoint with respect to the indefinite spin scalar product.
    pub fn spin_adjoint(&self, m: &CMat4) -> CMat4 {
        let g0 = &self.gamma_flat[0];
        cmat_mul(g0, &cmat_mul(&cdagger(m), g0))
    }

    /// `<u|v> = u^dag gamma^0 v`.
    pub fn pairing(&self, u: &CVec4, v: &CVec4) -> C64 {
        let g0v = crate::linalg::cmat_vec(&self.gamma_flat[0], v);
        (0..4).map(|i| u[i].conj() * g0v[i]).sum()
    }
}

/// Curved gamma matrices `gamma^mu(x) = e_a^mu gamma^a`, coordinate index up.
pub fn gamma_at(chart: &MetricChart, x: &Vec4, rep: &DiracRep) -> Result<[CMat4; 4]> {
    let tet = tetrad_at(chart, x)?;
    Ok(gamma_from_frame(&tet.frame, rep))
}

pub fn gamma_from_frame(frame: &[Vec4; 4], rep: &DiracRep) -> [CMat4; 4] {
    let mut out = [czero_mat(); 4];
    for mu in 0..4 {
        let mut m = czero_mat();
        for a in 0..4 {
            let c = frame[a][mu];
            if c == 0.0 {
                continue;
            }
            for r in 0..4 {
                for s in 0..4 {
                    m[r][s] += c * rep.gamma_flat[a][r][s];
                }
            }
        }
        out[mu] = m;
    }
    out
}

/// Slash contraction `v_mu gamma^mu` for a complex vector given with the
/// coordinate index lowered.
pub fn slash(gammas: &[CMat4; 4], v_low: &CVec4) -> CMat4 {
    let mut m = czero_mat();
    for mu in 0..4 {
        let c = v_low[mu];
        if c == czero() {
            continue;
        }
        for r in 0..4 {
            for s in 0..4 {
                m[r][s] += c * gammas[mu][r][s];
            }
        }
    }
    m
}

/// Spinor connection matrices `Omega_mu = (1/4) omega_{mu a b} gamma^a gamma^b`.
pub fn spinor_connection_at(chart: &MetricChart, x: &Vec4, rep: &DiracRep) -> Result<[CMat4; 4]> {
    let omega = spin_connection_at(chart, x)?;
    let mut out = [czero_mat(); 4];
    for mu in 0..4 {
        let mut acc = czero_mat();
        for a in 0..4 {
            for b in 0..4 {
                // Lower the first frame index: omega_{mu a b} = eta_{a a} omega_mu^a_b.
                let w = ETA[a] * omega[mu][a][b];
                if w == 0.0 {
                    continue;
                }
                let prod = cmat_mul(&rep.gamma_flat[a], &rep.gamma_flat[b]);
                for r in 0..4 {
                    for s in 0..4 {
                        acc[r][s] += 0.25 * w * prod[r][s];
                    }
                }
            }
        }
        out[mu] = acc;
    }
    Ok(out)
}
