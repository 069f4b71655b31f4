//! Metric charts: a coordinate box, the metric components, and their first
//! and second coordinate derivatives.
//!
//! Every catalogue metric ships analytic derivative closures. A chart built
//! from a bare closure falls back to fourth-order finite differences, which
//! is accurate enough for exploratory metrics but slower and noisier; the
//! catalogue never uses the fallback.

use crate::error::{Error, Result};
use crate::linalg::{Mat4, Ten3, Ten4, Vec4, ZERO_MAT4};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

type MetricFn = dyn Fn(&Vec4) -> Mat4 + Send + Sync;
type DMetricFn = dyn Fn(&Vec4) -> Ten3 + Send + Sync;
type D2MetricFn = dyn Fn(&Vec4) -> Ten4 + Send + Sync;

#[derive(Clone)]
pub struct MetricChart {
    name: String,
    params: Vec<(String, f64)>,
    domain: [(f64, f64); 4],
    g: Arc<MetricFn>,
    dg: Option<Arc<DMetricFn>>,
    d2g: Option<Arc<D2MetricFn>>,
}

impl fmt::Debug for MetricChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricChart")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("domain", &self.domain)
            .finish()
    }
}

impl MetricChart {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn domain(&self) -> &[(f64, f64); 4] {
        &self.domain
    }

    /// Shortest coordinate side of the domain box; used to scale finite
    /// difference steps and pair separations.
    pub fn extent(&self) -> f64 {
        self.domain.iter().map(|(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &Vec4) -> bool {
        self.domain.iter().zip(x).all(|((lo, hi), &c)| c >= *lo && c <= *hi)
    }

    pub fn check_contains(&self, x: &Vec4) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain(format!("{:?} not in {} domain {:?}", x, self.name, self.domain)))
        }
    }

    /// Metric components without a domain check; inner ODE loops use this.
    pub fn metric_raw(&self, x: &Vec4) -> Mat4 {
        (self.g)(x)
    }

    pub fn metric(&self, x: &Vec4) -> Result<Mat4> {
        self.check_contains(x)?;
        Ok((self.g)(x))
    }

    pub fn inverse_metric_raw(&self, x: &Vec4) -> Mat4 {
        crate::linalg::inverse(&(self.g)(x)).expect("metric must be invertible on its domain")
    }

    /// First coordinate derivatives, `[rho][mu][nu] = d_rho g_{mu nu}`.
    pub fn d_metric(&self, x: &Vec4) -> Ten3 {
        if let Some(dg) = &self.dg {
            return dg(x);
        }
        let h = 1e-5 * self.extent().max(1e-3);
        let mut out = [ZERO_MAT4; 4];
        for rho in 0..4 {
            let gp2 = self.shifted(x, rho, 2.0 * h);
            let gp1 = self.shifted(x, rho, h);
            let gm1 = self.shifted(x, rho, -h);
            let gm2 = self.shifted(x, rho, -2.0 * h);
            for mu in 0..4 {
                for nu in 0..4 {
                    out[rho][mu][nu] =
                        (-gp2[mu][nu] + 8.0 * gp1[mu][nu] - 8.0 * gm1[mu][nu] + gm2[mu][nu]) / (12.0 * h);
                }
            }
        }
        out
    }

    /// Second coordinate derivatives, `[rho][sigma][mu][nu] = d_rho d_sigma g_{mu nu}`.
    pub fn d2_metric(&self, x: &Vec4) -> Ten4 {
        if let Some(d2g) = &self.d2g {
            return d2g(x);
        }
        let h = 2e-4 * self.extent().max(1e-3);
        let mut out = [[ZERO_MAT4; 4]; 4];
        for rho in 0..4 {
            let dp2 = self.d_metric(&shift(x, rho, 2.0 * h));
            let dp1 = self.d_metric(&shift(x, rho, h));
            let dm1 = self.d_metric(&shift(x, rho, -h));
            let dm2 = self.d_metric(&shift(x, rho, -2.0 * h));
            for sigma in 0..4 {
                for mu in 0..4 {
                    for nu in 0..4 {
                        out[rho][sigma][mu][nu] = (-dp2[sigma][mu][nu] + 8.0 * dp1[sigma][mu][nu]
                            - 8.0 * dm1[sigma][mu][nu]
                            + dm2[sigma][mu][nu])
                            / (12.0 * h);
                    }
                }
            }
        }
        out
    }

    fn shifted(&self, x: &Vec4, axis: usize, d: f64) -> Mat4 {
        (self.g)(&shift(x, axis, d))
    }

    /// Lorentzian signature (+,-,-,-) at `x`, checked through the inertia of
    /// the symmetric component matrix.
    pub fn signature_check(&self, x: &Vec4) -> Result<()> {
        let g = (self.g)(x);
        let eig = sym_eigenvalues(&g);
        let pos = eig.iter().filter(|&&e| e > 0.0).count();
        let neg = eig.iter().filter(|&&e| e < 0.0).count();
        if pos == 1 && neg == 3 {
            Ok(())
        } else {
            Err(Error::BadMetric(format!(
                "inertia ({pos},{neg}) at {x:?} in chart {}, eigenvalues {eig:?}",
                self.name
            )))
        }
    }

    /// Flat spacetime in inertial coordinates.
    pub fn minkowski() -> Self {
        MetricChart {
            name: "minkowski".into(),
            params: vec![],
            domain: [(-0.75, 0.75); 4],
            g: Arc::new(|_x| {
                let mut m = ZERO_MAT4;
                m[0][0] = 1.0;
                m[1][1] = -1.0;
                m[2][2] = -1.0;
                m[3][3] = -1.0;
                m
            }),
            dg: Some(Arc::new(|_x| [ZERO_MAT4; 4])),
            d2g: Some(Arc::new(|_x| [[ZERO_MAT4; 4]; 4])),
        }
    }

    /// Exponentially expanding flat slicing, `dt^2 - e^{2 h t} dx^2`.
    pub fn de_sitter(h: f64) -> Self {
        let g = move |x: &Vec4| {
            let s = -(2.0 * h * x[0]).exp();
            let mut m = ZERO_MAT4;
            m[0][0] = 1.0;
            m[1][1] = s;
            m[2][2] = s;
            m[3][3] = s;
            m
        };
        let dg = move |x: &Vec4| {
            let mut out = [ZERO_MAT4; 4];
            let s = -(2.0 * h * x[0]).exp();
            for i in 1..4 {
                out[0][i][i] = 2.0 * h * s;
            }
            out
        };
        let d2g = move |x: &Vec4| {
            let mut out = [[ZERO_MAT4; 4]; 4];
            let s = -(2.0 * h * x[0]).exp();
            for i in 1..4 {
                out[0][0][i][i] = 4.0 * h * h * s;
            }
            out
        };
        MetricChart {
            name: "desitter".into(),
            params: vec![("h".into(), h)],
            domain: [(-0.75, 0.75); 4],
            g: Arc::new(g),
            dg: Some(Arc::new(dg)),
            d2g: Some(Arc::new(d2g)),
        }
    }

    /// Spatially flat cosmology with power-law scale factor `a(t) = t^p`;
    /// not an Einstein space unless the exponent degenerates.
    pub fn flrw(p: f64) -> Self {
        let g = move |x: &Vec4| {
            let s = -x[0].powf(2.0 * p);
            let mut m = ZERO_MAT4;
            m[0][0] = 1.0;
            m[1][1] = s;
            m[2][2] = s;
            m[3][3] = s;
            m
        };
        let dg = move |x: &Vec4| {
            let mut out = [ZERO_MAT4; 4];
            let s = -2.0 * p * x[0].powf(2.0 * p - 1.0);
            for i in 1..4 {
                out[0][i][i] = s;
            }
            out
        };
        let d2g = move |x: &Vec4| {
            let mut out = [[ZERO_MAT4; 4]; 4];
            let s = -2.0 * p * (2.0 * p - 1.0) * x[0].powf(2.0 * p - 2.0);
            for i in 1..4 {
                out[0][0][i][i] = s;
            }
            out
        };
        MetricChart {
            name: "flrw".into(),
            params: vec![("p".into(), p)],
            domain: [(0.8, 2.2), (-0.7, 0.7), (-0.7, 0.7), (-0.7, 0.7)],
            g: Arc::new(g),
            dg: Some(Arc::new(dg)),
            d2g: Some(Arc::new(d2g)),
        }
    }

    /// Exterior static black hole region in Schwarzschild coordinates
    /// `(t, r, theta, phi)`; the domain stays well away from the horizon
    /// and the coordinate axis.
    pub fn schwarzschild(m: f64) -> Self {
        let g = move |x: &Vec4| {
            let r = x[1];
            let f = 1.0 - 2.0 * m / r;
            let st = x[2].sin();
            let mut g = ZERO_MAT4;
            g[0][0] = f;
            g[1][1] = -1.0 / f;
            g[2][2] = -r * r;
            g[3][3] = -r * r * st * st;
            g
        };
        let dg = move |x: &Vec4| {
            let r = x[1];
            let f = 1.0 - 2.0 * m / r;
            let fp = 2.0 * m / (r * r);
            let st = x[2].sin();
            let ct = x[2].cos();
            let mut out = [ZERO_MAT4; 4];
            out[1][0][0] = fp;
            out[1][1][1] = fp / (f * f);
            out[1][2][2] = -2.0 * r;
            out[1][3][3] = -2.0 * r * st * st;
            out[2][3][3] = -r * r * 2.0 * st * ct;
            out
        };
        let d2g = move |x: &Vec4| {
            let r = x[1];
            let f = 1.0 - 2.0 * m / r;
            let fp = 2.0 * m / (r * r);
            let fpp = -4.0 * m / (r * r * r);
            let st = x[2].sin();
            let ct = x[2].cos();
            let mut out = [[ZERO_MAT4; 4]; 4];
            out[1][1][0][0] = fpp;
            // d_r (fp / f^2) = fpp / f^2 - 2 fp^2 / f^3.
            out[1][1][1][1] = fpp / (f * f) - 2.0 * fp * fp / (f * f * f);
            out[1][1][2][2] = -2.0;
            out[1][1][3][3] = -2.0 * st * st;
            out[1][2][3][3] = -4.0 * r * st * ct;
            out[2][1][3][3] = -4.0 * r * st * ct;
            out[2][2][3][3] = -2.0 * r * r * (ct * ct - st * st);
            out
        };
        MetricChart {
            name: "schwarzschild".into(),
            params: vec![("m".into(), m)],
            domain: [
                (-1.0, 1.0),
                (4.0 * m.max(0.1), 9.0 * m.max(0.1)),
                (0.7, std::f64::consts::PI - 0.7),
                (-1.2, 1.2),
            ],
            g: Arc::new(g),
            dg: Some(Arc::new(dg)),
            d2g: Some(Arc::new(d2g)),
        }
    }

    /// Static metric with conformally flat spatial slices,
    /// `dt^2 - e^{2 k x^1} dx^2`; time translation invariant but spatially
    /// inhomogeneous, so the scalar curvature varies over the chart.
    pub fn ultrastatic(k: f64) -> Self {
        let g = move |x: &Vec4| {
            let s = -(2.0 * k * x[1]).exp();
            let mut m = ZERO_MAT4;
            m[0][0] = 1.0;
            m[1][1] = s;
            m[2][2] = s;
            m[3][3] = s;
            m
        };
        let dg = move |x: &Vec4| {
            let mut out = [ZERO_MAT4; 4];
            let s = -(2.0 * k * x[1]).exp();
            for i in 1..4 {
                out[1][i][i] = 2.0 * k * s;
            }
            out
        };
        let d2g = move |x: &Vec4| {
            let mut out = [[ZERO_MAT4; 4]; 4];
            let s = -(2.0 * k * x[1]).exp();
            for i in 1..4 {
                out[1][1][i][i] = 4.0 * k * k * s;
            }
            out
        };
        MetricChart {
            name: "ultrastatic".into(),
            params: vec![("k".into(), k)],
            domain: [(-0.75, 0.75); 4],
            g: Arc::new(g),
            dg: Some(Arc::new(dg)),
            d2g: Some(Arc::new(d2g)),
        }
    }

    /// Chart from a bare metric closure; derivatives fall back to finite
    /// differences.
    pub fn custom(
        name: &str,
        domain: [(f64, f64); 4],
        g: impl Fn(&Vec4) -> Mat4 + Send + Sync + 'static,
    ) -> Self {
        MetricChart {
            name: name.into(),
            params: vec![],
            domain,
            g: Arc::new(g),
            dg: None,
            d2g: None,
        }
    }

    /// Catalogue lookup by name with a parameter map. Unknown parameters are
    /// rejected so typos fail loudly.
    pub fn from_name(name: &str, params: &HashMap<String, f64>) -> Result<Self> {
        let take = |allowed: &[(&str, f64)]| -> Result<Vec<f64>> {
            for key in params.keys() {
                if !allowed.iter().any(|(a, _)| a == key) {
                    return Err(Error::Config(format!("unknown parameter {key} for metric {name}")));
                }
            }
            Ok(allowed
                .iter()
                .map(|(key, dflt)| params.get(*key).copied().unwrap_or(*dflt))
                .collect())
        };
        match name {
            "minkowski" => {
                take(&[])?;
                Ok(Self::minkowski())
            }
            "desitter" => {
                let v = take(&[("h", 0.3)])?;
                Ok(Self::de_sitter(v[0]))
            }
            "flrw" => {
                let v = take(&[("p", 2.0 / 3.0)])?;
                Ok(Self::flrw(v[0]))
            }
            "schwarzschild" => {
                let v = take(&[("m", 1.0)])?;
                Ok(Self::schwarzschild(v[0]))
            }
            "ultrastatic" => {
                let v = take(&[("k", 0.4)])?;
                Ok(Self::ultrastatic(v[0]))
            }
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }

    /// Names of the built-in charts.
    pub fn catalogue() -> &'static [&'static str] {
        &["minkowski", "desitter", "flrw", "schwarzschild", "ultrastatic"]
    }
}

pub fn shift(x: &Vec4, axis: usize, d: f64) -> Vec4 {
    let mut y = *x;
    y[axis] += d;
    y
}

/// Eigenvalues of a symmetric 4x4 matrix by cyclic Jacobi sweeps, sorted
/// ascending. Only the inertia is consumed here, so modest accuracy is fine.
pub fn sym_eigenvalues(a: &Mat4) -> [f64; 4] {
    let mut m = *a;
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..4 {
            for q in p + 1..4 {
                off += m[p][q] * m[p][q];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (m[k][p], m[k][q]);
                    m[k][p] = c * akp - s * akq;
                    m[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * apk - s * aqk;
                    m[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig = [m[0][0], m[1][1], m[2][2], m[3][3]];
    eig.sort_by(f64::total_cmp);
    eig
}
