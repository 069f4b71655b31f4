//! The regularizing scalar field: a complex bi-scalar f(x, y) shifting the
//! world function to `sigma - i eps f`, built order by order in eps from
//! transport equations along the connecting geodesic.
//!
//! Initial data lives on the pair's own midpoint diagonal: this is the
//! unique swap-symmetric anchoring, so the antisymmetry f(x, y) =
//! -conj f(y, x) holds by construction, and spacelike equal-time pairs
//! need no surface crossing. A Cauchy-time anchoring is available through
//! the configuration for charts where a global time slice is meaningful.
//!
//! Order zero has a closed form: the chart time component of the geodesic
//! velocity at the anchor, with pair gradients from the variational flow
//! rather than differencing. Higher orders solve the scalar transport ODE
//! with right-hand sides assembled from pair gradients of the lower
//! orders; the leg starting at the diagonal is singular and is integrated
//! in a subtracted form whose endpoint value needs no logarithmic
//! bookkeeping.

use std::collections::HashMap;
use std::sync::Mutex;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::curvature::christoffel_raw;
use crate::geometry::metric::MetricChart;
use crate::geometry::{lower, raise};
use crate::linalg::{Vec4, C64};
use crate::quad;
use crate::worldfunc::{
    endpoint_sensitivity, point_at, solve_geodesic, solve_world_function, BvpOptions, Geodesic,
};

/// Sign of the imaginary diagonal value: `Positive` reproduces
/// `f = y0 - x0 + i eps / 2` in the flat chart, `Negative` the conjugate
/// convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImaginaryBranch {
    Positive,
    Negative,
}

#[derive(Clone, Debug)]
pub struct RegConfig {
    pub eps: f64,
    /// Highest retained order N of the eps expansion.
    pub orders: usize,
    pub branch: ImaginaryBranch,
    /// When set, anchor transport data where the geodesic crosses this
    /// chart-time value instead of at the pair midpoint.
    pub cauchy_time: Option<f64>,
    /// Pair-gradient finite difference step, relative to the chart extent.
    pub grad_step: f64,
    /// Quadrature tolerance for the transport legs.
    pub leg_tol: f64,
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig {
            eps: 0.05,
            orders: 1,
            branch: ImaginaryBranch::Positive,
            cauchy_time: None,
            grad_step: 8e-3,
            leg_tol: 1e-9,
        }
    }
}

/// Per-order values of the field at one pair.
#[derive(Clone, Debug)]
pub struct RegField {
    pub orders: Vec<C64>,
    pub eps: f64,
}

impl RegField {
    pub fn total(&self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let mut p = 1.0;
        for v in &self.orders {
            acc += v * p;
            p *= self.eps;
        }
        acc
    }
}

/// Temporal and radial scalars of a pair, induced by the timelike direction
/// `chi = -grad Re f` (index raised).
#[derive(Clone, Copy, Debug)]
pub struct TemporalRadial {
    pub t: f64,
    pub r: f64,
    pub chi: Vec4,
}

/// Closed-chain bilinear coefficient diagnostics: `cc` is the full
/// contraction c_{mu nu} c^{mu nu}, `defect` its deviation from
/// `-2 eps^2 r^2`.
#[derive(Clone, Copy, Debug)]
pub struct CcCheck {
    pub cc: f64,
    pub r: f64,
    pub defect: f64,
}

type PairKey = ([u64; 4], [u64; 4], u8);
type GradKey = ([u64; 4], [u64; 4], u8, u8);

fn bits(x: &Vec4) -> [u64; 4] {
    std::array::from_fn(|i| x[i].to_bits())
}

pub struct RegSolver {
    chart: MetricChart,
    opts: BvpOptions,
    /// Cheaper boundary-value profile for the many stencil pairs inside
    /// gradient evaluations; their values enter through differences and
    /// quadratures that tolerate 1e-10 level noise.
    inner_opts: BvpOptions,
    pub cfg: RegConfig,
    values: Mutex<HashMap<PairKey, C64>>,
    grads: Mutex<HashMap<GradKey, [C64; 4]>>,
}

impl RegSolver {
    pub fn new(chart: MetricChart, opts: BvpOptions, cfg: RegConfig) -> Self {
        let inner_opts = BvpOptions {
            macro_steps: 8,
            levels: 3,
            ..opts
        };
        RegSolver {
            chart,
            opts,
            inner_opts,
            cfg,
            values: Mutex::new(HashMap::new()),
            grads: Mutex::new(HashMap::new()),
        }
    }

    pub fn chart(&self) -> &MetricChart {
        &self.chart
    }

    fn branch_sign(&self) -> f64 {
        match self.cfg.branch {
            ImaginaryBranch::Positive => 1.0,
            ImaginaryBranch::Negative => -1.0,
        }
    }

    /// Transport anchor parameter along the pair's geodesic, with a flag
    /// telling whether it came from a transversal surface crossing (so the
    /// anchor moves with the pair) or is the fixed midpoint.
    fn anchor_info(&self, geo: &Geodesic) -> Result<(f64, bool)> {
        let Some(t_c) = self.cfg.cauchy_time else {
            return Ok((0.5, false));
        };
        // Find where chart time crosses t_c along the extended geodesic.
        let time_at = |s: f64| point_at(&self.chart, geo, s).0[0] - t_c;
        let lo = -1.5;
        let hi = 2.5;
        let n = 40;
        let mut prev_s = lo;
        let mut prev_v = time_at(lo);
        let mut max_abs = prev_v.abs();
        let mut bracket = None;
        for k in 1..=n {
            let s = lo + (hi - lo) * k as f64 / n as f64;
            let v = time_at(s);
            max_abs = max_abs.max(v.abs());
            if bracket.is_none() && (prev_v == 0.0 || prev_v * v < 0.0) {
                bracket = Some((prev_s, s));
            }
            prev_s = s;
            prev_v = v;
        }
        // A geodesic lying inside the surface has no transversal crossing;
        // its data is everywhere on the slice and the midpoint anchors it.
        // Such pairs arise as stencil displacements of on-surface points.
        if max_abs < 1e-6 * self.chart.extent() {
            return Ok((0.5, false));
        }
        let (mut a, mut b) = bracket.ok_or_else(|| {
            Error::TransportData(format!(
                "geodesic does not cross the data surface at chart time {t_c}"
            ))
        })?;
        let mut fa = time_at(a);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            let fm = time_at(m);
            if fa * fm <= 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
            if (b - a).abs() < 1e-13 {
                break;
            }
        }
        Ok((0.5 * (a + b), true))
    }

    fn anchor_param(&self, geo: &Geodesic) -> Result<f64> {
        Ok(self.anchor_info(geo)?.0)
    }

    /// The two-leg solve divides by the anchor parameter, so transported
    /// orders need the anchor strictly inside the first endpoint's side.
    /// Order zero is a pointwise read of the velocity and has no such
    /// restriction, which matters for stencil pairs whose crossing sits at
    /// or just behind an endpoint.
    fn leg_anchor_guard(c: f64) -> Result<()> {
        if c < 1e-3 {
            return Err(Error::TransportData(format!(
                "data surface crossing at parameter {c:.3e} is too close to or behind \
                 the first endpoint for the transport leg"
            )));
        }
        Ok(())
    }

    /// Leg quadrature orders. The first-order forcing is assembled from
    /// order-zero gradients and carries the curvature content, so it gets
    /// dense rules; beyond that each extra node multiplies the recursion
    /// cost by the full cost of the order below, and the retained rules are
    /// chosen for the truncation checks rather than curved-space accuracy.
    fn leg_nodes(n: usize) -> (usize, usize) {
        if n <= 1 {
            (24, 16)
        } else {
            (6, 6)
        }
    }

    /// Canonical pair orientation: time-major lexicographic order of the
    /// endpoints. The defining system is swap-covariant, so the solver
    /// computes on oriented pairs and extends by f(x,y) = -conj f(y,x);
    /// that keeps the antisymmetry exact instead of at the mercy of
    /// mirrored quadrature errors, and halves the transport work.
    fn oriented(x: &Vec4, y: &Vec4) -> bool {
        for mu in 0..4 {
            if y[mu] > x[mu] {
                return true;
            }
            if y[mu] < x[mu] {
                return false;
            }
        }
        true
    }

    /// Value of the order-n field at a pair, each order a global two-point
    /// function defined through the pair's own transport solve.
    pub fn order_value(&self, x: &Vec4, y: &Vec4, n: usize) -> Result<C64> {
        if !Self::oriented(x, y) {
            return Ok(-self.order_value(y, x, n)?.conj());
        }
        let key = (bits(x), bits(y), n as u8);
        if let Some(v) = self.values.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let extent = self.chart.extent();
        let sep: f64 = (0..4).map(|i| (y[i] - x[i]).powi(2)).sum::<f64>().sqrt();
        let v = if sep < 1e-9 * extent {
            self.diagonal_value(x, n)?
        } else {
            let geo = solve_geodesic(&self.chart, x, y, &self.inner_opts)?;
            let c = self.anchor_param(&geo)?;
            if n == 0 {
                C64::new(point_at(&self.chart, &geo, c).1[0], 0.0)
            } else {
                Self::leg_anchor_guard(c)?;
                self.leg_composite(&geo, c, n, 1.0)?
            }
        };
        self.values.lock().unwrap().insert(key, v);
        Ok(v)
    }

    /// Diagonal limit along the chart time direction.
    fn diagonal_value(&self, x: &Vec4, n: usize) -> Result<C64> {
        match n {
            0 => Ok(C64::new(0.0, 0.0)),
            1 => {
                let d = 5e-4 * self.chart.extent();
                let mut p = *x;
                let mut q = *x;
                p[0] -= 0.5 * d;
                q[0] += 0.5 * d;
                let q00 = self.q_value(&p, &q, 0, 0, 1)?;
                Ok(C64::new(0.0, 0.5) * self.branch_sign() * q00)
            }
            _ => Ok(C64::new(0.0, 0.0)),
        }
    }

    /// Two-leg transport to the family point `(x, gamma(b_target))` with the
    /// anchor at parameter `c`.
    fn leg_composite(&self, geo: &Geodesic, c: f64, n: usize, b_target: f64) -> Result<C64> {
        let f_a = self.leg_from_diagonal(geo, c, n)?;
        self.leg_second_slot(geo, c, n, f_a, b_target)
    }

    /// First-slot leg from the diagonal anchor `(gamma(c), gamma(c))` down to
    /// `(gamma(0), gamma(c))`. The transport ODE is singular at the start;
    /// with the value forced to -G(c) there and the free linear coefficient
    /// normalized to zero at the leg scale, the endpoint value is
    /// `-G(c) - c J` with J a regular subtracted integral.
    ///
    /// Near the anchor the subtraction cancels to roundoff while 1/d^2
    /// amplifies whatever is left, so the zone `|t - c| < d_cut` is covered
    /// by the local quadratic model of the forcing (its known limit) and the
    /// quadrature runs only where the amplification stays bounded.
    fn leg_from_diagonal(&self, geo: &Geodesic, c: f64, n: usize) -> Result<C64> {
        let anchor = point_at(&self.chart, geo, c).0;
        let g_fn = |t: f64| -> Result<C64> {
            let p = point_at(&self.chart, geo, t).0;
            self.rhs_value(&p, &anchor, n, 1)
        };
        let g_c = g_fn(c)?;
        let h = (0.12 * c.abs()).clamp(0.04, 0.1);
        let g_p = g_fn(c + h)?;
        let g_m = g_fn(c - h)?;
        let dg_c = (g_p - g_m) / (2.0 * h);
        let half_g2 = 0.5 * (g_p + g_m - 2.0 * g_c) / (h * h);
        let d_cut = 0.15 * c.abs();
        let model = (0.0 - d_cut) * half_g2;
        let captured: Mutex<Option<Error>> = Mutex::new(None);
        let integrand = |t: f64| -> Complex64 {
            if captured.lock().unwrap().is_some() {
                return Complex64::new(0.0, 0.0);
            }
            let d = t - c;
            match g_fn(t) {
                Ok(g) => (g - g_c - dg_c * d) / (d * d),
                Err(e) => {
                    *captured.lock().unwrap() = Some(e);
                    Complex64::new(0.0, 0.0)
                }
            }
        };
        let tail = quad::integrate_gl(integrand, c - d_cut, 0.0, Self::leg_nodes(n).0);
        if let Some(e) = captured.into_inner().unwrap() {
            return Err(e);
        }
        Ok(-g_c - c * (model + tail))
    }

    /// Second-slot leg from `(x, gamma(c))` to `(x, gamma(b_target))`. The
    /// ODE coefficient vanishes only at the first endpoint's parameter 0,
    /// which stays outside the leg for anchors beyond 1e-3.
    fn leg_second_slot(
        &self,
        geo: &Geodesic,
        c: f64,
        n: usize,
        f_a: C64,
        b_target: f64,
    ) -> Result<C64> {
        let x = geo.x;
        let captured: Mutex<Option<Error>> = Mutex::new(None);
        let integrand = |t: f64| -> Complex64 {
            if captured.lock().unwrap().is_some() {
                return Complex64::new(0.0, 0.0);
            }
            let q = point_at(&self.chart, geo, t).0;
            match self.rhs_value(&x, &q, n, 2) {
                Ok(g) => g / (t * t),
                Err(e) => {
                    *captured.lock().unwrap() = Some(e);
                    Complex64::new(0.0, 0.0)
                }
            }
        };
        let integral = quad::integrate_gl(integrand, c, b_target, Self::leg_nodes(n).1);
        if let Some(e) = captured.into_inner().unwrap() {
            return Err(e);
        }
        Ok(b_target * (f_a / c + integral))
    }

    /// Transport right-hand side of order n at a pair:
    /// the symmetrized product of lower-order pair gradients in the given
    /// slot, with the branch sign.
    fn rhs_value(&self, x: &Vec4, y: &Vec4, n: usize, slot: u8) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            let k = n - 1 - j;
            acc += self.q_value(x, y, j, k, slot)?;
        }
        Ok(C64::new(0.0, -0.5) * self.branch_sign() * acc)
    }

    /// Metric pairing of slot gradients of orders j and k at a pair. The
    /// mixed pairings with order zero collapse to a directional derivative
    /// along the raised order-zero gradient, two evaluations of the higher
    /// order instead of a full stencil.
    fn q_value(&self, x: &Vec4, y: &Vec4, j: usize, k: usize, slot: u8) -> Result<C64> {
        let (lo, hi) = (j.min(k), j.max(k));
        let base = if slot == 1 { x } else { y };
        if lo == 0 && hi >= 1 {
            let g0 = self.slot_gradient(x, y, 0, slot)?;
            let ginv = self.chart.inverse_metric_raw(base);
            // w^mu = g^{mu nu} df0_nu; order-zero gradients are real.
            let w: Vec4 = std::array::from_fn(|mu| {
                (0..4).map(|nu| ginv[mu][nu] * g0[nu].re).sum::<f64>()
            });
            let wnorm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            // Wide step: the differenced orders carry solver-level jitter,
            // and they enter the field suppressed by eps^hi, so robustness
            // against that jitter wins over stencil truncation here.
            let mut tau = 0.05 * self.chart.extent() / wnorm;
            let place = |s: f64| -> Vec4 { std::array::from_fn(|mu| base[mu] + s * w[mu]) };
            for _ in 0..5 {
                if self.chart.contains(&place(tau)) && self.chart.contains(&place(-tau)) {
                    break;
                }
                tau *= 0.5;
            }
            let eval = |s: f64| -> Result<C64> {
                let p = place(s);
                if slot == 1 {
                    self.order_value(&p, y, hi)
                } else {
                    self.order_value(x, &p, hi)
                }
            };
            return Ok((eval(tau)? - eval(-tau)?) / (2.0 * tau));
        }
        let gj = self.slot_gradient(x, y, j, slot)?;
        let gk = if k == j {
            gj
        } else {
            self.slot_gradient(x, y, k, slot)?
        };
        let ginv = self.chart.inverse_metric_raw(base);
        let mut acc = C64::new(0.0, 0.0);
        for mu in 0..4 {
            for nu in 0..4 {
                acc += ginv[mu][nu] * gj[mu] * gk[nu];
            }
        }
        Ok(acc)
    }

    /// Lowered pair gradient of the order-n field in the given slot. Order
    /// zero comes from the variational flow along the pair's geodesic,
    /// which is exact to integrator tolerance and roundoff-smooth in the
    /// pair; higher orders use central differences over re-solved pairs.
    pub fn slot_gradient(&self, x: &Vec4, y: &Vec4, n: usize, slot: u8) -> Result<[C64; 4]> {
        let key = (bits(x), bits(y), n as u8, slot);
        if let Some(g) = self.grads.lock().unwrap().get(&key) {
            return Ok(*g);
        }
        if n == 0 {
            let (g1, g2) = self.pair_grad0(x, y)?;
            let mut cache = self.grads.lock().unwrap();
            cache.insert((bits(x), bits(y), 0, 1), g1);
            cache.insert((bits(x), bits(y), 0, 2), g2);
            return Ok(if slot == 1 { g1 } else { g2 });
        }
        let mut h = self.cfg.grad_step * self.chart.extent();
        let base = if slot == 1 { x } else { y };
        for _ in 0..7 {
            let ok = (0..4).all(|mu| {
                [-h, h].iter().all(|d| {
                    let mut p = *base;
                    p[mu] += d;
                    self.chart.contains(&p)
                })
            });
            if ok {
                break;
            }
            h *= 0.5;
        }
        let mut out = [C64::new(0.0, 0.0); 4];
        for mu in 0..4 {
            let eval = |d: f64| -> Result<C64> {
                let mut p = *base;
                p[mu] += d;
                if slot == 1 {
                    self.order_value(&p, y, n)
                } else {
                    self.order_value(x, &p, n)
                }
            };
            out[mu] = (eval(h)? - eval(-h)?) / (2.0 * h);
        }
        self.grads.lock().unwrap().insert(key, out);
        Ok(out)
    }

    /// Both lowered slot gradients of the order-zero field at one pair from
    /// a single fundamental-matrix pass. The field is the anchor-point
    /// chart-time velocity, so its pair derivatives are rows of the
    /// endpoint sensitivity, plus the anchor's own motion when the anchor
    /// tracks a surface crossing.
    fn pair_grad0(&self, x: &Vec4, y: &Vec4) -> Result<([C64; 4], [C64; 4])> {
        if !Self::oriented(x, y) {
            let (g1, g2) = self.pair_grad0(y, x)?;
            let flip = |g: [C64; 4]| -> [C64; 4] { std::array::from_fn(|nu| -g[nu].conj()) };
            return Ok((flip(g2), flip(g1)));
        }
        let geo = solve_geodesic(&self.chart, x, y, &self.inner_opts)?;
        let (c, crossing) = self.anchor_info(&geo)?;
        let sens = endpoint_sensitivity(&self.chart, &geo, c, 12, 4)?;
        let mut gx: Vec4 = std::array::from_fn(|nu| sens.dvel_dx[0][nu]);
        let mut gy: Vec4 = std::array::from_fn(|nu| sens.dvel_dy[0][nu]);
        if crossing {
            // gamma^0(c(x,y)) is pinned to the surface, so the anchor moves
            // by dc = -dpos^0 / vel^0 and the value picks up accel^0 * dc.
            let gamma = christoffel_raw(&self.chart, &sens.pos_c);
            let mut acc0 = 0.0;
            for al in 0..4 {
                for be in 0..4 {
                    acc0 -= gamma[0][al][be] * sens.vel_c[al] * sens.vel_c[be];
                }
            }
            let v0 = sens.vel_c[0];
            for nu in 0..4 {
                gx[nu] -= acc0 * sens.dpos_dx[0][nu] / v0;
                gy[nu] -= acc0 * sens.dpos_dy[0][nu] / v0;
            }
        }
        let wrap = |g: Vec4| -> [C64; 4] { std::array::from_fn(|nu| C64::new(g[nu], 0.0)) };
        Ok((wrap(gx), wrap(gy)))
    }

    /// Assembled lowered first-slot gradient of the truncated field.
    pub fn total_gradient1(&self, x: &Vec4, y: &Vec4) -> Result<[C64; 4]> {
        let mut acc = [C64::new(0.0, 0.0); 4];
        let mut p = 1.0;
        for n in 0..=self.cfg.orders {
            let g = self.slot_gradient(x, y, n, 1)?;
            for mu in 0..4 {
                acc[mu] += g[mu] * p;
            }
            p *= self.cfg.eps;
        }
        Ok(acc)
    }

    pub fn field(&self, x: &Vec4, y: &Vec4) -> Result<RegField> {
        if self.cfg.orders > 4 {
            return Err(Error::Config(format!(
                "expansion order {} beyond the supported depth 4",
                self.cfg.orders
            )));
        }
        let orders = (0..=self.cfg.orders)
            .map(|n| self.order_value(x, y, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(RegField {
            orders,
            eps: self.cfg.eps,
        })
    }

    pub fn f_total(&self, x: &Vec4, y: &Vec4) -> Result<C64> {
        Ok(self.field(x, y)?.total())
    }

    /// Future-directed timelike direction `chi = -(grad Re f)` raised at x.
    pub fn chi(&self, x: &Vec4, y: &Vec4) -> Result<Vec4> {
        let g = self.total_gradient1(x, y)?;
        let low: Vec4 = std::array::from_fn(|mu| -g[mu].re);
        let chi = raise(&self.chart.inverse_metric_raw(x), &low);
        let gx = self.chart.metric_raw(x);
        let norm2 = crate::linalg::bilinear(&gx, &chi, &chi);
        if norm2 <= 0.0 {
            return Err(Error::TransportData(format!(
                "regularizing direction not timelike: g(chi, chi) = {norm2:.3e}"
            )));
        }
        Ok(chi)
    }

    /// Temporal and radial scalars of the pair.
    pub fn temporal_radial(&self, x: &Vec4, y: &Vec4) -> Result<TemporalRadial> {
        let (_, wf) = solve_world_function(&self.chart, x, y, &self.opts)?;
        let chi = self.chi(x, y)?;
        let gx = self.chart.metric_raw(x);
        // Separation direction xi = -grad1 sigma (points from x toward y).
        let xi: Vec4 = std::array::from_fn(|mu| -wf.grad1[mu]);
        let t = crate::linalg::bilinear(&gx, &chi, &xi);
        let chi2 = crate::linalg::bilinear(&gx, &chi, &chi);
        let r2 = t * t - 2.0 * wf.sigma * chi2;
        let scale = (t * t).max((2.0 * wf.sigma * chi2).abs()).max(1e-30);
        if r2 < -1e-9 * scale {
            return Err(Error::TransportData(format!(
                "negative radial square {r2:.3e}; field is not regularizing here"
            )));
        }
        Ok(TemporalRadial {
            t,
            r: r2.max(0.0).sqrt(),
            chi,
        })
    }

    /// Bilinear-coefficient contraction of the pair and its defect against
    /// `-2 eps^2 r^2`. One gradient evaluation feeds both the complex
    /// separation vector and chi, so the quadratic parts cancel exactly and
    /// the defect isolates the genuine higher-order remainder.
    pub fn cc_check(&self, x: &Vec4, y: &Vec4) -> Result<CcCheck> {
        let (_, wf) = solve_world_function(&self.chart, x, y, &self.opts)?;
        let eps = self.cfg.eps;
        let grad_f = self.total_gradient1(x, y)?;
        let gx = self.chart.metric_raw(x);
        let ginv = self.chart.inverse_metric_raw(x);
        let sigma_low = lower(&gx, &wf.grad1);
        // xi = -grad1(sigma - i eps f), lowered.
        let xi_low: [C64; 4] =
            std::array::from_fn(|mu| -sigma_low[mu] + C64::new(0.0, eps) * grad_f[mu]);
        // c_{mu nu} = (xi_mu conj xi_nu - xi_nu conj xi_mu) / 2i, real.
        let mut c_low = [[0.0f64; 4]; 4];
        for mu in 0..4 {
            for nu in 0..4 {
                c_low[mu][nu] = ((xi_low[mu] * xi_low[nu].conj()
                    - xi_low[nu] * xi_low[mu].conj())
                    / C64::new(0.0, 2.0))
                .re;
            }
        }
        let mut cc = 0.0;
        for mu in 0..4 {
            for nu in 0..4 {
                for al in 0..4 {
                    for be in 0..4 {
                        cc += c_low[mu][nu] * c_low[al][be] * ginv[mu][al] * ginv[nu][be];
                    }
                }
            }
        }
        // r from the same gradient values.
        let chi_low: Vec4 = std::array::from_fn(|mu| -grad_f[mu].re);
        let chi = raise(&ginv, &chi_low);
        let xi_real: Vec4 = std::array::from_fn(|mu| -wf.grad1[mu]);
        let t = crate::linalg::bilinear(&gx, &chi, &xi_real);
        let chi2 = crate::linalg::bilinear(&gx, &chi, &chi);
        let r2 = t * t - 2.0 * wf.sigma * chi2;
        Ok(CcCheck {
            cc,
            r: r2.max(0.0).sqrt(),
            defect: cc + 2.0 * eps * eps * r2,
        })
    }

    /// Residual of the full nonlinear transport condition at the pair,
    /// through the second-slot reduction: the directional term from finite
    /// differences of the family along the geodesic, the quadratic term from
    /// the same pair gradients that feed the hierarchy.
    pub fn nonlinear_residual(&self, x: &Vec4, y: &Vec4) -> Result<C64> {
        let geo = solve_geodesic(&self.chart, x, y, &self.opts)?;
        let c = self.anchor_param(&geo)?;
        Self::leg_anchor_guard(c)?;
        let eps = self.cfg.eps;
        let sign = self.branch_sign();
        let fam = |b: f64| -> Result<C64> {
            let mut acc = C64::new(0.0, 0.0);
            let mut p = 1.0;
            for n in 0..=self.cfg.orders {
                let v = if n == 0 {
                    C64::new(b * point_at(&self.chart, &geo, c).1[0], 0.0)
                } else {
                    self.leg_composite(&geo, c, n, b)?
                };
                acc += v * p;
                p *= eps;
            }
            Ok(acc)
        };
        let d = 1e-3;
        let f1 = fam(1.0)?;
        let df = (fam(1.0 - 2.0 * d)? - 8.0 * fam(1.0 - d)? + 8.0 * fam(1.0 + d)?
            - fam(1.0 + 2.0 * d)?)
            / (12.0 * d);
        // Quadratic term from the assembled gradient at the pair.
        let mut quad_term = C64::new(0.0, 0.0);
        for j in 0..=self.cfg.orders {
            for k in 0..=self.cfg.orders {
                quad_term += self.q_value(x, y, j, k, 2)? * eps.powi((j + k) as i32);
            }
        }
        // Condition: f - g_y(grad sigma, grad f) + sign * (i eps / 2) * quad = 0.
        Ok(f1 - df + C64::new(0.0, 0.5 * eps) * sign * quad_term)
    }

    /// First-slot transport residual of the order-0 field along the family,
    /// |(a - b) d_a f0 - f0| relative to |f0|.
    pub fn order0_transport_residual(&self, x: &Vec4, y: &Vec4) -> Result<f64> {
        let geo = solve_geodesic(&self.chart, x, y, &self.opts)?;
        let c = self.anchor_param(&geo)?;
        let vdot = point_at(&self.chart, &geo, c).1[0];
        let fam = |a: f64| (1.0 - a) * vdot;
        let d = 1e-3;
        let df = (fam(-2.0 * d) - 8.0 * fam(-d) + 8.0 * fam(d) - fam(2.0 * d)) / (12.0 * d);
        let f0 = fam(0.0);
        let resid = (0.0 - 1.0) * df - f0;
        Ok(resid.abs() / f0.abs().max(1e-12))
    }

    /// Swap antisymmetry defect |f(x, y) + conj f(y, x)|.
    pub fn swap_residual(&self, x: &Vec4, y: &Vec4) -> Result<f64> {
        let a = self.f_total(x, y)?;
        let b = self.f_total(y, x)?;
        Ok((a + b.conj()).norm())
    }
}

/// Solves the field hierarchy for one pair.
pub fn solve_regfield(
    chart: &MetricChart,
    x: &Vec4,
    y: &Vec4,
    opts: &BvpOptions,
    cfg: &RegConfig,
) -> Result<RegField> {
    let solver = RegSolver::new(chart.clone(), opts.clone(), cfg.clone());
    solver.field(x, y)
}

/// Solution of `(s - a) f'(s) - f(s) = g(s)` with value `(s0 - a) c` at s0,
/// evaluated by quadrature of the integrating-factor form.
pub struct OrderOdeSolution<'a> {
    a: f64,
    lo: f64,
    hi: f64,
    s0: f64,
    c: C64,
    g: &'a dyn Fn(f64) -> C64,
    tol: f64,
}

/// The scalar transport ODE on `[lo, hi]` with the singular point at `a`.
/// Evaluation fails if the requested point or the data point sits at `a`.
pub fn solve_order_ode<'a>(
    a: f64,
    lo: f64,
    hi: f64,
    s0: f64,
    c: C64,
    g: &'a dyn Fn(f64) -> C64,
) -> Result<OrderOdeSolution<'a>> {
    if !(lo < hi) || s0 < lo || s0 > hi {
        return Err(Error::Config(format!(
            "transport leg needs lo < hi and s0 inside, got [{lo}, {hi}], s0 = {s0}"
        )));
    }
    if s0 == a {
        return Err(Error::Quadrature(
            "transport data point coincides with the singular parameter".into(),
        ));
    }
    Ok(OrderOdeSolution {
        a,
        lo,
        hi,
        s0,
        c,
        g,
        tol: 1e-11,
    })
}

impl OrderOdeSolution<'_> {
    pub fn eval(&self, s: f64) -> Result<C64> {
        if s < self.lo || s > self.hi {
            return Err(Error::Config(format!(
                "evaluation point {s} outside [{}, {}]",
                self.lo, self.hi
            )));
        }
        let (p, q) = if s <= self.s0 { (s, self.s0) } else { (self.s0, s) };
        if (self.a >= p && self.a <= q) || (p - self.a).abs() < 1e-12 || (q - self.a).abs() < 1e-12
        {
            return Err(Error::Quadrature(format!(
                "integration range [{p}, {q}] touches the singular parameter {}",
                self.a
            )));
        }
        let integrand = |t: f64| (self.g)(t) / ((t - self.a) * (t - self.a));
        let out = quad::adaptive(&integrand, self.s0, s, self.tol, 40, &[])?;
        Ok((s - self.a) * (self.c + out.value))
    }

    /// Plug-back residual `(s - a) f' - f - g` with a finite-difference
    /// derivative of step h.
    pub fn residual(&self, s: f64, h: f64) -> Result<f64> {
        let fp = self.eval(s + h)?;
        let fm = self.eval(s - h)?;
        let f = self.eval(s)?;
        let d = (fp - fm) / (2.0 * h);
        let resid = (s - self.a) * d - f - (self.g)(s);
        Ok(resid.norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mink_cfg(orders: usize) -> RegConfig {
        RegConfig {
            eps: 0.1,
            orders,
            ..RegConfig::default()
        }
    }

    #[test]
    fn transport_ode_closed_forms() {
        // Homogeneous: f = s.
        let g0 = |_: f64| C64::new(0.0, 0.0);
        let sol = solve_order_ode(0.0, 0.25, 3.0, 1.0, C64::new(1.0, 0.0), &g0).unwrap();
        assert!((sol.eval(2.0).unwrap() - C64::new(2.0, 0.0)).norm() < 1e-12);
        // Constant forcing: f = s - 1.
        let g1 = |_: f64| C64::new(1.0, 0.0);
        let sol = solve_order_ode(0.0, 0.25, 3.0, 1.0, C64::new(0.0, 0.0), &g1).unwrap();
        for s in [0.3, 0.9, 1.7, 2.8] {
            assert!(
                (sol.eval(s).unwrap() - C64::new(s - 1.0, 0.0)).norm() < 1e-10,
                "s = {s}"
            );
        }
        // Smooth forcing: plug-back residual.
        let g2 = |t: f64| C64::new(t * t - 0.3 * t, 0.5 * t);
        let sol = solve_order_ode(0.0, 0.25, 3.0, 1.0, C64::new(0.4, -0.2), &g2).unwrap();
        for s in [0.5, 1.5, 2.5] {
            assert!(sol.residual(s, 1e-4).unwrap() < 1e-7, "s = {s}");
        }
        // Range touching the singular point errors.
        let sol = solve_order_ode(0.5, 0.25, 3.0, 1.0, C64::new(1.0, 0.0), &g0).unwrap();
        assert!(sol.eval(0.3).is_err());
    }

    #[test]
    fn flat_hierarchy_truncates_after_first_order() {
        let chart = MetricChart::minkowski();
        let solver = RegSolver::new(chart, BvpOptions::default(), mink_cfg(2));
        let x = [0.1, -0.3, 0.2, 0.05];
        let y = [0.45, 0.2, -0.1, 0.3];
        let f = solver.field(&x, &y).unwrap();
        let expect0 = y[0] - x[0];
        assert!((f.orders[0] - C64::new(expect0, 0.0)).norm() < 1e-10);
        assert!((f.orders[1] - C64::new(0.0, 0.5)).norm() < 1e-10);
        assert!(f.orders[2].norm() < 1e-12, "order 2: {}", f.orders[2]);
        let total = f.total();
        let want = C64::new(expect0, 0.05);
        assert!((total - want).norm() < 1e-10);
    }

    #[test]
    fn branch_switch_conjugates_the_flat_value() {
        let chart = MetricChart::minkowski();
        let cfg = RegConfig {
            branch: ImaginaryBranch::Negative,
            ..mink_cfg(1)
        };
        let solver = RegSolver::new(chart, BvpOptions::default(), cfg);
        let x = [0.0, 0.1, 0.0, -0.2];
        let y = [0.4, -0.1, 0.25, 0.1];
        let f = solver.field(&x, &y).unwrap();
        assert!((f.orders[1] - C64::new(0.0, -0.5)).norm() < 1e-10);
    }

    #[test]
    fn cauchy_surface_anchor_reproduces_flat_values() {
        let chart = MetricChart::minkowski();
        let cfg = RegConfig {
            cauchy_time: Some(0.0),
            ..mink_cfg(1)
        };
        let solver = RegSolver::new(chart, BvpOptions::default(), cfg);
        // Pair straddling the t = 0 slice.
        let x = [-0.3, 0.1, -0.1, 0.2];
        let y = [0.5, -0.15, 0.2, 0.0];
        let f = solver.field(&x, &y).unwrap();
        assert!((f.orders[0] - C64::new(0.8, 0.0)).norm() < 1e-10);
        assert!((f.orders[1] - C64::new(0.0, 0.5)).norm() < 1e-10);
        // Equal-time pair misses the slice in the transport sense.
        let x2 = [0.35, 0.3, 0.0, 0.0];
        let y2 = [0.35, -0.3, 0.1, 0.2];
        assert!(solver.field(&x2, &y2).is_err());
    }

    #[test]
    fn defining_properties_hold_on_de_sitter() {
        let chart = MetricChart::de_sitter(0.4);
        let cfg = RegConfig {
            eps: 0.05,
            orders: 1,
            ..RegConfig::default()
        };
        let solver = RegSolver::new(chart, BvpOptions::default(), cfg);
        let pairs = [([0.05, 0.1, -0.2, 0.0], [0.4, -0.1, 0.1, 0.2])];
        for (x, y) in pairs {
            let f = solver.f_total(&x, &y).unwrap();
            assert!(f.norm() > 1e-3, "field vanished at {x:?} {y:?}");
            let sr = solver.swap_residual(&x, &y).unwrap();
            assert!(sr < 1e-9, "swap residual {sr:.3e}");
            // grad Re f past-directed timelike: chi future-directed.
            let chi = solver.chi(&x, &y).unwrap();
            assert!(chi[0] > 0.0);
            assert!(solver.order0_transport_residual(&x, &y).unwrap() < 1e-8);
        }
    }

    #[test]
    fn temporal_radial_closed_forms_flat() {
        let chart = MetricChart::minkowski();
        let solver = RegSolver::new(chart, BvpOptions::default(), mink_cfg(1));
        let x = [0.0, 0.0, 0.0, 0.0];
        // Timelike pair along the time axis: r = 0.
        let tr = solver.temporal_radial(&x, &[0.6, 0.0, 0.0, 0.0]).unwrap();
        assert!((tr.t - 0.6).abs() < 1e-9);
        assert!(tr.r.abs() < 1e-7);
        assert!((tr.chi[0] - 1.0).abs() < 1e-9);
        // Spacelike pair: t = 0, r = separation.
        let tr = solver.temporal_radial(&x, &[0.0, 0.5, 0.0, 0.0]).unwrap();
        assert!(tr.t.abs() < 1e-9);
        assert!((tr.r - 0.5).abs() < 1e-9);
        // Null pair: r = |t|.
        let tr = solver.temporal_radial(&x, &[0.45, 0.45, 0.0, 0.0]).unwrap();
        assert!((tr.t - 0.45).abs() < 1e-9);
        assert!((tr.r - 0.45).abs() < 1e-7);
    }

    #[test]
    fn bilinear_coefficient_defect_flat_is_machine_zero() {
        let chart = MetricChart::minkowski();
        let solver = RegSolver::new(chart, BvpOptions::default(), mink_cfg(1));
        let pairs = [
            ([0.1, 0.0, 0.2, -0.1], [0.3, 0.4, -0.1, 0.1]),
            ([-0.2, 0.3, 0.0, 0.0], [0.25, -0.2, 0.3, 0.2]),
            ([0.0, 0.0, 0.0, 0.0], [0.1, 0.5, 0.1, -0.3]),
        ];
        for (x, y) in pairs {
            let chk = solver.cc_check(&x, &y).unwrap();
            assert!(chk.cc <= 1e-12, "cc = {}", chk.cc);
            let scale = (0.1f64 * 0.1 * chk.r * chk.r).max(1e-12);
            assert!(
                chk.defect.abs() < 1e-10 * scale.max(1.0),
                "defect {} at {x:?} {y:?}",
                chk.defect
            );
        }
    }

    #[test]
    fn sigma_shift_positive_on_flat_diagonal() {
        let chart = MetricChart::minkowski();
        let solver = RegSolver::new(chart, BvpOptions::default(), mink_cfg(1));
        let x = [0.2, 0.1, -0.1, 0.0];
        let f = solver.f_total(&x, &x).unwrap();
        // sigma_eps(x, x) = -i eps f(x, x) = eps^2/2 > 0.
        let sig = -C64::new(0.0, solver.cfg.eps) * f;
        assert!(sig.im.abs() < 1e-12);
        assert!((sig.re - 0.5 * solver.cfg.eps * solver.cfg.eps).abs() < 1e-10);
    }
}
