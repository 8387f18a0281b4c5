//! Boundary curves, the domains they enclose and the `(t, s)` collar.
//!
//! Curves are closed parameterizations `p(τ)`, `τ ∈ [0, 1)`, normalized to
//! run counterclockwise. Arc length `t` is tabulated once; `(t, s)` jets of
//! the collar map `γ(t) + s n(t)` come from series reversion of `t(τ)` and
//! jet composition, so boundary formulas see exact higher partials.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::{recip_jet, Expression, Jet2};
use crate::fields::ScalarField;
use crate::Point;

const GL_X: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

const BASE_PANELS: usize = 4096;
const MAX_PANELS: usize = 1 << 18;

/// How a curve was specified.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveSpec {
    Circle { center: Point, radius: f64 },
    Ellipse { center: Point, a: f64, b: f64 },
    Parametric { x: String, y: String },
}

struct CurveInner {
    spec: CurveSpec,
    x: Expression,
    y: Expression,
    // +1 if the input already ran counterclockwise, -1 if it was reversed
    sign: f64,
    cum: Vec<f64>,
    lift: Vec<f64>,
    length: f64,
    max_curvature: f64,
}

/// A smooth simple closed curve, counterclockwise, with an arc-length table.
#[derive(Clone)]
pub struct BoundaryCurve(Arc<CurveInner>);

impl std::fmt::Debug for BoundaryCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundaryCurve")
            .field("spec", &self.0.spec)
            .field("length", &self.0.length)
            .field("reversed", &self.reversed())
            .finish()
    }
}

impl BoundaryCurve {
    pub fn circle(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidCurve(format!("circle radius {radius} is not positive")));
        }
        let x = format!("{} + {}*cos(2*pi*tau)", center[0], radius);
        let y = format!("{} + {}*sin(2*pi*tau)", center[1], radius);
        Self::build(CurveSpec::Circle { center, radius }, &x, &y)
    }

    pub fn ellipse(center: Point, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidCurve(format!("ellipse semi-axes ({a}, {b}) must be positive")));
        }
        let x = format!("{} + {}*cos(2*pi*tau)", center[0], a);
        let y = format!("{} + {}*sin(2*pi*tau)", center[1], b);
        Self::build(CurveSpec::Ellipse { center, a, b }, &x, &y)
    }

    /// A curve given by two expressions in `tau`, period 1.
    pub fn parametric(x: &str, y: &str) -> Result<Self> {
        Self::build(
            CurveSpec::Parametric {
                x: x.to_string(),
                y: y.to_string(),
            },
            x,
            y,
        )
    }

    fn build(spec: CurveSpec, xs: &str, ys: &str) -> Result<Self> {
        let x = Expression::parse(xs, &["tau"])?;
        let y = Expression::parse(ys, &["tau"])?;
        let mut inner = CurveInner {
            spec,
            x,
            y,
            sign: 1.0,
            cum: Vec::new(),
            lift: Vec::new(),
            length: 0.0,
            max_curvature: 0.0,
        };

        let p0 = [inner.x.eval(&[0.0])?, inner.y.eval(&[0.0])?];
        let p1 = [inner.x.eval(&[1.0])?, inner.y.eval(&[1.0])?];
        let scale = p0[0].abs().max(p0[1].abs()).max(1.0);
        if (p0[0] - p1[0]).hypot(p0[1] - p1[1]) > 1e-9 * scale {
            return Err(Error::InvalidCurve("p(0) and p(1) differ; the parameter period must be 1".into()));
        }

        let m = BASE_PANELS;
        let mut area = 0.0;
        let mut prev = p0;
        for k in 1..=m {
            let tau = k as f64 / m as f64;
            let p = [inner.x.eval(&[tau])?, inner.y.eval(&[tau])?];
            area += prev[0] * p[1] - prev[1] * p[0];
            prev = p;
        }
        area *= 0.5;
        if area.abs() < 1e-12 * scale * scale {
            return Err(Error::InvalidCurve("curve encloses no area".into()));
        }
        inner.sign = area.signum();

        let mut curve = BoundaryCurve(Arc::new(inner));
        let mut panels = BASE_PANELS;
        let mut cum = curve.tabulate(panels)?;
        loop {
            let finer = curve.tabulate(2 * panels)?;
            let (l0, l1) = (cum[panels], finer[2 * panels]);
            panels *= 2;
            cum = finer;
            if (l0 - l1).abs() <= 1e-10 * l1 || panels >= MAX_PANELS {
                break;
            }
        }

        let mut lift: Vec<f64> = Vec::with_capacity(panels + 1);
        let mut kmax: f64 = 0.0;
        for k in 0..=panels {
            let tau = k as f64 / panels as f64;
            let [jx, jy] = curve.tau_jets(tau, 2)?;
            let (dx, dy) = (jx.get(1, 0), jy.get(1, 0));
            let speed = dx.hypot(dy);
            if speed < 1e-10 {
                return Err(Error::DegenerateTangent { tau });
            }
            let kappa = (dx * jy.get(2, 0) - dy * jx.get(2, 0)) / speed.powi(3);
            kmax = kmax.max(kappa.abs());
            let theta = dy.atan2(dx);
            let a = match lift.last() {
                None => theta,
                Some(&prev) => theta + TAU * ((prev - theta) / TAU).round(),
            };
            lift.push(a);
        }
        let turning = (lift[panels] - lift[0]) / TAU;
        if (turning - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidCurve(format!(
                "tangent turns {turning:.3} times; the curve is not simple"
            )));
        }

        let inner = Arc::get_mut(&mut curve.0).expect("unshared during construction");
        inner.length = cum[panels];
        inner.cum = cum;
        inner.lift = lift;
        inner.max_curvature = kmax;
        Ok(curve)
    }

    fn tabulate(&self, panels: usize) -> Result<Vec<f64>> {
        let mut cum = Vec::with_capacity(panels + 1);
        cum.push(0.0);
        let h = 1.0 / panels as f64;
        let mut acc = 0.0;
        for k in 0..panels {
            acc += self.integrate_speed(k as f64 * h, (k + 1) as f64 * h)?;
            cum.push(acc);
        }
        Ok(cum)
    }

    fn integrate_speed(&self, a: f64, b: f64) -> Result<f64> {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (x, w) in GL_X.iter().zip(GL_W) {
            s += w * self.speed(mid + half * x)?;
        }
        Ok(s * half)
    }

    pub fn spec(&self) -> &CurveSpec {
        &self.0.spec
    }

    /// True when the input ran clockwise and was reversed.
    pub fn reversed(&self) -> bool {
        self.0.sign < 0.0
    }

    pub fn length(&self) -> f64 {
        self.0.length
    }

    /// Largest `|k|` over the arc-length table nodes.
    pub fn max_curvature(&self) -> f64 {
        self.0.max_curvature
    }

    /// Jets of the normalized parameterization in `τ`, stored in the first
    /// slot of bivariate jets based at `(τ, 0)`.
    pub fn tau_jets(&self, tau: f64, order: usize) -> Result<[Jet2; 2]> {
        let sign = self.0.sign;
        let arg = Jet2::from_fn([tau, 0.0], order, |i, j| match (i, j) {
            (0, 0) => sign * tau,
            (1, 0) => sign,
            _ => 0.0,
        });
        let args = [arg];
        Ok([self.0.x.eval_with(&args)?, self.0.y.eval_with(&args)?])
    }

    pub fn point_at_param(&self, tau: f64) -> Result<Point> {
        let s = self.0.sign * tau;
        Ok([self.0.x.eval(&[s])?, self.0.y.eval(&[s])?])
    }

    fn speed(&self, tau: f64) -> Result<f64> {
        let [x, y] = self.tau_jets(tau, 1)?;
        Ok(x.get(1, 0).hypot(y.get(1, 0)))
    }

    fn panels(&self) -> usize {
        self.0.cum.len() - 1
    }

    /// Arc length from `p(0)` to `p(τ)`, `τ ∈ [0, 1]`.
    pub fn t_of_tau(&self, tau: f64) -> Result<f64> {
        let n = self.panels();
        let k = ((tau * n as f64).floor() as usize).min(n - 1);
        let a = k as f64 / n as f64;
        Ok(self.0.cum[k] + self.integrate_speed(a, tau)?)
    }

    /// Inverse of [`BoundaryCurve::t_of_tau`] for `t ∈ [0, L]`.
    pub fn tau_of_t(&self, t: f64) -> Result<f64> {
        let n = self.panels();
        let cum = &self.0.cum;
        let k = cum.partition_point(|&c| c <= t).clamp(1, n) - 1;
        let h = 1.0 / n as f64;
        let frac = ((t - cum[k]) / (cum[k + 1] - cum[k])).clamp(0.0, 1.0);
        let mut tau = (k as f64 + frac) * h;
        for _ in 0..8 {
            let r = self.t_of_tau(tau)? - t;
            if r.abs() <= 1e-15 * self.0.length {
                break;
            }
            let step = r / self.speed(tau)?;
            tau -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        Ok(tau)
    }

    /// Arc lengths at `τ = i / m`, `i < m`.
    pub fn arc_nodes(&self, m: usize) -> Result<Vec<f64>> {
        let n = self.panels();
        (0..m)
            .map(|i| {
                if n % m == 0 {
                    Ok(self.0.cum[i * (n / m)])
                } else {
                    self.t_of_tau(i as f64 / m as f64)
                }
            })
            .collect()
    }

    fn wrap(&self, t: f64) -> (f64, f64) {
        let l = self.0.length;
        let loops = (t / l).floor();
        (t - loops * l, loops)
    }

    /// `γ(t)` by arc length (any real `t`, periodic).
    pub fn point(&self, t: f64) -> Result<Point> {
        let (t, _) = self.wrap(t);
        self.point_at_param(self.tau_of_t(t)?)
    }

    /// Jets of `γ` in arc length, stored in the first slot at base `(t, 0)`.
    pub fn arc_jets(&self, t: f64, order: usize) -> Result<[Jet2; 2]> {
        let (tw, _) = self.wrap(t);
        let tau0 = self.tau_of_t(tw)?;
        let [px, py] = self.tau_jets(tau0, order)?;
        let base = [t, 0.0];
        if order == 0 {
            return Ok([
                Jet2::constant(px.value(), base, 0),
                Jet2::constant(py.value(), base, 0),
            ]);
        }
        // t(τ) has derivatives |p'|, |p'|', ...
        let speed = crate::expr::sqrt_jet(&(&(&px.dx() * &px.dx()) + &(&py.dx() * &py.dx())));
        let tj = Jet2::from_fn([tau0, 0.0], order, |i, j| match (i, j) {
            (0, 0) => t,
            (i, 0) => speed.get(i - 1, 0),
            _ => 0.0,
        });
        let s0 = speed.value();
        let id = Jet2::variable(0, base, order);
        let zero = Jet2::constant(0.0, base, order);
        let mut q = Jet2::from_fn(base, order, |i, j| match (i, j) {
            (0, 0) => tau0,
            (1, 0) => 1.0 / s0,
            _ => 0.0,
        });
        for _ in 1..order {
            let r = &tj.compose(&q, &zero) - &id;
            q = &q - &r.scale(1.0 / s0);
        }
        Ok([px.compose(&q, &zero), py.compose(&q, &zero)])
    }

    /// Curvature and the continuous tangent-angle lift at arc length `t`.
    pub fn curvature_and_angle(&self, t: f64) -> Result<(f64, f64)> {
        let (tw, loops) = self.wrap(t);
        let tau = self.tau_of_t(tw)?;
        let [x, y] = self.tau_jets(tau, 2)?;
        let (dx, dy) = (x.get(1, 0), y.get(1, 0));
        let speed = dx.hypot(dy);
        if speed < 1e-10 {
            return Err(Error::DegenerateTangent { tau });
        }
        let k = (dx * y.get(2, 0) - dy * x.get(2, 0)) / speed.powi(3);
        let n = self.panels();
        let pos = tau * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let f = pos - i as f64;
        let guess = self.0.lift[i] * (1.0 - f) + self.0.lift[i + 1] * f;
        let theta = dy.atan2(dx);
        let alpha = theta + TAU * ((guess - theta) / TAU).round();
        Ok((k, alpha + TAU * loops))
    }

    /// `m` points at equally spaced parameters.
    pub fn sample_params(&self, m: usize) -> Result<Vec<Point>> {
        (0..m).map(|k| self.point_at_param(k as f64 / m as f64)).collect()
    }
}

/// The closed region bounded by a [`BoundaryCurve`].
#[derive(Clone, Debug)]
pub struct PlanarDomain {
    curve: BoundaryCurve,
    polygon: Arc<Vec<Point>>,
    bbox: [Point; 2],
}

impl PlanarDomain {
    pub fn new(curve: BoundaryCurve) -> Result<Self> {
        let polygon = curve.sample_params(BASE_PANELS)?;
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &polygon {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        // chords cut inside the curve by at most L² k / (8 m²)
        let pad = 1e-6 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
        Ok(PlanarDomain {
            curve,
            polygon: Arc::new(polygon),
            bbox: [[lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad]],
        })
    }

    pub fn unit_disc() -> Self {
        Self::new(BoundaryCurve::circle([0.0, 0.0], 1.0).expect("unit circle")).expect("unit disc")
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    pub fn polygon(&self) -> &[Point] {
        &self.polygon
    }

    /// `[lower-left, upper-right]`.
    pub fn bbox(&self) -> [Point; 2] {
        self.bbox
    }

    pub fn diameter(&self) -> f64 {
        let [lo, hi] = self.bbox;
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    /// Crossing-number test against the sampled boundary polygon.
    pub fn contains(&self, p: Point) -> bool {
        let [lo, hi] = self.bbox;
        if p[0] < lo[0] || p[0] > hi[0] || p[1] < lo[1] || p[1] > hi[1] {
            return false;
        }
        let poly = &self.polygon;
        let mut inside = false;
        let mut j = poly.len() - 1;
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[j]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

/// Collar coordinates `(t, s) ↦ γ(t) + s n(t)`, `n` the inward normal.
#[derive(Clone, Debug)]
pub struct TubularChart {
    curve: BoundaryCurve,
    s_max: f64,
}

impl TubularChart {
    /// Half-width `0.5 / max|k|`, reduced until the sampled collar is injective.
    pub fn new(curve: &BoundaryCurve) -> Result<Self> {
        let mut s_max = 0.5 / curve.max_curvature().max(1e-300);
        let m = 512;
        let l = curve.length();
        let pts: Vec<Point> = (0..m).map(|i| curve.point(l * i as f64 / m as f64)).collect::<Result<_>>()?;
        let kmax = curve.max_curvature();
        let gap = 3.0 / kmax.max(1.0 / l);
        for i in 0..m {
            for j in i + 1..m {
                let d = (j - i) as f64 * l / m as f64;
                if d.min(l - d) < gap {
                    continue;
                }
                let chord = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
                s_max = s_max.min(0.45 * chord);
            }
        }
        Ok(TubularChart {
            curve: curve.clone(),
            s_max,
        })
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    fn check(&self, t: f64, s: f64) -> Result<()> {
        if !(s.abs() < self.s_max) {
            return Err(Error::OutsideCollar {
                t,
                s,
                s_max: self.s_max,
            });
        }
        Ok(())
    }

    pub fn forward(&self, t: f64, s: f64) -> Result<Point> {
        let [x, y] = self.map_jets(t, s, 0)?;
        Ok([x.value(), y.value()])
    }

    /// Jets of the collar map in `(t, s)` at base `(t, s)`.
    pub fn map_jets(&self, t: f64, s: f64, order: usize) -> Result<[Jet2; 2]> {
        self.check(t, s)?;
        let [gx, gy] = self.curve.arc_jets(t, order + 1)?;
        let base = [t, s];
        let lift = |g: &Jet2| Jet2::from_fn(base, order, |i, j| if j == 0 { g.get(i, 0) } else { 0.0 });
        let (tx, ty) = (gx.dx(), gy.dx());
        let sv = Jet2::variable(1, base, order);
        let x = &lift(&gx) - &(&sv * &lift(&ty));
        let y = &lift(&gy) + &(&sv * &lift(&tx));
        Ok([x, y])
    }

    /// Unit tangent `a = e^{iα}` and curvature `k` as `(t, s)` jets of order `order`.
    fn frame_jets(&self, t: f64, s: f64, order: usize) -> Result<(CJet, Jet2)> {
        let [gx, gy] = self.curve.arc_jets(t, order + 2)?;
        let base = [t, s];
        let lift = |g: &Jet2| Jet2::from_fn(base, order, |i, j| if j == 0 { g.get(i, 0) } else { 0.0 });
        let (tx, ty) = (gx.dx(), gy.dx());
        let k = &(&tx * &gy.dx().dx()) - &(&ty * &gx.dx().dx());
        Ok((
            CJet {
                re: lift(&tx),
                im: lift(&ty),
            },
            lift(&k),
        ))
    }
}

/// Partials `∂t^i ∂s^j H` at collar point `(t, s)`.
pub fn pullback_jet(h: &ScalarField, chart: &TubularChart, t: f64, s: f64, order: usize) -> Result<Jet2> {
    let [x, y] = chart.map_jets(t, s, order)?;
    let hj = h.jet([x.value(), y.value()], order)?;
    Ok(hj.compose(&x, &y))
}

const BOUNDARY_PROBES: usize = 64;
const BOUNDARY_TOL: f64 = 1e-8;

/// Errors unless `H` is constant on the boundary at the probe points.
pub fn check_constant_on_boundary(h: &ScalarField, curve: &BoundaryCurve) -> Result<()> {
    let h0 = h.value(curve.point_at_param(0.0)?)?;
    for i in 1..BOUNDARY_PROBES {
        let tau = i as f64 / BOUNDARY_PROBES as f64;
        let r = (h.value(curve.point_at_param(tau)?)? - h0).abs();
        if r > BOUNDARY_TOL {
            let t = curve.t_of_tau(tau)?;
            return Err(Error::NotConstantOnBoundary { t, residual: r });
        }
    }
    Ok(())
}

/// `(H_ss + k H_s - 2i H_st) e^{2iα}` at boundary point `t`.
pub fn boundary_formula_v(h: &ScalarField, chart: &TubularChart, t: f64) -> Result<[f64; 2]> {
    check_constant_on_boundary(h, chart.curve())?;
    boundary_formula_v_unchecked(h, chart, t)
}

/// [`boundary_formula_v`] without the boundary-constancy probe.
pub fn boundary_formula_v_unchecked(h: &ScalarField, chart: &TubularChart, t: f64) -> Result<[f64; 2]> {
    let j = pullback_jet(h, chart, t, 0.0, 2)?;
    let (k, alpha) = chart.curve().curvature_and_angle(t)?;
    let z = Complex64::new(j.get(0, 2) + k * j.get(0, 1), -2.0 * j.get(1, 1)) * Complex64::from_polar(1.0, 2.0 * alpha);
    Ok([z.re, z.im])
}

/// Errors with the first normal order `j < n` at which `∂_s^j H` fails to
/// vanish on the boundary.
pub fn check_boundary_flat(h: &ScalarField, chart: &TubularChart, n: usize) -> Result<()> {
    for t in chart.curve().arc_nodes(BOUNDARY_PROBES / 2)? {
        let j = pullback_jet(h, chart, t, 0.0, n.saturating_sub(1))?;
        for order in 0..n {
            let value = j.get(0, order);
            if value.abs() > BOUNDARY_TOL {
                return Err(Error::BoundaryJetNotFlat { order, t, value });
            }
        }
    }
    Ok(())
}

/// `i^n (∂_s^n H)(t, 0) e^{inα(t)}`.
pub fn boundary_formula_vn(h: &ScalarField, chart: &TubularChart, t: f64, n: usize) -> Result<[f64; 2]> {
    if h.max_order() < n {
        return Err(Error::OrderTooLow {
            what: format!("boundary Loewner formula of {}", h.label()),
            required: n,
            available: h.max_order(),
        });
    }
    check_boundary_flat(h, chart, n)?;
    boundary_formula_vn_unchecked(h, chart, t, n)
}

pub fn boundary_formula_vn_unchecked(h: &ScalarField, chart: &TubularChart, t: f64, n: usize) -> Result<[f64; 2]> {
    let j = pullback_jet(h, chart, t, 0.0, n)?;
    let (_, alpha) = chart.curve().curvature_and_angle(t)?;
    let z = Complex64::i().powu(n as u32) * j.get(0, n) * Complex64::from_polar(1.0, n as f64 * alpha);
    Ok([z.re, z.im])
}

/// Complex-valued jet.
#[derive(Clone, Debug)]
struct CJet {
    re: Jet2,
    im: Jet2,
}

impl CJet {
    fn real(re: Jet2) -> CJet {
        let im = Jet2::zeros(re.base(), re.order());
        CJet { re, im }
    }

    fn mul(&self, o: &CJet) -> CJet {
        CJet {
            re: &(&self.re * &o.re) - &(&self.im * &o.im),
            im: &(&self.re * &o.im) + &(&self.im * &o.re),
        }
    }

    fn add(&self, o: &CJet) -> CJet {
        CJet {
            re: &self.re + &o.re,
            im: &self.im + &o.im,
        }
    }

    fn scale(&self, c: f64) -> CJet {
        CJet {
            re: self.re.scale(c),
            im: self.im.scale(c),
        }
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Outcome of the commutation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutationResidual {
    pub max_residual: f64,
    /// Largest modulus of either side over the probes.
    pub scale: f64,
}

/// Compares `(a𝒟)^n f` with `a^n ∏_{k=1..n} (𝒟 + (n-k) b) f` at collar
/// probes `(t, s)`, where `𝒟 = (1 - sk)^{-1} ∂t + i ∂s`, `a = e^{iα}` and
/// `b = ik / (1 - sk)`. `f` is a field in the variables `(t, s)`.
pub fn verify_commutation(
    n: usize,
    f: &ScalarField,
    chart: &TubularChart,
    probes: &[(f64, f64)],
) -> Result<CommutationResidual> {
    let mut out = CommutationResidual {
        max_residual: 0.0,
        scale: 0.0,
    };
    for &(t, s) in probes {
        chart.check(t, s)?;
        let fj = f.jet([t, s], n)?;
        let (a, k) = chart.frame_jets(t, s, n)?;
        let sv = Jet2::variable(1, [t, s], n);
        let w = recip_jet(&(&sv * &k).scale(-1.0).add_const(1.0));
        let b = CJet {
            re: Jet2::zeros([t, s], n),
            im: &k * &w,
        };
        let d = |g: &CJet| CJet {
            re: &(&w * &g.re.dx()) - &g.im.dy(),
            im: &(&w * &g.im.dx()) + &g.re.dy(),
        };

        let mut lhs = CJet::real(fj.clone());
        for _ in 0..n {
            lhs = a.mul(&d(&lhs));
        }
        let mut rhs = CJet::real(fj);
        for k in (1..=n).rev() {
            let dg = d(&rhs);
            rhs = dg.add(&b.mul(&rhs).scale((n - k) as f64));
        }
        let mut an = CJet::real(Jet2::constant(1.0, [t, s], n));
        for _ in 0..n {
            an = an.mul(&a);
        }
        let (l, r) = (lhs.value(), an.mul(&rhs).value());
        out.max_residual = out.max_residual.max((l - r).norm());
        out.scale = out.scale.max(l.norm()).max(r.norm());
    }
    Ok(out)
}

/// Seeded collar probes spread along the curve with `|s| < 0.9 s_max`.
pub fn collar_probes(chart: &TubularChart, count: usize, seed: u64) -> Vec<(f64, f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let l = chart.curve().length();
    let w = 0.9 * chart.s_max();
    (0..count).map(|_| (rng.gen_range(0.0..l), rng.gen_range(-w..w))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::fields::{conformal_defect, loewner_field};

    fn sf(s: &str) -> ScalarField {
        ScalarField::parse(s).unwrap()
    }

    fn unit() -> BoundaryCurve {
        BoundaryCurve::circle([0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn circle_geometry() {
        let c = unit();
        assert!((c.length() - TAU).abs() < 1e-10);
        for i in 0..20 {
            let t = i as f64 * 0.31;
            let (k, alpha) = c.curvature_and_angle(t).unwrap();
            assert!((k - 1.0).abs() < 1e-12);
            let p = c.point(t).unwrap();
            assert!((p[0] - t.cos()).abs() < 1e-10 && (p[1] - t.sin()).abs() < 1e-10);
            let expect = t + PI / 2.0;
            assert!((alpha - expect).abs() < 1e-10, "{alpha} vs {expect}");
        }
    }

    #[test]
    fn ellipse_curvature_at_vertex() {
        let c = BoundaryCurve::ellipse([0.0, 0.0], 2.0, 1.0).unwrap();
        let (k, _) = c.curvature_and_angle(0.0).unwrap();
        assert!((k - 2.0).abs() < 1e-12);
        // oracle: finite differences of the tangent angle along arc length
        let h = 1e-4;
        let (_, a1) = c.curvature_and_angle(1.0 + h).unwrap();
        let (k0, _) = c.curvature_and_angle(1.0).unwrap();
        let (_, a0) = c.curvature_and_angle(1.0 - h).unwrap();
        assert!(((a1 - a0) / (2.0 * h) - k0).abs() < 1e-6);
    }

    #[test]
    fn angle_lift_turns_once() {
        for c in [
            unit(),
            BoundaryCurve::ellipse([0.3, -0.1], 1.0, 0.4).unwrap(),
            BoundaryCurve::parametric("(1 + 0.2*cos(6*pi*tau))*cos(2*pi*tau)", "(1 + 0.2*cos(6*pi*tau))*sin(2*pi*tau)").unwrap(),
        ] {
            let l = c.length();
            let (_, a0) = c.curvature_and_angle(0.0).unwrap();
            let (_, a1) = c.curvature_and_angle(l * (1.0 - 1e-9)).unwrap();
            assert!((a1 - a0 - TAU).abs() < 1e-6);
            let mut prev = a0;
            for i in 1..400 {
                let (_, a) = c.curvature_and_angle(l * i as f64 / 400.0).unwrap();
                assert!((a - prev).abs() < 0.2);
                prev = a;
            }
        }
    }

    #[test]
    fn clockwise_input_is_reversed() {
        let c = BoundaryCurve::parametric("cos(2*pi*tau)", "-sin(2*pi*tau)").unwrap();
        assert!(c.reversed());
        let (k, _) = c.curvature_and_angle(0.5).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_curves() {
        assert!(matches!(
            BoundaryCurve::parametric("cos(2*pi*tau)", "sin(2*pi*tau) + tau"),
            Err(Error::InvalidCurve(_))
        ));
        assert!(matches!(
            BoundaryCurve::parametric("cos(2*pi*tau)", "cos(2*pi*tau)"),
            Err(Error::InvalidCurve(_))
        ));
        assert!(matches!(
            BoundaryCurve::parametric("cos(4*pi*tau)", "sin(4*pi*tau)"),
            Err(Error::InvalidCurve(_))
        ));
    }

    #[test]
    fn arc_length_round_trip() {
        let c = BoundaryCurve::ellipse([0.0, 0.0], 1.5, 0.5).unwrap();
        for i in 0..50 {
            let tau = i as f64 / 50.0 + 0.003;
            let t = c.t_of_tau(tau).unwrap();
            assert!((c.tau_of_t(t).unwrap() - tau).abs() < 1e-13);
        }
    }

    #[test]
    fn arc_jets_have_unit_speed() {
        let c = BoundaryCurve::ellipse([0.0, 0.0], 1.5, 0.5).unwrap();
        for i in 0..10 {
            let t = i as f64 * 0.37;
            let [x, y] = c.arc_jets(t, 4).unwrap();
            let speed2 = &(&x.dx() * &x.dx()) + &(&y.dx() * &y.dx());
            assert!((speed2.value() - 1.0).abs() < 1e-12);
            for d in 1..=3 {
                assert!(speed2.get(d, 0).abs() < 1e-9, "{:?}", speed2);
            }
        }
    }

    #[test]
    fn domain_contains() {
        let d = PlanarDomain::new(BoundaryCurve::ellipse([0.0, 0.0], 1.0, 0.5).unwrap()).unwrap();
        assert!(d.contains([0.0, 0.0]));
        assert!(d.contains([0.9, 0.0]));
        assert!(!d.contains([0.0, 0.6]));
        assert!(!d.contains([5.0, 5.0]));
    }

    #[test]
    fn collar_width() {
        for c in [unit(), BoundaryCurve::ellipse([0.0, 0.0], 1.0, 0.5).unwrap()] {
            let ch = TubularChart::new(&c).unwrap();
            assert!(ch.s_max() * c.max_curvature() <= 0.5 + 1e-12);
            assert!(ch.s_max() > 0.05);
            assert!(matches!(ch.forward(0.0, ch.s_max()), Err(Error::OutsideCollar { .. })));
        }
        let ch = TubularChart::new(&unit()).unwrap();
        let p = ch.forward(0.0, 0.25).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn radial_pullback() {
        let ch = TubularChart::new(&unit()).unwrap();
        let h = sf("x^2 + y^2");
        for i in 0..10 {
            let t = i as f64 * 0.6;
            for s in [0.0, 0.1, -0.2] {
                let j = pullback_jet(&h, &ch, t, s, 3).unwrap();
                assert!((j.value() - (1.0 - s) * (1.0 - s)).abs() < 1e-12);
                assert!((j.get(0, 1) - (2.0 * s - 2.0)).abs() < 1e-12);
                assert!((j.get(0, 2) - 2.0).abs() < 1e-12);
                assert!(j.get(1, 0).abs() < 1e-12 && j.get(2, 0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_on_boundary_has_flat_tangential_jet() {
        let c = BoundaryCurve::ellipse([0.0, 0.0], 1.0, 0.7).unwrap();
        let ch = TubularChart::new(&c).unwrap();
        let h = sf("(x^2 + y^2/0.49 - 1)*(2 + x*y)");
        for i in 0..100 {
            let t = c.length() * i as f64 / 100.0;
            let j = pullback_jet(&h, &ch, t, 0.0, 2).unwrap();
            assert!(j.get(1, 0).abs() < 1e-10 && j.get(2, 0).abs() < 1e-10);
        }
    }

    #[test]
    fn first_order_pullback_is_directional() {
        let c = BoundaryCurve::ellipse([0.1, 0.0], 1.2, 0.8).unwrap();
        let ch = TubularChart::new(&c).unwrap();
        let h = sf("sin(x + 2*y) + x*y^2");
        for i in 0..20 {
            let t = i as f64 * 0.27;
            let j = pullback_jet(&h, &ch, t, 0.0, 1).unwrap();
            let p = c.point(t).unwrap();
            assert!((j.value() - h.value(p).unwrap()).abs() < 1e-12);
            let g = h.jet(p, 1).unwrap();
            let [x, y] = c.arc_jets(t, 1).unwrap();
            let (tx, ty) = (x.get(1, 0), y.get(1, 0));
            assert!((j.get(1, 0) - (g.get(1, 0) * tx + g.get(0, 1) * ty)).abs() < 1e-12);
            assert!((j.get(0, 1) - (-g.get(1, 0) * ty + g.get(0, 1) * tx)).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_formula_on_unit_circle() {
        let c = unit();
        let ch = TubularChart::new(&c).unwrap();
        let h = sf("(1 - x^2 - y^2)^2");
        for i in 0..10 {
            let t = i as f64 * 0.5;
            let v = boundary_formula_v(&h, &ch, t).unwrap();
            let (_, alpha) = c.curvature_and_angle(t).unwrap();
            let expect = Complex64::from_polar(8.0, 2.0 * alpha);
            assert!((v[0] - expect.re).abs() < 1e-10 && (v[1] - expect.im).abs() < 1e-10);
            // and Cartesian: -8 e^{2iθ}
            assert!((v[0] + 8.0 * (2.0 * t).cos()).abs() < 1e-9);
        }
        assert!(matches!(
            boundary_formula_v(&sf("x"), &ch, 0.0),
            Err(Error::NotConstantOnBoundary { .. })
        ));
    }

    #[test]
    fn boundary_formula_matches_defect() {
        let cases = [
            (unit(), "(1 - x^2 - y^2)^2*(1 + 0.3*x - 0.5*x*y + 0.2*y^2)"),
            (
                BoundaryCurve::ellipse([0.0, 0.0], 2.0, 1.0).unwrap(),
                "(1 - x^2/4 - y^2)^2*(2 + y - 0.1*x^2)",
            ),
            (BoundaryCurve::ellipse([0.0, 0.0], 1.0, 0.5f64.sqrt()).unwrap(), "1 - x^2 - 2*y^2"),
        ];
        for (c, text) in cases {
            let ch = TubularChart::new(&c).unwrap();
            let h = sf(text);
            let v = conformal_defect(&h).unwrap();
            for i in 0..100 {
                let t = c.length() * i as f64 / 100.0;
                let a = boundary_formula_v(&h, &ch, t).unwrap();
                let b = v.value(c.point(t).unwrap()).unwrap();
                assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1e-6, "{text}: {a:?} {b:?}");
            }
        }
    }

    fn case_one_factor(h: &str) -> Vec<f64> {
        let c = BoundaryCurve::ellipse([0.0, 0.0], 1.0, 0.5f64.sqrt()).unwrap();
        let ch = TubularChart::new(&c).unwrap();
        let h = sf(h);
        (0..100)
            .map(|i| {
                let t = c.length() * i as f64 / 100.0;
                let v = boundary_formula_v(&h, &ch, t).unwrap();
                let (_, alpha) = c.curvature_and_angle(t).unwrap();
                let e = Complex64::from_polar(1.0, 2.0 * alpha);
                v[0] * e.re + v[1] * e.im
            })
            .collect()
    }

    #[test]
    fn case_one_factor_sign() {
        // the quadratic has a constant defect, so H_ss + kH_s must change sign
        let quad = case_one_factor("1 - x^2 - 2*y^2");
        assert!(quad.iter().any(|&d| d > 1.0) && quad.iter().any(|&d| d < -1.0));
        let good = case_one_factor("(1 - x^2 - 2*y^2)*(3 - x^2 - y^2)");
        assert!(good.iter().all(|&d| d > 2.9), "{good:?}");
    }

    #[test]
    fn loewner_boundary_formula() {
        let c = unit();
        let ch = TubularChart::new(&c).unwrap();
        let h = sf("(1 - x^2 - y^2)^3");
        let v3 = loewner_field(&h, 3).unwrap();
        for i in 0..20 {
            let t = i as f64 * 0.3;
            let a = boundary_formula_vn(&h, &ch, t, 3).unwrap();
            assert!((a[0].hypot(a[1]) - 48.0).abs() < 1e-9);
            let b = v3.value(c.point(t).unwrap()).unwrap();
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1e-6);
        }
        // n = 2 reduces to the V formula when H_s = 0, with V_2 = -V
        let h2 = sf("(1 - x^2 - y^2)^2*(1 + 0.5*x)");
        let a = boundary_formula_vn(&h2, &ch, 0.7, 2).unwrap();
        let b = boundary_formula_v(&h2, &ch, 0.7).unwrap();
        assert!((a[0] + b[0]).abs() < 1e-10 && (a[1] + b[1]).abs() < 1e-10);

        let err = boundary_formula_vn(&sf("(1 - x^2 - y^2)^2"), &ch, 0.0, 3).unwrap_err();
        assert!(matches!(err, Error::BoundaryJetNotFlat { order: 2, .. }), "{err:?}");
    }

    #[test]
    fn commutation_base_cases() {
        let ch = TubularChart::new(&unit()).unwrap();
        let probes = collar_probes(&ch, 30, 1);
        let f = ScalarField::parse_with("sin(t)*s + cos(2*s)*t", ("t", "s")).unwrap();
        let r = verify_commutation(1, &f, &ch, &probes).unwrap();
        assert!(r.max_residual <= 1e-14, "{r:?}");
        let f2 = ScalarField::parse_with(&format!("cos(2*pi*t/{})*s^2", TAU), ("t", "s")).unwrap();
        let r = verify_commutation(2, &f2, &ch, &probes).unwrap();
        assert!(r.max_residual <= 1e-8, "{r:?}");
    }

    #[test]
    fn commutation_order_three() {
        let c = BoundaryCurve::ellipse([0.0, 0.0], 1.3, 0.7).unwrap();
        let ch = TubularChart::new(&c).unwrap();
        let probes = collar_probes(&ch, 100, 2);
        let f = ScalarField::parse_with("exp(0.3*s)*sin(t + s^2) + t*s^3", ("t", "s")).unwrap();
        let r = verify_commutation(3, &f, &ch, &probes).unwrap();
        assert!(r.max_residual <= 1e-6 * r.scale.max(1.0), "{r:?}");
        // the plain composition without the b-shifts is genuinely different
        assert!(r.scale > 0.1);
        let outside = [(0.0, 2.0 * ch.s_max())];
        assert!(matches!(verify_commutation(2, &f, &ch, &outside), Err(Error::OutsideCollar { .. })));
    }
}
