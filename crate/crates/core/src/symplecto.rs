//! Area-preserving maps in midpoint graph coordinates.
//!
//! The graph `{(z, F(z))}` is sent by `L(z1, z2) = ((z1 + z2)/2, i(z1 - z2))`
//! into `T*Δ`. For moderate maps it becomes the differential of a function
//! `H(u, v)` with `H_u = g - y` and `H_v = x - f`, where `(u, v)` is the
//! midpoint of `z` and `F(z)`.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::expr::Jet2;
use crate::fields::{map_conformal_defect, FieldSample, PlanarMap, ScalarField, VectorField};
use crate::index::{domain_samples, locate_zeros, SearchOptions, ZeroSearch};
use crate::{Mat2, Point};

/// A point of `C² = C × C` and its image under `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphPoint {
    pub z1: Point,
    pub z2: Point,
    pub w1: Point,
    pub w2: Point,
}

pub fn graph_transform(z1: Point, z2: Point) -> GraphPoint {
    let w1 = [0.5 * (z1[0] + z2[0]), 0.5 * (z1[1] + z2[1])];
    let w2 = [-(z1[1] - z2[1]), z1[0] - z2[0]];
    GraphPoint { z1, z2, w1, w2 }
}

/// `L⁻¹`: `z1 = w1 - i w2 / 2`, `z2 = w1 + i w2 / 2`.
pub fn graph_inverse(w1: Point, w2: Point) -> GraphPoint {
    let z1 = [w1[0] + 0.5 * w2[1], w1[1] - 0.5 * w2[0]];
    let z2 = [w1[0] - 0.5 * w2[1], w1[1] + 0.5 * w2[0]];
    GraphPoint { z1, z2, w1, w2 }
}

/// Matrix of `L` from `(x1, y1, x2, y2)` to `(u1, v1, u2, v2)`.
pub fn graph_matrix() -> [[f64; 4]; 4] {
    [
        [0.5, 0.0, 0.5, 0.0],
        [0.0, 0.5, 0.0, 0.5],
        [0.0, -1.0, 0.0, 1.0],
        [1.0, 0.0, -1.0, 0.0],
    ]
}

/// `max |Lᵀ M(Ω₂) L - M(Ω₁)|` for `Ω₁ = dx1∧dy1 - dx2∧dy2`,
/// `Ω₂ = du2∧du1 + dv2∧dv1`.
pub fn pullback_identity_residual() -> f64 {
    let mut m1 = [[0.0; 4]; 4];
    m1[0][1] = 1.0;
    m1[1][0] = -1.0;
    m1[2][3] = -1.0;
    m1[3][2] = 1.0;
    let mut m2 = [[0.0; 4]; 4];
    m2[2][0] = 1.0;
    m2[0][2] = -1.0;
    m2[3][1] = 1.0;
    m2[1][3] = -1.0;
    let l = graph_matrix();
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    s += l[a][i] * m2[a][b] * l[b][j];
                }
            }
            worst = worst.max((s - m1[i][j]).abs());
        }
    }
    worst
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn det4(m: [[f64; 4]; 4]) -> f64 {
    let mut d = 0.0;
    for c in 0..4 {
        let mut minor = [[0.0; 3]; 3];
        for r in 1..4 {
            let mut k = 0;
            for cc in 0..4 {
                if cc != c {
                    minor[r - 1][k] = m[r][cc];
                    k += 1;
                }
            }
        }
        let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
        d += sign * m[0][c] * det3(minor);
    }
    d
}

/// Determinant of the tangent plane of the graph against the fibers of the
/// projection to the diagonal.
pub fn transversality_determinant(j: Mat2) -> f64 {
    let (fx, fy, gx, gy) = (j[0][0], j[0][1], j[1][0], j[1][1]);
    det4([
        [1.0, 0.0, fx, gx],
        [0.0, 1.0, fy, gy],
        [1.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, -1.0],
    ])
}

fn det2(j: Mat2) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// `max |det₄ - (2 + f_x + g_y)|` over `probes`.
pub fn transversality_determinant_check(map: &PlanarMap, probes: &[Point]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &p in probes {
        let (_, j) = map.jacobian(p)?;
        let r = (det2(j) - 1.0).abs();
        if r > 1e-8 {
            return Err(Error::NotSymplecticAtProbe { at: p, residual: r });
        }
        worst = worst.max((transversality_determinant(j) - (2.0 + j[0][0] + j[1][1])).abs());
    }
    Ok(worst)
}

pub const MODERATE_THRESHOLD: f64 = 1e-6;

/// Result of [`moderateness`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moderateness {
    /// `min |2 + f_x + g_y|`.
    pub min: f64,
    pub at: Point,
    pub moderate: bool,
}

fn trace_margin(map: &PlanarMap, p: Point) -> Result<f64> {
    let (_, j) = map.jacobian(p)?;
    Ok((2.0 + j[0][0] + j[1][1]).abs())
}

/// Dense sampling followed by a pattern search from the worst sample.
pub fn moderateness(map: &PlanarMap, domain: &PlanarDomain, samples: usize) -> Result<Moderateness> {
    if map.max_order() < 1 {
        return Err(Error::OrderTooLow {
            what: format!("moderateness of {}", map.label()),
            required: 1,
            available: map.max_order(),
        });
    }
    let mut pts = domain_samples(domain, samples, 0);
    pts.extend(domain.curve().sample_params(samples.clamp(16, 256))?);
    let vals: Vec<f64> = pts.par_iter().map(|&p| trace_margin(map, p)).collect::<Result<_>>()?;
    let (mut at, mut min) = pts
        .iter()
        .zip(&vals)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(p, v)| (*p, *v))
        .unwrap_or(([0.0, 0.0], f64::INFINITY));
    let mut step = domain.diameter() / (samples as f64).sqrt().max(1.0);
    while step > 1e-9 * domain.diameter() && min > 0.0 {
        let mut moved = false;
        for d in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
            let q = [at[0] + step * d[0], at[1] + step * d[1]];
            if !domain.contains(q) {
                continue;
            }
            let v = trace_margin(map, q)?;
            if v < min {
                min = v;
                at = q;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok(Moderateness {
        min,
        at,
        moderate: min > MODERATE_THRESHOLD,
    })
}

/// `max |F(γ) - γ|` over `samples` boundary points, with the worst point.
pub fn boundary_displacement(map: &PlanarMap, domain: &PlanarDomain, samples: usize) -> Result<(f64, Point)> {
    let pts = domain.curve().sample_params(samples)?;
    let d: Vec<f64> = pts
        .par_iter()
        .map(|&p| map.image(p).map(|q| (q[0] - p[0]).hypot(q[1] - p[1])))
        .collect::<Result<_>>()?;
    Ok(pts
        .iter()
        .zip(&d)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(p, v)| (*v, *p))
        .unwrap_or((0.0, [0.0, 0.0])))
}

const BOUNDARY_IDENTITY_TOL: f64 = 1e-8;

fn require_boundary_identity(map: &PlanarMap, domain: &PlanarDomain) -> Result<f64> {
    let (r, at) = boundary_displacement(map, domain, 200)?;
    if r > BOUNDARY_IDENTITY_TOL {
        return Err(Error::NotIdentityOnBoundary { at, residual: r });
    }
    Ok(r)
}

fn require_moderate(map: &PlanarMap, domain: &PlanarDomain) -> Result<Moderateness> {
    let m = moderateness(map, domain, 1024)?;
    if !m.moderate {
        return Err(Error::NotModerate { min: m.min, at: m.at });
    }
    Ok(m)
}

fn inv2(a: Mat2) -> Option<Mat2> {
    let d = det2(a);
    if !(d.abs() > 1e-300) {
        return None;
    }
    Some([[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]])
}

fn mul2(a: Mat2, b: Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn apply2(a: Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// The midpoint map `m(p) = (p + F(p))/2` and its Jacobian `(I + dF)/2`.
pub fn midpoint(map: &PlanarMap, p: Point) -> Result<(Point, Mat2)> {
    let (q, j) = map.jacobian(p)?;
    Ok((
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])],
        [[0.5 * (1.0 + j[0][0]), 0.5 * j[0][1]], [0.5 * j[1][0], 0.5 * (1.0 + j[1][1])]],
    ))
}

/// Solves `m(p) = w` by damped Newton started at `w`.
pub fn midpoint_inverse(map: &PlanarMap, w: Point) -> Result<Point> {
    newton_solve(w, w, |p| midpoint(map, p))
}

fn newton_solve(target: Point, seed: Point, f: impl Fn(Point) -> Result<(Point, Mat2)>) -> Result<Point> {
    let fail = || Error::NewtonDivergence { at: target };
    let scale = 1.0f64.max(target[0].abs()).max(target[1].abs());
    let mut p = seed;
    let (val, mut jac) = f(p)?;
    let mut r = [target[0] - val[0], target[1] - val[1]];
    let mut rn = r[0].hypot(r[1]);
    for _ in 0..60 {
        if rn <= 4e-16 * scale {
            return Ok(p);
        }
        let step = apply2(inv2(jac).ok_or_else(fail)?, r);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let q = [p[0] + lambda * step[0], p[1] + lambda * step[1]];
            if let Ok((v, j)) = f(q) {
                let rq = [target[0] - v[0], target[1] - v[1]];
                let qn = rq[0].hypot(rq[1]);
                if qn < rn || (qn <= 1e-13 * scale && lambda == 1.0) {
                    p = q;
                    jac = j;
                    r = rq;
                    accepted = qn < rn;
                    rn = qn;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return if rn <= 1e-12 * scale { Ok(p) } else { Err(fail()) };
        }
    }
    if rn <= 1e-12 * scale {
        Ok(p)
    } else {
        Err(fail())
    }
}

/// Findings of [`midpoint_diagnostics`]; empty lists mean the check passed.
#[derive(Debug, Clone, Default)]
pub struct MidpointReport {
    pub samples: usize,
    /// (a) sources whose midpoint left `D`.
    pub outside: Vec<Point>,
    /// (b) source pairs far apart with nearly equal midpoints.
    pub injectivity_violations: Vec<(Point, Point)>,
    /// (c) sources `p` for which Newton on `m(·) = m(p)`, seeded at `m(p)`,
    /// failed or did not return to `p`.
    pub newton_failures: Vec<Point>,
}

impl MidpointReport {
    pub fn passed(&self) -> bool {
        self.outside.is_empty() && self.injectivity_violations.is_empty() && self.newton_failures.is_empty()
    }
}

/// Checks on a grid that the midpoint map sends `D` into itself injectively
/// and can be inverted by Newton.
pub fn midpoint_diagnostics(map: &PlanarMap, domain: &PlanarDomain) -> Result<MidpointReport> {
    const N: usize = 48;
    const K: f64 = 8.0;
    let [lo, hi] = domain.bbox();
    let h = (hi[0] - lo[0]).max(hi[1] - lo[1]) / N as f64;
    let mut grid = Vec::new();
    for i in 0..=N {
        for k in 0..=N {
            let p = [lo[0] + (i as f64 + 0.5) * h, lo[1] + (k as f64 + 0.5) * h];
            if domain.contains(p) {
                grid.push(p);
            }
        }
    }
    let mids: Vec<Point> = grid.par_iter().map(|&p| midpoint(map, p).map(|m| m.0)).collect::<Result<_>>()?;
    let mut report = MidpointReport {
        samples: grid.len(),
        ..Default::default()
    };
    for (p, m) in grid.iter().zip(&mids) {
        if !domain.contains(*m) {
            report.outside.push(*p);
        }
    }
    let delta = 0.5 * h;
    let cell = |m: Point| ((m[0] / delta).floor() as i64, (m[1] / delta).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, m) in mids.iter().enumerate() {
        buckets.entry(cell(*m)).or_default().push(i);
    }
    for (i, m) in mids.iter().enumerate() {
        let (cx, cy) = cell(*m);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(js) = buckets.get(&(cx + dx, cy + dy)) else { continue };
                for &j in js {
                    if j <= i {
                        continue;
                    }
                    let dm = (mids[j][0] - m[0]).hypot(mids[j][1] - m[1]);
                    let ds = (grid[j][0] - grid[i][0]).hypot(grid[j][1] - grid[i][1]);
                    if dm < delta && ds > K * delta {
                        report.injectivity_violations.push((grid[i], grid[j]));
                    }
                }
            }
        }
    }
    let fails: Vec<Option<Point>> = grid
        .par_iter()
        .zip(&mids)
        .map(|(&p, &w)| match midpoint_inverse(map, w) {
            Ok(q) => Ok(((q[0] - p[0]).hypot(q[1] - p[1]) > 1e-8 || det2(midpoint(map, q)?.1) <= 0.0).then_some(p)),
            Err(Error::NewtonDivergence { .. }) => Ok(Some(p)),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    report.newton_failures = fails.into_iter().flatten().collect();
    Ok(report)
}

/// The map generated by `h(u, v)`: solve `x = u + H_v/2`, `y = v - H_u/2`
/// for `(u, v)`, then `f = u - H_v/2`, `g = v + H_u/2`.
pub fn map_from_generating_function(h: &ScalarField) -> Result<PlanarMap> {
    if h.max_order() < 2 {
        return Err(Error::OrderTooLow {
            what: format!("map generated by {}", h.label()),
            required: 2,
            available: h.max_order(),
        });
    }
    let hf = h.clone();
    let first_order = move |p: Point| -> Result<(Point, Mat2)> {
        let w = newton_solve(p, p, |w| {
            let j = hf.jet(w, 2)?;
            let (hu, hv) = (j.get(1, 0), j.get(0, 1));
            let (huu, huv, hvv) = (j.get(2, 0), j.get(1, 1), j.get(0, 2));
            Ok((
                [w[0] + 0.5 * hv, w[1] - 0.5 * hu],
                [[1.0 + 0.5 * huv, 0.5 * hvv], [-0.5 * huu, 1.0 - 0.5 * huv]],
            ))
        })?;
        let j = hf.jet(w, 2)?;
        let (hu, hv) = (j.get(1, 0), j.get(0, 1));
        let (huu, huv, hvv) = (j.get(2, 0), j.get(1, 1), j.get(0, 2));
        let dxy = [[1.0 + 0.5 * huv, 0.5 * hvv], [-0.5 * huu, 1.0 - 0.5 * huv]];
        let dfg = [[1.0 - 0.5 * huv, -0.5 * hvv], [0.5 * huu, 1.0 + 0.5 * huv]];
        let jac = mul2(dfg, inv2(dxy).ok_or(Error::NewtonDivergence { at: p })?);
        Ok(([w[0] - 0.5 * hv, w[1] + 0.5 * hu], jac))
    };
    let fd = 1e-5;
    Ok(PlanarMap::new(format!("gen[{}]", h.label()), 2, true, move |p, order| {
        let (img, j) = first_order(p)?;
        let mut f = Jet2::zeros(p, order);
        let mut g = Jet2::zeros(p, order);
        f.set(0, 0, img[0]);
        g.set(0, 0, img[1]);
        if order >= 1 {
            f.set(1, 0, j[0][0]);
            f.set(0, 1, j[0][1]);
            g.set(1, 0, j[1][0]);
            g.set(0, 1, j[1][1]);
        }
        if order >= 2 {
            let (_, jxp) = first_order([p[0] + fd, p[1]])?;
            let (_, jxm) = first_order([p[0] - fd, p[1]])?;
            let (_, jyp) = first_order([p[0], p[1] + fd])?;
            let (_, jym) = first_order([p[0], p[1] - fd])?;
            for (row, jet) in [(0usize, &mut f), (1usize, &mut g)] {
                jet.set(2, 0, (jxp[row][0] - jxm[row][0]) / (2.0 * fd));
                jet.set(0, 2, (jyp[row][1] - jym[row][1]) / (2.0 * fd));
                jet.set(
                    1,
                    1,
                    0.25 * ((jyp[row][0] - jym[row][0]) + (jxp[row][1] - jxm[row][1])) / fd,
                );
            }
        }
        Ok([f, g])
    })
    .with_fd_jets(true))
}

fn gk15(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    const XK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.0,
    ];
    const WK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * XK[i])? + f(c + h * XK[i])?;
        k += WK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    Ok((k * h, ((k - g) * h).abs()))
}

/// Adaptive Gauss–Kronrod 7/15 to absolute tolerance `tol`.
fn integrate(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64, depth: usize) -> Result<f64> {
    let (v, e) = gk15(f, a, b)?;
    if e <= tol || depth == 0 || (b - a).abs() < 1e-12 {
        return Ok(v);
    }
    let m = 0.5 * (a + b);
    Ok(integrate(f, a, m, 0.5 * tol, depth - 1)? + integrate(f, m, b, 0.5 * tol, depth - 1)?)
}

/// Hessian `[H_uu, H_uv, H_vv]` at a point of the diagonal.
pub trait HessianSource: Sync {
    fn hessian(&self, w: Point) -> Result<[f64; 3]>;
}

impl HessianSource for ScalarField {
    fn hessian(&self, w: Point) -> Result<[f64; 3]> {
        let j = self.jet(w, 2)?;
        Ok([j.get(2, 0), j.get(1, 1), j.get(0, 2)])
    }
}

/// Quadrature tolerance for [`GeneratingFunction::value`].
pub const QUADRATURE_TOL: f64 = 1e-10;
const CLOSEDNESS_LIMIT: f64 = 1e-5;

/// The function on the diagonal whose differential is the graph of a moderate map.
#[derive(Debug, Clone)]
pub struct GeneratingFunction {
    map: PlanarMap,
    domain: PlanarDomain,
    base: Point,
    /// `sup |∂_v H_u - ∂_u H_v|` over the probes.
    pub closedness_residual: f64,
    pub closedness_at: Point,
    /// `sup |∇H|` over boundary probes.
    pub boundary_gradient: f64,
}

impl GeneratingFunction {
    pub fn base(&self) -> Point {
        self.base
    }

    pub fn map(&self) -> &PlanarMap {
        &self.map
    }

    /// `(H_u, H_v) = (g - y, x - f)` at the preimage of `w`.
    pub fn gradient(&self, w: Point) -> Result<[f64; 2]> {
        let p = midpoint_inverse(&self.map, w)?;
        let q = self.map.image(p)?;
        Ok([q[1] - p[1], p[0] - q[0]])
    }

    fn raw_hessian(&self, w: Point) -> Result<Mat2> {
        let p = midpoint_inverse(&self.map, w)?;
        let (_, j) = self.map.jacobian(p)?;
        // d(H_u, H_v)/d(x, y) times d(x, y)/d(u, v)
        let b = [[j[1][0], j[1][1] - 1.0], [1.0 - j[0][0], -j[0][1]]];
        let a = [[0.5 * (1.0 + j[0][0]), 0.5 * j[0][1]], [0.5 * j[1][0], 0.5 * (1.0 + j[1][1])]];
        Ok(mul2(b, inv2(a).ok_or(Error::NewtonDivergence { at: w })?))
    }

    /// Central differences of [`GeneratingFunction::gradient`].
    pub fn hessian_fd(&self, w: Point, h: f64) -> Result<[f64; 3]> {
        let gxp = self.gradient([w[0] + h, w[1]])?;
        let gxm = self.gradient([w[0] - h, w[1]])?;
        let gyp = self.gradient([w[0], w[1] + h])?;
        let gym = self.gradient([w[0], w[1] - h])?;
        let huu = (gxp[0] - gxm[0]) / (2.0 * h);
        let hvv = (gyp[1] - gym[1]) / (2.0 * h);
        let huv = 0.25 * ((gyp[0] - gym[0]) + (gxp[1] - gxm[1])) / h;
        Ok([huu, huv, hvv])
    }

    /// `H(w) - H(base)` along an axis-aligned staircase.
    pub fn value_via(&self, w: Point, horizontal_first: bool) -> Result<f64> {
        let b = self.base;
        let corner = if horizontal_first { [w[0], b[1]] } else { [b[0], w[1]] };
        let hor = |from: Point, to_u: f64| -> Result<f64> {
            integrate(&|u: f64| Ok(self.gradient([u, from[1]])?[0]), from[0], to_u, 0.5 * QUADRATURE_TOL, 30)
        };
        let ver = |from: Point, to_v: f64| -> Result<f64> {
            integrate(&|v: f64| Ok(self.gradient([from[0], v])?[1]), from[1], to_v, 0.5 * QUADRATURE_TOL, 30)
        };
        if horizontal_first {
            Ok(hor(b, w[0])? + ver(corner, w[1])?)
        } else {
            Ok(ver(b, w[1])? + hor(corner, w[0])?)
        }
    }

    fn staircase_inside(&self, w: Point, horizontal_first: bool) -> bool {
        let b = self.base;
        let c = if horizontal_first { [w[0], b[1]] } else { [b[0], w[1]] };
        (0..=32).all(|k| {
            let s = k as f64 / 32.0;
            self.domain.contains([b[0] + s * (c[0] - b[0]), b[1] + s * (c[1] - b[1])])
                && self.domain.contains([c[0] + s * (w[0] - c[0]), c[1] + s * (w[1] - c[1])])
        })
    }

    /// `H(w)` normalized by `H(base) = 0`, along a staircase kept inside `D`
    /// when one exists.
    pub fn value(&self, w: Point) -> Result<f64> {
        let hf = self.staircase_inside(w, true) || !self.staircase_inside(w, false);
        self.value_via(w, hf)
    }

    /// `H` as a [`ScalarField`] of order 2.
    pub fn to_scalar_field(&self) -> ScalarField {
        let me = self.clone();
        ScalarField::new(format!("H[{}]", self.map.label()), 2, move |w, order| {
            let mut j = Jet2::zeros(w, order);
            j.set(0, 0, me.value(w)?);
            if order >= 1 {
                let g = me.gradient(w)?;
                j.set(1, 0, g[0]);
                j.set(0, 1, g[1]);
            }
            if order >= 2 {
                let [huu, huv, hvv] = me.hessian(w)?;
                j.set(2, 0, huu);
                j.set(1, 1, huv);
                j.set(0, 2, hvv);
            }
            Ok(j)
        })
    }
}

impl HessianSource for GeneratingFunction {
    /// Symmetrized chain-rule Hessian from the map Jacobian.
    fn hessian(&self, w: Point) -> Result<[f64; 3]> {
        let m = self.raw_hessian(w)?;
        Ok([m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]])
    }
}

/// Builds `H` for a moderate map fixing `γ` pointwise.
pub fn recover_generating_function(map: &PlanarMap, domain: &PlanarDomain, base: Point) -> Result<GeneratingFunction> {
    require_moderate(map, domain)?;
    require_boundary_identity(map, domain)?;
    let mut gf = GeneratingFunction {
        map: map.clone(),
        domain: domain.clone(),
        base,
        closedness_residual: 0.0,
        closedness_at: base,
        boundary_gradient: 0.0,
    };
    let mut probes = domain_samples(domain, 200, 7);
    let boundary = domain.curve().sample_params(64)?;
    probes.extend(boundary.iter().copied());
    let curls: Vec<f64> = probes
        .par_iter()
        .map(|&w| gf.raw_hessian(w).map(|m| (m[0][1] - m[1][0]).abs()))
        .collect::<Result<_>>()?;
    let (at, worst) = probes
        .iter()
        .zip(&curls)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(p, c)| (*p, *c))
        .unwrap_or((base, 0.0));
    gf.closedness_residual = worst;
    gf.closedness_at = at;
    if worst > CLOSEDNESS_LIMIT {
        return Err(Error::ClosednessViolation { at, residual: worst });
    }
    let grads: Vec<f64> = boundary
        .par_iter()
        .map(|&w| gf.gradient(w).map(|g| g[0].hypot(g[1])))
        .collect::<Result<_>>()?;
    gf.boundary_gradient = grads.into_iter().fold(0.0, f64::max);
    Ok(gf)
}

/// Worst residual of the four relations between `dF` and the Hessian of `H`
/// over diagonal probes `(u, v)`.
pub fn derivative_relations_check(h: &dyn HessianSource, map: &PlanarMap, probes: &[Point]) -> Result<f64> {
    let res: Vec<f64> = probes
        .par_iter()
        .map(|&w| {
            let p = midpoint_inverse(map, w)?;
            let (_, j) = map.jacobian(p)?;
            let [huu, huv, hvv] = h.hessian(w)?;
            let den = 4.0 - huv * huv + huu * hvv;
            if den.abs() <= 1e-8 {
                return Err(Error::DegenerateDenominator { at: w });
            }
            let q = 4.0 + huv * huv - huu * hvv;
            let r = [
                j[0][0] * den - (q - 4.0 * huv),
                j[0][1] * den + 4.0 * hvv,
                j[1][0] * den - 4.0 * huu,
                j[1][1] * den - (q + 4.0 * huv),
            ];
            Ok(r.iter().fold(0.0f64, |m, x| m.max(x.abs())))
        })
        .collect::<Result<_>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}

/// `V(u, v) = (f_x - g_y, f_y + g_x)` at the preimage of `(u, v)` under the
/// midpoint map.
pub fn packed_field(map: &PlanarMap) -> Result<VectorField> {
    if map.max_order() < 1 {
        return Err(Error::OrderTooLow {
            what: format!("packed field of {}", map.label()),
            required: 1,
            available: map.max_order(),
        });
    }
    let m = map.clone();
    let with_jac = map.max_order() >= 2;
    let fd = map.fd_jets();
    Ok(VectorField::new(format!("V[{}]", map.label()), move |w, want| {
        let p = midpoint_inverse(&m, w)?;
        if want && with_jac {
            let [f, g] = m.jets(p, 2)?;
            let v = [f.get(1, 0) - g.get(0, 1), f.get(0, 1) + g.get(1, 0)];
            let dv = [
                [f.get(2, 0) - g.get(1, 1), f.get(1, 1) - g.get(0, 2)],
                [f.get(1, 1) + g.get(2, 0), f.get(0, 2) + g.get(1, 1)],
            ];
            let a = [
                [0.5 * (1.0 + f.get(1, 0)), 0.5 * f.get(0, 1)],
                [0.5 * g.get(1, 0), 0.5 * (1.0 + g.get(0, 1))],
            ];
            Ok(FieldSample {
                value: v,
                jacobian: inv2(a).map(|ai| mul2(dv, ai)),
                jacobian_fd: fd,
            })
        } else {
            let (_, j) = m.jacobian(p)?;
            Ok(FieldSample {
                value: [j[0][0] - j[1][1], j[0][1] + j[1][0]],
                jacobian: None,
                jacobian_fd: false,
            })
        }
    }))
}

/// Certificates found in `(x, y)` matched against those in `(u, v)`.
#[derive(Debug, Clone)]
pub struct Consistency {
    pub xy: ZeroSearch,
    /// Every certificate has a partner of equal degree.
    pub matched: bool,
    /// Largest distance between matched midpoint images.
    pub max_distance: f64,
}

/// Output of [`conformal_points_of_map`].
#[derive(Debug, Clone)]
pub struct MapConformalPoints {
    pub moderateness: Moderateness,
    pub boundary_displacement: f64,
    pub search: ZeroSearch,
    /// `max |(f_y + g_x, g_y - f_x) - (H_uu - H_vv, 2 H_uv)|` on `γ`.
    pub boundary_identity_residual: f64,
    pub consistency: Option<Consistency>,
}

const BOUNDARY_RELATION_TOL: f64 = 1e-5;
/// Step for finite-difference Hessians of the recovered gradient.
pub const HESSIAN_STEP: f64 = 1e-4;

/// Conformal points of a moderate map that fixes `γ`, searched in the
/// diagonal coordinates `(u, v)`.
pub fn conformal_points_of_map(
    map: &PlanarMap,
    domain: &PlanarDomain,
    opts: &SearchOptions,
    consistency: bool,
) -> Result<MapConformalPoints> {
    let moderate = require_moderate(map, domain)?;
    let displacement = require_boundary_identity(map, domain)?;
    let v = packed_field(map)?;
    let search = locate_zeros(&v, domain, opts)?;

    let gf = GeneratingFunction {
        map: map.clone(),
        domain: domain.clone(),
        base: domain.curve().point(0.0)?,
        closedness_residual: 0.0,
        closedness_at: [0.0, 0.0],
        boundary_gradient: 0.0,
    };
    let pts = domain.curve().sample_params(64)?;
    let res: Vec<(f64, Point)> = pts
        .par_iter()
        .map(|&w| {
            let (_, j) = map.jacobian(w)?;
            let [huu, huv, hvv] = gf.hessian_fd(w, HESSIAN_STEP)?;
            let a = (j[0][1] + j[1][0]) - (huu - hvv);
            let b = (j[1][1] - j[0][0]) - 2.0 * huv;
            Ok((a.hypot(b), w))
        })
        .collect::<Result<_>>()?;
    let (worst, at) = res.into_iter().fold((0.0, [0.0, 0.0]), |m, x| if x.0 > m.0 { x } else { m });
    if worst > BOUNDARY_RELATION_TOL {
        return Err(Error::BoundaryIdentityViolation { at, residual: worst });
    }

    let consistency = if consistency {
        let xy = locate_zeros(&map_conformal_defect(map)?, domain, opts)?;
        let mut matched = xy.certificates.len() == search.certificates.len();
        let mut max_distance = 0.0f64;
        for c in &xy.certificates {
            let (m, _) = midpoint(map, c.location())?;
            let best = search
                .certificates
                .iter()
                .map(|d| {
                    let q = d.location();
                    ((q[0] - m[0]).hypot(q[1] - m[1]), d.degree)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match best {
                Some((dist, deg)) if deg == c.degree && dist <= 4.0 * search.resolution.max(xy.resolution) + 1e-9 => {
                    max_distance = max_distance.max(dist)
                }
                Some((dist, _)) => {
                    matched = false;
                    max_distance = max_distance.max(dist);
                }
                None => matched = false,
            }
        }
        Some(Consistency {
            xy,
            matched,
            max_distance,
        })
    } else {
        None
    };

    Ok(MapConformalPoints {
        moderateness: moderate,
        boundary_displacement: displacement,
        search,
        boundary_identity_residual: worst,
        consistency,
    })
}
