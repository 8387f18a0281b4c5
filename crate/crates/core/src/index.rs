//! Winding numbers, degree certificates and line-field indices.
//!
//! A winding is accumulated from principal-value angle increments between
//! samples, bisecting any parameter interval whose increment reaches a
//! quarter turn. Zeros are localized by a quadtree whose boxes carry the
//! winding of the field along their boundary; a box with nonzero winding at
//! the final resolution is a [`ZeroCertificate`] and its winding is the
//! multiplicity.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::{BoundaryCurve, PlanarDomain};
use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::Point;

/// A closed curve parameterized over `u ∈ [0, 1)`.
#[derive(Debug, Clone)]
pub enum Contour {
    Curve(BoundaryCurve),
    /// Axis-aligned rectangle, traversed counterclockwise from `lo`.
    Rect { lo: Point, hi: Point },
    Circle { center: Point, radius: f64 },
}

impl Contour {
    pub fn point(&self, u: f64) -> Result<Point> {
        match self {
            Contour::Curve(c) => c.point_at_param(u),
            Contour::Rect { lo, hi } => Ok(rect_point(*lo, *hi, u)),
            Contour::Circle { center, radius } => {
                let a = TAU * u;
                Ok([center[0] + radius * a.cos(), center[1] + radius * a.sin()])
            }
        }
    }
}

fn rect_point(lo: Point, hi: Point, u: f64) -> Point {
    let u = u.rem_euclid(1.0) * 4.0;
    let (side, f) = ((u.floor() as usize).min(3), u - u.floor().min(3.0));
    match side {
        0 => [lo[0] + f * (hi[0] - lo[0]), lo[1]],
        1 => [hi[0], lo[1] + f * (hi[1] - lo[1])],
        2 => [hi[0] - f * (hi[0] - lo[0]), hi[1]],
        _ => [lo[0], hi[1] - f * (hi[1] - lo[1])],
    }
}

/// Outcome of a winding computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindingResult {
    /// Full turns of the sampled field.
    pub turns: i64,
    /// Line fields report half of `turns`.
    pub line_field: bool,
    pub samples: usize,
    pub min_norm: f64,
    pub min_at: Point,
    /// Every angle step stayed below a quarter turn, every sample cleared the
    /// floor, and a rerun with twice the initial samples agreed.
    pub guaranteed: bool,
}

impl WindingResult {
    /// The winding number, a half-integer for line fields.
    pub fn value(&self) -> f64 {
        if self.line_field {
            self.turns as f64 / 2.0
        } else {
            self.turns as f64
        }
    }
}

impl fmt::Display for WindingResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line_field && self.turns % 2 != 0 {
            write!(f, "{}/2", self.turns)
        } else {
            write!(f, "{}", self.value())
        }
    }
}

/// Shared evaluation counter.
#[derive(Debug, Clone)]
pub struct Budget {
    used: Arc<AtomicU64>,
    limit: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget {
            used: Arc::new(AtomicU64::new(0)),
            limit,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(u64::MAX)
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    fn spend(&self, n: u64) -> Result<()> {
        let before = self.used.fetch_add(n, Ordering::Relaxed);
        if before + n > self.limit {
            return Err(Error::BudgetExceeded(self.limit));
        }
        Ok(())
    }
}

struct Raw {
    turns: i64,
    samples: usize,
    min_norm: f64,
    min_at: Point,
    values: Vec<[f64; 2]>,
}

enum Wind {
    Done(Raw),
    Floor { at: Point, norm: f64 },
}

const MIN_INTERVAL: f64 = 1e-13;
/// Allowed midpoint deviation from the chord, relative to the smallest `|V|`.
const LINEARITY: f64 = 0.5;

fn angle_step(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1])
}

fn wind(
    eval: &(dyn Fn(Point) -> Result<[f64; 2]> + Sync),
    path: &dyn Fn(f64) -> Result<Point>,
    n0: usize,
    offset: f64,
    floor: f64,
    budget: &Budget,
) -> Result<Wind> {
    let mut raw = Raw {
        turns: 0,
        samples: 0,
        min_norm: f64::INFINITY,
        min_at: [f64::NAN; 2],
        values: Vec::with_capacity(4 * n0),
    };
    let sample = |u: f64, raw: &mut Raw| -> Result<std::result::Result<[f64; 2], (Point, f64)>> {
        budget.spend(1)?;
        let p = path(u + offset)?;
        let v = eval(p)?;
        let n = v[0].hypot(v[1]);
        raw.samples += 1;
        if n < raw.min_norm {
            raw.min_norm = n;
            raw.min_at = p;
        }
        raw.values.push(v);
        Ok(if n <= floor || !n.is_finite() { Err((p, n)) } else { Ok(v) })
    };
    let mut total = 0.0;
    let first = match sample(0.0, &mut raw)? {
        Ok(v) => v,
        Err((at, norm)) => return Ok(Wind::Floor { at, norm }),
    };
    let mut prev = (0.0, first);
    for k in 1..=n0 {
        let u1 = k as f64 / n0 as f64;
        let v1 = if k == n0 {
            first
        } else {
            match sample(u1, &mut raw)? {
                Ok(v) => v,
                Err((at, norm)) => return Ok(Wind::Floor { at, norm }),
            }
        };
        let mut stack = vec![(u1, v1)];
        while let Some(&(ub, vb)) = stack.last() {
            let (ua, va) = prev;
            let d = angle_step(va, vb);
            if d.abs() < FRAC_PI_2 && ub - ua < MIN_INTERVAL {
                total += d;
                prev = (ub, vb);
                stack.pop();
                continue;
            }
            if d.abs() < FRAC_PI_2 {
                // look ahead one level so aliased samples cannot hide a turn
                let um = 0.5 * (ua + ub);
                let vm = match sample(um, &mut raw)? {
                    Ok(v) => v,
                    Err((at, norm)) => return Ok(Wind::Floor { at, norm }),
                };
                let (d1, d2) = (angle_step(va, vm), angle_step(vm, vb));
                let dev = (vm[0] - 0.5 * (va[0] + vb[0])).hypot(vm[1] - 0.5 * (va[1] + vb[1]));
                let small = va[0].hypot(va[1]).min(vb[0].hypot(vb[1])).min(vm[0].hypot(vm[1]));
                let near_linear = dev <= LINEARITY * small || ub - ua < MIN_INTERVAL;
                if d1.abs() < FRAC_PI_2 && d2.abs() < FRAC_PI_2 && (d1 + d2 - d).abs() < 1e-9 && near_linear {
                    total += d;
                    prev = (ub, vb);
                    stack.pop();
                } else {
                    stack.push((um, vm));
                }
                continue;
            }
            if ub - ua < MIN_INTERVAL {
                let at = path(ua + offset)?;
                return Ok(Wind::Floor {
                    at,
                    norm: va[0].hypot(va[1]).min(vb[0].hypot(vb[1])),
                });
            }
            let um = 0.5 * (ua + ub);
            match sample(um, &mut raw)? {
                Ok(vm) => stack.push((um, vm)),
                Err((at, norm)) => return Ok(Wind::Floor { at, norm }),
            }
        }
    }
    raw.turns = (total / TAU).round() as i64;
    Ok(Wind::Done(raw))
}

fn guaranteed_winding(
    eval: &(dyn Fn(Point) -> Result<[f64; 2]> + Sync),
    path: &dyn Fn(f64) -> Result<Point>,
    n0: usize,
    offset: f64,
    floor: f64,
    budget: &Budget,
) -> Result<WindingResult> {
    let floor_err = |at: Point, norm: f64| Error::FieldVanishesOnCurve { at, norm };
    let a = match wind(eval, path, n0, offset, floor, budget)? {
        Wind::Done(r) => r,
        Wind::Floor { at, norm } => return Err(floor_err(at, norm)),
    };
    let b = match wind(eval, path, 2 * n0, offset, floor, budget)? {
        Wind::Done(r) => r,
        Wind::Floor { at, norm } => return Err(floor_err(at, norm)),
    };
    let (min_norm, min_at) = if a.min_norm <= b.min_norm {
        (a.min_norm, a.min_at)
    } else {
        (b.min_norm, b.min_at)
    };
    Ok(WindingResult {
        turns: b.turns,
        line_field: false,
        samples: a.samples + b.samples,
        min_norm,
        min_at,
        guaranteed: a.turns == b.turns,
    })
}

/// Initial samples per contour.
pub const DEFAULT_SAMPLES: usize = 256;

/// Winding of `v` along `contour`; errors if any sample has `|V| ≤ floor`.
pub fn winding(v: &VectorField, contour: &Contour, floor: f64) -> Result<WindingResult> {
    winding_with(v, contour, floor, DEFAULT_SAMPLES, 0.0)
}

/// [`winding`] with explicit initial sample count and starting parameter.
pub fn winding_with(v: &VectorField, contour: &Contour, floor: f64, samples: usize, offset: f64) -> Result<WindingResult> {
    let eval = |p: Point| v.value(p);
    let path = |u: f64| contour.point(u);
    guaranteed_winding(&eval, &path, samples.max(4), offset, floor, &Budget::unlimited())
}

/// An unoriented direction field given by its doubled-angle vector
/// `W = (cos 2θ, sin 2θ)`, scaled arbitrarily.
#[derive(Clone)]
pub struct LineField {
    doubled: VectorField,
}

impl fmt::Debug for LineField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LineField").field("label", &self.doubled.label()).finish()
    }
}

impl LineField {
    pub fn from_doubled(doubled: VectorField) -> Self {
        LineField { doubled }
    }

    /// From a function returning any vector along the line.
    pub fn from_direction(
        label: impl Into<String>,
        dir: impl Fn(Point) -> Result<[f64; 2]> + Send + Sync + 'static,
    ) -> Self {
        LineField {
            doubled: VectorField::from_values(label, move |p| {
                let [c, s] = dir(p)?;
                Ok([c * c - s * s, 2.0 * c * s])
            }),
        }
    }

    pub fn doubled(&self) -> &VectorField {
        &self.doubled
    }
}

/// Eigendirections of the Hessian: `W = (H_xx - H_yy, 2H_xy)`.
pub fn hessian_line_field(h: &ScalarField) -> Result<LineField> {
    if h.max_order() < 2 {
        return Err(Error::OrderTooLow {
            what: format!("Hessian line field of {}", h.label()),
            required: 2,
            available: h.max_order(),
        });
    }
    let h = h.clone();
    Ok(LineField {
        doubled: VectorField::from_values(format!("Hess[{}]", h.label()), move |p| {
            let j = h.jet(p, 2)?;
            Ok([j.get(2, 0) - j.get(0, 2), 2.0 * j.get(1, 1)])
        }),
    })
}

/// Index of a line field along `contour`, half the winding of the doubled field.
pub fn line_field_index(l: &LineField, contour: &Contour, floor: f64) -> Result<WindingResult> {
    let mut w = winding(&l.doubled, contour, floor)?;
    w.line_field = true;
    Ok(w)
}

/// A box whose boundary winding certifies zeros of total multiplicity `degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCertificate {
    pub center: Point,
    pub half_width: [f64; 2],
    pub degree: i64,
    /// Smallest `|V|` seen on the box boundary.
    pub min_boundary_norm: f64,
    pub depth: usize,
    /// Newton-refined zero inside the box, when the iteration converged there.
    pub polished: Option<Point>,
    /// `|V|` at the polished point.
    pub residual: Option<f64>,
}

impl ZeroCertificate {
    /// Polished location if available, else the box center.
    pub fn location(&self) -> Point {
        self.polished.unwrap_or(self.center)
    }

    pub fn contains(&self, p: Point) -> bool {
        (p[0] - self.center[0]).abs() <= self.half_width[0] && (p[1] - self.center[1]).abs() <= self.half_width[1]
    }

    pub fn lo(&self) -> Point {
        [self.center[0] - self.half_width[0], self.center[1] - self.half_width[1]]
    }

    pub fn hi(&self) -> Point {
        [self.center[0] + self.half_width[0], self.center[1] + self.half_width[1]]
    }
}

/// Tuning for [`locate_zeros`]; `None` picks the documented defaults.
#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Final box half-width. Default `1e-4 ×` domain diameter.
    pub resolution: Option<f64>,
    /// Default `1e-10 ×` the median `|V|` over 256 domain samples.
    pub floor: Option<f64>,
    pub budget: u64,
    pub polish: bool,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            resolution: None,
            floor: None,
            budget: 20_000_000,
            polish: true,
            seed: 0,
        }
    }
}

/// Everything [`locate_zeros`] learned.
#[derive(Debug, Clone)]
pub struct ZeroSearch {
    pub boundary: WindingResult,
    pub certificates: Vec<ZeroCertificate>,
    pub degree_sum: i64,
    pub resolution: f64,
    pub floor: f64,
    /// Median `|V|` over the domain samples.
    pub scale: f64,
    pub evaluations: u64,
    /// Winding-zero boxes that reached the final resolution without being
    /// excluded; each may hide a canceling pair.
    pub unresolved_boxes: usize,
    pub warnings: Vec<String>,
}

/// Median `|V|` below which a field is treated as identically zero.
pub const DEGENERATE_SCALE: f64 = 1e-12;

/// Samples `count` seeded points inside `domain`.
pub fn domain_samples(domain: &PlanarDomain, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = domain.bbox();
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count && tries < 10_000 * count {
        tries += 1;
        let p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        if domain.contains(p) {
            out.push(p);
        }
    }
    out
}

/// Median `|V|` over 256 seeded domain samples.
pub fn field_scale(v: &VectorField, domain: &PlanarDomain, seed: u64) -> Result<f64> {
    let mut norms: Vec<f64> = domain_samples(domain, 256, seed)
        .into_par_iter()
        .map(|p| v.value(p).map(|w| w[0].hypot(w[1])))
        .collect::<Result<_>>()?;
    norms.sort_by(f64::total_cmp);
    Ok(norms[norms.len() / 2])
}

#[derive(Debug, Clone)]
struct QBox {
    lo: Point,
    hi: Point,
    depth: usize,
    // None when the boundary passed below the floor
    degree: Option<i64>,
    min_norm: f64,
    values: Vec<[f64; 2]>,
}

impl QBox {
    fn center(&self) -> Point {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    fn half(&self) -> [f64; 2] {
        [0.5 * (self.hi[0] - self.lo[0]), 0.5 * (self.hi[1] - self.lo[1])]
    }
}

enum Step {
    Drop,
    Unresolved,
    FloorLeaf,
    Cert(ZeroCertificate),
    Split(Vec<QBox>),
}

const JITTER: [f64; 6] = [0.0173, -0.0291, 0.0419, -0.0067, 0.0537, -0.0383];
const EXCLUSION_MARGIN: f64 = 1.2;

struct Search<'a> {
    v: &'a VectorField,
    domain: &'a PlanarDomain,
    floor: f64,
    resolution: f64,
    budget: Budget,
}

impl Search<'_> {
    fn eval(&self, p: Point) -> Result<[f64; 2]> {
        self.v.value(p)
    }

    fn make_box(&self, lo: Point, hi: Point, depth: usize) -> Result<QBox> {
        let eval = |p: Point| self.eval(p);
        let path = |u: f64| Ok(rect_point(lo, hi, u));
        Ok(match wind(&eval, &path, 8, 0.0, self.floor, &self.budget)? {
            Wind::Done(r) => QBox {
                lo,
                hi,
                depth,
                degree: Some(r.turns),
                min_norm: r.min_norm,
                values: r.values,
            },
            Wind::Floor { norm, .. } => QBox {
                lo,
                hi,
                depth,
                degree: None,
                min_norm: norm,
                values: Vec::new(),
            },
        })
    }

    fn intersects_domain(&self, lo: Point, hi: Point) -> bool {
        let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
        if corners.iter().any(|&c| self.domain.contains(c)) {
            return true;
        }
        let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        if self.domain.contains(c) {
            return true;
        }
        self.domain
            .polygon()
            .iter()
            .any(|p| p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1])
    }

    fn split(&self, b: &QBox) -> Result<Vec<QBox>> {
        let mut best: Option<Vec<QBox>> = None;
        for (k, j) in JITTER.iter().enumerate() {
            let sx = 0.5 + j;
            let sy = 0.5 - JITTER[(k + 1) % JITTER.len()];
            let mx = b.lo[0] + sx * (b.hi[0] - b.lo[0]);
            let my = b.lo[1] + sy * (b.hi[1] - b.lo[1]);
            let rects = [
                (b.lo, [mx, my]),
                ([mx, b.lo[1]], [b.hi[0], my]),
                ([b.lo[0], my], [mx, b.hi[1]]),
                ([mx, my], b.hi),
            ];
            let mut kids = Vec::with_capacity(4);
            for (lo, hi) in rects {
                if self.intersects_domain(lo, hi) {
                    kids.push(self.make_box(lo, hi, b.depth + 1)?);
                }
            }
            let clean = kids.iter().all(|q| q.degree.is_some());
            if clean {
                return Ok(kids);
            }
            if best.is_none() {
                best = Some(kids);
            }
        }
        Ok(best.unwrap_or_default())
    }

    fn excluded(&self, b: &QBox) -> Result<bool> {
        if b.values.is_empty() {
            return Ok(false);
        }
        let vc = self.eval(b.center())?;
        self.budget.spend(1)?;
        let spread = b
            .values
            .iter()
            .map(|v| (v[0] - vc[0]).hypot(v[1] - vc[1]))
            .fold(0.0, f64::max);
        Ok(vc[0].hypot(vc[1]) > EXCLUSION_MARGIN * spread)
    }

    fn step(&self, b: &QBox) -> Result<Step> {
        let h = b.half();
        let leaf = h[0].max(h[1]) <= self.resolution;
        if leaf {
            return Ok(match b.degree {
                None => Step::FloorLeaf,
                Some(0) => {
                    if self.excluded(b)? {
                        Step::Drop
                    } else {
                        Step::Unresolved
                    }
                }
                Some(d) => {
                    if self.domain.contains(b.center()) {
                        Step::Cert(ZeroCertificate {
                            center: b.center(),
                            half_width: h,
                            degree: d,
                            min_boundary_norm: b.min_norm,
                            depth: b.depth,
                            polished: None,
                            residual: None,
                        })
                    } else {
                        Step::Drop
                    }
                }
            });
        }
        if b.degree == Some(0) && self.excluded(b)? {
            return Ok(Step::Drop);
        }
        let kids = self.split(b)?;
        if let Some(d) = b.degree.filter(|&d| d != 0) {
            // high-order zeros sink below the floor before the resolution is reached
            if kids.iter().any(|k| k.degree.is_none()) && self.domain.contains(b.center()) {
                return Ok(Step::Cert(ZeroCertificate {
                    center: b.center(),
                    half_width: h,
                    degree: d,
                    min_boundary_norm: b.min_norm,
                    depth: b.depth,
                    polished: None,
                    residual: None,
                }));
            }
        }
        Ok(Step::Split(kids))
    }

    fn polish(&self, c: &mut ZeroCertificate) {
        let mut x = c.center;
        let Ok(mut fx) = self.eval(x) else { return };
        let mut best = (x, fx[0].hypot(fx[1]));
        for _ in 0..60 {
            let Ok(s) = self.v.sample(x) else { break };
            let Some(j) = s.jacobian else { break };
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det == 0.0 || !det.is_finite() {
                break;
            }
            let dx = [
                (j[1][1] * fx[0] - j[0][1] * fx[1]) / det,
                (-j[1][0] * fx[0] + j[0][0] * fx[1]) / det,
            ];
            x = [x[0] - dx[0], x[1] - dx[1]];
            if (x[0] - c.center[0]).abs() > 2.0 * c.half_width[0] || (x[1] - c.center[1]).abs() > 2.0 * c.half_width[1] {
                break;
            }
            let Ok(f) = self.eval(x) else { break };
            fx = f;
            let n = fx[0].hypot(fx[1]);
            if n < best.1 {
                best = (x, n);
            }
            if dx[0].hypot(dx[1]) <= 1e-15 * (1.0 + x[0].hypot(x[1])) || n == 0.0 {
                break;
            }
        }
        if c.contains(best.0) {
            c.polished = Some(best.0);
            c.residual = Some(best.1);
        }
    }
}

/// Certifies the zeros of `v` inside `domain` by quadtree subdivision.
///
/// The winding along the boundary is computed first and must equal the sum
/// of the certificate degrees.
pub fn locate_zeros(v: &VectorField, domain: &PlanarDomain, opts: &SearchOptions) -> Result<ZeroSearch> {
    let scale = field_scale(v, domain, opts.seed)?;
    if !(scale > DEGENERATE_SCALE) {
        return Err(Error::NonIsolatedZeros(format!(
            "median |V| over the domain is {scale:e}; the field vanishes identically"
        )));
    }
    let floor = opts.floor.unwrap_or(1e-10 * scale);
    let resolution = opts.resolution.unwrap_or(1e-4 * domain.diameter());
    let boundary = winding(v, &Contour::Curve(domain.curve().clone()), floor)?;

    let search = Search {
        v,
        domain,
        floor,
        resolution,
        budget: Budget::new(opts.budget),
    };
    let [lo, hi] = domain.bbox();
    let pad = 0.0123 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let root = QBox {
        lo: [lo[0] - pad, lo[1] - pad],
        hi: [hi[0] + pad * 0.71, hi[1] + pad * 0.87],
        depth: 0,
        degree: None,
        min_norm: 0.0,
        values: Vec::new(),
    };
    let mut level = vec![root];
    let mut certs = Vec::new();
    let mut unresolved = 0usize;
    let mut floor_leaves = 0usize;
    while !level.is_empty() {
        let steps: Vec<Step> = level.par_iter().map(|b| search.step(b)).collect::<Result<_>>()?;
        let mut next = Vec::new();
        for s in steps {
            match s {
                Step::Drop => {}
                Step::Unresolved => unresolved += 1,
                Step::FloorLeaf => floor_leaves += 1,
                Step::Cert(c) => certs.push(c),
                Step::Split(kids) => next.extend(kids),
            }
        }
        level = next;
    }
    if floor_leaves > 8 {
        return Err(Error::NonIsolatedZeros(format!(
            "{floor_leaves} boxes at the final resolution touch |V| below the floor"
        )));
    }
    if opts.polish {
        certs.par_iter_mut().for_each(|c| search.polish(c));
    }
    certs.sort_by(|a, b| a.center[0].total_cmp(&b.center[0]).then(a.center[1].total_cmp(&b.center[1])));
    let degree_sum: i64 = certs.iter().map(|c| c.degree).sum();
    let mut warnings = Vec::new();
    if unresolved > 0 {
        warnings.push(format!(
            "{unresolved} winding-zero boxes at resolution {resolution:e} were not excluded; \
             opposite-degree zero pairs closer than the resolution would be missed there"
        ));
    }
    let coarse = certs.iter().filter(|c| c.half_width[0].max(c.half_width[1]) > resolution).count();
    if coarse > 0 {
        warnings.push(format!(
            "{coarse} certificate(s) stopped above the resolution because |V| fell below the floor {floor:e} inside"
        ));
    }
    if floor_leaves > 0 {
        warnings.push(format!("{floor_leaves} final boxes touched the floor {floor:e}"));
    }
    if degree_sum != boundary.turns {
        return Err(Error::DegreeMismatch {
            sum: degree_sum,
            boundary: boundary.turns,
        });
    }
    Ok(ZeroSearch {
        boundary,
        certificates: certs,
        degree_sum,
        resolution,
        floor,
        scale,
        evaluations: search.budget.used(),
        unresolved_boxes: unresolved,
        warnings,
    })
}

/// Degree of `v` around the boundary of a box.
pub fn box_degree(v: &VectorField, lo: Point, hi: Point, floor: f64) -> Result<WindingResult> {
    winding_with(v, &Contour::Rect { lo, hi }, floor, 32, 0.0)
}

/// `Σ degrees == boundary winding`, for guaranteed inputs.
pub fn poincare_hopf_check(certs: &[ZeroCertificate], boundary: &WindingResult) -> Result<bool> {
    if !boundary.guaranteed {
        return Err(Error::UnguaranteedInput);
    }
    Ok(certs.iter().map(|c| c.degree).sum::<i64>() == boundary.turns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoundaryCurve;
    use crate::fields::conformal_defect;
    use proptest::prelude::*;

    fn sf(s: &str) -> ScalarField {
        ScalarField::parse(s).unwrap()
    }

    fn unit_circle() -> Contour {
        Contour::Circle {
            center: [0.0, 0.0],
            radius: 1.0,
        }
    }

    fn poly_field(f: impl Fn(num_complex::Complex64) -> num_complex::Complex64 + Send + Sync + 'static) -> VectorField {
        VectorField::from_values("poly", move |p| {
            let w = f(num_complex::Complex64::new(p[0], p[1]));
            Ok([w.re, w.im])
        })
    }

    #[test]
    fn windings_of_examples() {
        let panov = conformal_defect(&sf("x^2 + 2*y^2")).unwrap();
        let ell = Contour::Curve(BoundaryCurve::ellipse([0.0, 0.0], 1.0, 0.5f64.sqrt()).unwrap());
        let w = winding(&panov, &ell, 1e-10).unwrap();
        assert_eq!((w.turns, w.guaranteed), (0, true));

        let r4 = conformal_defect(&sf("(x^2 + y^2)^2 - 2*(x^2 + y^2)")).unwrap();
        let w = winding(&r4, &unit_circle(), 1e-10).unwrap();
        assert_eq!((w.turns, w.guaranteed), (2, true));

        let v3 = crate::fields::loewner_field(&sf("(x^2 + y^2)^3"), 3).unwrap();
        assert_eq!(winding(&v3, &unit_circle(), 1e-10).unwrap().turns, 3);
    }

    #[test]
    fn high_order_zero_is_kept_above_the_floor() {
        let v3 = crate::fields::loewner_field(&sf("(1 - x^2 - y^2)^3"), 3).unwrap();
        let s = locate_zeros(&v3, &PlanarDomain::unit_disc(), &SearchOptions::default()).unwrap();
        assert_eq!(s.certificates.len(), 1);
        assert_eq!(s.certificates[0].degree, 3);
        assert!(s.certificates[0].contains([0.0, 0.0]));
    }

    #[test]
    fn vanishing_on_curve_is_reported() {
        let v = VectorField::from_values("ring", |p| Ok([1.0 - p[0] * p[0] - p[1] * p[1], 0.0]));
        match winding(&v, &unit_circle(), 1e-10) {
            Err(Error::FieldVanishesOnCurve { at, .. }) => assert!((at[0].hypot(at[1]) - 1.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fast_rotation_is_not_aliased() {
        // z^40 along the unit circle turns faster than the initial sampling
        let v = poly_field(|z| z.powu(40));
        let w = winding_with(&v, &unit_circle(), 1e-10, 8, 0.0).unwrap();
        assert_eq!(w.turns, 40);
        assert!(w.guaranteed);
    }

    #[test]
    fn line_field_indices() {
        let flat = hessian_line_field(&sf("(1 - x^2 - y^2)^2")).unwrap();
        // the tangent is an eigendirection along the circle; avoid r = 1 where
        // the field is degenerate in the radial eigenvalue only
        let w = line_field_index(&flat, &unit_circle(), 1e-10).unwrap();
        assert_eq!(w.value(), 1.0);

        let r4 = hessian_line_field(&sf("(x^2 + y^2)^2 - 2*(x^2 + y^2)")).unwrap();
        let small = Contour::Circle {
            center: [0.0, 0.0],
            radius: 0.1,
        };
        assert_eq!(line_field_index(&r4, &small, 1e-14).unwrap().value(), 1.0);

        let radial = LineField::from_direction("radial", |p| Ok(p));
        assert_eq!(line_field_index(&radial, &unit_circle(), 1e-10).unwrap().value(), 1.0);

        let fork = LineField::from_direction("half", |p| {
            let a = 0.5 * p[1].atan2(p[0]);
            Ok([a.cos(), a.sin()])
        });
        let w = line_field_index(&fork, &Contour::Circle { center: [0.0, 0.0], radius: 0.5 }, 1e-10);
        // the half-angle field jumps at the branch cut, but its doubled field is smooth
        assert_eq!(w.unwrap().to_string(), "1/2");
    }

    #[test]
    fn doubled_field_relation() {
        for h in ["(x^2 + y^2)^2 - 2*(x^2 + y^2)", "(1 - x^2 - y^2)^2*(1 + 0.3*x)"] {
            let v = conformal_defect(&sf(h)).unwrap();
            let l = hessian_line_field(&sf(h)).unwrap();
            let c = Contour::Circle {
                center: [0.02, -0.01],
                radius: 0.8,
            };
            let a = winding(&v, &c, 1e-12).unwrap();
            let b = line_field_index(&l, &c, 1e-12).unwrap();
            assert_eq!(a.value(), 2.0 * b.value());
        }
    }

    #[test]
    fn locate_examples() {
        let disc = PlanarDomain::unit_disc();
        let opts = SearchOptions::default();

        let ell = PlanarDomain::new(BoundaryCurve::ellipse([0.0, 0.0], 1.0, 0.5f64.sqrt()).unwrap()).unwrap();
        let panov = locate_zeros(&conformal_defect(&sf("x^2 + 2*y^2")).unwrap(), &ell, &opts).unwrap();
        assert!(panov.certificates.is_empty());
        assert!(poincare_hopf_check(&panov.certificates, &panov.boundary).unwrap());

        let r4 = locate_zeros(&conformal_defect(&sf("(x^2 + y^2)^2 - 2*(x^2 + y^2)")).unwrap(), &disc, &opts).unwrap();
        assert_eq!(r4.certificates.len(), 1);
        let c = &r4.certificates[0];
        assert_eq!(c.degree, 2);
        let p = c.location();
        assert!(p[0].hypot(p[1]) < 1e-4, "{c:?}");
        assert!(poincare_hopf_check(&r4.certificates, &r4.boundary).unwrap());
        assert!(!poincare_hopf_check(&[], &r4.boundary).unwrap());

        let two = locate_zeros(&poly_field(|z| z * z - 0.25), &disc, &opts).unwrap();
        assert_eq!(two.certificates.len(), 2);
        for (c, x) in two.certificates.iter().zip([-0.5, 0.5]) {
            assert_eq!(c.degree, 1);
            assert!((c.location()[0] - x).abs() < 1e-10 && c.location()[1].abs() < 1e-10);
        }
    }

    #[test]
    fn canceling_pair_is_resolved() {
        // (z - a)(conj(z) - conj(b)): degrees +1 and -1, boundary winding 0
        let v = poly_field(|z| (z - num_complex::Complex64::new(0.3, 0.1)) * (z.conj() - num_complex::Complex64::new(-0.2, -0.4)));
        let s = locate_zeros(&v, &PlanarDomain::unit_disc(), &SearchOptions::default()).unwrap();
        let mut d: Vec<i64> = s.certificates.iter().map(|c| c.degree).collect();
        d.sort();
        assert_eq!(d, vec![-1, 1]);
        assert_eq!(s.boundary.turns, 0);
    }

    #[test]
    fn degenerate_fields() {
        let round = conformal_defect(&sf("(x^2 + y^2)/2")).unwrap();
        assert!(matches!(
            locate_zeros(&round, &PlanarDomain::unit_disc(), &SearchOptions::default()),
            Err(Error::NonIsolatedZeros(_))
        ));
        let ring = VectorField::from_values("ring", |p| Ok([1.0 - p[0] * p[0] - p[1] * p[1], p[0] * p[1]]));
        assert!(matches!(
            locate_zeros(&ring, &PlanarDomain::unit_disc(), &SearchOptions::default()),
            Err(Error::FieldVanishesOnCurve { .. })
        ));
    }

    #[test]
    fn unguaranteed_input_is_rejected() {
        let w = WindingResult {
            turns: 0,
            line_field: false,
            samples: 1,
            min_norm: 1.0,
            min_at: [0.0, 0.0],
            guaranteed: false,
        };
        assert!(matches!(poincare_hopf_check(&[], &w), Err(Error::UnguaranteedInput)));
    }

    #[test]
    fn budget_is_enforced() {
        let v = poly_field(|z| z * z - 0.25);
        let opts = SearchOptions {
            budget: 100,
            ..SearchOptions::default()
        };
        assert!(matches!(
            locate_zeros(&v, &PlanarDomain::unit_disc(), &opts),
            Err(Error::BudgetExceeded(100))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn degree_is_additive(ax in -0.6..0.6f64, ay in -0.6..0.6f64, bx in -0.6..0.6f64, by in -0.6..0.6f64,
                              cut in 0.3..0.7f64) {
            let a = num_complex::Complex64::new(ax, ay);
            let b = num_complex::Complex64::new(bx, by);
            let v = poly_field(move |z| (z - a) * (z - a) * (z.conj() - b.conj()));
            let (lo, hi) = ([-0.93, -0.91], [0.97, 0.89]);
            let parent = box_degree(&v, lo, hi, 1e-12);
            prop_assume!(parent.is_ok());
            let mx = lo[0] + cut * (hi[0] - lo[0]);
            let my = lo[1] + (1.0 - cut) * (hi[1] - lo[1]);
            let kids = [(lo, [mx, my]), ([mx, lo[1]], [hi[0], my]), ([lo[0], my], [mx, hi[1]]), ([mx, my], hi)];
            let mut sum = 0;
            for (l, h) in kids {
                let d = box_degree(&v, l, h, 1e-12);
                prop_assume!(d.is_ok());
                sum += d.unwrap().turns;
            }
            prop_assert_eq!(sum, parent.unwrap().turns);
        }

        #[test]
        fn guaranteed_winding_is_stable(k in 1u32..12, offset in 0.0..1.0f64, c in 0.0..0.5f64) {
            let v = poly_field(move |z| z.powu(k) - c);
            let w1 = winding_with(&v, &unit_circle(), 1e-12, 16, offset).unwrap();
            let w2 = winding_with(&v, &unit_circle(), 1e-12, 32, 0.0).unwrap();
            prop_assert!(w1.guaranteed);
            prop_assert_eq!(w1.turns, w2.turns);
            prop_assert_eq!(w1.turns, k as i64);
        }

        #[test]
        fn negation_preserves_winding(cx in -0.3..0.3f64, cy in -0.3..0.3f64) {
            let h = sf(&format!("(1 - x^2 - y^2)^2*(1 + {cx}*x + {cy}*y^2)"));
            let v = conformal_defect(&h).unwrap();
            let w = hessian_line_field(&h).unwrap();
            let c = Contour::Circle { center: [0.0, 0.0], radius: 0.95 };
            let a = winding(&v, &c, 1e-12).unwrap();
            let b = winding(w.doubled(), &c, 1e-12).unwrap();
            prop_assert_eq!(a.turns, b.turns);
        }
    }
}
