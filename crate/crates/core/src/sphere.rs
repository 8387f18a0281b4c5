//! Support functions on the unit sphere and their umbilics.
//!
//! Two stereographic charts cover `S²`; the round metric is
//! `(dx² + dy²) / gfac` with `gfac = (1 + x² + y²)² / 4`. Umbilics of the body
//! are the zeros of the Riemannian conformal defect of the pulled-back support
//! function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{BoundaryCurve, PlanarDomain};
use crate::error::{Error, Result};
use crate::expr::{recip_jet, Expression, Jet2};
use crate::fields::{riemannian_defect, ScalarField};
use crate::index::{line_field_index, locate_zeros, Contour, LineField, SearchOptions};
use crate::Point;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Disc radius searched in each chart.
pub const WORKING_RADIUS: f64 = 1.2;

/// `h(X, Y, Z)` read on the unit sphere, optionally with an implicit equation
/// `F = 0` of the body it supports.
#[derive(Debug, Clone)]
pub struct SupportFunction {
    label: String,
    expr: Expression,
    implicit: Option<Expression>,
}

const XYZ: [&str; 3] = ["X", "Y", "Z"];

impl SupportFunction {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(SupportFunction {
            label: text.to_string(),
            expr: Expression::parse(text, &XYZ)?,
            implicit: None,
        })
    }

    /// Attaches `F(X, Y, Z) = 0` describing the surface.
    pub fn with_implicit(mut self, text: &str) -> Result<Self> {
        self.implicit = Some(Expression::parse(text, &XYZ)?);
        Ok(self)
    }

    /// Ellipsoid with semi-axes `a, b, c`.
    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        let (a2, b2, c2) = (a * a, b * b, c * c);
        Self::parse(&format!("sqrt({a2:?}*X^2 + {b2:?}*Y^2 + {c2:?}*Z^2)"))?
            .with_implicit(&format!("X^2/{a2:?} + Y^2/{b2:?} + Z^2/{c2:?} - 1"))
    }

    pub fn sphere(r: f64) -> Result<Self> {
        Self::parse(&format!("{r:?} + 0*X"))?.with_implicit(&format!("X^2 + Y^2 + Z^2 - {:?}", r * r))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_implicit(&self) -> bool {
        self.implicit.is_some()
    }

    pub fn value(&self, s: Vec3) -> Result<f64> {
        self.expr.eval(&s)
    }
}

/// Which pole the projection is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pole {
    /// `(2x, 2y, r² - 1) / (1 + r²)`; the chart origin is the south pole.
    North,
    /// `(2x, 2y, 1 - r²) / (1 + r²)`; the chart origin is the north pole.
    South,
}

/// A stereographic chart, optionally composed with a rotation of `S²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoChart {
    pub pole: Pole,
    pub rotation: Mat3,
}

fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn mat_t_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl StereoChart {
    pub fn north() -> Self {
        StereoChart {
            pole: Pole::North,
            rotation: IDENTITY3,
        }
    }

    pub fn south() -> Self {
        StereoChart {
            pole: Pole::South,
            rotation: IDENTITY3,
        }
    }

    pub fn rotated(self, rotation: Mat3) -> Self {
        StereoChart { rotation, ..self }
    }

    fn sign(&self) -> f64 {
        match self.pole {
            Pole::North => 1.0,
            Pole::South => -1.0,
        }
    }

    /// The sphere point of chart coordinates `p`.
    pub fn map(&self, p: Point) -> Vec3 {
        let r2 = p[0] * p[0] + p[1] * p[1];
        let d = 1.0 + r2;
        mat_vec(&self.rotation, [2.0 * p[0] / d, 2.0 * p[1] / d, self.sign() * (r2 - 1.0) / d])
    }

    /// Jets of the three ambient coordinates.
    pub fn map_jets(&self, p: Point, order: usize) -> [Jet2; 3] {
        let x = Jet2::variable(0, p, order);
        let y = Jet2::variable(1, p, order);
        let r2 = &(&x * &x) + &(&y * &y);
        let inv = recip_jet(&r2.add_const(1.0));
        let local = [
            &x.scale(2.0) * &inv,
            &y.scale(2.0) * &inv,
            &r2.add_const(-1.0).scale(self.sign()) * &inv,
        ];
        let m = &self.rotation;
        std::array::from_fn(|i| {
            &(&local[0].scale(m[i][0]) + &local[1].scale(m[i][1])) + &local[2].scale(m[i][2])
        })
    }

    /// Chart coordinates of `s`, unless `s` is the projection pole.
    pub fn inverse(&self, s: Vec3) -> Option<Point> {
        let l = mat_t_vec(&self.rotation, normalize(s));
        let den = 1.0 - self.sign() * l[2];
        (den > 1e-300).then(|| [l[0] / den, l[1] / den])
    }

    pub fn gfac_value(p: Point) -> f64 {
        let d = 1.0 + p[0] * p[0] + p[1] * p[1];
        0.25 * d * d
    }

    /// `(1 + x² + y²)² / 4`.
    pub fn gfac() -> ScalarField {
        ScalarField::parse("(1 + x^2 + y^2)^2/4").expect("constant expression")
    }
}

/// The support function as a planar field in `chart`.
pub fn chart_pullback(hs: &SupportFunction, chart: &StereoChart) -> ScalarField {
    let expr = hs.expr.clone();
    let chart = *chart;
    let label = format!("{}∘{:?}", hs.label, chart.pole);
    ScalarField::new(label, expr.max_order(), move |p, order| expr.eval_with(&chart.map_jets(p, order)))
}

/// The chart (unrotated) in which `s` lies in the closed unit disc.
fn home_chart(s: Vec3) -> StereoChart {
    if s[2] >= 0.0 {
        StereoChart::south()
    } else {
        StereoChart::north()
    }
}

/// Value and first partials of the pullback with the chart frame.
fn first_jet(hs: &SupportFunction, s: Vec3) -> Result<(StereoChart, Point, Jet2, [Jet2; 3])> {
    let chart = home_chart(s);
    let p = chart.inverse(s).ok_or_else(|| Error::Unsupported("point at the projection pole".into()))?;
    let frame = chart.map_jets(p, 2);
    let h = hs.expr.eval_with(&frame)?;
    Ok((chart, p, h, frame))
}

/// Gradient at `s` of the 1-homogeneous extension `|p| h(p / |p|)`: the point
/// of the body whose outward normal is `s`.
pub fn support_to_surface(hs: &SupportFunction, s: Vec3) -> Result<Vec3> {
    let s = normalize(s);
    let (_, p, h, frame) = first_jet(hs, s)?;
    let g = StereoChart::gfac_value(p);
    let (hx, hy) = (h.get(1, 0), h.get(0, 1));
    let base = h.value();
    Ok(std::array::from_fn(|i| base * s[i] + g * (hx * frame[i].get(1, 0) + hy * frame[i].get(0, 1))))
}

/// Gradient and Hessian of a three-variable expression at `q`.
fn implicit_derivatives(f: &Expression, q: Vec3) -> Result<(Vec3, Mat3)> {
    let mut grad = [0.0; 3];
    let mut hess = [[0.0; 3]; 3];
    for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let args: Vec<Jet2> = (0..3)
            .map(|k| {
                let base = [q[a], q[b]];
                if k == a {
                    Jet2::variable(0, base, 2)
                } else if k == b {
                    Jet2::variable(1, base, 2)
                } else {
                    Jet2::constant(q[k], base, 2)
                }
            })
            .collect();
        let j = f.eval_with(&args)?;
        grad[a] = j.get(1, 0);
        grad[b] = j.get(0, 1);
        hess[a][a] = j.get(2, 0);
        hess[b][b] = j.get(0, 2);
        hess[a][b] = j.get(1, 1);
        hess[b][a] = j.get(1, 1);
    }
    Ok((grad, hess))
}

/// `|κ₁ - κ₂|` of the implicit surface at [`support_to_surface`]`(s)`.
pub fn principal_gap_oracle(hs: &SupportFunction, s: Vec3) -> Result<f64> {
    let f = hs
        .implicit
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("{} has no implicit surface", hs.label)))?;
    let q = support_to_surface(hs, s)?;
    let (grad, hess) = implicit_derivatives(f, q)?;
    let gn = norm(grad);
    let n = [grad[0] / gn, grad[1] / gn, grad[2] / gn];
    let seed = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = normalize(cross(n, seed));
    let e2 = cross(n, e1);
    let form = |u: Vec3, v: Vec3| dot(u, mat_vec(&hess, v)) / gn;
    let (m11, m12, m22) = (form(e1, e1), form(e1, e2), form(e2, e2));
    Ok((m11 - m22).hypot(2.0 * m12))
}

/// Distance of the 2-jet of `hs` at `s` from the 2-jets of first harmonics
/// matching its 1-jet: half the gap between the principal radii of curvature.
pub fn first_harmonic_defect(hs: &SupportFunction, s: Vec3) -> Result<f64> {
    let s = normalize(s);
    let (_, p, h, frame) = first_jet(hs, s)?;
    let g = StereoChart::gfac_value(p);
    let (hx, hy) = (h.get(1, 0), h.get(0, 1));
    // ℓ = H(s) + ⟨v, P - s⟩ with v the sphere gradient of H
    let v: Vec3 = std::array::from_fn(|i| g * (hx * frame[i].get(1, 0) + hy * frame[i].get(0, 1)));
    let second = |i: usize, j: usize| h.get(i, j) - (0..3).map(|k| v[k] * frame[k].get(i, j)).sum::<f64>();
    let (dxx, dxy, dyy) = (second(2, 0), second(1, 1), second(0, 2));
    Ok(g * (0.5 * (dxx - dyy)).hypot(dxy))
}

/// One umbilic found by [`find_umbilics`].
#[derive(Debug, Clone, PartialEq)]
pub struct Umbilic {
    /// Outward unit normal.
    pub normal: Vec3,
    /// Point of the body with that normal.
    pub surface: Vec3,
    pub pole: Pole,
    pub chart_point: Point,
    /// Degree of the chart defect field.
    pub degree: i64,
    /// Index of the principal line field, read off the same box.
    pub line_index: f64,
    pub first_harmonic_defect: f64,
}

/// Output of [`find_umbilics`].
#[derive(Debug, Clone)]
pub struct Umbilics {
    pub umbilics: Vec<Umbilic>,
    pub degree_sum: i64,
    pub line_index_sum: f64,
    pub attempts: usize,
    pub rotation: Mat3,
    pub warnings: Vec<String>,
}

/// Options for [`find_umbilics`].
#[derive(Debug, Clone)]
pub struct UmbilicOptions {
    pub search: SearchOptions,
    pub max_attempts: usize,
}

impl Default for UmbilicOptions {
    fn default() -> Self {
        UmbilicOptions {
            search: SearchOptions {
                resolution: Some(1e-4),
                ..SearchOptions::default()
            },
            max_attempts: 4,
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let q: [f64; 4] = loop {
        let q = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            break q.map(|x| x / n);
        }
    };
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn search_charts(hs: &SupportFunction, rotation: Mat3, opts: &UmbilicOptions) -> Result<Umbilics> {
    let disc = PlanarDomain::new(BoundaryCurve::circle([0.0, 0.0], WORKING_RADIUS)?)?;
    let gfac = StereoChart::gfac();
    let mut found: Vec<Umbilic> = Vec::new();
    let mut warnings = Vec::new();
    let res = opts.search.resolution.unwrap_or(1e-4);
    for pole in [Pole::South, Pole::North] {
        let chart = StereoChart { pole, rotation };
        let v = riemannian_defect(&chart_pullback(hs, &chart), &gfac)?;
        let search = locate_zeros(&v, &disc, &opts.search)?;
        warnings.extend(search.warnings.iter().map(|w| format!("{pole:?} chart: {w}")));
        let lines = LineField::from_doubled(v.clone());
        for c in &search.certificates {
            let at = c.location();
            if at[0].hypot(at[1]) > 1.0 {
                continue;
            }
            let normal = chart.map(at);
            if found.iter().any(|u| norm([u.normal[0] - normal[0], u.normal[1] - normal[1], u.normal[2] - normal[2]]) < 4.0 * res + 1e-9) {
                continue;
            }
            let li = line_field_index(&lines, &Contour::Rect { lo: c.lo(), hi: c.hi() }, search.floor)?;
            found.push(Umbilic {
                normal,
                surface: support_to_surface(hs, normal)?,
                pole,
                chart_point: at,
                degree: c.degree,
                line_index: li.value(),
                first_harmonic_defect: first_harmonic_defect(hs, normal)?,
            });
        }
    }
    let degree_sum = found.iter().map(|u| u.degree).sum();
    let line_index_sum = found.iter().map(|u| u.line_index).sum();
    Ok(Umbilics {
        umbilics: found,
        degree_sum,
        line_index_sum,
        attempts: 1,
        rotation,
        warnings,
    })
}

/// Umbilics of the body with support function `hs`, stitched from the two
/// charts; charts are rotated at random when a zero sits on a chart seam.
pub fn find_umbilics(hs: &SupportFunction, opts: &UmbilicOptions, seed: u64) -> Result<Umbilics> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rotation = IDENTITY3;
    for attempt in 1..=opts.max_attempts.max(1) {
        match search_charts(hs, rotation, opts) {
            Ok(mut u) => {
                u.attempts = attempt;
                return Ok(u);
            }
            Err(Error::FieldVanishesOnCurve { .. }) => rotation = random_rotation(&mut rng),
            Err(e) => return Err(e),
        }
    }
    Err(Error::SeamZero {
        attempts: opts.max_attempts.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n = norm(v);
            if n > 0.1 && n <= 1.0 {
                return normalize(v);
            }
        }
    }

    #[test]
    fn pullback_examples() {
        let one = chart_pullback(&SupportFunction::parse("1 + 0*Z").unwrap(), &StereoChart::north());
        assert_eq!(one.value([0.3, -0.8]).unwrap(), 1.0);
        let z = chart_pullback(&SupportFunction::parse("Z").unwrap(), &StereoChart::north());
        for k in 0..20 {
            let r = 0.1 * k as f64;
            let a = 0.7 * k as f64;
            let p = [r * a.cos(), r * a.sin()];
            assert!((z.value(p).unwrap() - (r * r - 1.0) / (r * r + 1.0)).abs() < 1e-14);
        }
        let e = chart_pullback(&SupportFunction::ellipsoid(2.0, 2f64.sqrt(), 1.0).unwrap(), &StereoChart::north());
        assert!((e.value([0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chart_transition_is_inversion() {
        let (n, s) = (StereoChart::north(), StereoChart::south());
        for p in [[0.6, 0.9], [-1.3, 0.2], [0.5, -0.7]] {
            let r2 = p[0] * p[0] + p[1] * p[1];
            let q = s.map([p[0] / r2, p[1] / r2]);
            let w = n.map(p);
            assert!(norm([q[0] - w[0], q[1] - w[1], q[2] - w[2]]) < 1e-14);
            let back = n.inverse(w).unwrap();
            assert!((back[0] - p[0]).abs() < 1e-13 && (back[1] - p[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn surface_of_ellipsoid_and_sphere() {
        let e = SupportFunction::ellipsoid(2.0, 2f64.sqrt(), 1.0).unwrap();
        let ball = SupportFunction::sphere(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s = unit(&mut rng);
            let q = support_to_surface(&e, s).unwrap();
            assert!((q[0] * q[0] / 4.0 + q[1] * q[1] / 2.0 + q[2] * q[2] - 1.0).abs() < 1e-10);
            let b = support_to_surface(&ball, s).unwrap();
            assert!(norm([b[0] - 1.5 * s[0], b[1] - 1.5 * s[1], b[2] - 1.5 * s[2]]) < 1e-13);
            assert!(principal_gap_oracle(&ball, s).unwrap() < 1e-12);
        }
    }

    #[test]
    fn gap_at_axis_endpoint() {
        let e = SupportFunction::ellipsoid(2.0, 2f64.sqrt(), 1.0).unwrap();
        assert!((principal_gap_oracle(&e, [1.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        // radii of curvature b²/a = 1 and c²/a = 1/2
        assert!((first_harmonic_defect(&e, [1.0, 0.0, 0.0]).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn first_harmonics_have_no_defect() {
        let h = SupportFunction::parse("0.3 + 0.2*X - 0.5*Y + 0.1*Z").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            assert!(first_harmonic_defect(&h, unit(&mut rng)).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn round_bodies_are_degenerate() {
        let opts = UmbilicOptions::default();
        for hs in [SupportFunction::sphere(2.0).unwrap(), SupportFunction::parse("1 + 0.05*Z").unwrap()] {
            let r = find_umbilics(&hs, &opts, 0);
            assert!(matches!(r, Err(Error::NonIsolatedZeros(_))), "{r:?}");
        }
    }

    #[test]
    fn ellipsoid_has_four_umbilics() {
        let e = SupportFunction::ellipsoid(2.0, 2f64.sqrt(), 1.0).unwrap();
        let t = std::time::Instant::now();
        let u = find_umbilics(&e, &UmbilicOptions::default(), 0).unwrap();
        eprintln!("{:?} {:?}", t.elapsed(), u.warnings);
        assert_eq!(u.umbilics.len(), 4);
        assert_eq!(u.degree_sum, 4);
        assert_eq!(u.line_index_sum, 2.0);
        let (x, z) = (2.0 * (2.0f64 / 3.0).sqrt(), (1.0f64 / 3.0).sqrt());
        for m in &u.umbilics {
            eprintln!("{m:?}");
            assert_eq!(m.degree, 1);
            assert!(m.normal[1].abs() <= 1e-8);
            assert!((m.surface[0].abs() - x).abs() < 1e-6 && (m.surface[2].abs() - z).abs() < 1e-6);
            assert!(principal_gap_oracle(&e, m.normal).unwrap() <= 1e-6);
            assert!(m.first_harmonic_defect <= 1e-6);
        }
    }
}
