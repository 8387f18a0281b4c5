//! Scalar fields, planar maps and the vector fields built from them.
//!
//! Every derived field is assembled at the jet level: its components are
//! computed as jets one order below what the evaluator received, so the
//! value and the Jacobian come out of the same arithmetic. When the source
//! field cannot supply the extra order, the Jacobian falls back to central
//! differences and the sample is flagged.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::{Expression, Jet2};
use crate::{Mat2, Point};

type JetFn = dyn Fn(Point, usize) -> Result<Jet2> + Send + Sync;
type MapFn = dyn Fn(Point, usize) -> Result<[Jet2; 2]> + Send + Sync;
type SampleFn = dyn Fn(Point, bool) -> Result<FieldSample> + Send + Sync;

/// A differentiable function `H(x, y)` queried for jets.
#[derive(Clone)]
pub struct ScalarField {
    eval: Arc<JetFn>,
    max_order: usize,
    label: String,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("max_order", &self.max_order)
            .finish()
    }
}

impl ScalarField {
    pub fn new(
        label: impl Into<String>,
        max_order: usize,
        eval: impl Fn(Point, usize) -> Result<Jet2> + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            eval: Arc::new(eval),
            max_order,
            label: label.into(),
        }
    }

    pub fn from_expression(expr: Expression) -> Self {
        let label = expr.to_string();
        let max_order = expr.max_order();
        ScalarField::new(label, max_order, move |p, order| expr.eval_jet(p[0], p[1], order))
    }

    /// Parses `text` over the variables `x`, `y`.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, ("x", "y"))
    }

    pub fn parse_with(text: &str, vars: (&str, &str)) -> Result<Self> {
        Ok(Self::from_expression(crate::expr::parse(text, vars)?))
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(format!("{c}"), usize::MAX, move |p, order| Ok(Jet2::constant(c, p, order)))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn jet(&self, p: Point, order: usize) -> Result<Jet2> {
        if order > self.max_order {
            return Err(Error::OrderTooLow {
                what: self.label.clone(),
                required: order,
                available: self.max_order,
            });
        }
        (self.eval)(p, order)
    }

    pub fn value(&self, p: Point) -> Result<f64> {
        Ok(self.jet(p, 0)?.value())
    }

    fn require(&self, what: &str, order: usize) -> Result<()> {
        if self.max_order < order {
            return Err(Error::OrderTooLow {
                what: format!("{what} of {}", self.label),
                required: order,
                available: self.max_order,
            });
        }
        Ok(())
    }
}

/// One evaluation of a vector field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: [f64; 2],
    /// `jacobian[i][j] = ∂V_i/∂x_j`.
    pub jacobian: Option<Mat2>,
    /// The Jacobian came from finite differences rather than jets.
    pub jacobian_fd: bool,
}

/// A planar vector field with an optional Jacobian.
#[derive(Clone)]
pub struct VectorField {
    eval: Arc<SampleFn>,
    label: String,
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorField").field("label", &self.label).finish()
    }
}

impl VectorField {
    /// `eval(p, want_jacobian)`; the evaluator may ignore the flag and return
    /// `jacobian: None`, in which case [`VectorField::sample`] differentiates
    /// numerically.
    pub fn new(
        label: impl Into<String>,
        eval: impl Fn(Point, bool) -> Result<FieldSample> + Send + Sync + 'static,
    ) -> Self {
        VectorField {
            eval: Arc::new(eval),
            label: label.into(),
        }
    }

    /// A field known only through its values.
    pub fn from_values(
        label: impl Into<String>,
        f: impl Fn(Point) -> Result<[f64; 2]> + Send + Sync + 'static,
    ) -> Self {
        VectorField::new(label, move |p, _| {
            Ok(FieldSample {
                value: f(p)?,
                jacobian: None,
                jacobian_fd: false,
            })
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, p: Point) -> Result<[f64; 2]> {
        Ok((self.eval)(p, false)?.value)
    }

    /// Value and Jacobian, differentiating numerically when needed.
    pub fn sample(&self, p: Point) -> Result<FieldSample> {
        let s = (self.eval)(p, true)?;
        if s.jacobian.is_some() {
            return Ok(s);
        }
        let h = 1e-6 * p[0].abs().max(p[1].abs()).max(1.0);
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut a = p;
            let mut b = p;
            a[k] += h;
            b[k] -= h;
            let va = self.value(a)?;
            let vb = self.value(b)?;
            for i in 0..2 {
                jac[i][k] = (va[i] - vb[i]) / (2.0 * h);
            }
        }
        Ok(FieldSample {
            value: s.value,
            jacobian: Some(jac),
            jacobian_fd: true,
        })
    }

    /// Pointwise linear transform of the values (and Jacobians).
    pub fn transformed(&self, label: impl Into<String>, m: Mat2) -> VectorField {
        let inner = self.clone();
        VectorField::new(label, move |p, want| {
            let s = (inner.eval)(p, want)?;
            let apply = |v: [f64; 2]| [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]];
            Ok(FieldSample {
                value: apply(s.value),
                jacobian: s.jacobian.map(|j| {
                    let c0 = apply([j[0][0], j[1][0]]);
                    let c1 = apply([j[0][1], j[1][1]]);
                    [[c0[0], c1[0]], [c0[1], c1[1]]]
                }),
                jacobian_fd: s.jacobian_fd,
            })
        })
    }
}

/// Builds a field whose two components are jets computed from source jets of
/// order `base_order` (for values) or `base_order + 1` (for Jacobians).
fn jet_field(
    label: String,
    base_order: usize,
    available: usize,
    components: impl Fn(Point, usize) -> Result<[Jet2; 2]> + Send + Sync + 'static,
) -> VectorField {
    VectorField::new(label, move |p, want| {
        if want && available > base_order {
            let [a, b] = components(p, base_order + 1)?;
            Ok(FieldSample {
                value: [a.value(), b.value()],
                jacobian: Some([[a.get(1, 0), a.get(0, 1)], [b.get(1, 0), b.get(0, 1)]]),
                jacobian_fd: false,
            })
        } else {
            let [a, b] = components(p, base_order)?;
            Ok(FieldSample {
                value: [a.value(), b.value()],
                jacobian: None,
                jacobian_fd: false,
            })
        }
    })
}

/// `X_H = (H_y, -H_x)`.
pub fn hamiltonian_field(h: &ScalarField) -> Result<VectorField> {
    h.require("hamiltonian field", 2)?;
    let h = h.clone();
    let label = format!("X[{}]", h.label());
    let avail = h.max_order();
    Ok(jet_field(label, 1, avail, move |p, order| {
        let j = h.jet(p, order)?;
        Ok([j.dy(), -j.dx()])
    }))
}

/// The conformal defect `V = (H_yy - H_xx, -2 H_xy)`; its zeros are the
/// points where the Hessian of `H` is scalar.
pub fn conformal_defect(h: &ScalarField) -> Result<VectorField> {
    h.require("conformal defect", 2)?;
    let h = h.clone();
    let label = format!("V[{}]", h.label());
    let avail = h.max_order();
    Ok(jet_field(label, 2, avail, move |p, order| {
        let j = h.jet(p, order)?;
        let hx = j.dx();
        let hy = j.dy();
        Ok([&hy.dy() - &hx.dx(), hx.dy().scale(-2.0)])
    }))
}

/// Real and imaginary parts of `(∂x + i∂y)^n H`.
pub fn loewner_field(h: &ScalarField, n: usize) -> Result<VectorField> {
    if n == 0 {
        return Err(Error::InvalidJob("Loewner index n must be at least 1".into()));
    }
    h.require("Loewner field", n)?;
    let h = h.clone();
    let label = format!("V{n}[{}]", h.label());
    let avail = h.max_order();
    Ok(jet_field(label, n, avail, move |p, order| {
        let j = h.jet(p, order)?;
        let rest = order - n;
        let mut re = Jet2::zeros(p, rest);
        let mut im = Jet2::zeros(p, rest);
        let mut binom = 1.0;
        for k in 0..=n {
            // C(n,k) i^k ∂x^(n-k) ∂y^k H
            let part = Jet2::from_fn(p, rest, |a, b| j.get(a + n - k, b + k)).scale(binom);
            match k % 4 {
                0 => re = &re + &part,
                1 => im = &im + &part,
                2 => re = &re - &part,
                _ => im = &im - &part,
            }
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        Ok([re, im])
    }))
}

/// Conformal defect of the Hamiltonian field of `H` for the metric
/// `(dx² + dy²) / g`:
/// `((g H_y)_y - (g H_x)_x, -(g H_x)_y - (g H_y)_x)`.
pub fn riemannian_defect(h: &ScalarField, gfac: &ScalarField) -> Result<VectorField> {
    h.require("riemannian defect", 2)?;
    gfac.require("riemannian defect", 2)?;
    let h = h.clone();
    let g = gfac.clone();
    let label = format!("Vg[{}; {}]", h.label(), g.label());
    let avail = h.max_order().min(g.max_order());
    Ok(jet_field(label, 2, avail, move |p, order| {
        let gj = g.jet(p, order)?;
        if gj.value() <= 0.0 {
            return Err(Error::NonpositiveConformalFactor { at: p, value: gj.value() });
        }
        let hj = h.jet(p, order)?;
        let g1 = gj.truncate(order - 1);
        let ghx = &g1 * &hj.dx();
        let ghy = &g1 * &hj.dy();
        Ok([&ghy.dy() - &ghx.dx(), -(&ghx.dy() + &ghy.dx())])
    }))
}

/// A planar map `F = (f, g)` queried for the jets of both components.
#[derive(Clone)]
pub struct PlanarMap {
    eval: Arc<MapFn>,
    max_order: usize,
    label: String,
    symplectic_claimed: bool,
    fd_jets: bool,
    max_residual: Arc<AtomicU64>,
}

impl std::fmt::Debug for PlanarMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlanarMap")
            .field("label", &self.label)
            .field("max_order", &self.max_order)
            .field("symplectic_claimed", &self.symplectic_claimed)
            .finish()
    }
}

impl PlanarMap {
    pub fn new(
        label: impl Into<String>,
        max_order: usize,
        symplectic_claimed: bool,
        eval: impl Fn(Point, usize) -> Result<[Jet2; 2]> + Send + Sync + 'static,
    ) -> Self {
        PlanarMap {
            eval: Arc::new(eval),
            max_order,
            label: label.into(),
            symplectic_claimed,
            fd_jets: false,
            max_residual: Arc::new(AtomicU64::new(0f64.to_bits())),
        }
    }

    pub fn from_components(f: ScalarField, g: ScalarField, symplectic_claimed: bool) -> Self {
        let label = format!("({}, {})", f.label(), g.label());
        let max_order = f.max_order().min(g.max_order());
        PlanarMap::new(label, max_order, symplectic_claimed, move |p, order| {
            Ok([f.jet(p, order)?, g.jet(p, order)?])
        })
    }

    /// Parses both components over `x`, `y`.
    pub fn parse(f: &str, g: &str, symplectic_claimed: bool) -> Result<Self> {
        Ok(Self::from_components(
            ScalarField::parse(f)?,
            ScalarField::parse(g)?,
            symplectic_claimed,
        ))
    }

    pub fn identity() -> Self {
        Self::parse("x", "y", true).expect("identity parses")
    }

    /// Marks jets above order one as finite-difference approximations.
    pub fn with_fd_jets(mut self, fd: bool) -> Self {
        self.fd_jets = fd;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn symplectic_claimed(&self) -> bool {
        self.symplectic_claimed
    }

    pub fn fd_jets(&self) -> bool {
        self.fd_jets
    }

    /// Largest `|f_x g_y - f_y g_x - 1|` seen so far at queried points.
    pub fn max_symplectic_residual(&self) -> f64 {
        f64::from_bits(self.max_residual.load(Ordering::Relaxed))
    }

    pub fn jets(&self, p: Point, order: usize) -> Result<[Jet2; 2]> {
        if order > self.max_order {
            return Err(Error::OrderTooLow {
                what: self.label.clone(),
                required: order,
                available: self.max_order,
            });
        }
        let jets = (self.eval)(p, order)?;
        if order >= 1 && self.symplectic_claimed {
            let [f, g] = &jets;
            let r = (f.get(1, 0) * g.get(0, 1) - f.get(0, 1) * g.get(1, 0) - 1.0).abs();
            self.max_residual.fetch_max(r.to_bits(), Ordering::Relaxed);
        }
        Ok(jets)
    }

    pub fn image(&self, p: Point) -> Result<Point> {
        let [f, g] = self.jets(p, 0)?;
        Ok([f.value(), g.value()])
    }

    /// Image and Jacobian `[[f_x, f_y], [g_x, g_y]]`.
    pub fn jacobian(&self, p: Point) -> Result<(Point, Mat2)> {
        let [f, g] = self.jets(p, 1)?;
        Ok((
            [f.value(), g.value()],
            [[f.get(1, 0), f.get(0, 1)], [g.get(1, 0), g.get(0, 1)]],
        ))
    }

    /// The first component as a scalar field.
    pub fn f(&self) -> ScalarField {
        self.component(0)
    }

    /// The second component as a scalar field.
    pub fn g(&self) -> ScalarField {
        self.component(1)
    }

    fn component(&self, k: usize) -> ScalarField {
        let m = self.clone();
        ScalarField::new(format!("{}[{k}]", self.label), self.max_order, move |p, order| {
            let [a, b] = m.jets(p, order)?;
            Ok(if k == 0 { a } else { b })
        })
    }
}

/// `(f_x - g_y, f_y + g_x)` in source coordinates; it vanishes exactly where
/// `dF` is a similarity.
pub fn map_conformal_defect(map: &PlanarMap) -> Result<VectorField> {
    if map.max_order() < 1 {
        return Err(Error::OrderTooLow {
            what: format!("map defect of {}", map.label()),
            required: 1,
            available: map.max_order(),
        });
    }
    let m = map.clone();
    let label = format!("W[{}]", map.label());
    let avail = map.max_order();
    let fd = map.fd_jets();
    let field = jet_field(label.clone(), 1, avail, move |p, order| {
        let [f, g] = m.jets(p, order)?;
        Ok([&f.dx() - &g.dy(), &f.dy() + &g.dx()])
    });
    if !fd {
        return Ok(field);
    }
    // Second-order jets of this map are finite differences; keep the flag.
    Ok(VectorField::new(label, move |p, want| {
        let mut s = (field.eval)(p, want)?;
        s.jacobian_fd = s.jacobian.is_some();
        Ok(s)
    }))
}

/// Real 2-vector from a complex number.
pub fn c2v(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}
