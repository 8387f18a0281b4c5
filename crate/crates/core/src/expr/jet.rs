//! Truncated bivariate jets.
//!
//! A [`Jet2`] of order `N` stores the raw partial derivatives
//! `∂x^i ∂y^j f(x0, y0)` for every `i + j <= N`. They are *not* divided by
//! factorials, so products follow the binomial-weighted Leibniz rule and
//! formulas that consume second partials can read them off directly.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Largest order for which binomial coefficients are tabulated.
const MAX_TABLE: usize = 24;

fn binomial(n: usize, k: usize) -> f64 {
    debug_assert!(n <= MAX_TABLE);
    static TABLE: std::sync::OnceLock<Vec<Vec<f64>>> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut rows = vec![vec![1.0]];
        for n in 1..=MAX_TABLE {
            let prev = &rows[n - 1];
            let mut row = vec![1.0; n + 1];
            for k in 1..n {
                row[k] = prev[k - 1] + prev[k];
            }
            rows.push(row);
        }
        rows
    });
    table[n][k]
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Number of entries of a jet of the given order.
pub const fn jet_len(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

#[inline]
fn idx(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

/// Raw partial derivatives of a scalar function of two variables, truncated
/// at a fixed total order.
#[derive(Clone, PartialEq)]
pub struct Jet2 {
    order: usize,
    base: [f64; 2],
    coeffs: Vec<f64>,
}

impl Jet2 {
    pub fn zeros(base: [f64; 2], order: usize) -> Self {
        Jet2 {
            order,
            base,
            coeffs: vec![0.0; jet_len(order)],
        }
    }

    pub fn constant(value: f64, base: [f64; 2], order: usize) -> Self {
        let mut j = Self::zeros(base, order);
        j.coeffs[0] = value;
        j
    }

    /// Jet of the coordinate function `x` (`which == 0`) or `y` (`which == 1`).
    pub fn variable(which: usize, base: [f64; 2], order: usize) -> Self {
        assert!(which < 2, "a bivariate jet has two variables");
        let mut j = Self::constant(base[which], base, order);
        if order >= 1 {
            if which == 0 {
                j.set(1, 0, 1.0);
            } else {
                j.set(0, 1, 1.0);
            }
        }
        j
    }

    /// Builds a jet from a closure returning `∂x^i ∂y^j` for each index pair.
    pub fn from_fn(base: [f64; 2], order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut j = Self::zeros(base, order);
        for d in 0..=order {
            for jj in 0..=d {
                j.coeffs[idx(d - jj, jj)] = f(d - jj, jj);
            }
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn base(&self) -> [f64; 2] {
        self.base
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The value `f(x0, y0)`.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `∂x^i ∂y^j f` at the base point. Panics when `i + j` exceeds the order.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(
            i + j <= self.order,
            "partial ({i},{j}) beyond jet order {}",
            self.order
        );
        self.coeffs[idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i + j <= self.order);
        self.coeffs[idx(i, j)] = v;
    }

    /// Iterates `((i, j), value)` in graded order.
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        (0..=self.order).flat_map(move |d| (0..=d).map(move |j| ((d - j, j), self.coeffs[idx(d - j, j)])))
    }

    /// Drops every entry above `order`.
    pub fn truncate(&self, order: usize) -> Jet2 {
        let order = order.min(self.order);
        Jet2 {
            order,
            base: self.base,
            coeffs: self.coeffs[..jet_len(order)].to_vec(),
        }
    }

    /// Partial derivative in `x`; the result has one order less.
    pub fn dx(&self) -> Jet2 {
        assert!(self.order >= 1, "cannot differentiate a jet of order 0");
        Jet2::from_fn(self.base, self.order - 1, |i, j| self.get(i + 1, j))
    }

    /// Partial derivative in `y`; the result has one order less.
    pub fn dy(&self) -> Jet2 {
        assert!(self.order >= 1, "cannot differentiate a jet of order 0");
        Jet2::from_fn(self.base, self.order - 1, |i, j| self.get(i, j + 1))
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        Jet2 {
            order: self.order,
            base: self.base,
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add_const(&self, c: f64) -> Jet2 {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    fn zip(&self, other: &Jet2, f: impl Fn(f64, f64) -> f64) -> Jet2 {
        let order = self.order.min(other.order);
        let n = jet_len(order);
        Jet2 {
            order,
            base: self.base,
            coeffs: self.coeffs[..n]
                .iter()
                .zip(&other.coeffs[..n])
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    /// Leibniz product: `∂x^i∂y^j (fg) = Σ C(i,a) C(j,b) f_(a,b) g_(i-a,j-b)`.
    pub fn mul_jet(&self, other: &Jet2) -> Jet2 {
        let order = self.order.min(other.order);
        let mut out = Jet2::zeros(self.base, order);
        for d in 0..=order {
            for j in 0..=d {
                let i = d - j;
                let mut acc = 0.0;
                for a in 0..=i {
                    let ca = binomial(i, a);
                    for b in 0..=j {
                        let fa = self.coeffs[idx(a, b)];
                        if fa == 0.0 {
                            continue;
                        }
                        acc += ca * binomial(j, b) * fa * other.coeffs[idx(i - a, j - b)];
                    }
                }
                out.coeffs[idx(i, j)] = acc;
            }
        }
        out
    }

    /// Composes a univariate function with this jet.
    ///
    /// `derivs[k]` must hold `φ^(k)(u0)` where `u0` is the value of `self`;
    /// at least `order + 1` entries are read. The composition is evaluated as
    /// the Taylor polynomial of `φ` in the increment `self - u0`, which has no
    /// constant term, so powers above the order vanish.
    pub fn compose_univariate(&self, derivs: &[f64]) -> Jet2 {
        let n = self.order;
        assert!(derivs.len() > n, "need {} derivatives", n + 1);
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let mut acc = Jet2::constant(derivs[n] / factorial(n), self.base, n);
        for k in (0..n).rev() {
            acc = acc.mul_jet(&delta);
            acc.coeffs[0] += derivs[k] / factorial(k);
        }
        acc
    }

    /// Evaluates a Cartesian jet (`self`, taken at the point `(x.value(), y.value())`)
    /// along inner jets `x`, `y` that share a base point in some other
    /// coordinates. The result lives at that other base point.
    ///
    /// This is the bivariate chain rule to all orders.
    pub fn compose(&self, x: &Jet2, y: &Jet2) -> Jet2 {
        let order = x.order.min(y.order).min(self.order);
        let base = x.base;
        let mut dx = x.truncate(order);
        dx.coeffs[0] = 0.0;
        let mut dy = y.truncate(order);
        dy.coeffs[0] = 0.0;
        let mut px = vec![Jet2::constant(1.0, base, order)];
        let mut py = vec![Jet2::constant(1.0, base, order)];
        for k in 1..=order {
            px.push(px[k - 1].mul_jet(&dx));
            py.push(py[k - 1].mul_jet(&dy));
        }
        let mut out = Jet2::zeros(base, order);
        for d in 0..=order {
            for j in 0..=d {
                let i = d - j;
                let c = self.get(i, j) / (factorial(i) * factorial(j));
                if c == 0.0 {
                    continue;
                }
                let term = px[i].mul_jet(&py[j]);
                for (o, t) in out.coeffs.iter_mut().zip(&term.coeffs) {
                    *o += c * t;
                }
            }
        }
        out
    }

    /// Evaluates the Taylor polynomial at a displacement from the base point.
    pub fn taylor_eval(&self, h: [f64; 2]) -> f64 {
        self.entries()
            .map(|((i, j), v)| v * h[0].powi(i as i32) * h[1].powi(j as i32) / (factorial(i) * factorial(j)))
            .sum()
    }
}

impl fmt::Debug for Jet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for ((i, j), v) in self.entries() {
            m.entry(&format_args!("d{i}{j}"), &v);
        }
        m.finish()
    }
}

impl Add for &Jet2 {
    type Output = Jet2;
    fn add(self, rhs: &Jet2) -> Jet2 {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: &Jet2) -> Jet2 {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: &Jet2) -> Jet2 {
        self.mul_jet(rhs)
    }
}

impl Neg for &Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        &self + &rhs
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        &self - &rhs
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        self.mul_jet(&rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_count() {
        for n in 0..9 {
            assert_eq!(Jet2::zeros([0.0, 0.0], n).len(), (n + 1) * (n + 2) / 2);
        }
    }

    #[test]
    fn constant_has_only_value() {
        let c = Jet2::constant(3.5, [1.0, 2.0], 4);
        for ((i, j), v) in c.entries() {
            if i + j == 0 {
                assert_eq!(v, 3.5);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn product_of_variables() {
        let b = [2.0, 3.0];
        let x = Jet2::variable(0, b, 3);
        let y = Jet2::variable(1, b, 3);
        let xy = &x * &y;
        assert_eq!(xy.value(), 6.0);
        assert_eq!(xy.get(1, 0), 3.0);
        assert_eq!(xy.get(0, 1), 2.0);
        assert_eq!(xy.get(1, 1), 1.0);
        assert_eq!(xy.get(2, 0), 0.0);
        let x3 = &(&x * &x) * &x;
        assert_eq!(x3.get(3, 0), 6.0);
        assert_eq!(x3.get(2, 0), 12.0);
    }

    #[test]
    fn compose_with_identity_is_identity() {
        let b = [0.3, -0.4];
        let f = Jet2::from_fn(b, 4, |i, j| (i as f64 + 1.0) * (2.0 * j as f64 - 1.0));
        let x = Jet2::variable(0, b, 4);
        let y = Jet2::variable(1, b, 4);
        let g = f.compose(&x, &y);
        for ((i, j), v) in g.entries() {
            assert!((v - f.get(i, j)).abs() < 1e-14, "{i}{j}");
        }
    }

    #[test]
    fn univariate_composition_of_exp() {
        // exp(x + y) at origin: every partial equals 1
        let b = [0.0, 0.0];
        let s = &Jet2::variable(0, b, 5) + &Jet2::variable(1, b, 5);
        let e = s.compose_univariate(&[1.0; 6]);
        for (_, v) in e.entries() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_shifts() {
        let b = [1.0, 1.0];
        let x = Jet2::variable(0, b, 3);
        let y = Jet2::variable(1, b, 3);
        let f = &(&x * &x) * &y; // x^2 y
        let fx = f.dx();
        assert_eq!(fx.order(), 2);
        assert_eq!(fx.value(), 2.0);
        assert_eq!(fx.get(1, 0), 2.0);
        assert_eq!(fx.get(1, 1), 2.0);
    }
}
