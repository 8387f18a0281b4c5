//! Arithmetic expressions over a few named variables, evaluated with
//! truncated Taylor-jet arithmetic.
//!
//! Expressions carry the user-supplied formulas: Hamiltonians, map
//! components, conformal factors, boundary parameterizations and support
//! functions. Evaluating an expression on [`Jet2`] arguments yields exact
//! partial derivatives; binding the variables to jets of another map gives
//! composition for free.

mod jet;
mod parse;

use std::fmt;

pub use jet::{jet_len, Jet2};
pub(crate) use jet::factorial;

use crate::error::{Error, Result};

/// Default cap on the jet order accepted by [`Expression::eval_jet`].
pub const DEFAULT_MAX_ORDER: usize = 8;

const RESERVED: [&str; 6] = ["sin", "cos", "exp", "log", "sqrt", "pi"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    fn from_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression tree. Variables are indices into the declared name list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    fn precedence(&self) -> u8 {
        match self {
            Node::Const(c) if *c < 0.0 => 0,
            Node::Const(_) | Node::Var(_) => 5,
            Node::Unary(UnaryOp::Neg, _) => 3,
            Node::Unary(..) => 5,
            Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Node::Binary(BinaryOp::Pow, ..) => 4,
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            Node::Const(_) => true,
            Node::Var(_) => false,
            Node::Unary(_, a) => a.is_constant(),
            Node::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, vars: &[String], min_prec: u8) -> fmt::Result {
        let paren = self.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Node::Const(c) => write!(f, "{c:?}")?,
            Node::Var(k) => f.write_str(&vars[*k])?,
            Node::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                a.write(f, vars, 3)?;
            }
            Node::Unary(op, a) => {
                write!(f, "{}(", op.name())?;
                a.write(f, vars, 0)?;
                f.write_str(")")?;
            }
            Node::Binary(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinaryOp::Add => (" + ", 1, 2),
                    BinaryOp::Sub => (" - ", 1, 2),
                    BinaryOp::Mul => ("*", 2, 3),
                    BinaryOp::Div => ("/", 2, 3),
                    BinaryOp::Pow => ("^", 5, 3),
                };
                a.write(f, vars, lp)?;
                f.write_str(sym)?;
                b.write(f, vars, rp)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A parsed expression together with its declared variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    vars: Vec<String>,
    max_order: usize,
}

/// Parses `text` over the two variables `var_names`.
pub fn parse(text: &str, var_names: (&str, &str)) -> Result<Expression> {
    Expression::parse(text, &[var_names.0, var_names.1])
}

impl Expression {
    /// Parses `text` over one to three declared variable names.
    pub fn parse(text: &str, vars: &[&str]) -> Result<Expression> {
        let vars = Self::check_vars(vars)?;
        let root = parse::Parser::parse(text, &vars)?;
        Ok(Expression {
            root,
            vars,
            max_order: DEFAULT_MAX_ORDER,
        })
    }

    /// Wraps an already built tree.
    pub fn from_node(root: Node, vars: &[&str]) -> Result<Expression> {
        let vars = Self::check_vars(vars)?;
        fn max_var(n: &Node) -> Option<usize> {
            match n {
                Node::Var(k) => Some(*k),
                Node::Const(_) => None,
                Node::Unary(_, a) => max_var(a),
                Node::Binary(_, a, b) => max_var(a).max(max_var(b)),
            }
        }
        if let Some(k) = max_var(&root) {
            if k >= vars.len() {
                return Err(Error::UnknownIdentifier(format!("#{k}")));
            }
        }
        Ok(Expression {
            root,
            vars,
            max_order: DEFAULT_MAX_ORDER,
        })
    }

    fn check_vars(vars: &[&str]) -> Result<Vec<String>> {
        if vars.is_empty() || vars.len() > 3 {
            return Err(Error::InvalidJob(format!(
                "expressions take one to three variables, got {}",
                vars.len()
            )));
        }
        for (k, v) in vars.iter().enumerate() {
            let ok = v.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok || RESERVED.contains(v) || vars[..k].contains(v) {
                return Err(Error::InvalidJob(format!("invalid variable name `{v}`")));
            }
        }
        Ok(vars.iter().map(|s| s.to_string()).collect())
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Jet of the expression at `(x0, y0)`. A one-variable expression ignores `y0`.
    pub fn eval_jet(&self, x0: f64, y0: f64, order: usize) -> Result<Jet2> {
        if order > self.max_order {
            return Err(Error::OrderTooLarge {
                requested: order,
                max: self.max_order,
            });
        }
        if self.vars.len() > 2 {
            return Err(Error::Unsupported(
                "eval_jet on a three-variable expression; bind the variables with eval_with".into(),
            ));
        }
        let base = [x0, y0];
        let args = [Jet2::variable(0, base, order), Jet2::variable(1, base, order)];
        self.eval_with(&args[..self.vars.len()])
    }

    /// Evaluates with every variable bound to a jet. All jets must share a
    /// base point and order; the result is the jet of the composite function.
    pub fn eval_with(&self, args: &[Jet2]) -> Result<Jet2> {
        if args.len() != self.vars.len() {
            return Err(Error::InvalidJob(format!(
                "expression over {} variables bound to {} jets",
                self.vars.len(),
                args.len()
            )));
        }
        self.eval_node(&self.root, args)
    }

    /// Plain floating-point evaluation.
    pub fn eval(&self, args: &[f64]) -> Result<f64> {
        if args.len() != self.vars.len() {
            return Err(Error::InvalidJob(format!(
                "expression over {} variables given {} values",
                self.vars.len(),
                args.len()
            )));
        }
        self.eval_f64(&self.root, args)
    }

    fn node_text(&self, n: &Node) -> String {
        struct Show<'a>(&'a Node, &'a [String]);
        impl fmt::Display for Show<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.write(f, self.1, 0)
            }
        }
        Show(n, &self.vars).to_string()
    }

    fn domain_err(&self, n: &Node, reason: &str) -> Error {
        Error::Domain {
            node: self.node_text(n),
            reason: reason.into(),
        }
    }

    fn eval_f64(&self, n: &Node, args: &[f64]) -> Result<f64> {
        Ok(match n {
            Node::Const(c) => *c,
            Node::Var(k) => args[*k],
            Node::Unary(op, a) => {
                let u = self.eval_f64(a, args)?;
                match op {
                    UnaryOp::Neg => -u,
                    UnaryOp::Sin => u.sin(),
                    UnaryOp::Cos => u.cos(),
                    UnaryOp::Exp => u.exp(),
                    UnaryOp::Log => {
                        if u <= 0.0 {
                            return Err(self.domain_err(n, "logarithm of a non-positive value"));
                        }
                        u.ln()
                    }
                    UnaryOp::Sqrt => {
                        if u < 0.0 {
                            return Err(self.domain_err(n, "square root of a negative value"));
                        }
                        u.sqrt()
                    }
                }
            }
            Node::Binary(op, a, b) => {
                let u = self.eval_f64(a, args)?;
                let v = self.eval_f64(b, args)?;
                match op {
                    BinaryOp::Add => u + v,
                    BinaryOp::Sub => u - v,
                    BinaryOp::Mul => u * v,
                    BinaryOp::Div => {
                        if v.abs() < 1e-300 {
                            return Err(self.domain_err(n, "division by a vanishing value"));
                        }
                        u / v
                    }
                    BinaryOp::Pow => {
                        if let Some(p) = integer_exponent(v) {
                            if p < 0 && u.abs() < 1e-300 {
                                return Err(self.domain_err(n, "negative power of a vanishing value"));
                            }
                            u.powi(p)
                        } else {
                            if u <= 0.0 {
                                return Err(self.domain_err(n, "non-integer power of a non-positive base"));
                            }
                            (v * u.ln()).exp()
                        }
                    }
                }
            }
        })
    }

    fn eval_node(&self, n: &Node, args: &[Jet2]) -> Result<Jet2> {
        let base = args[0].base();
        let order = args.iter().map(Jet2::order).min().unwrap_or(0);
        Ok(match n {
            Node::Const(c) => Jet2::constant(*c, base, order),
            Node::Var(k) => args[*k].truncate(order),
            Node::Unary(op, a) => {
                let u = self.eval_node(a, args)?;
                self.apply_unary(n, *op, &u)?
            }
            Node::Binary(op, a, b) => {
                let u = self.eval_node(a, args)?;
                match op {
                    BinaryOp::Pow if b.is_constant() => {
                        let p = self.eval_f64(b, &[0.0; 3][..self.vars.len()])?;
                        self.pow_const(n, &u, p)?
                    }
                    BinaryOp::Pow => {
                        let v = self.eval_node(b, args)?;
                        if u.value() <= 0.0 {
                            return Err(self.domain_err(n, "variable power of a non-positive base"));
                        }
                        let lg = log_jet(&u);
                        exp_jet(&(&v * &lg))
                    }
                    _ => {
                        let v = self.eval_node(b, args)?;
                        match op {
                            BinaryOp::Add => &u + &v,
                            BinaryOp::Sub => &u - &v,
                            BinaryOp::Mul => &u * &v,
                            BinaryOp::Div => {
                                if v.value().abs() < 1e-300 {
                                    return Err(self.domain_err(n, "division by a vanishing value"));
                                }
                                &u * &recip_jet(&v)
                            }
                            BinaryOp::Pow => unreachable!(),
                        }
                    }
                }
            }
        })
    }

    fn apply_unary(&self, n: &Node, op: UnaryOp, u: &Jet2) -> Result<Jet2> {
        let u0 = u.value();
        let order = u.order();
        Ok(match op {
            UnaryOp::Neg => -u,
            UnaryOp::Sin => {
                let (s, c) = u0.sin_cos();
                let cycle = [s, c, -s, -c];
                u.compose_univariate(&(0..=order).map(|k| cycle[k % 4]).collect::<Vec<_>>())
            }
            UnaryOp::Cos => {
                let (s, c) = u0.sin_cos();
                let cycle = [c, -s, -c, s];
                u.compose_univariate(&(0..=order).map(|k| cycle[k % 4]).collect::<Vec<_>>())
            }
            UnaryOp::Exp => exp_jet(u),
            UnaryOp::Log => {
                if u0 <= 0.0 {
                    return Err(self.domain_err(n, "logarithm of a non-positive value"));
                }
                log_jet(u)
            }
            UnaryOp::Sqrt => {
                if u0 < 0.0 || (u0 == 0.0 && order > 0) {
                    return Err(self.domain_err(n, "square root of a non-positive value"));
                }
                u.compose_univariate(&power_derivs(u0, 0.5, order))
            }
        })
    }

    fn pow_const(&self, n: &Node, u: &Jet2, p: f64) -> Result<Jet2> {
        if let Some(k) = integer_exponent(p) {
            if k == 0 {
                return Ok(Jet2::constant(1.0, u.base(), u.order()));
            }
            let pos = int_pow(u, k.unsigned_abs());
            if k > 0 {
                return Ok(pos);
            }
            if pos.value().abs() < 1e-300 {
                return Err(self.domain_err(n, "negative power of a vanishing value"));
            }
            return Ok(recip_jet(&pos));
        }
        if u.value() <= 0.0 {
            return Err(self.domain_err(n, "non-integer power of a non-positive base"));
        }
        Ok(exp_jet(&log_jet(u).scale(p)))
    }
}

fn integer_exponent(p: f64) -> Option<i32> {
    (p.fract() == 0.0 && p.abs() <= 1024.0).then_some(p as i32)
}

pub(crate) fn int_pow(u: &Jet2, mut k: u32) -> Jet2 {
    let mut result: Option<Jet2> = None;
    let mut sq = u.clone();
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => sq.clone(),
                Some(r) => &r * &sq,
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        sq = &sq * &sq;
    }
    result.unwrap_or_else(|| Jet2::constant(1.0, u.base(), u.order()))
}

pub(crate) fn exp_jet(u: &Jet2) -> Jet2 {
    let e = u.value().exp();
    u.compose_univariate(&vec![e; u.order() + 1])
}

pub(crate) fn log_jet(u: &Jet2) -> Jet2 {
    let u0 = u.value();
    let d: Vec<f64> = (0..=u.order())
        .map(|k| {
            if k == 0 {
                u0.ln()
            } else {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * factorial(k - 1) / u0.powi(k as i32)
            }
        })
        .collect();
    u.compose_univariate(&d)
}

pub(crate) fn recip_jet(u: &Jet2) -> Jet2 {
    let u0 = u.value();
    let d: Vec<f64> = (0..=u.order())
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(k) / u0.powi(k as i32 + 1)
        })
        .collect();
    u.compose_univariate(&d)
}

pub(crate) fn sqrt_jet(u: &Jet2) -> Jet2 {
    u.compose_univariate(&power_derivs(u.value(), 0.5, u.order()))
}

/// Derivatives of `u ↦ u^p` at `u0`: `p (p-1) ... (p-k+1) u0^(p-k)`.
pub(crate) fn power_derivs(u0: f64, p: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    let mut falling = 1.0;
    for k in 0..=order {
        out.push(if falling == 0.0 { 0.0 } else { falling * u0.powf(p - k as f64) });
        falling *= p - k as f64;
    }
    out
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f, &self.vars, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xy(s: &str) -> Expression {
        parse(s, ("x", "y")).unwrap()
    }

    fn var(k: usize) -> Box<Node> {
        Box::new(Node::Var(k))
    }

    fn c(v: f64) -> Box<Node> {
        Box::new(Node::Const(v))
    }

    #[test]
    fn grammar_examples() {
        use BinaryOp::*;
        assert_eq!(
            xy("x^2 + 2*y").root,
            Node::Binary(
                Add,
                Box::new(Node::Binary(Pow, var(0), c(2.0))),
                Box::new(Node::Binary(Mul, c(2.0), var(1)))
            )
        );
        assert_eq!(
            xy("sin(x*y) - 1").root,
            Node::Binary(
                Sub,
                Box::new(Node::Unary(UnaryOp::Sin, Box::new(Node::Binary(Mul, var(0), var(1))))),
                c(1.0)
            )
        );
    }

    #[test]
    fn unknown_identifier() {
        assert_eq!(
            parse("x^2 + z", ("x", "y")).unwrap_err(),
            Error::UnknownIdentifier("z".into())
        );
        assert_eq!(
            parse("tan(x)", ("x", "y")).unwrap_err(),
            Error::UnknownIdentifier("tan".into())
        );
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("x + * y", ("x", "y")).unwrap_err() {
            Error::Syntax { offset, .. } => assert_eq!(offset, 4),
            e => panic!("{e:?}"),
        }
        match parse("(x + y", ("x", "y")).unwrap_err() {
            Error::Syntax { offset, .. } => assert_eq!(offset, 6),
            e => panic!("{e:?}"),
        }
        assert!(matches!(parse("", ("x", "y")), Err(Error::Syntax { .. })));
        assert!(matches!(parse("x $ y", ("x", "y")), Err(Error::Syntax { offset: 2, .. })));
    }

    #[test]
    fn precedence_and_associativity() {
        use BinaryOp::*;
        // -x^2 is -(x^2)
        assert_eq!(
            xy("-x^2").root,
            Node::Unary(UnaryOp::Neg, Box::new(Node::Binary(Pow, var(0), c(2.0))))
        );
        // right-associative power
        assert_eq!(
            xy("x^2^3").root,
            Node::Binary(Pow, var(0), Box::new(Node::Binary(Pow, c(2.0), c(3.0))))
        );
        // negation binds tighter than *
        assert_eq!(
            xy("-x*y").root,
            Node::Binary(Mul, Box::new(Node::Unary(UnaryOp::Neg, var(0))), var(1))
        );
        assert_eq!(xy("2^-1").eval(&[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(xy("1.5e2 + .5").eval(&[0.0, 0.0]).unwrap(), 150.5);
    }

    #[test]
    fn bilinear_jet() {
        let j = xy("x*y").eval_jet(2.0, 3.0, 2).unwrap();
        assert_eq!(j.value(), 6.0);
        assert_eq!(j.get(1, 0), 3.0);
        assert_eq!(j.get(0, 1), 2.0);
        assert_eq!(j.get(1, 1), 1.0);
        assert_eq!(j.get(2, 0), 0.0);
        assert_eq!(j.get(0, 2), 0.0);
    }

    #[test]
    fn panov_hessian_is_constant() {
        let e = xy("x^2 + 2*y^2");
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.7), (5.0, 2.0)] {
            let j = e.eval_jet(x, y, 2).unwrap();
            assert_eq!(j.get(2, 0), 2.0);
            assert_eq!(j.get(0, 2), 4.0);
            assert_eq!(j.get(1, 1), 0.0);
        }
    }

    #[test]
    fn domain_errors_name_the_node() {
        match xy("1 + log(x - 1)").eval_jet(0.5, 0.0, 1).unwrap_err() {
            Error::Domain { node, .. } => assert_eq!(node, "log(x - 1.0)"),
            e => panic!("{e:?}"),
        }
        assert!(matches!(xy("sqrt(x)").eval_jet(-1.0, 0.0, 0), Err(Error::Domain { .. })));
        assert!(matches!(xy("1/x").eval_jet(0.0, 0.0, 0), Err(Error::Domain { .. })));
        assert!(matches!(xy("x^0.5").eval_jet(-1.0, 0.0, 1), Err(Error::Domain { .. })));
        // integer powers are fine for negative bases
        assert_eq!(xy("x^3").eval_jet(-2.0, 0.0, 1).unwrap().get(1, 0), 12.0);
        assert!(matches!(
            xy("x").eval_jet(0.0, 0.0, 9),
            Err(Error::OrderTooLarge { requested: 9, max: 8 })
        ));
    }

    #[test]
    fn pi_and_reserved_names() {
        assert!((xy("pi").eval(&[0.0, 0.0]).unwrap() - std::f64::consts::PI).abs() < 1e-16);
        assert!(Expression::parse("x", &["sin", "y"]).is_err());
        assert!(Expression::parse("x", &["x", "x"]).is_err());
    }

    /// Central finite-difference oracle for mixed partials, independent of
    /// the jet arithmetic.
    fn fd_partial(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64, i: usize, j: usize, h: f64) -> f64 {
        fn binom(n: usize, k: usize) -> f64 {
            (0..k).fold(1.0, |acc, m| acc * (n - m) as f64 / (m + 1) as f64)
        }
        let mut acc = 0.0;
        for a in 0..=i {
            for b in 0..=j {
                let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                let dx = (i as f64 / 2.0 - a as f64) * h;
                let dy = (j as f64 / 2.0 - b as f64) * h;
                acc += sign * binom(i, a) * binom(j, b) * f(x + dx, y + dy);
            }
        }
        acc / h.powi((i + j) as i32)
    }

    fn assert_matches_fd(text: &str, x: f64, y: f64, order: usize) {
        let e = xy(text);
        let jet = e.eval_jet(x, y, order).unwrap();
        let f = |a: f64, b: f64| e.eval(&[a, b]).unwrap();
        for ((i, j), v) in jet.entries() {
            let fd = if i + j <= 2 {
                fd_partial(&f, x, y, i, j, 1e-3)
            } else {
                // a 1e-3 step drowns third and fourth differences in rounding;
                // Richardson-extrapolate two coarser steps instead
                let h = 2e-2;
                let coarse = fd_partial(&f, x, y, i, j, h);
                let fine = fd_partial(&f, x, y, i, j, h / 2.0);
                (4.0 * fine - coarse) / 3.0
            };
            assert!(
                (v - fd).abs() <= 1e-5 * v.abs().max(1.0),
                "{text} ∂({i},{j}): jet {v} vs fd {fd}"
            );
        }
    }

    #[test]
    fn sin_exp_matches_finite_differences() {
        assert_matches_fd("sin(x)*exp(y)", 0.3, -0.2, 4);
    }

    #[test]
    fn every_unary_matches_finite_differences() {
        for text in [
            "cos(x - 2*y)",
            "exp(x*y)",
            "log(2 + x^2 + y)",
            "sqrt(3 + x - y^2)",
            "1/(2 + x*y)",
            "(1 + x^2)^1.5",
            "(2 + y)^(x)",
        ] {
            assert_matches_fd(text, 0.4, 0.25, 3);
        }
    }

    #[test]
    fn chain_consistency_for_sine() {
        let direct = xy("sin(x^2+y)").eval_jet(0.7, 0.1, 5).unwrap();
        let inner = xy("x^2+y").eval_jet(0.7, 0.1, 5).unwrap();
        let u0 = inner.value();
        let cycle = [u0.sin(), u0.cos(), -u0.sin(), -u0.cos()];
        let composed = inner.compose_univariate(&(0..6).map(|k| cycle[k % 4]).collect::<Vec<_>>());
        for ((i, j), v) in direct.entries() {
            assert!((v - composed.get(i, j)).abs() < 1e-12);
        }
    }

    fn arb_node(depth: u32) -> BoxedStrategy<Node> {
        let leaf = prop_oneof![
            (0.0f64..10.0).prop_map(Node::Const),
            (0usize..2).prop_map(Node::Var),
        ];
        leaf.prop_recursive(depth, 32, 2, |inner| {
            prop_oneof![
                (
                    prop_oneof![
                        Just(UnaryOp::Neg),
                        Just(UnaryOp::Sin),
                        Just(UnaryOp::Cos),
                        Just(UnaryOp::Exp),
                        Just(UnaryOp::Log),
                        Just(UnaryOp::Sqrt)
                    ],
                    inner.clone()
                )
                    .prop_map(|(op, a)| Node::Unary(op, Box::new(a))),
                (
                    prop_oneof![
                        Just(BinaryOp::Add),
                        Just(BinaryOp::Sub),
                        Just(BinaryOp::Mul),
                        Just(BinaryOp::Div),
                        Just(BinaryOp::Pow)
                    ],
                    inner.clone(),
                    inner
                )
                    .prop_map(|(op, a, b)| Node::Binary(op, Box::new(a), Box::new(b))),
            ]
        })
        .boxed()
    }

    /// Random polynomial-ish expressions that are defined everywhere.
    fn arb_smooth(depth: u32) -> BoxedStrategy<Node> {
        let leaf = prop_oneof![
            (-2.0f64..2.0).prop_map(|v| Node::Const(v.abs())),
            (0usize..2).prop_map(Node::Var),
        ];
        leaf.prop_recursive(depth, 16, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Node::Unary(UnaryOp::Sin, Box::new(a))),
                inner.clone().prop_map(|a| Node::Unary(UnaryOp::Neg, Box::new(a))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Node::Binary(BinaryOp::Add, Box::new(a), Box::new(b))),
                (inner.clone(), inner)
                    .prop_map(|(a, b)| Node::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))),
            ]
        })
        .boxed()
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(node in arb_node(4)) {
            let e = Expression::from_node(node, &["x", "y"]).unwrap();
            let printed = e.to_string();
            let again = parse(&printed, ("x", "y")).unwrap();
            let reprinted = again.to_string();
            let third = parse(&reprinted, ("x", "y")).unwrap();
            prop_assert_eq!(&again.root, &third.root);
            prop_assert_eq!(again.root, e.root);
        }

        #[test]
        fn leibniz_consistency(f in arb_smooth(3), g in arb_smooth(3), x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let fe = Expression::from_node(f.clone(), &["x", "y"]).unwrap();
            let ge = Expression::from_node(g.clone(), &["x", "y"]).unwrap();
            let prod = Expression::from_node(
                Node::Binary(BinaryOp::Mul, Box::new(f), Box::new(g)), &["x", "y"]).unwrap();
            let jf = fe.eval_jet(x, y, 4).unwrap();
            let jg = ge.eval_jet(x, y, 4).unwrap();
            let jp = prod.eval_jet(x, y, 4).unwrap();
            let expect = &jf * &jg;
            for ((i, j), v) in jp.entries() {
                let e = expect.get(i, j);
                prop_assert!((v - e).abs() <= 1e-12 * e.abs().max(1.0), "({},{}) {} vs {}", i, j, v, e);
            }
        }

        #[test]
        fn ring_associativity(x in -1.0f64..1.0, y in -1.0f64..1.0, a in -2.0f64..2.0) {
            let f = xy("sin(x) + y^2").eval_jet(x, y, 5).unwrap().add_const(a);
            let g = xy("exp(x*y)").eval_jet(x, y, 5).unwrap();
            let h = xy("cos(x - y)").eval_jet(x, y, 5).unwrap();
            let l = &(&f * &g) * &h;
            let r = &f * &(&g * &h);
            let d = &(&f * &(&g + &h)) - &(&(&f * &g) + &(&f * &h));
            for ((i, j), v) in l.entries() {
                prop_assert!((v - r.get(i, j)).abs() <= 1e-12 * v.abs().max(1.0));
                prop_assert!(d.get(i, j).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }
}
