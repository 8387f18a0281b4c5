//! Time-ε Hamiltonian flows with their Jacobians.
//!
//! The state `(z, Z)` solves `ż = X_H(z)`, `Ż = dX_H(z) Z`, `Z(0) = I` with the
//! Dormand–Prince 5(4) pair. Jets of the flow map above order one are central
//! differences of `Z`.

use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::expr::Jet2;
use crate::fields::{conformal_defect, map_conformal_defect, PlanarMap, ScalarField};
use crate::index::{locate_zeros, SearchOptions, ZeroCertificate};
use crate::{Mat2, Point};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_STEPS: usize = 100_000;

type State = [f64; 6];

fn rhs(h: &ScalarField, y: &State) -> Result<State> {
    let j = h.jet([y[0], y[1]], 2)?;
    let (hx, hy) = (j.get(1, 0), j.get(0, 1));
    let (hxx, hxy, hyy) = (j.get(2, 0), j.get(1, 1), j.get(0, 2));
    // dX_H = [[H_xy, H_yy], [-H_xx, -H_xy]]; Z stored row-major in y[2..6]
    let z = [[y[2], y[3]], [y[4], y[5]]];
    let a = [[hxy, hyy], [-hxx, -hxy]];
    let mut out = [hy, -hx, 0.0, 0.0, 0.0, 0.0];
    for r in 0..2 {
        for c in 0..2 {
            out[2 + 2 * r + c] = a[r][0] * z[0][c] + a[r][1] * z[1][c];
        }
    }
    Ok(out)
}

/// Image and Jacobian of the time-`eps` flow of `X_H` started at `p`.
pub fn integrate(h: &ScalarField, eps: f64, p: Point, tol: f64) -> Result<(Point, Mat2)> {
    if h.max_order() < 3 {
        return Err(Error::OrderTooLow {
            what: format!("flow of {}", h.label()),
            required: 3,
            available: h.max_order(),
        });
    }
    let mut y: State = [p[0], p[1], 1.0, 0.0, 0.0, 1.0];
    if eps == 0.0 {
        return Ok((p, [[1.0, 0.0], [0.0, 1.0]]));
    }
    let dir = eps.signum();
    let total = eps.abs();
    let mut t = 0.0;
    let mut step = {
        let f = rhs(h, &y)?;
        let speed = f[0].hypot(f[1]).max(1e-12);
        (0.1 * tol.powf(0.2) / speed).min(total)
    };
    let mut k = [[0.0; 6]; 7];
    k[0] = rhs(h, &y)?;
    for _ in 0..MAX_STEPS {
        if t >= total {
            break;
        }
        let last = t + step >= total;
        if last {
            step = total - t;
        }
        let hs = dir * step;
        for s in 1..7 {
            let mut ys = y;
            for (i, v) in ys.iter_mut().enumerate() {
                let mut acc = 0.0;
                for m in 0..s {
                    acc += A[s][m] * k[m][i];
                }
                *v += hs * acc;
            }
            k[s] = match rhs(h, &ys) {
                Ok(v) => v,
                Err(e @ Error::Domain { .. }) => {
                    return Err(Error::StepFailure {
                        time: dir * t,
                        reason: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            };
        }
        let mut y5 = y;
        let mut err = 0.0;
        for i in 0..6 {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] = y[i] + hs * d5;
            let sc = tol + tol * y[i].abs().max(y5[i].abs());
            err += (hs * (d5 - d4) / sc).powi(2);
        }
        let err = (err / 6.0).sqrt();
        if !err.is_finite() || y5.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure {
                time: dir * t,
                reason: "non-finite state".into(),
            });
        }
        if err <= 1.0 {
            t = if last { total } else { t + step };
            y = y5;
            k[0] = k[6];
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        step *= factor;
        if step < 1e-14 * total.max(1.0) {
            return Err(Error::StepFailure {
                time: dir * t,
                reason: format!("step size underflow (error estimate {err:e})"),
            });
        }
    }
    if t < total {
        return Err(Error::StepFailure {
            time: dir * t,
            reason: format!("more than {MAX_STEPS} steps"),
        });
    }
    Ok(([y[0], y[1]], [[y[2], y[3]], [y[4], y[5]]]))
}

/// The time-ε flow as an evaluable object.
#[derive(Debug, Clone)]
pub struct FlowMap {
    h: ScalarField,
    eps: f64,
    tol: f64,
}

/// One flow evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub image: Point,
    pub jacobian: Mat2,
    /// `|det J - 1|`.
    pub det_residual: f64,
}

impl FlowMap {
    pub fn new(h: &ScalarField, eps: f64, tol: f64) -> Result<Self> {
        if h.max_order() < 3 {
            return Err(Error::OrderTooLow {
                what: format!("flow of {}", h.label()),
                required: 3,
                available: h.max_order(),
            });
        }
        Ok(FlowMap {
            h: h.clone(),
            eps,
            tol,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn eval(&self, p: Point) -> Result<FlowSample> {
        let (image, j) = integrate(&self.h, self.eps, p, self.tol)?;
        Ok(FlowSample {
            image,
            jacobian: j,
            det_residual: (j[0][0] * j[1][1] - j[0][1] * j[1][0] - 1.0).abs(),
        })
    }

    /// Wraps the flow as a [`PlanarMap`]; order-2 jets are finite differences.
    pub fn as_map(&self) -> PlanarMap {
        let fm = self.clone();
        let fd_step = 1e-5f64.max(self.tol.sqrt());
        PlanarMap::new(format!("flow[{}; {}]", self.h.label(), self.eps), 2, true, move |p, order| {
            let s = fm.eval(p)?;
            let j = s.jacobian;
            let mut f = Jet2::zeros(p, order);
            let mut g = Jet2::zeros(p, order);
            f.set(0, 0, s.image[0]);
            g.set(0, 0, s.image[1]);
            if order >= 1 {
                f.set(1, 0, j[0][0]);
                f.set(0, 1, j[0][1]);
                g.set(1, 0, j[1][0]);
                g.set(0, 1, j[1][1]);
            }
            if order >= 2 {
                let jac = |q: Point| fm.eval(q).map(|s| s.jacobian);
                let h = fd_step;
                let (jxp, jxm) = (jac([p[0] + h, p[1]])?, jac([p[0] - h, p[1]])?);
                let (jyp, jym) = (jac([p[0], p[1] + h])?, jac([p[0], p[1] - h])?);
                for (row, jet) in [(0usize, &mut f), (1usize, &mut g)] {
                    let dxx = (jxp[row][0] - jxm[row][0]) / (2.0 * h);
                    let dyy = (jyp[row][1] - jym[row][1]) / (2.0 * h);
                    let dxy = 0.5 * ((jyp[row][0] - jym[row][0]) + (jxp[row][1] - jxm[row][1])) / (2.0 * h);
                    jet.set(2, 0, dxx);
                    jet.set(1, 1, dxy);
                    jet.set(0, 2, dyy);
                }
            }
            Ok([f, g])
        })
        .with_fd_jets(true)
    }
}

/// `flow_as_map`: the time-`eps` flow of `X_H` as a symplectic-claimed map.
pub fn flow_as_map(h: &ScalarField, eps: f64, tol: f64) -> Result<PlanarMap> {
    Ok(FlowMap::new(h, eps, tol)?.as_map())
}

/// One row of the field-versus-flow table.
#[derive(Debug, Clone)]
pub struct FlowRow {
    pub eps: f64,
    pub flow_boundary_winding: i64,
    pub flow_degree_sum: i64,
    pub flow_certificates: Vec<ZeroCertificate>,
    pub max_symplectic_residual: f64,
}

/// Conformal points of the field next to those of its time-ε flows.
#[derive(Debug, Clone)]
pub struct FlowExperiment {
    pub field_boundary_winding: i64,
    pub field_degree_sum: i64,
    pub field_certificates: Vec<ZeroCertificate>,
    pub rows: Vec<FlowRow>,
}

/// Locates conformal points of `V` and of each flow map. Exploratory only.
pub fn field_vs_flow_experiment(
    h: &ScalarField,
    eps_list: &[f64],
    domain: &PlanarDomain,
    tol: f64,
    opts: &SearchOptions,
) -> Result<FlowExperiment> {
    let field = locate_zeros(&conformal_defect(h)?, domain, opts)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let map = flow_as_map(h, eps, tol)?;
        let s = locate_zeros(&map_conformal_defect(&map)?, domain, opts)?;
        rows.push(FlowRow {
            eps,
            flow_boundary_winding: s.boundary.turns,
            flow_degree_sum: s.degree_sum,
            flow_certificates: s.certificates,
            max_symplectic_residual: map.max_symplectic_residual(),
        });
    }
    Ok(FlowExperiment {
        field_boundary_winding: field.boundary.turns,
        field_degree_sum: field.degree_sum,
        field_certificates: field.certificates,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sf(s: &str) -> ScalarField {
        ScalarField::parse(s).unwrap()
    }

    #[test]
    fn rotation_flow() {
        // X_H = (y, -x): clockwise rotation
        let t: f64 = 0.7;
        let (img, j) = integrate(&sf("(x^2 + y^2)/2"), t, [0.6, -0.3], 1e-10).unwrap();
        let r = [[t.cos(), t.sin()], [-t.sin(), t.cos()]];
        let expect = [r[0][0] * 0.6 + r[0][1] * -0.3, r[1][0] * 0.6 + r[1][1] * -0.3];
        assert!((img[0] - expect[0]).abs() < 1e-10 && (img[1] - expect[1]).abs() < 1e-10);
        for a in 0..2 {
            for b in 0..2 {
                assert!((j[a][b] - r[a][b]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn panov_flow_is_matrix_exponential() {
        // ż = A z with A = [[0, 4], [-2, 0]]: exp(εA) = cos(ωε) I + sin(ωε)/ω A, ω = √8
        let eps = 0.05;
        let w = 8f64.sqrt();
        let (c, s) = ((w * eps).cos(), (w * eps).sin() / w);
        let expect = [[c, 4.0 * s], [-2.0 * s, c]];
        let (_, j) = integrate(&sf("x^2 + 2*y^2"), eps, [0.3, 0.2], 1e-10).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((j[a][b] - expect[a][b]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let (img, j) = integrate(&sf("sin(x*y) + x^3"), 0.0, [0.1, 0.2], 1e-10).unwrap();
        assert_eq!(img, [0.1, 0.2]);
        assert_eq!(j, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn order_too_low() {
        let h = ScalarField::from_expression(crate::expr::parse("x*y", ("x", "y")).unwrap().with_max_order(2));
        assert!(matches!(integrate(&h, 0.1, [0.0, 0.0], 1e-10), Err(Error::OrderTooLow { .. })));
    }

    #[test]
    fn group_property_and_symplecticity() {
        let h = sf("(1 - x^2 - y^2)^2*(1 + 0.3*x*y) + 0.2*sin(x)");
        let tol = 1e-10;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let p = [rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)];
            let (a, ja) = integrate(&h, 0.3, p, tol).unwrap();
            let (b, jb) = integrate(&h, 0.2, a, tol).unwrap();
            let (c, jc) = integrate(&h, 0.5, p, tol).unwrap();
            assert!((b[0] - c[0]).abs() < 10.0 * tol && (b[1] - c[1]).abs() < 10.0 * tol);
            for r in 0..2 {
                for k in 0..2 {
                    let comp = jb[r][0] * ja[0][k] + jb[r][1] * ja[1][k];
                    assert!((comp - jc[r][k]).abs() < 10.0 * tol);
                }
            }
            let det = jc[0][0] * jc[1][1] - jc[0][1] * jc[1][0];
            assert!((det - 1.0).abs() < 10.0 * tol);
        }
    }

    #[test]
    fn linearization_rate() {
        let h = sf("x^2*y + cos(y)");
        let p = [0.4, 0.3];
        let j = h.jet(p, 1).unwrap();
        let x = [j.get(0, 1), -j.get(1, 0)];
        let err = |eps: f64| {
            let (q, _) = integrate(&h, eps, p, 1e-12).unwrap();
            ((q[0] - p[0]) / eps - x[0]).hypot((q[1] - p[1]) / eps - x[1])
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e2 < 0.6 * e1, "{e1} {e2}");
    }

    #[test]
    fn boundary_is_fixed() {
        let map = flow_as_map(&sf("(1 - x^2 - y^2)^2*(1 + 0.2*x)"), 0.05, 1e-10).unwrap();
        for i in 0..100 {
            let a = i as f64 * std::f64::consts::TAU / 100.0;
            let p = [a.cos(), a.sin()];
            let q = map.image(p).unwrap();
            assert!((q[0] - p[0]).hypot(q[1] - p[1]) <= 1e-9);
        }
        assert!(map.fd_jets());
        assert!(map.max_order() == 2);
    }

    #[test]
    fn panov_flow_has_no_conformal_points() {
        let map = flow_as_map(&sf("x^2 + 2*y^2"), 0.05, 1e-10).unwrap();
        let w = map_conformal_defect(&map).unwrap();
        for i in 0..20 {
            for k in 0..20 {
                let p = [-1.0 + 0.1 * i as f64, -0.7 + 0.07 * k as f64];
                let v = w.value(p).unwrap();
                assert!(v[0].hypot(v[1]) > 0.05);
            }
        }
    }

    #[test]
    fn bump_flow_matches_field_degree() {
        let h = sf("(1 - x^2 - y^2)^2");
        let d = PlanarDomain::unit_disc();
        let opts = SearchOptions {
            resolution: Some(1e-3),
            ..SearchOptions::default()
        };
        let t = std::time::Instant::now();
        let e = field_vs_flow_experiment(&h, &[0.01, 0.05], &d, 1e-10, &opts).unwrap();
        eprintln!("{:?}", t.elapsed());
        assert_eq!(e.field_degree_sum, 2);
        for r in &e.rows {
            assert_eq!(r.flow_degree_sum, 2, "eps {}", r.eps);
            assert_eq!(r.flow_boundary_winding, 2);
        }
    }
}
