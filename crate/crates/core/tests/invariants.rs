use num_complex::Complex64;
use proptest::prelude::*;

use conformal_lab::domain::PlanarDomain;
use conformal_lab::fields::{conformal_defect, PlanarMap, ScalarField, VectorField};
use conformal_lab::index::{box_degree, locate_zeros, SearchOptions};
use conformal_lab::sphere::{first_harmonic_defect, principal_gap_oracle, support_to_surface, StereoChart, SupportFunction};
use conformal_lab::symplecto::{graph_inverse, graph_transform, transversality_determinant};

fn symplectic(a: f64, b: f64, t: f64) -> [[f64; 2]; 2] {
    let (c, s) = (t.cos(), t.sin());
    let r = [[c + a * s, -s + a * c], [s, c]];
    [[r[0][0] + r[0][1] * b, r[0][1]], [r[1][0] + r[1][1] * b, r[1][1]]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transversality_is_two_plus_trace(a in -4.0..4.0f64, b in -4.0..4.0f64, t in 0.0..6.3f64) {
        let j = symplectic(a, b, t);
        prop_assert!((transversality_determinant(j) - (2.0 + j[0][0] + j[1][1])).abs() < 1e-10);
    }

    #[test]
    fn graph_round_trip(x in prop::array::uniform4(-5.0..5.0f64)) {
        let g = graph_transform([x[0], x[1]], [x[2], x[3]]);
        let back = graph_inverse(g.w1, g.w2);
        for k in 0..2 {
            prop_assert!((back.z1[k] - x[k]).abs() < 1e-14);
            prop_assert!((back.z2[k] - x[2 + k]).abs() < 1e-14);
        }
    }

    #[test]
    fn charts_agree_on_the_overlap(th in 0.3..2.8f64, ph in 0.0..6.3f64) {
        let s = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
        for chart in [StereoChart::north(), StereoChart::south()] {
            let p = chart.inverse(s).unwrap();
            let back = chart.map(p);
            for k in 0..3 {
                prop_assert!((back[k] - s[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_translates_have_no_defect(d in -0.3..0.3f64, th in 0.1..3.0f64, ph in 0.0..6.3f64) {
        let hs = SupportFunction::parse(&format!("1.5 + {d}*X - 0.5*{d}*Z")).unwrap();
        let s = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
        prop_assert!(first_harmonic_defect(&hs, s).unwrap() < 1e-12);
    }

    #[test]
    fn gap_and_defect_agree_on_ellipsoids(a in 1.1..2.0f64, th in 0.2..2.9f64, ph in 0.0..6.3f64) {
        let (b, c) = (1.0, 0.8);
        let hs = SupportFunction::ellipsoid(a, b, c).unwrap();
        let s = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
        let gap = principal_gap_oracle(&hs, s).unwrap();
        let defect = first_harmonic_defect(&hs, s).unwrap();
        // Gauss curvature of the ellipsoid at the point with normal s
        let q = support_to_surface(&hs, s).unwrap();
        let w = q[0] * q[0] / a.powi(4) + q[1] * q[1] / b.powi(4) + q[2] * q[2] / c.powi(4);
        let gauss = 1.0 / ((a * b * c).powi(2) * w * w);
        prop_assert!((gap / gauss - 2.0 * defect).abs() < 1e-9 * (1.0 + defect), "gap {gap} defect {defect}");
    }

    #[test]
    fn box_degree_counts_roots(r in 0.0..0.6f64, t in 0.0..6.3f64, m in 1u32..4, conj in any::<bool>()) {
        let a = Complex64::from_polar(r, t);
        let v = VectorField::from_values("root", move |p| {
            let d = Complex64::new(p[0], p[1]) - a;
            let w = if conj { d.conj() } else { d }.powu(m);
            Ok([w.re, w.im])
        });
        let w = box_degree(&v, [-0.9, -0.85], [0.87, 0.92], 0.0).unwrap();
        prop_assert_eq!(w.turns, if conj { -(m as i64) } else { m as i64 });
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn degree_sum_matches_boundary(c in prop::array::uniform3(-0.5..0.5f64)) {
        let h = format!("(1 - x^2 - y^2)^2 * (1 + {}*x + {}*y + {}*x*y)", c[0], c[1], c[2]);
        let v = conformal_defect(&ScalarField::parse(&h).unwrap()).unwrap();
        let s = locate_zeros(&v, &PlanarDomain::unit_disc(), &SearchOptions::default()).unwrap();
        prop_assert_eq!(s.degree_sum, s.boundary.turns);
        prop_assert_eq!(s.degree_sum, 2);
    }

    #[test]
    fn rotations_are_symplectic(t in 0.0..6.3f64) {
        let f = format!("x*cos({t}) - y*sin({t})");
        let g = format!("x*sin({t}) + y*cos({t})");
        let m = PlanarMap::parse(&f, &g, true).unwrap();
        let (_, j) = m.jacobian([0.3, -0.2]).unwrap();
        prop_assert!((j[0][0] * j[1][1] - j[0][1] * j[1][0] - 1.0).abs() < 1e-14);
    }
}
