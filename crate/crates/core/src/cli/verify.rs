//! Built-in identity checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::job::Suite;
use super::report::SuiteResult;
use crate::domain::{collar_probes, verify_commutation, BoundaryCurve, PlanarDomain, TubularChart};
use crate::error::Result;
use crate::fields::ScalarField;
use crate::index::domain_samples;
use crate::symplecto::{
    derivative_relations_check, graph_inverse, graph_transform, map_from_generating_function,
    pullback_identity_residual, transversality_determinant,
};
use crate::Mat2;

fn result(name: &str, residual: f64, tolerance: f64) -> SuiteResult {
    SuiteResult {
        name: name.into(),
        residual,
        tolerance,
        pass: residual <= tolerance,
    }
}

fn commutation(seed: u64) -> Result<Vec<SuiteResult>> {
    let f = ScalarField::parse_with("sin(t)*exp(0.3*s) + s^3*cos(2*t) + s*t", ("t", "s"))?;
    let mut out = Vec::new();
    for (label, curve) in [
        ("circle", BoundaryCurve::circle([0.0, 0.0], 1.0)?),
        ("ellipse", BoundaryCurve::ellipse([0.0, 0.0], 1.0, 0.6)?),
    ] {
        let chart = TubularChart::new(&curve)?;
        let probes = collar_probes(&chart, 100, seed);
        for n in [2usize, 3] {
            let r = verify_commutation(n, &f, &chart, &probes)?;
            out.push(result(&format!("commutation/{label}/n={n}"), r.max_residual, 1e-6));
        }
    }
    Ok(out)
}

fn graph(seed: u64) -> Vec<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z1 = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let z2 = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let g = graph_transform(z1, z2);
        let back = graph_inverse(g.w1, g.w2);
        for k in 0..2 {
            worst = worst.max((back.z1[k] - z1[k]).abs()).max((back.z2[k] - z2[k]).abs());
        }
    }
    vec![
        result("graph/pullback", pullback_identity_residual(), 1e-15),
        result("graph/round_trip", worst, 1e-14),
    ]
}

/// Products shear · rotation · shear.
pub fn random_symplectic(rng: &mut ChaCha8Rng) -> Mat2 {
    let a: f64 = rng.gen_range(-2.0..2.0);
    let b: f64 = rng.gen_range(-2.0..2.0);
    let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let m1 = [[1.0, a], [0.0, 1.0]];
    let r = [[t.cos(), -t.sin()], [t.sin(), t.cos()]];
    let m2 = [[1.0, 0.0], [b, 1.0]];
    let mul = |p: Mat2, q: Mat2| -> Mat2 {
        [
            [p[0][0] * q[0][0] + p[0][1] * q[1][0], p[0][0] * q[0][1] + p[0][1] * q[1][1]],
            [p[1][0] * q[0][0] + p[1][1] * q[1][0], p[1][0] * q[0][1] + p[1][1] * q[1][1]],
        ]
    };
    mul(mul(m1, r), m2)
}

fn determinant(seed: u64) -> Vec<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let j = random_symplectic(&mut rng);
        worst = worst.max((transversality_determinant(j) - (2.0 + j[0][0] + j[1][1])).abs());
    }
    vec![
        result("determinant/random_symplectic", worst, 1e-10),
        result("determinant/shear", transversality_determinant([[-1.0, 1.0], [0.0, -1.0]]).abs(), 0.0),
    ]
}

fn relations(seed: u64) -> Result<Vec<SuiteResult>> {
    let h = ScalarField::parse("0.01*(1 - x^2 - y^2)^2")?;
    let f = map_from_generating_function(&h)?;
    let probes = domain_samples(&PlanarDomain::unit_disc(), 50, seed);
    Ok(vec![result("relations/generated_map", derivative_relations_check(&h, &f, &probes)?, 1e-6)])
}

/// Runs the selected suites.
pub fn run_suites(suite: Suite, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Commutation {
        out.extend(commutation(seed)?);
    }
    if all || suite == Suite::Graph {
        out.extend(graph(seed));
    }
    if all || suite == Suite::Determinant {
        out.extend(determinant(seed));
    }
    if all || suite == Suite::Relations {
        out.extend(relations(seed)?);
    }
    Ok(out)
}
