//! Job dispatch.

use super::job::{JobKind, JobSpec};
use super::output::SampleRow;
use super::plot::Panel;
use super::report::{FlowRowReport, Report, SearchReport, SphereReport, UmbilicReport};
use super::verify::run_suites;
use crate::domain::{
    boundary_formula_v_unchecked, boundary_formula_vn_unchecked, check_boundary_flat, check_constant_on_boundary,
    PlanarDomain, TubularChart,
};
use crate::error::{Error, Result};
use crate::fields::{
    conformal_defect, loewner_field, map_conformal_defect, riemannian_defect, PlanarMap, ScalarField, VectorField,
};
use crate::flow::flow_as_map;
use crate::index::{locate_zeros, SearchOptions, ZeroSearch};
use crate::sphere::{
    chart_pullback, find_umbilics, first_harmonic_defect, principal_gap_oracle, StereoChart, UmbilicOptions,
    WORKING_RADIUS,
};
use crate::symplecto::{
    conformal_points_of_map, derivative_relations_check, moderateness, recover_generating_function,
    GeneratingFunction, HessianSource, HESSIAN_STEP,
};
use crate::index::domain_samples;
use crate::Point;

const GRID: usize = 21;
const BOUNDARY_CHECK_POINTS: usize = 100;
const DEFAULT_FLOW_TOL: f64 = 1e-10;

/// A finished job: the report plus what the optional plot and CSV need.
pub struct Outcome {
    pub report: Report,
    pub panels: Vec<Panel>,
    pub samples: Vec<SampleRow>,
}

fn search_options(job: &JobSpec, seed: u64) -> SearchOptions {
    let d = SearchOptions::default();
    SearchOptions {
        resolution: job.resolution,
        floor: job.floor,
        budget: job.budget.unwrap_or(d.budget),
        polish: true,
        seed,
    }
}

fn scalar(job: &JobSpec, text: &str) -> Result<ScalarField> {
    ScalarField::parse_with(text, job.vars())
}

fn search_warnings(report: &mut Report, what: &str, s: &ZeroSearch) {
    report.warnings.extend(s.warnings.iter().map(|w| format!("{what}: {w}")));
}

/// Runs one job. Failures are recorded in the report, never returned.
pub fn run(job: &JobSpec, seed: u64) -> Outcome {
    let mut out = Outcome {
        report: Report::new(job, seed),
        panels: Vec::new(),
        samples: Vec::new(),
    };
    if let Err(e) = dispatch(job, seed, &mut out) {
        out.report.fail(&e);
    }
    out
}

fn dispatch(job: &JobSpec, seed: u64, out: &mut Outcome) -> Result<()> {
    job.validate()?;
    match job.kind {
        JobKind::Field | JobKind::Loewner | JobKind::Riemannian => planar_field(job, seed, out),
        JobKind::Map => map_job(job, seed, out),
        JobKind::Flow => flow_job(job, seed, out),
        JobKind::Sphere => sphere_job(job, seed, out),
        JobKind::Verify => {
            out.report.suites = run_suites(job.suite.unwrap_or_default(), seed)?;
            Ok(())
        }
    }
}

fn domain_of(job: &JobSpec) -> Result<PlanarDomain> {
    job.domain
        .as_ref()
        .ok_or_else(|| Error::InvalidJob("missing domain".into()))?
        .build()
}

fn grid_in(domain: &PlanarDomain) -> Vec<Point> {
    let [lo, hi] = domain.bbox();
    let mut pts = Vec::new();
    for i in 0..GRID {
        for j in 0..GRID {
            let p = [
                lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / GRID as f64,
                lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / GRID as f64,
            ];
            if domain.contains(p) {
                pts.push(p);
            }
        }
    }
    pts
}

/// Samples `v` on a grid; points where it fails to evaluate are skipped.
fn sample_panel(title: String, chart: &str, v: &VectorField, domain: &PlanarDomain, out: &mut Outcome) -> Panel {
    let mut panel = Panel {
        title,
        boundary: domain.polygon().to_vec(),
        ..Panel::default()
    };
    for p in grid_in(domain) {
        if let Ok(val) = v.value(p) {
            panel.arrows.push((p, val));
            out.samples.push(SampleRow {
                chart: chart.into(),
                x: p[0],
                y: p[1],
                vx: val[0],
                vy: val[1],
                norm: val[0].hypot(val[1]),
            });
        }
    }
    panel
}

fn add_boxes(panel: &mut Panel, s: &ZeroSearch) {
    for c in &s.certificates {
        panel.boxes.push((c.lo(), c.hi(), c.degree));
    }
}

fn planar_field(job: &JobSpec, seed: u64, out: &mut Outcome) -> Result<()> {
    let domain = domain_of(job)?;
    let h = scalar(job, job.hamiltonian.as_deref().unwrap_or_default())?;
    let v = match job.kind {
        JobKind::Loewner => loewner_field(&h, job.n.unwrap_or(1))?,
        JobKind::Riemannian => riemannian_defect(&h, &scalar(job, job.gfac.as_deref().unwrap_or_default())?)?,
        _ => conformal_defect(&h)?,
    };
    let mut panel = sample_panel(v.label().to_string(), "plane", &v, &domain, out);

    let chart = TubularChart::new(domain.curve())?;
    let formula: Option<(&str, Box<dyn Fn(f64) -> Result<[f64; 2]>>)> = match job.kind {
        JobKind::Field if check_constant_on_boundary(&h, domain.curve()).is_ok() => Some((
            "boundary_formula",
            Box::new(|t| boundary_formula_v_unchecked(&h, &chart, t)),
        )),
        JobKind::Loewner => {
            let n = job.n.unwrap_or(1);
            if h.max_order() >= n && check_boundary_flat(&h, &chart, n).is_ok() {
                Some(("boundary_formula", Box::new(move |t| boundary_formula_vn_unchecked(&h, &chart, t, n))))
            } else {
                None
            }
        }
        _ => None,
    };
    if let Some((name, f)) = formula {
        let mut worst = 0.0f64;
        for t in domain.curve().arc_nodes(BOUNDARY_CHECK_POINTS)? {
            let p = domain.curve().point(t)?;
            let a = v.value(p)?;
            let b = f(t)?;
            worst = worst.max((a[0] - b[0]).hypot(a[1] - b[1]));
        }
        out.report.checks.insert(name.into(), worst);
    }

    let s = locate_zeros(&v, &domain, &search_options(job, seed))?;
    search_warnings(&mut out.report, v.label(), &s);
    add_boxes(&mut panel, &s);
    out.report.search = Some(SearchReport::new(v.label(), &s));
    out.panels.push(panel);
    Ok(())
}

/// Hessian of a recovered generating function by central differences.
struct FdHessian<'a>(&'a GeneratingFunction);

impl HessianSource for FdHessian<'_> {
    fn hessian(&self, w: Point) -> Result<[f64; 3]> {
        self.0.hessian_fd(w, HESSIAN_STEP)
    }
}

fn map_job(job: &JobSpec, seed: u64, out: &mut Outcome) -> Result<()> {
    let domain = domain_of(job)?;
    let spec = job.map.as_ref().ok_or_else(|| Error::InvalidJob("missing map".into()))?;
    let map = PlanarMap::from_components(scalar(job, &spec.f)?, scalar(job, &spec.g)?, spec.symplectic);
    analyse_map(job, seed, &map, &domain, out)
}

fn analyse_map(job: &JobSpec, seed: u64, map: &PlanarMap, domain: &PlanarDomain, out: &mut Outcome) -> Result<()> {
    let opts = search_options(job, seed);
    let xy_field = map_conformal_defect(map)?;
    let mut panel = sample_panel(format!("defect of {}", map.label()), "plane", &xy_field, domain, out);
    let r = &mut out.report;
    if map.fd_jets() {
        r.warnings.push("second derivatives of the map come from finite differences".into());
    }
    match conformal_points_of_map(map, domain, &opts, job.consistency.unwrap_or(false)) {
        Ok(found) => {
            r.diagnostics.insert("moderateness_min".into(), found.moderateness.min);
            r.diagnostics.insert("boundary_displacement".into(), found.boundary_displacement);
            r.checks.insert("boundary_identity".into(), found.boundary_identity_residual);
            search_warnings(r, "packed field", &found.search);
            r.search = Some(SearchReport::new(format!("packed V[{}]", map.label()), &found.search));
            if let Some(c) = &found.consistency {
                r.diagnostics.insert("consistency_max_distance".into(), c.max_distance);
                if !c.matched {
                    r.warnings.push("certificates in (x, y) and (u, v) do not match".into());
                }
                add_boxes(&mut panel, &c.xy);
                r.source_search = Some(SearchReport::new(xy_field.label(), &c.xy));
            }
            let gf = recover_generating_function(map, domain, domain.curve().point(0.0)?)?;
            r.diagnostics.insert("closedness_residual".into(), gf.closedness_residual);
            r.diagnostics.insert("boundary_gradient".into(), gf.boundary_gradient);
            let probes = domain_samples(domain, 64, seed);
            let rel = derivative_relations_check(&FdHessian(&gf), map, &probes)?;
            r.checks.insert("derivative_relations".into(), rel);
        }
        Err(e @ (Error::NotModerate { .. } | Error::NotIdentityOnBoundary { .. })) => {
            r.warnings.push(format!("{e}; searching the defect in (x, y) instead"));
            if let Ok(m) = moderateness(map, domain, 1024) {
                r.diagnostics.insert("moderateness_min".into(), m.min);
            }
            let s = locate_zeros(&xy_field, domain, &opts)?;
            search_warnings(r, xy_field.label(), &s);
            add_boxes(&mut panel, &s);
            r.source_search = Some(SearchReport::new(xy_field.label(), &s));
        }
        Err(e) => return Err(e),
    }
    r.diagnostics.insert("symplectic_residual".into(), map.max_symplectic_residual());
    out.panels.push(panel);
    Ok(())
}

fn flow_job(job: &JobSpec, seed: u64, out: &mut Outcome) -> Result<()> {
    let domain = domain_of(job)?;
    let h = scalar(job, job.hamiltonian.as_deref().unwrap_or_default())?;
    let opts = search_options(job, seed);
    let tol = job.tolerance.unwrap_or(DEFAULT_FLOW_TOL);
    let v = conformal_defect(&h)?;
    let mut panel = sample_panel(v.label().to_string(), "plane", &v, &domain, out);
    let s = locate_zeros(&v, &domain, &opts)?;
    search_warnings(&mut out.report, v.label(), &s);
    add_boxes(&mut panel, &s);
    out.report.search = Some(SearchReport::new(v.label(), &s));
    out.panels.push(panel);
    for &eps in job.eps.as_deref().unwrap_or_default() {
        let map = flow_as_map(&h, eps, tol)?;
        let field = map_conformal_defect(&map)?;
        let s = locate_zeros(&field, &domain, &opts)?;
        let what = format!("flow eps={eps}");
        search_warnings(&mut out.report, &what, &s);
        out.report.flow_table.push(FlowRowReport {
            eps,
            search: SearchReport::new(what, &s),
            max_symplectic_residual: map.max_symplectic_residual(),
        });
    }
    if !out.report.flow_table.is_empty() {
        out.report
            .warnings
            .push("flow map second derivatives come from finite differences of the variational Jacobian".into());
    }
    Ok(())
}

fn sphere_job(job: &JobSpec, seed: u64, out: &mut Outcome) -> Result<()> {
    let hs = job
        .support
        .as_ref()
        .ok_or_else(|| Error::InvalidJob("missing support".into()))?
        .build()?;
    let mut opts = UmbilicOptions::default();
    opts.search.budget = job.budget.unwrap_or(opts.search.budget);
    opts.search.seed = seed;
    if job.resolution.is_some() {
        opts.search.resolution = job.resolution;
    }
    opts.search.floor = job.floor;
    let found = find_umbilics(&hs, &opts, seed)?;
    out.report.warnings.extend(found.warnings.iter().cloned());

    let mut gap_max = None::<f64>;
    let mut defect_max = 0.0f64;
    let mut umbilics = Vec::new();
    for u in &found.umbilics {
        let gap = if hs.has_implicit() {
            let g = principal_gap_oracle(&hs, u.normal)?;
            gap_max = Some(gap_max.unwrap_or(0.0).max(g));
            Some(g)
        } else {
            None
        };
        defect_max = defect_max.max(first_harmonic_defect(&hs, u.normal)?);
        umbilics.push(UmbilicReport::new(u, gap));
    }
    if let Some(g) = gap_max {
        out.report.checks.insert("principal_gap_at_umbilics".into(), g);
    }
    out.report.checks.insert("first_harmonic_defect_at_umbilics".into(), defect_max);

    let disc = PlanarDomain::new(crate::domain::BoundaryCurve::circle([0.0, 0.0], WORKING_RADIUS)?)?;
    let gfac = StereoChart::gfac();
    for (name, base) in [("south", StereoChart::south()), ("north", StereoChart::north())] {
        let chart = base.rotated(found.rotation);
        let v = riemannian_defect(&chart_pullback(&hs, &chart), &gfac)?;
        let mut panel = sample_panel(format!("{name} chart"), name, &v, &disc, out);
        panel.circles.push(([0.0, 0.0], 1.0));
        for (k, u) in found.umbilics.iter().enumerate() {
            if let Some(p) = chart.inverse(u.normal) {
                if p[0].hypot(p[1]) <= WORKING_RADIUS {
                    panel.markers.push((p, format!("U{} ({})", k + 1, u.degree)));
                }
            }
        }
        out.panels.push(panel);
    }
    out.report.sphere = Some(SphereReport {
        umbilics,
        degree_sum: found.degree_sum,
        line_index_sum: found.line_index_sum,
        attempts: found.attempts,
        rotation: found.rotation,
    });
    Ok(())
}
