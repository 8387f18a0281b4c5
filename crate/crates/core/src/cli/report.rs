//! Report written for every job.

use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::job::{JobSpec, SCHEMA_TAG};
use crate::error::Error;
use crate::index::{WindingResult, ZeroCertificate, ZeroSearch};
use crate::sphere::{Pole, Umbilic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WindingReport {
    pub turns: i64,
    /// Half-integer for line fields.
    pub value: f64,
    pub guaranteed: bool,
    pub line_field: bool,
    pub samples: usize,
    pub min_norm: f64,
}

impl From<&WindingResult> for WindingReport {
    fn from(w: &WindingResult) -> Self {
        WindingReport {
            turns: w.turns,
            value: w.value(),
            guaranteed: w.guaranteed,
            line_field: w.line_field,
            samples: w.samples,
            min_norm: w.min_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CertificateReport {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub degree: i64,
    pub center: [f64; 2],
    pub polished: Option<[f64; 2]>,
    pub residual: Option<f64>,
    pub min_boundary_norm: f64,
    pub depth: u32,
}

impl From<&ZeroCertificate> for CertificateReport {
    fn from(c: &ZeroCertificate) -> Self {
        CertificateReport {
            lo: c.lo(),
            hi: c.hi(),
            degree: c.degree,
            center: c.center,
            polished: c.polished,
            residual: c.residual,
            min_boundary_norm: c.min_boundary_norm,
            depth: c.depth as u32,
        }
    }
}

/// One zero search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SearchReport {
    /// Field searched, e.g. `V[H]`.
    pub field: String,
    pub boundary_winding: WindingReport,
    pub certificates: Vec<CertificateReport>,
    pub degree_sum: i64,
    pub resolution: f64,
    pub floor: f64,
    pub scale: f64,
    pub evaluations: u64,
    pub unresolved_boxes: usize,
}

impl SearchReport {
    pub fn new(field: impl Into<String>, s: &ZeroSearch) -> Self {
        SearchReport {
            field: field.into(),
            boundary_winding: (&s.boundary).into(),
            certificates: s.certificates.iter().map(Into::into).collect(),
            degree_sum: s.degree_sum,
            resolution: s.resolution,
            floor: s.floor,
            scale: s.scale,
            evaluations: s.evaluations,
            unresolved_boxes: s.unresolved_boxes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FlowRowReport {
    pub eps: f64,
    pub search: SearchReport,
    pub max_symplectic_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct UmbilicReport {
    pub normal: [f64; 3],
    pub surface: [f64; 3],
    pub chart: String,
    pub chart_point: [f64; 2],
    pub degree: i64,
    pub line_index: f64,
    pub first_harmonic_defect: f64,
    pub principal_gap: Option<f64>,
}

impl UmbilicReport {
    pub fn new(u: &Umbilic, gap: Option<f64>) -> Self {
        UmbilicReport {
            normal: u.normal,
            surface: u.surface,
            chart: match u.pole {
                Pole::North => "north".into(),
                Pole::South => "south".into(),
            },
            chart_point: u.chart_point,
            degree: u.degree,
            line_index: u.line_index,
            first_harmonic_defect: u.first_harmonic_defect,
            principal_gap: gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SphereReport {
    pub umbilics: Vec<UmbilicReport>,
    pub degree_sum: i64,
    pub line_index_sum: f64,
    pub attempts: usize,
    pub rotation: [[f64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SuiteResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ErrorReport {
    /// Error variant name, e.g. `FieldVanishesOnCurve`.
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        ErrorReport {
            kind: e.kind().to_string(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

/// Everything a job produced. Numbers depend only on the job and its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Report {
    pub schema: String,
    pub job: JobSpec,
    pub seed: u64,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchReport>,
    /// Search of the map defect in source coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_search: Option<SearchReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flow_table: Vec<FlowRowReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphere: Option<SphereReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suites: Vec<SuiteResult>,
    /// Residuals of identities that should vanish.
    pub checks: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(job: &JobSpec, seed: u64) -> Self {
        Report {
            schema: SCHEMA_TAG.into(),
            job: job.clone(),
            seed,
            status: "ok".into(),
            error: None,
            search: None,
            source_search: None,
            flow_table: Vec::new(),
            sphere: None,
            suites: Vec::new(),
            checks: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn fail(&mut self, e: &Error) {
        self.status = "error".into();
        self.error = Some(e.into());
    }

    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(e) => e.exit_code,
            None if self.suites.iter().any(|s| !s.pass) => 1,
            None => 0,
        }
    }
}
