//! Job descriptions read from JSON.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryCurve, PlanarDomain};
use crate::error::{Error, Result};
use crate::sphere::SupportFunction;

pub const SCHEMA_TAG: &str = "conformal-lab/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Field,
    Loewner,
    Riemannian,
    Map,
    Flow,
    Sphere,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    UnitDisc {},
    Circle {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        center: [f64; 2],
        a: f64,
        b: f64,
    },
    /// Closed curve `(x(tau), y(tau))`, `tau ∈ [0, 1)`.
    Parametric { x: String, y: String },
}

impl DomainSpec {
    pub fn build(&self) -> Result<PlanarDomain> {
        let curve = match self {
            DomainSpec::UnitDisc {} => return Ok(PlanarDomain::unit_disc()),
            DomainSpec::Circle { center, radius } => BoundaryCurve::circle(*center, *radius)?,
            DomainSpec::Ellipse { center, a, b } => BoundaryCurve::ellipse(*center, *a, *b)?,
            DomainSpec::Parametric { x, y } => BoundaryCurve::parametric(x, y)?,
        };
        PlanarDomain::new(curve)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub f: String,
    pub g: String,
    #[serde(default = "yes")]
    pub symplectic: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupportSpec {
    Ellipsoid { semi_axes_squared: [f64; 3] },
    Sphere { radius: f64 },
    /// `h(X, Y, Z)` with an optional implicit surface `F(X, Y, Z) = 0`.
    Expression {
        h: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        implicit: Option<String>,
    },
}

impl SupportSpec {
    pub fn build(&self) -> Result<SupportFunction> {
        match self {
            SupportSpec::Ellipsoid { semi_axes_squared: [a, b, c] } => {
                if !(*a > 0.0 && *b > 0.0 && *c > 0.0) {
                    return Err(Error::InvalidJob("semi_axes_squared must be positive".into()));
                }
                SupportFunction::ellipsoid(a.sqrt(), b.sqrt(), c.sqrt())
            }
            SupportSpec::Sphere { radius } => SupportFunction::sphere(*radius),
            SupportSpec::Expression { h, implicit } => {
                let s = SupportFunction::parse(h)?;
                match implicit {
                    Some(f) => s.with_implicit(f),
                    None => Ok(s),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema, Default)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    #[default]
    All,
    Commutation,
    Graph,
    Determinant,
    Relations,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

/// A single analysis request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub kind: JobKind,
    /// `H(x, y)` for field, loewner, riemannian and flow jobs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
    /// Names of the two planar variables; default `["x", "y"]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variables: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Conformal factor `g` of the metric `(dx² + dy²) / g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gfac: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    /// Integrator tolerance for flows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<SupportSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Also search map defects in `(x, y)` and match the certificates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

fn need<'a, T>(v: &'a Option<T>, key: &str, kind: JobKind) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::InvalidJob(format!("{kind:?} jobs require \"{key}\"")))
}

impl JobSpec {
    /// A bare job of the given kind; every optional key unset.
    pub fn of_kind(kind: JobKind) -> Self {
        JobSpec {
            schema: None,
            kind,
            hamiltonian: None,
            variables: None,
            n: None,
            gfac: None,
            map: None,
            eps: None,
            tolerance: None,
            domain: None,
            support: None,
            resolution: None,
            floor: None,
            budget: None,
            seed: None,
            consistency: None,
            suite: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let job: JobSpec = serde_json::from_str(text).map_err(|e| Error::InvalidJob(e.to_string()))?;
        job.validate()?;
        Ok(job)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn vars(&self) -> (&str, &str) {
        match &self.variables {
            Some([a, b]) => (a.as_str(), b.as_str()),
            None => ("x", "y"),
        }
    }

    /// Checks the keys each kind needs before anything is computed.
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.schema {
            if s != SCHEMA_TAG {
                return Err(Error::InvalidJob(format!("unsupported schema {s:?}; expected {SCHEMA_TAG:?}")));
            }
        }
        let k = self.kind;
        match k {
            JobKind::Field => {
                need(&self.hamiltonian, "hamiltonian", k)?;
            }
            JobKind::Loewner => {
                need(&self.hamiltonian, "hamiltonian", k)?;
                if *need(&self.n, "n", k)? < 1 {
                    return Err(Error::InvalidJob("n must be at least 1".into()));
                }
            }
            JobKind::Riemannian => {
                need(&self.hamiltonian, "hamiltonian", k)?;
                need(&self.gfac, "gfac", k)?;
            }
            JobKind::Map => {
                need(&self.map, "map", k)?;
            }
            JobKind::Flow => {
                need(&self.hamiltonian, "hamiltonian", k)?;
                if need(&self.eps, "eps", k)?.is_empty() {
                    return Err(Error::InvalidJob("eps must list at least one time".into()));
                }
            }
            JobKind::Sphere => {
                need(&self.support, "support", k)?;
            }
            JobKind::Verify => {}
        }
        if matches!(k, JobKind::Field | JobKind::Loewner | JobKind::Riemannian | JobKind::Map | JobKind::Flow) {
            need(&self.domain, "domain", k)?;
        }
        for (name, v) in [("resolution", self.resolution), ("floor", self.floor), ("tolerance", self.tolerance)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidJob(format!("{name} must be positive")));
                }
            }
        }
        Ok(())
    }
}
