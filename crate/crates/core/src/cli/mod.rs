//! Batch front end: JSON jobs in, JSON reports, CSV samples and SVG plots out.

pub mod job;
pub mod output;
pub mod plot;
pub mod report;
pub mod run;
pub mod verify;

pub use job::{JobKind, JobSpec, Suite, SCHEMA_TAG};
pub use report::Report;
pub use run::{run, Outcome};

/// JSON schemas of the job and report documents.
pub fn schema_json() -> String {
    let doc = serde_json::json!({
        "schema": SCHEMA_TAG,
        "job": schemars::schema_for!(JobSpec),
        "report": schemars::schema_for!(Report),
    });
    serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n"
}
