//! Numerical laboratory for conformal points.
//!
//! Build differentiable fields from small expressions, turn them into
//! conformal-defect and Loewner vector fields, and certify their zeros by
//! topological degree.

pub mod error;
pub mod expr;
pub mod fields;
pub mod domain;
pub mod index;
pub mod flow;
pub mod symplecto;
pub mod sphere;
pub mod cli;

pub use error::{Error, Result};

/// A point of the plane.
pub type Point = [f64; 2];

/// Row-major 2×2 matrix.
pub type Mat2 = [[f64; 2]; 2];

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/expressions.md")]
    mod expressions {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/degree.md")]
    mod degree {}
    #[doc = include_str!("../../../book/src/collar.md")]
    mod collar {}
    #[doc = include_str!("../../../book/src/maps.md")]
    mod maps {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/sphere.md")]
    mod sphere {}
    #[doc = include_str!("../../../book/src/jobs.md")]
    mod jobs {}
}
