//! Growing analytic seed metrics into Einstein bulks, one codimension at a
//! time, and gluing the results over finite product atlases.
//!
//! Every analytic function is carried as a truncated Taylor series
//! ([`jet::Jet`]); curvature is computed on those series and every claim
//! the pipeline makes is re-checked from the finished metric.

pub mod bell;
pub mod embed;
pub mod expr;
pub mod geometry;
pub mod glue;
pub mod homotopy;
pub mod jet;
