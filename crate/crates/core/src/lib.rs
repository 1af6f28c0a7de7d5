//! Query expansion for technology-scoped search.
//!
//! The pipeline: [`corpus`] ingests classified documents and normalizes
//! text; [`embedding`] trains skip-gram vectors (optionally with hashed
//! subwords) and answers nearest-neighbor queries; [`expansion`] suggests
//! related terms from the centroid of everything a user has selected;
//! [`crowd`] records expert votes and blends them with model output; and
//! [`eval`] scores any suggestion provider against gold synonym sets.

pub mod corpus;
pub mod crowd;
pub mod embedding;
pub mod eval;
pub mod expansion;
pub mod fixtures;
pub mod scope;

pub use scope::{Scope, UnitCode};
