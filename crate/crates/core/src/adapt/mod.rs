//! Transfer learners that combine a target's few samples with models trained
//! on other subjects.

pub mod hl2l;
pub mod ma;
pub mod mkal;
pub mod sources;

pub use sources::{source_scores, SourceScores};
