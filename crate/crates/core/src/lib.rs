//! Detection and scoring of gaps in machine-generated legal analysis.
//!
//! * [`taxonomy`]: gap categories and the label algebra.
//! * [`corpus`]: records, annotations and dataset statistics.
//! * [`citescreen`]: citation extraction and heuristic screening.
//! * [`metrics`]: per-example and corpus-level scores, error analysis, ROUGE.
//! * [`detector`]: prompts, chat gateway, response parsing and ablations.

pub mod citescreen;
pub mod corpus;
pub mod detector;
pub mod metrics;
pub mod taxonomy;

pub use taxonomy::{GapLabelSet, Label};
