//! Relation embedding chains for multiple-choice word analogies.
//!
//! The relation between two words `a`, `b` is described both by a direct
//! relation embedding `r_ab` and by the chains `a → x → b` through
//! intermediate concepts in a concept graph. Chains are either matched
//! directly or condensed into a single predicted embedding; a logistic
//! informativeness score decides, per question, whether the direct embedding
//! can be trusted.

pub mod check;
pub mod concept;
pub mod concept_graph;
pub mod condenser;
pub mod config;
pub mod embedding_store;
pub mod error;
pub mod harness;
pub mod informativeness;
pub mod solver;
pub mod synth;

pub use concept::Concept;
pub use error::{Error, Result};
