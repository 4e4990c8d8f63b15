//! Metadata catalog and chat access for human-robot interaction datasets.
//!
//! Records are harvested from a Dataverse-style repository, mapped onto a
//! hierarchical data model and stored in a property graph. The graph backs
//! structured queries (which datasets use X, compare A and B, locate files),
//! a retrieval-augmented chat service and FAIR audits. [`eval`] fits the
//! Bayesian model used to normalize expert ratings of chat answers.

pub mod catalog;
pub mod datamodel;
pub mod eval;
pub mod graph;
pub mod harvester;
pub mod report;
pub mod retrieval;
pub mod service;
pub mod text;
