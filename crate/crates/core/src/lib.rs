//! Pattern-first ontology scaffolding.
//!
//! Flat knowledge sources (name lists, disease tables, per-paper term files)
//! are expanded through parameterized axiom patterns into an OWL 2 ontology
//! that can be regenerated from source at any time. See the `ontoforge`
//! binary for the command-line entry point.

pub mod cli;
pub mod expr;
pub mod ingest;
pub mod owl;
pub mod patterns;
pub mod pipeline;
pub mod registry;
pub mod serialize;

pub use expr::{Frame, OntologyBuilder};
pub use owl::{Axiom, ClassExpression, EntityRef, Ontology};
pub use pipeline::{build, BuildOptions, BuildOutput};
