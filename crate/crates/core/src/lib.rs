//! Provenance-aware toolkit for federated atomic and molecular datasets.
//!
//! The crate models XSAMS-style documents extended with origin and version
//! provenance, reads and writes their XML form, validates the provenance
//! rules, answers federation queries from a simulated node, cross-matches
//! and merges spectroscopic with collisional data, renders BibTeX for a
//! document's bibliography, and runs a query store that mints resolvable
//! identifiers for dataset extractions.

pub mod bibtex;
pub mod cli;
pub mod io;
pub mod merge;
pub mod model;
pub mod node;
pub mod query;
pub mod store;
pub mod validator;
pub mod xml;

pub use io::{canonical_digest, parse, serialize, ParseDiagnostics, ParseError};
pub use model::{
    collect_identifiers, resolve_ref, version_membership, ElementKind, ElementRef, ModelError,
    Origin, OriginKind, Timestamp, Version, XsamsDocument,
};
pub use query::{parse_query, render as render_query, QueryAst};
pub use validator::{explain, validate, RuleCode, ValidationReport};
