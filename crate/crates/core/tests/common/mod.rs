//! Shared fixture helpers for the integration suites.
//!
//! Each suite uses its own slice of these helpers.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use xsamskit::model::{Origin, Version, XsamsDocument};

pub const COLLISION_QUERY: &str = "select * where ((target.MoleculeStoichiometricFormula = 'CO')) AND \n((collider.AtomSymbol = 'he'))";
pub const RADIATIVE_QUERY: &str = "select * where (RadTransWavelength >= 2.6006E7 AND RadTransWavelength <= 2.6008E7) AND ((MoleculeStoichiometricFormula = 'CO'))";

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn parse_fixture(name: &str) -> XsamsDocument {
    let (doc, _) = xsamskit::io::parse(&fixture_bytes(name))
        .unwrap_or_else(|e| panic!("fixture {name}: {e}"));
    doc
}

/// Member reference lists of a version as sets, for order-free comparison.
pub fn member_sets(version: &Version) -> [BTreeSet<String>; 4] {
    [
        version.species_refs.iter().cloned().collect(),
        version.state_refs.iter().cloned().collect(),
        version.process_refs.iter().cloned().collect(),
        version.source_refs.iter().cloned().collect(),
    ]
}

pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Compare two origins on every scalar field, query text up to whitespace,
/// and version membership as sets.
pub fn assert_origin_blocks_match(actual: &Origin, expected: &Origin, context: &str) {
    assert_eq!(actual.kind, expected.kind, "{context}: origin kind");
    assert_eq!(
        actual.timestamp.as_str(),
        expected.timestamp.as_str(),
        "{context}: extraction timestamp"
    );
    assert_eq!(actual.name, expected.name, "{context}: name");
    assert_eq!(
        actual.homepage_url, expected.homepage_url,
        "{context}: homepage"
    );
    assert_eq!(
        actual.origin_identifier, expected.origin_identifier,
        "{context}: origin identifier"
    );
    match (&actual.query, &expected.query) {
        (Some(a), Some(b)) => {
            assert_eq!(
                xsamskit::parse_query(a).unwrap(),
                xsamskit::parse_query(b).unwrap(),
                "{context}: query AST"
            );
        }
        (a, b) => assert_eq!(a, b, "{context}: query presence"),
    }
    assert_eq!(
        actual.versions.len(),
        expected.versions.len(),
        "{context}: version count"
    );
    for (av, ev) in actual.versions.iter().zip(&expected.versions) {
        assert_eq!(av.version_id, ev.version_id, "{context}: version id");
        assert_eq!(av.global, ev.global, "{context}: global flag");
        assert_eq!(
            av.timestamp.as_str(),
            ev.timestamp.as_str(),
            "{context}: version timestamp"
        );
        assert_eq!(
            member_sets(av),
            member_sets(ev),
            "{context}: version {} membership",
            av.version_id
        );
    }
}
