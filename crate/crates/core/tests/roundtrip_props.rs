//! Property checks of the reader/writer pair over generated documents.

use proptest::prelude::*;
use xsamskit::model::*;
use xsamskit::{canonical_digest, io};

/// Text that may appear in element content: anything printable, including
/// the characters the writer must escape. Carriage returns are excluded;
/// XML readers fold them into newlines.
fn arb_text() -> impl Strategy<Value = String> {
    "[ -~]{0,40}".prop_map(|s| s.replace('\r', " "))
}

/// Identifier-ish text for attributes.
fn arb_id(prefix: &'static str) -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9_-]{0,12}".prop_map(move |s| format!("{prefix}-{s}"))
}

fn arb_source() -> impl Strategy<Value = Source> {
    (
        arb_id("B"),
        prop::sample::select(vec!["journal", "database", "proceedings"]),
        1800..2100i32,
        prop::collection::vec(arb_text(), 0..3),
        prop::option::of(arb_text()),
        prop::option::of(arb_text()),
    )
        .prop_map(|(source_id, category, year, authors, title, comments)| Source {
            source_id,
            category: category.to_string(),
            source_name: None,
            year,
            authors,
            title,
            volume: None,
            page_begin: None,
            page_end: None,
            uri: None,
            doi: None,
            production_date: None,
            comments,
        })
}

fn arb_origin() -> impl Strategy<Value = Origin> {
    (
        arb_id("VER"),
        arb_text(),
        prop::option::of(arb_text()),
        prop::collection::vec(arb_id("REF"), 0..4),
    )
        .prop_map(|(version_id, name, comments, refs)| {
            let mut version = Version::new(
                version_id,
                Timestamp::new("2015-09-01T08:10:12+01:00"),
            );
            version.source_refs = refs;
            Origin {
                kind: OriginKind::Node,
                timestamp: Timestamp::new("2015-12-03T14:40:21+01:00"),
                versions: vec![version],
                homepage_url: "http://example.org".into(),
                name,
                comments,
                query: Some("select * where ((A >= 1.5E3)) AND ((B = 'x & y'))".into()),
                origin_identifier: Some("ivo://example/node".into()),
                sub_origins: Vec::new(),
            }
        })
}

fn arb_document() -> impl Strategy<Value = XsamsDocument> {
    (
        prop::collection::vec(arb_origin(), 0..3),
        prop::collection::vec(arb_source(), 0..4),
        prop::option::of(arb_text()),
    )
        .prop_map(|(origins, sources, comments)| {
            let mut doc = XsamsDocument::new();
            doc.origins = origins;
            doc.sources = sources;
            doc.comments = comments;
            doc
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Writing and re-reading any document this model can hold is the
    /// identity, and the writer is deterministic.
    #[test]
    fn write_read_identity(doc in arb_document()) {
        let written = io::serialize(&doc);
        let (read_back, _) = io::parse(&written)
            .map_err(|e| TestCaseError::fail(format!("{e}\n{}", String::from_utf8_lossy(&written))))?;
        prop_assert_eq!(&read_back, &doc);
        prop_assert_eq!(io::serialize(&read_back), written);
    }

    /// The canonical digest never depends on extraction timestamps.
    #[test]
    fn digest_independent_of_extraction_time(doc in arb_document(), shift in 0u32..9) {
        let mut edited = doc.clone();
        for origin in &mut edited.origins {
            origin.timestamp = Timestamp::new(format!("201{shift}-01-02T03:04:05+00:00"));
        }
        prop_assert_eq!(canonical_digest(&edited), canonical_digest(&doc));
    }
}
