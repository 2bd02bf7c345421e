//! Domain types for provenance-extended XSAMS documents.
//!
//! Identifiers live in one flat, document-wide namespace: the exclusivity
//! checks on `Version` membership need a single view of every declared id.
//! Numeric data that must survive a write/read cycle byte-for-byte is kept
//! as the original text.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, FixedOffset};

use crate::xml::XmlElement;

/// An instant kept as its original text, offset included. Never normalized
/// to UTC; parsing is only done for ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timestamp(String);

impl Timestamp {
    pub fn new(text: impl Into<String>) -> Self {
        Timestamp(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Chronological value, when the text is a valid RFC 3339 instant.
    pub fn instant(&self) -> Option<DateTime<FixedOffset>> {
        DateTime::parse_from_rfc3339(self.0.trim()).ok()
    }

    /// Calendar-date part (`YYYY-MM-DD`) of the instant text.
    pub fn date_part(&self) -> &str {
        let t = self.0.trim();
        match t.find('T') {
            Some(i) => &t[..i],
            None => t,
        }
    }

    /// Year of the instant, when parseable from the leading digits.
    pub fn year(&self) -> Option<i32> {
        self.0.trim().get(..4)?.parse().ok()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which concrete origin type produced a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginKind {
    /// A federated data node; carries the extraction query.
    Node,
    /// A processing tool consuming other origins' output.
    Processor,
    /// Anything else.
    Other,
}

impl OriginKind {
    pub fn xsi_type(self) -> &'static str {
        match self {
            OriginKind::Node => "VamdcNodeOriginType",
            OriginKind::Processor => "VamdcProcessorOriginType",
            OriginKind::Other => "OtherOriginType",
        }
    }

    pub fn from_xsi_type(value: &str) -> Option<Self> {
        // Accept a namespace prefix on the type name.
        let local = value.split(':').next_back().unwrap_or(value);
        match local {
            "VamdcNodeOriginType" => Some(OriginKind::Node),
            "VamdcProcessorOriginType" => Some(OriginKind::Processor),
            "OtherOriginType" => Some(OriginKind::Other),
            _ => None,
        }
    }
}

/// Provenance tree node. The timestamp is the extraction time: when the data
/// left the producing resource, as opposed to the publication timestamps on
/// the contained versions.
#[derive(Debug, Clone, PartialEq)]
pub struct Origin {
    pub kind: OriginKind,
    pub timestamp: Timestamp,
    pub versions: Vec<Version>,
    pub homepage_url: String,
    pub name: String,
    pub comments: Option<String>,
    /// Extraction query; required for `Node`, disallowed otherwise.
    pub query: Option<String>,
    /// Registry identifier; required for `Node` and `Processor`.
    pub origin_identifier: Option<String>,
    pub sub_origins: Vec<Origin>,
}

impl Origin {
    /// Label used when reporting findings about this origin.
    pub fn subject(&self) -> &str {
        self.origin_identifier.as_deref().unwrap_or(&self.name)
    }

    /// Depth of the origin tree rooted here; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self
            .sub_origins
            .iter()
            .map(Origin::depth)
            .max()
            .unwrap_or(0)
    }

    pub fn walk<'a>(&'a self, visit: &mut dyn FnMut(&'a Origin)) {
        visit(self);
        for sub in &self.sub_origins {
            sub.walk(visit);
        }
    }
}

/// A dated release of a data resource and the identifiers belonging to it.
/// The timestamp is the publication time: when that version of the data was
/// made available by the resource.
#[derive(Debug, Clone, PartialEq)]
pub struct Version {
    pub version_id: String,
    pub global: bool,
    pub timestamp: Timestamp,
    pub species_refs: Vec<String>,
    pub state_refs: Vec<String>,
    pub process_refs: Vec<String>,
    pub source_refs: Vec<String>,
}

impl Version {
    pub fn new(version_id: impl Into<String>, timestamp: Timestamp) -> Self {
        Version {
            version_id: version_id.into(),
            global: false,
            timestamp,
            species_refs: Vec::new(),
            state_refs: Vec::new(),
            process_refs: Vec::new(),
            source_refs: Vec::new(),
        }
    }

    pub fn member_refs(&self) -> impl Iterator<Item = &String> {
        self.species_refs
            .iter()
            .chain(&self.state_refs)
            .chain(&self.process_refs)
            .chain(&self.source_refs)
    }

    pub fn is_empty(&self) -> bool {
        self.member_refs().next().is_none()
    }
}

/// Bibliographic source entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub source_id: String,
    pub category: String,
    pub source_name: Option<String>,
    pub year: i32,
    pub authors: Vec<String>,
    pub title: Option<String>,
    pub volume: Option<String>,
    pub page_begin: Option<String>,
    pub page_end: Option<String>,
    pub uri: Option<String>,
    pub doi: Option<String>,
    pub production_date: Option<String>,
    pub comments: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSpecies {
    pub species_id: String,
    pub element_symbol: String,
    pub nuclear_charge: i32,
    pub mass_number: i32,
    pub mass_value: String,
    pub mass_units: String,
    pub ion_charge: i32,
    pub inchikey: String,
    pub states: Vec<AtomicState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicState {
    pub state_id: String,
    pub comments: Option<String>,
    pub source_refs: Vec<String>,
    pub energy_value: String,
    pub energy_units: String,
    pub total_angular_momentum: Option<String>,
    /// Subtrees outside the modeled fields (e.g. AtomicComposition), written
    /// back unchanged.
    pub extra: Vec<XmlElement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionFunction {
    pub t_units: String,
    pub t_values: String,
    pub q_values: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeSpecies {
    pub species_id: String,
    pub ordinary_formula: String,
    pub stoichiometric_formula: String,
    pub chemical_name: String,
    pub inchi: String,
    pub inchikey: String,
    pub vamdc_species_id: String,
    /// Chemical structure markup, written back unchanged.
    pub structure: Option<XmlElement>,
    pub partition_function: Option<PartitionFunction>,
    pub molecular_weight: String,
    pub molecular_weight_units: String,
    pub comment: Option<String>,
    /// Other unmodeled children of the chemical-species block.
    pub extra: Vec<XmlElement>,
    pub states: Vec<MolecularState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MolecularState {
    pub state_id: String,
    pub auxiliary: bool,
    pub source_refs: Vec<String>,
    pub description: Option<String>,
    pub energy_value: String,
    pub energy_units: String,
    pub energy_origin_ref: Option<String>,
    pub total_statistical_weight: Option<i64>,
    pub nuclear_statistical_weight: Option<i64>,
    pub case_id: String,
    /// Attributes of the Case element as written (type, local namespaces).
    pub case_attrs: Vec<(String, String)>,
    /// Prefix used for the quantum-number elements, e.g. `dcs`.
    pub qn_prefix: String,
    /// Quantum numbers in document order, keyed by local name.
    pub quantum_numbers: Vec<(String, String)>,
}

impl MolecularState {
    pub fn quantum_number(&self, name: &str) -> Option<&str> {
        self.quantum_numbers
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiativeTransition {
    pub id: String,
    pub process_kind: String,
    pub source_refs: Vec<String>,
    pub frequency_value: String,
    pub frequency_units: String,
    pub frequency_accuracy: Option<String>,
    pub upper_state_ref: String,
    pub lower_state_ref: String,
    pub species_ref: String,
    pub probability_a_value: Option<(String, String)>,
    pub idealised_intensity: Option<(String, String)>,
    pub multipole: Option<String>,
    pub process_class_code: String,
}

/// One (species, state) pair on either side of a collision.
#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub species_ref: String,
    pub state_ref: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDataset {
    pub description: String,
    pub comments: Option<String>,
    pub x_units: String,
    pub x_values: String,
    pub y_units: String,
    pub y_values: String,
}

impl TabulatedDataset {
    pub fn x_len(&self) -> usize {
        self.x_values.split_whitespace().count()
    }

    pub fn y_len(&self) -> usize {
        self.y_values.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionalTransition {
    pub id: String,
    pub comments: Option<String>,
    pub source_refs: Vec<String>,
    pub process_class_code: String,
    pub reactants: Vec<Participant>,
    pub products: Vec<Participant>,
    pub datasets: Vec<TabulatedDataset>,
}

/// Root container for one XSAMS document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct XsamsDocument {
    /// Root-element attributes (namespace declarations, schema location) as
    /// written in the input, or the canonical set for built documents.
    pub root_attrs: Vec<(String, String)>,
    pub origins: Vec<Origin>,
    pub atoms: Vec<AtomSpecies>,
    pub molecules: Vec<MoleculeSpecies>,
    pub radiative: Vec<RadiativeTransition>,
    pub collisions: Vec<CollisionalTransition>,
    pub sources: Vec<Source>,
    pub comments: Option<String>,
    /// Unmodeled children of the root, written back unchanged.
    pub extra: Vec<XmlElement>,
}

pub const XSAMS_NAMESPACE: &str = "http://vamdc.org/xml/xsams/1.0";

/// Namespace declarations used when a document is built in memory rather
/// than parsed from a file.
pub fn canonical_root_attrs() -> Vec<(String, String)> {
    vec![
        ("xmlns".into(), XSAMS_NAMESPACE.into()),
        ("xmlns:cml".into(), "http://www.xml-cml.org/schema".into()),
        (
            "xmlns:dcs".into(),
            "http://vamdc.org/xml/xsams/1.0/cases/dcs".into(),
        ),
        (
            "xmlns:xsi".into(),
            "http://www.w3.org/2001/XMLSchema-instance".into(),
        ),
    ]
}

impl XsamsDocument {
    pub fn new() -> Self {
        XsamsDocument {
            root_attrs: canonical_root_attrs(),
            ..Default::default()
        }
    }

    /// All origins in the document, in depth-first order.
    pub fn all_origins(&self) -> Vec<&Origin> {
        let mut out = Vec::new();
        for origin in &self.origins {
            origin.walk(&mut |o| out.push(o));
        }
        out
    }

    /// All versions in the document, in origin-tree order.
    pub fn all_versions(&self) -> Vec<&Version> {
        self.all_origins()
            .into_iter()
            .flat_map(|o| o.versions.iter())
            .collect()
    }

    pub fn molecule(&self, species_id: &str) -> Option<&MoleculeSpecies> {
        self.molecules.iter().find(|m| m.species_id == species_id)
    }
}

// ---------------------------------------------------------------------------
// Identifier operations
// ---------------------------------------------------------------------------

/// What a document-wide identifier names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Species,
    State,
    Process,
    Source,
    Version,
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ElementKind::Species => "species",
            ElementKind::State => "state",
            ElementKind::Process => "process",
            ElementKind::Source => "source",
            ElementKind::Version => "version",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("identifier {id} declared more than once ({kinds})")]
    DuplicateIdentifier { id: String, kinds: String },
    #[error("reference {id} does not resolve to a declared identifier")]
    UnresolvedReference { id: String },
    #[error("identifier {id} claimed by more than one version ({version_ids:?})")]
    MultipleVersionMembership {
        id: String,
        version_ids: Vec<String>,
    },
}

/// Every identifier declared by the document, mapped to what it names.
/// A re-declared identifier is an error regardless of element kind.
pub fn collect_identifiers(
    doc: &XsamsDocument,
) -> Result<BTreeMap<String, ElementKind>, ModelError> {
    let mut map = BTreeMap::new();
    let mut insert = |id: &str, kind: ElementKind| -> Result<(), ModelError> {
        match map.insert(id.to_string(), kind) {
            None => Ok(()),
            Some(previous) => Err(ModelError::DuplicateIdentifier {
                id: id.to_string(),
                kinds: format!("{previous}, {kind}"),
            }),
        }
    };

    for atom in &doc.atoms {
        insert(&atom.species_id, ElementKind::Species)?;
        for state in &atom.states {
            insert(&state.state_id, ElementKind::State)?;
        }
    }
    for molecule in &doc.molecules {
        insert(&molecule.species_id, ElementKind::Species)?;
        for state in &molecule.states {
            insert(&state.state_id, ElementKind::State)?;
        }
    }
    for transition in &doc.radiative {
        insert(&transition.id, ElementKind::Process)?;
    }
    for collision in &doc.collisions {
        insert(&collision.id, ElementKind::Process)?;
    }
    for source in &doc.sources {
        insert(&source.source_id, ElementKind::Source)?;
    }
    for version in doc.all_versions() {
        insert(&version.version_id, ElementKind::Version)?;
    }
    Ok(map)
}

/// A borrowed view of whatever a document identifier names.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementRef<'a> {
    Atom(&'a AtomSpecies),
    Molecule(&'a MoleculeSpecies),
    AtomicState(&'a AtomSpecies, &'a AtomicState),
    MolecularState(&'a MoleculeSpecies, &'a MolecularState),
    Radiative(&'a RadiativeTransition),
    Collision(&'a CollisionalTransition),
    Source(&'a Source),
    Version(&'a Version),
}

/// Resolve an identifier to the element declaring it.
pub fn resolve_ref<'a>(doc: &'a XsamsDocument, id: &str) -> Result<ElementRef<'a>, ModelError> {
    for atom in &doc.atoms {
        if atom.species_id == id {
            return Ok(ElementRef::Atom(atom));
        }
        for state in &atom.states {
            if state.state_id == id {
                return Ok(ElementRef::AtomicState(atom, state));
            }
        }
    }
    for molecule in &doc.molecules {
        if molecule.species_id == id {
            return Ok(ElementRef::Molecule(molecule));
        }
        for state in &molecule.states {
            if state.state_id == id {
                return Ok(ElementRef::MolecularState(molecule, state));
            }
        }
    }
    for transition in &doc.radiative {
        if transition.id == id {
            return Ok(ElementRef::Radiative(transition));
        }
    }
    for collision in &doc.collisions {
        if collision.id == id {
            return Ok(ElementRef::Collision(collision));
        }
    }
    for source in &doc.sources {
        if source.source_id == id {
            return Ok(ElementRef::Source(source));
        }
    }
    for origin in self_and_nested(doc) {
        for version in &origin.versions {
            if version.version_id == id {
                return Ok(ElementRef::Version(version));
            }
        }
    }
    Err(ModelError::UnresolvedReference { id: id.to_string() })
}

fn self_and_nested(doc: &XsamsDocument) -> Vec<&Origin> {
    doc.all_origins()
}

/// Map every version-claimed identifier to the single version claiming it.
///
/// With a global version, every data identifier in the document belongs to
/// it implicitly.
pub fn version_membership(doc: &XsamsDocument) -> Result<BTreeMap<String, String>, ModelError> {
    let mut membership: BTreeMap<String, String> = BTreeMap::new();
    for origin in doc.all_origins() {
        for version in &origin.versions {
            for id in version.member_refs() {
                if let Some(existing) = membership.get(id) {
                    if existing != &version.version_id {
                        return Err(ModelError::MultipleVersionMembership {
                            id: id.clone(),
                            version_ids: vec![existing.clone(), version.version_id.clone()],
                        });
                    }
                    // The same version listing an id twice is harmless here.
                    continue;
                }
                membership.insert(id.clone(), version.version_id.clone());
            }
        }
    }

    if let Some(global) = doc
        .all_versions()
        .into_iter()
        .find(|v| v.global)
    {
        if let Ok(ids) = collect_identifiers(doc) {
            for (id, kind) in ids {
                if kind != ElementKind::Version {
                    membership.entry(id).or_insert_with(|| global.version_id.clone());
                }
            }
        }
    }
    Ok(membership)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_doc() -> XsamsDocument {
        let mut doc = XsamsDocument::new();
        doc.sources.push(Source {
            source_id: "S1".into(),
            category: "journal".into(),
            source_name: None,
            year: 2001,
            authors: vec!["A. Author".into()],
            title: None,
            volume: None,
            page_begin: None,
            page_end: None,
            uri: None,
            doi: None,
            production_date: None,
            comments: None,
        });
        let mut version = Version::new("V1", Timestamp::new("2015-01-01T00:00:00+00:00"));
        version.source_refs.push("S1".into());
        doc.origins.push(Origin {
            kind: OriginKind::Node,
            timestamp: Timestamp::new("2015-12-03T14:40:21+01:00"),
            versions: vec![version],
            homepage_url: "http://example.org".into(),
            name: "Example".into(),
            comments: None,
            query: Some("select * where ((A = 'x'))".into()),
            origin_identifier: Some("ivo://example/node".into()),
            sub_origins: Vec::new(),
        });
        doc
    }

    #[test]
    fn empty_document_has_no_identifiers() {
        let ids = collect_identifiers(&XsamsDocument::new()).unwrap();
        assert!(ids.is_empty());
    }

    #[test]
    fn duplicate_identifier_is_reported() {
        let mut doc = toy_doc();
        let duplicate = doc.sources[0].clone();
        doc.sources.push(duplicate);
        match collect_identifiers(&doc) {
            Err(ModelError::DuplicateIdentifier { id, .. }) => assert_eq!(id, "S1"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn resolve_unknown_fails() {
        let doc = toy_doc();
        assert!(matches!(
            resolve_ref(&doc, "NOPE"),
            Err(ModelError::UnresolvedReference { .. })
        ));
        assert!(matches!(
            resolve_ref(&doc, "S1"),
            Ok(ElementRef::Source(_))
        ));
        assert!(matches!(
            resolve_ref(&doc, "V1"),
            Ok(ElementRef::Version(_))
        ));
    }

    #[test]
    fn membership_conflict_detected() {
        let mut doc = toy_doc();
        let mut second = Version::new("V2", Timestamp::new("2016-01-01T00:00:00+00:00"));
        second.source_refs.push("S1".into());
        doc.origins[0].versions.push(second);
        match version_membership(&doc) {
            Err(ModelError::MultipleVersionMembership { id, version_ids }) => {
                assert_eq!(id, "S1");
                assert_eq!(version_ids, vec!["V1".to_string(), "V2".to_string()]);
            }
            other => panic!("expected membership error, got {other:?}"),
        }
    }

    #[test]
    fn global_version_claims_everything() {
        let mut doc = toy_doc();
        doc.origins[0].versions[0].source_refs.clear();
        doc.origins[0].versions[0].global = true;
        let membership = version_membership(&doc).unwrap();
        assert_eq!(membership.get("S1").map(String::as_str), Some("V1"));
    }

    #[test]
    fn timestamp_ordering_uses_offset() {
        let a = Timestamp::new("2015-09-01T08:10:12+01:00");
        let b = Timestamp::new("2015-09-01T08:10:12+02:00");
        assert!(a.instant().unwrap() > b.instant().unwrap());
        assert_eq!(a.date_part(), "2015-09-01");
        assert_eq!(a.year(), Some(2015));
    }
}
