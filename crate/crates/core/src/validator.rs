//! Provenance rule checks over a parsed document.
//!
//! Structural violations are errors; a document is valid iff the error list
//! is empty. Findings that flag suspicious but legal content (orphaned
//! elements, inverted timestamps, uncited sources) are warnings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::*;

/// Stable code naming the rule a finding comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RuleCode {
    // Errors
    DataListLengthMismatch,
    DuplicateIdentifier,
    DuplicateQuantumNumber,
    GlobalVersionWithExplicitRefs,
    GlobalVersionWithMultipleOrigins,
    MultipleVersionMembership,
    NodeOriginMissingQuery,
    NodeOriginWithSubOrigins,
    OriginMissingIdentifier,
    ProcessorOriginWithoutSubOrigins,
    StateSpeciesMismatch,
    UnexpectedQuery,
    UnresolvedReference,
    // Warnings
    InvalidTimestamp,
    SourceWithoutAuthorsOrComments,
    UnreferencedSource,
    VersionOrphanedElement,
    VersionTimestampAfterExtraction,
}

impl fmt::Display for RuleCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub code: RuleCode,
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error_codes(&self) -> Vec<RuleCode> {
        self.errors.iter().map(|f| f.code).collect()
    }

    pub fn warning_codes(&self) -> Vec<RuleCode> {
        self.warnings.iter().map(|f| f.code).collect()
    }

    fn error(&mut self, code: RuleCode, subject: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Finding {
            code,
            subject: subject.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, code: RuleCode, subject: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Finding {
            code,
            subject: subject.into(),
            message: message.into(),
        });
    }
}

/// Check every provenance rule and collect the findings. Pure: the same
/// document always yields the same report.
pub fn validate(doc: &XsamsDocument) -> ValidationReport {
    let mut report = ValidationReport::default();

    let identifiers = collect_declared(doc, &mut report);
    check_origins(doc, &mut report);
    check_versions(doc, &identifiers, &mut report);
    check_references(doc, &identifiers, &mut report);
    check_state_species_consistency(doc, &mut report);
    check_sources(doc, &mut report);
    check_tabulated_data(doc, &mut report);

    report.errors.sort_by(|a, b| {
        (a.code, a.subject.as_str()).cmp(&(b.code, b.subject.as_str()))
    });
    report.warnings.sort_by(|a, b| {
        (a.code, a.subject.as_str()).cmp(&(b.code, b.subject.as_str()))
    });
    report
}

/// Human-readable rendering, one finding per line, errors first, stable order.
pub fn explain(report: &ValidationReport) -> String {
    if report.errors.is_empty() && report.warnings.is_empty() {
        return "OK: 0 errors, 0 warnings".to_string();
    }
    let mut out = String::new();
    for finding in &report.errors {
        out.push_str(&format!(
            "ERROR {} {}: {}\n",
            finding.code, finding.subject, finding.message
        ));
    }
    for finding in &report.warnings {
        out.push_str(&format!(
            "WARN {} {}: {}\n",
            finding.code, finding.subject, finding.message
        ));
    }
    out.pop();
    out
}

/// Declared identifiers with duplicates reported, first declaration wins.
fn collect_declared(doc: &XsamsDocument, report: &mut ValidationReport) -> BTreeMap<String, ElementKind> {
    let mut map: BTreeMap<String, ElementKind> = BTreeMap::new();
    let mut declare = |id: &str, kind: ElementKind, report: &mut ValidationReport| {
        if let Some(existing) = map.get(id) {
            report.error(
                RuleCode::DuplicateIdentifier,
                id,
                format!("declared as both {existing} and {kind}"),
            );
        } else {
            map.insert(id.to_string(), kind);
        }
    };

    for atom in &doc.atoms {
        declare(&atom.species_id, ElementKind::Species, report);
        for state in &atom.states {
            declare(&state.state_id, ElementKind::State, report);
        }
    }
    for molecule in &doc.molecules {
        declare(&molecule.species_id, ElementKind::Species, report);
        for state in &molecule.states {
            declare(&state.state_id, ElementKind::State, report);
        }
    }
    for t in &doc.radiative {
        declare(&t.id, ElementKind::Process, report);
    }
    for c in &doc.collisions {
        declare(&c.id, ElementKind::Process, report);
    }
    for s in &doc.sources {
        declare(&s.source_id, ElementKind::Source, report);
    }
    for v in doc.all_versions() {
        declare(&v.version_id, ElementKind::Version, report);
    }
    map
}

fn check_origins(doc: &XsamsDocument, report: &mut ValidationReport) {
    for origin in doc.all_origins() {
        let subject = origin.subject().to_string();
        match origin.kind {
            OriginKind::Node => {
                if origin.query.as_deref().is_none_or(|q| q.trim().is_empty()) {
                    report.error(
                        RuleCode::NodeOriginMissingQuery,
                        &subject,
                        "node origin carries no extraction query",
                    );
                }
                if origin.origin_identifier.is_none() {
                    report.error(
                        RuleCode::OriginMissingIdentifier,
                        &subject,
                        "node origin carries no registry identifier",
                    );
                }
                if !origin.sub_origins.is_empty() {
                    report.error(
                        RuleCode::NodeOriginWithSubOrigins,
                        &subject,
                        format!(
                            "node origin nests {} sub-origins",
                            origin.sub_origins.len()
                        ),
                    );
                }
            }
            OriginKind::Processor => {
                if origin.origin_identifier.is_none() {
                    report.error(
                        RuleCode::OriginMissingIdentifier,
                        &subject,
                        "processor origin carries no registry identifier",
                    );
                }
                if origin.sub_origins.is_empty() {
                    report.error(
                        RuleCode::ProcessorOriginWithoutSubOrigins,
                        &subject,
                        "processor origin lists no input origins",
                    );
                }
                if origin.query.is_some() {
                    report.error(
                        RuleCode::UnexpectedQuery,
                        &subject,
                        "processor origin carries a query",
                    );
                }
            }
            OriginKind::Other => {
                if origin.query.is_some() {
                    report.error(
                        RuleCode::UnexpectedQuery,
                        &subject,
                        "other-kind origin carries a query",
                    );
                }
            }
        }

        let extraction = origin.timestamp.instant();
        if extraction.is_none() {
            report.warning(
                RuleCode::InvalidTimestamp,
                &subject,
                format!("extraction timestamp {:?} is not an instant", origin.timestamp.as_str()),
            );
        }
        for version in &origin.versions {
            match (version.timestamp.instant(), extraction) {
                (Some(published), Some(extracted)) => {
                    // Data must exist before it can be extracted; the reverse
                    // ordering is suspicious but not forbidden.
                    if published > extracted {
                        report.warning(
                            RuleCode::VersionTimestampAfterExtraction,
                            &version.version_id,
                            format!(
                                "published {} after extraction {}",
                                version.timestamp, origin.timestamp
                            ),
                        );
                    }
                }
                (None, _) => {
                    report.warning(
                        RuleCode::InvalidTimestamp,
                        &version.version_id,
                        format!(
                            "publication timestamp {:?} is not an instant",
                            version.timestamp.as_str()
                        ),
                    );
                }
                _ => {}
            }
        }
    }
}

fn check_versions(
    doc: &XsamsDocument,
    identifiers: &BTreeMap<String, ElementKind>,
    report: &mut ValidationReport,
) {
    let origin_count = doc.all_origins().len();
    let versions = doc.all_versions();

    for version in &versions {
        if version.global {
            if origin_count > 1 {
                report.error(
                    RuleCode::GlobalVersionWithMultipleOrigins,
                    &version.version_id,
                    format!("global version in a document with {origin_count} origins"),
                );
            }
            if !version.is_empty() {
                report.error(
                    RuleCode::GlobalVersionWithExplicitRefs,
                    &version.version_id,
                    "global version lists explicit member references",
                );
            }
        }
    }

    // Exclusivity: an identifier belongs to at most one version.
    let mut claims: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for version in &versions {
        for id in version.member_refs() {
            let owners = claims.entry(id.as_str()).or_default();
            if !owners.contains(&version.version_id.as_str()) {
                owners.push(&version.version_id);
            }
        }
    }
    for (id, owners) in &claims {
        if owners.len() > 1 {
            report.error(
                RuleCode::MultipleVersionMembership,
                *id,
                format!("claimed by versions {}", owners.join(", ")),
            );
        }
    }

    // Orphans: only meaningful when no global version sweeps everything up.
    if !versions.iter().any(|v| v.global) && !versions.is_empty() {
        for (id, kind) in identifiers {
            if *kind != ElementKind::Version && !claims.contains_key(id.as_str()) {
                report.warning(
                    RuleCode::VersionOrphanedElement,
                    id,
                    format!("{kind} belongs to no version"),
                );
            }
        }
    }
}

fn check_references(
    doc: &XsamsDocument,
    identifiers: &BTreeMap<String, ElementKind>,
    report: &mut ValidationReport,
) {
    let require = |id: &str, expected: ElementKind, context: &str, report: &mut ValidationReport| {
        match identifiers.get(id) {
            Some(kind) if *kind == expected => {}
            Some(kind) => report.error(
                RuleCode::UnresolvedReference,
                id,
                format!("{context} expects a {expected} but {id} names a {kind}"),
            ),
            None => report.error(
                RuleCode::UnresolvedReference,
                id,
                format!("{context} references undeclared identifier"),
            ),
        }
    };

    for origin in doc.all_origins() {
        for version in &origin.versions {
            let context = format!("version {}", version.version_id);
            for id in &version.species_refs {
                require(id, ElementKind::Species, &context, report);
            }
            for id in &version.state_refs {
                require(id, ElementKind::State, &context, report);
            }
            for id in &version.process_refs {
                require(id, ElementKind::Process, &context, report);
            }
            for id in &version.source_refs {
                require(id, ElementKind::Source, &context, report);
            }
        }
    }
    for atom in &doc.atoms {
        for state in &atom.states {
            for id in &state.source_refs {
                require(id, ElementKind::Source, &format!("state {}", state.state_id), report);
            }
        }
    }
    for molecule in &doc.molecules {
        for state in &molecule.states {
            for id in &state.source_refs {
                require(id, ElementKind::Source, &format!("state {}", state.state_id), report);
            }
        }
    }
    for t in &doc.radiative {
        let context = format!("process {}", t.id);
        for id in &t.source_refs {
            require(id, ElementKind::Source, &context, report);
        }
        require(&t.species_ref, ElementKind::Species, &context, report);
        require(&t.upper_state_ref, ElementKind::State, &context, report);
        require(&t.lower_state_ref, ElementKind::State, &context, report);
    }
    for c in &doc.collisions {
        let context = format!("process {}", c.id);
        for id in &c.source_refs {
            require(id, ElementKind::Source, &context, report);
        }
        for p in c.reactants.iter().chain(&c.products) {
            require(&p.species_ref, ElementKind::Species, &context, report);
            require(&p.state_ref, ElementKind::State, &context, report);
        }
    }
}

fn check_state_species_consistency(doc: &XsamsDocument, report: &mut ValidationReport) {
    let mut states_of: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for atom in &doc.atoms {
        let entry = states_of.entry(atom.species_id.as_str()).or_default();
        for state in &atom.states {
            entry.insert(&state.state_id);
        }
    }
    for molecule in &doc.molecules {
        let entry = states_of.entry(molecule.species_id.as_str()).or_default();
        for state in &molecule.states {
            entry.insert(&state.state_id);
        }
    }

    let check_pair = |species: &str, state: &str, context: &str, report: &mut ValidationReport| {
        if let Some(states) = states_of.get(species) {
            if !states.contains(state) {
                report.error(
                    RuleCode::StateSpeciesMismatch,
                    state,
                    format!("{context}: state does not belong to species {species}"),
                );
            }
        }
    };

    for t in &doc.radiative {
        let context = format!("process {}", t.id);
        check_pair(&t.species_ref, &t.upper_state_ref, &context, report);
        check_pair(&t.species_ref, &t.lower_state_ref, &context, report);
    }
    for c in &doc.collisions {
        let context = format!("process {}", c.id);
        for p in c.reactants.iter().chain(&c.products) {
            check_pair(&p.species_ref, &p.state_ref, &context, report);
        }
    }
    // An energy origin must point into the same molecule.
    for molecule in &doc.molecules {
        let local: BTreeSet<&str> = molecule.states.iter().map(|s| s.state_id.as_str()).collect();
        for state in &molecule.states {
            if let Some(origin_ref) = &state.energy_origin_ref {
                if !local.contains(origin_ref.as_str()) {
                    report.error(
                        RuleCode::StateSpeciesMismatch,
                        &state.state_id,
                        format!(
                            "energy origin {origin_ref} is not a state of {}",
                            molecule.species_id
                        ),
                    );
                }
            }
        }
    }
}

fn check_tabulated_data(doc: &XsamsDocument, report: &mut ValidationReport) {
    for collision in &doc.collisions {
        for (index, dataset) in collision.datasets.iter().enumerate() {
            if dataset.x_len() != dataset.y_len() {
                report.error(
                    RuleCode::DataListLengthMismatch,
                    &collision.id,
                    format!(
                        "dataset {index} tabulates {} x values against {} y values",
                        dataset.x_len(),
                        dataset.y_len()
                    ),
                );
            }
        }
    }
    for molecule in &doc.molecules {
        if let Some(pf) = &molecule.partition_function {
            let t = pf.t_values.split_whitespace().count();
            let q = pf.q_values.split_whitespace().count();
            if t != q {
                report.error(
                    RuleCode::DataListLengthMismatch,
                    &molecule.species_id,
                    format!("partition function tabulates {t} temperatures against {q} values"),
                );
            }
        }
        for state in &molecule.states {
            let mut seen = BTreeSet::new();
            for (name, _) in &state.quantum_numbers {
                if !seen.insert(name.as_str()) {
                    report.error(
                        RuleCode::DuplicateQuantumNumber,
                        &state.state_id,
                        format!("quantum number {name} appears more than once"),
                    );
                }
            }
        }
    }
}

fn check_sources(doc: &XsamsDocument, report: &mut ValidationReport) {
    let mut cited: BTreeSet<&str> = BTreeSet::new();
    for atom in &doc.atoms {
        for state in &atom.states {
            cited.extend(state.source_refs.iter().map(String::as_str));
        }
    }
    for molecule in &doc.molecules {
        for state in &molecule.states {
            cited.extend(state.source_refs.iter().map(String::as_str));
        }
    }
    for t in &doc.radiative {
        cited.extend(t.source_refs.iter().map(String::as_str));
    }
    for c in &doc.collisions {
        cited.extend(c.source_refs.iter().map(String::as_str));
    }

    for source in &doc.sources {
        if source.authors.is_empty() && source.comments.is_none() {
            report.warning(
                RuleCode::SourceWithoutAuthorsOrComments,
                &source.source_id,
                "source lists no authors and has no comments",
            );
        }
        if !cited.contains(source.source_id.as_str()) {
            report.warning(
                RuleCode::UnreferencedSource,
                &source.source_id,
                "no state or process cites this source",
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node_origin() -> Origin {
        Origin {
            kind: OriginKind::Node,
            timestamp: Timestamp::new("2015-12-03T14:40:21+01:00"),
            versions: vec![Version::new(
                "V1",
                Timestamp::new("2015-09-01T08:10:12+01:00"),
            )],
            homepage_url: "http://example.org".into(),
            name: "Example".into(),
            comments: None,
            query: Some("select * where ((A = 'x'))".into()),
            origin_identifier: Some("ivo://example/node".into()),
            sub_origins: Vec::new(),
        }
    }

    #[test]
    fn empty_report_explains_ok() {
        let report = ValidationReport::default();
        assert_eq!(explain(&report), "OK: 0 errors, 0 warnings");
    }

    #[test]
    fn explain_orders_errors_by_code_then_subject() {
        let mut report = ValidationReport::default();
        report.error(RuleCode::UnresolvedReference, "Z", "z");
        report.error(RuleCode::MultipleVersionMembership, "SBASET52-1", "claimed twice");
        report.errors.sort_by(|a, b| (a.code, a.subject.as_str()).cmp(&(b.code, b.subject.as_str())));
        let text = explain(&report);
        let first = text.lines().next().unwrap();
        assert!(
            first.starts_with("ERROR MultipleVersionMembership SBASET52-1"),
            "{first}"
        );
    }

    #[test]
    fn node_origin_with_sub_origin_flagged() {
        let mut doc = XsamsDocument::new();
        let mut origin = node_origin();
        origin.sub_origins.push(node_origin());
        doc.origins.push(origin);
        let report = validate(&doc);
        assert!(report
            .error_codes()
            .contains(&RuleCode::NodeOriginWithSubOrigins));
    }

    #[test]
    fn processor_without_inputs_flagged() {
        let mut doc = XsamsDocument::new();
        let mut origin = node_origin();
        origin.kind = OriginKind::Processor;
        origin.query = None;
        doc.origins.push(origin);
        let report = validate(&doc);
        assert_eq!(
            report.error_codes(),
            vec![RuleCode::ProcessorOriginWithoutSubOrigins]
        );
    }

    #[test]
    fn global_version_rules() {
        let mut doc = XsamsDocument::new();
        let mut origin = node_origin();
        origin.versions[0].global = true;
        origin.versions[0].source_refs.push("S1".into());
        doc.origins.push(origin.clone());
        doc.origins.push(origin);
        let report = validate(&doc);
        let codes = report.error_codes();
        assert!(codes.contains(&RuleCode::GlobalVersionWithMultipleOrigins));
        assert!(codes.contains(&RuleCode::GlobalVersionWithExplicitRefs));
    }

    #[test]
    fn uneven_data_lists_and_repeated_quantum_numbers_flagged() {
        let mut doc = XsamsDocument::new();
        doc.origins.push(node_origin());
        doc.molecules.push(MoleculeSpecies {
            species_id: "X1".into(),
            ordinary_formula: "CO".into(),
            stoichiometric_formula: "CO".into(),
            chemical_name: "CO".into(),
            inchi: "1S/CO/c1-2".into(),
            inchikey: "UGFAIRIUMAVXCW-UHFFFAOYSA-N".into(),
            vamdc_species_id: "UGFAIRIUMAVXCW-UHFFFAOYSA-N".into(),
            structure: None,
            partition_function: Some(PartitionFunction {
                t_units: "K".into(),
                t_values: "1.0 2.0 3.0".into(),
                q_values: "1.0 2.0".into(),
            }),
            molecular_weight: "28".into(),
            molecular_weight_units: "amu".into(),
            comment: None,
            extra: Vec::new(),
            states: vec![MolecularState {
                state_id: "S1".into(),
                auxiliary: false,
                source_refs: Vec::new(),
                description: None,
                energy_value: "0.0".into(),
                energy_units: "1/cm".into(),
                energy_origin_ref: None,
                total_statistical_weight: None,
                nuclear_statistical_weight: None,
                case_id: "dcs".into(),
                case_attrs: Vec::new(),
                qn_prefix: "dcs".into(),
                quantum_numbers: vec![("J".into(), "0".into()), ("J".into(), "1".into())],
            }],
        });
        doc.collisions.push(CollisionalTransition {
            id: "P1".into(),
            comments: None,
            source_refs: Vec::new(),
            process_class_code: "inel".into(),
            reactants: vec![Participant {
                species_ref: "X1".into(),
                state_ref: "S1".into(),
            }],
            products: vec![Participant {
                species_ref: "X1".into(),
                state_ref: "S1".into(),
            }],
            datasets: vec![TabulatedDataset {
                description: "rateCoefficient".into(),
                comments: None,
                x_units: "K".into(),
                x_values: "5.0 10.0 20.0".into(),
                y_units: "cm3/s".into(),
                y_values: "3.4E-11".into(),
            }],
        });
        let report = validate(&doc);
        let codes = report.error_codes();
        assert!(codes.contains(&RuleCode::DataListLengthMismatch));
        assert!(codes.contains(&RuleCode::DuplicateQuantumNumber));
        assert_eq!(
            codes
                .iter()
                .filter(|c| **c == RuleCode::DataListLengthMismatch)
                .count(),
            2
        );
    }

    #[test]
    fn inverted_timestamps_warn() {
        let mut doc = XsamsDocument::new();
        let mut origin = node_origin();
        origin.versions[0].timestamp = Timestamp::new("2016-01-01T00:00:00+00:00");
        doc.origins.push(origin);
        let report = validate(&doc);
        assert!(report.is_valid());
        assert!(report
            .warning_codes()
            .contains(&RuleCode::VersionTimestampAfterExtraction));
    }
}
