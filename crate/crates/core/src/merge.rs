//! Cross-match merge of a spectroscopic document with a collisional one.
//!
//! States of paired molecules are identified by equal quantum numbers and
//! the collisional molecule is replaced by its spectroscopic counterpart,
//! reference rewriting included. The output wraps both input origins under
//! a fresh other-kind origin. Processes whose references end up drawing on
//! both inputs move to the root version; all bibliography identifiers are
//! compiled into the root version so a citation pass needs one stop.
//! Rate-coefficient tables are carried over byte-for-byte.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::*;

/// How states are identified across databases.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSpec {
    /// Quantum-number names that must agree, e.g. `["J"]`.
    pub match_keys: Vec<String>,
}

impl MatchSpec {
    pub fn new(keys: impl IntoIterator<Item = impl Into<String>>) -> Self {
        MatchSpec {
            match_keys: keys.into_iter().map(Into::into).collect(),
        }
    }
}

/// Outcome of matching one collisional molecule against a spectroscopic one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateMatching {
    /// collisional state id -> spectroscopic state id; injective.
    pub pairs: Vec<(String, String)>,
    pub unmatched_collisional: Vec<String>,
    pub unmatched_spectroscopic: Vec<String>,
}

/// Identity of the merging tool, stamped onto the root origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolConfig {
    pub name: String,
    pub homepage_url: String,
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MergeError {
    #[error("match keys must not be empty")]
    EmptyMatchKeys,
    #[error("molecules {spectroscopic} and {collisional} do not name the same species")]
    SpeciesMismatch {
        spectroscopic: String,
        collisional: String,
    },
    #[error("state {state_id} matches more than one candidate ({candidates:?})")]
    AmbiguousMatch {
        state_id: String,
        candidates: Vec<String>,
    },
    #[error("collisional state {state_id} is referenced but matches no spectroscopic state")]
    UnmatchedReferencedState { state_id: String },
    #[error("{which} document must have exactly one root origin, found {count}")]
    MultipleRootOrigins { which: String, count: usize },
}

/// Pair states of two molecules by equality of the given quantum numbers.
///
/// Auxiliary states take no part in matching: they are bookkeeping entries
/// (energy origins) and would collide with the real ground state.
pub fn crossmatch_states(
    spec_mol: &MoleculeSpecies,
    coll_mol: &MoleculeSpecies,
    spec: &MatchSpec,
) -> Result<StateMatching, MergeError> {
    if spec.match_keys.is_empty() {
        return Err(MergeError::EmptyMatchKeys);
    }
    if !same_species(spec_mol, coll_mol) {
        return Err(MergeError::SpeciesMismatch {
            spectroscopic: spec_mol.species_id.clone(),
            collisional: coll_mol.species_id.clone(),
        });
    }

    let key_of = |state: &MolecularState| -> Option<Vec<String>> {
        spec.match_keys
            .iter()
            .map(|k| state.quantum_number(k).map(|v| v.trim().to_string()))
            .collect()
    };

    let mut matching = StateMatching::default();
    let mut taken: BTreeMap<String, String> = BTreeMap::new();
    for coll_state in coll_mol.states.iter().filter(|s| !s.auxiliary) {
        let Some(key) = key_of(coll_state) else {
            matching.unmatched_collisional.push(coll_state.state_id.clone());
            continue;
        };
        let candidates: Vec<&MolecularState> = spec_mol
            .states
            .iter()
            .filter(|s| !s.auxiliary)
            .filter(|s| key_of(s).as_ref() == Some(&key))
            .collect();
        match candidates.as_slice() {
            [] => matching.unmatched_collisional.push(coll_state.state_id.clone()),
            [unique] => {
                if let Some(previous) = taken.get(&unique.state_id) {
                    return Err(MergeError::AmbiguousMatch {
                        state_id: unique.state_id.clone(),
                        candidates: vec![previous.clone(), coll_state.state_id.clone()],
                    });
                }
                taken.insert(unique.state_id.clone(), coll_state.state_id.clone());
                matching
                    .pairs
                    .push((coll_state.state_id.clone(), unique.state_id.clone()));
            }
            several => {
                return Err(MergeError::AmbiguousMatch {
                    state_id: coll_state.state_id.clone(),
                    candidates: several.iter().map(|s| s.state_id.clone()).collect(),
                })
            }
        }
    }
    let paired: BTreeSet<&String> = matching.pairs.iter().map(|(_, s)| s).collect();
    matching.unmatched_spectroscopic = spec_mol
        .states
        .iter()
        .filter(|s| !s.auxiliary && !paired.contains(&s.state_id))
        .map(|s| s.state_id.clone())
        .collect();
    Ok(matching)
}

fn same_species(a: &MoleculeSpecies, b: &MoleculeSpecies) -> bool {
    if !a.vamdc_species_id.is_empty() && !b.vamdc_species_id.is_empty() {
        return a.vamdc_species_id == b.vamdc_species_id;
    }
    !a.inchikey.is_empty() && a.inchikey == b.inchikey
}

/// Which input document declared an identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    Spectroscopic,
    Collisional,
}

/// Merge a spectroscopic document and a collisional document.
///
/// The spectroscopic origin is embedded first; both embedded origins are
/// unchanged except that their version member lists give up what the
/// merge relocated or dropped.
pub fn merge(
    spec_doc: &XsamsDocument,
    coll_doc: &XsamsDocument,
    spec: &MatchSpec,
    tool: &ToolConfig,
    now: &Timestamp,
) -> Result<XsamsDocument, MergeError> {
    for (which, doc) in [("spectroscopic", spec_doc), ("collisional", coll_doc)] {
        if doc.origins.len() != 1 {
            return Err(MergeError::MultipleRootOrigins {
                which: which.to_string(),
                count: doc.origins.len(),
            });
        }
    }
    if spec.match_keys.is_empty() {
        return Err(MergeError::EmptyMatchKeys);
    }

    // Pair collisional molecules with spectroscopic ones.
    let mut rename: BTreeMap<String, String> = BTreeMap::new();
    let mut dropped: BTreeSet<String> = BTreeSet::new();
    let mut paired_coll: BTreeSet<String> = BTreeSet::new();
    for coll_mol in &coll_doc.molecules {
        let partners: Vec<&MoleculeSpecies> = spec_doc
            .molecules
            .iter()
            .filter(|m| same_species(m, coll_mol))
            .collect();
        let spec_mol = match partners.as_slice() {
            [] => continue,
            [unique] => *unique,
            several => {
                return Err(MergeError::AmbiguousMatch {
                    state_id: coll_mol.species_id.clone(),
                    candidates: several.iter().map(|m| m.species_id.clone()).collect(),
                })
            }
        };
        let matching = crossmatch_states(spec_mol, coll_mol, spec)?;
        paired_coll.insert(coll_mol.species_id.clone());
        rename.insert(coll_mol.species_id.clone(), spec_mol.species_id.clone());
        dropped.insert(coll_mol.species_id.clone());
        for state in &coll_mol.states {
            dropped.insert(state.state_id.clone());
        }
        for (coll_id, spec_id) in &matching.pairs {
            rename.insert(coll_id.clone(), spec_id.clone());
        }
    }

    let rewrite = |id: &str| -> Result<String, MergeError> {
        if let Some(renamed) = rename.get(id) {
            return Ok(renamed.clone());
        }
        if dropped.contains(id) {
            return Err(MergeError::UnmatchedReferencedState {
                state_id: id.to_string(),
            });
        }
        Ok(id.to_string())
    };

    // Ownership of identifiers, for deciding which processes span inputs.
    let mut side_of: BTreeMap<String, Side> = BTreeMap::new();
    let note = |id: &str, side: Side, map: &mut BTreeMap<String, Side>| {
        map.entry(id.to_string()).or_insert(side);
    };
    for (side, doc) in [
        (Side::Spectroscopic, spec_doc),
        (Side::Collisional, coll_doc),
    ] {
        for atom in &doc.atoms {
            note(&atom.species_id, side, &mut side_of);
            for state in &atom.states {
                note(&state.state_id, side, &mut side_of);
            }
        }
        for molecule in &doc.molecules {
            note(&molecule.species_id, side, &mut side_of);
            for state in &molecule.states {
                note(&state.state_id, side, &mut side_of);
            }
        }
    }

    // Body: spectroscopic species win; unpaired collisional ones survive.
    let mut out = XsamsDocument::new();
    out.root_attrs = spec_doc.root_attrs.clone();
    for (key, value) in &coll_doc.root_attrs {
        if !out.root_attrs.iter().any(|(k, _)| k == key) {
            out.root_attrs.push((key.clone(), value.clone()));
        }
    }
    out.atoms = spec_doc.atoms.iter().chain(&coll_doc.atoms).cloned().collect();
    out.molecules = spec_doc
        .molecules
        .iter()
        .cloned()
        .chain(
            coll_doc
                .molecules
                .iter()
                .filter(|m| !paired_coll.contains(&m.species_id))
                .cloned(),
        )
        .collect();

    let mut spanning: BTreeSet<String> = BTreeSet::new();
    let mut classify = |id: &str, refs: &[String]| -> Result<(), MergeError> {
        let sides: BTreeSet<Side> = refs
            .iter()
            .filter_map(|r| side_of.get(r).copied())
            .collect();
        if sides.len() > 1 {
            spanning.insert(id.to_string());
        }
        Ok(())
    };

    out.radiative = Vec::new();
    for t in spec_doc.radiative.iter().chain(&coll_doc.radiative) {
        let mut copy = t.clone();
        copy.species_ref = rewrite(&copy.species_ref)?;
        copy.upper_state_ref = rewrite(&copy.upper_state_ref)?;
        copy.lower_state_ref = rewrite(&copy.lower_state_ref)?;
        classify(
            &copy.id,
            &[
                copy.species_ref.clone(),
                copy.upper_state_ref.clone(),
                copy.lower_state_ref.clone(),
            ],
        )?;
        out.radiative.push(copy);
    }
    out.collisions = Vec::new();
    for c in spec_doc.collisions.iter().chain(&coll_doc.collisions) {
        let mut copy = c.clone();
        let mut referenced = Vec::new();
        for p in copy.reactants.iter_mut().chain(copy.products.iter_mut()) {
            p.species_ref = rewrite(&p.species_ref)?;
            p.state_ref = rewrite(&p.state_ref)?;
            referenced.push(p.species_ref.clone());
            referenced.push(p.state_ref.clone());
        }
        classify(&copy.id, &referenced)?;
        out.collisions.push(copy);
    }

    // Bibliography: collisional first, mirroring merged-output convention.
    out.sources = coll_doc.sources.iter().chain(&spec_doc.sources).cloned().collect();
    let all_source_ids: Vec<String> = out.sources.iter().map(|s| s.source_id.clone()).collect();

    // Root origin wrapping both inputs.
    let spec_origin = prune_embedded(&spec_doc.origins[0], &dropped, &spanning);
    let coll_origin = prune_embedded(&coll_doc.origins[0], &dropped, &spanning);

    let mut used: BTreeSet<String> = BTreeSet::new();
    for doc in [spec_doc, coll_doc] {
        if let Ok(ids) = collect_identifiers(doc) {
            used.extend(ids.into_keys());
        }
    }
    let mut counter = 1usize;
    while used.contains(&format!("VERMER{counter}")) {
        counter += 1;
    }
    let root_version_id = format!("VERMER{counter}");

    let earliest = [&spec_origin, &coll_origin]
        .iter()
        .flat_map(|o| all_versions_of(o))
        .min_by_key(|v| v.timestamp.instant())
        .map(|v| v.timestamp.clone())
        .unwrap_or_else(|| now.clone());

    let mut root_version = Version::new(root_version_id, earliest);
    let process_ids: Vec<String> = out
        .radiative
        .iter()
        .map(|t| t.id.clone())
        .chain(out.collisions.iter().map(|c| c.id.clone()))
        .collect();
    root_version.process_refs = process_ids
        .into_iter()
        .filter(|id| spanning.contains(id))
        .collect();
    root_version.source_refs = all_source_ids;

    out.origins.push(Origin {
        kind: OriginKind::Other,
        timestamp: now.clone(),
        versions: vec![root_version],
        homepage_url: tool.homepage_url.clone(),
        name: tool.name.clone(),
        comments: tool.comment.clone(),
        query: None,
        origin_identifier: None,
        sub_origins: vec![spec_origin, coll_origin],
    });

    let marker = format!("Data merged by {}.", tool.name.to_uppercase());
    let mut comment_parts: Vec<String> = Vec::new();
    if let Some(c) = &spec_doc.comments {
        comment_parts.push(c.clone());
    }
    if let Some(c) = &coll_doc.comments {
        comment_parts.push(c.clone());
    }
    comment_parts.push(marker);
    out.comments = Some(comment_parts.join(" "));
    out.extra = spec_doc.extra.iter().chain(&coll_doc.extra).cloned().collect();
    Ok(out)
}

fn all_versions_of(origin: &Origin) -> Vec<&Version> {
    let mut out = Vec::new();
    origin.walk(&mut |o| out.extend(o.versions.iter()));
    out
}

/// Deep-copy an input origin, stripping from every version member list the
/// identifiers that were dropped, relocated to the root version, or are
/// bibliography entries (all sources are compiled at the root).
fn prune_embedded(origin: &Origin, dropped: &BTreeSet<String>, spanning: &BTreeSet<String>) -> Origin {
    let mut copy = origin.clone();
    prune_versions(&mut copy, dropped, spanning);
    copy
}

fn prune_versions(origin: &mut Origin, dropped: &BTreeSet<String>, spanning: &BTreeSet<String>) {
    for version in &mut origin.versions {
        version.species_refs.retain(|id| !dropped.contains(id));
        version.state_refs.retain(|id| !dropped.contains(id));
        version
            .process_refs
            .retain(|id| !dropped.contains(id) && !spanning.contains(id));
        version.source_refs.clear();
    }
    for sub in &mut origin.sub_origins {
        prune_versions(sub, dropped, spanning);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(id: &str, j: &str, auxiliary: bool) -> MolecularState {
        MolecularState {
            state_id: id.into(),
            auxiliary,
            source_refs: Vec::new(),
            description: None,
            energy_value: "0.0".into(),
            energy_units: "1/cm".into(),
            energy_origin_ref: None,
            total_statistical_weight: None,
            nuclear_statistical_weight: None,
            case_id: "dcs".into(),
            case_attrs: vec![
                ("xsi:type".into(), "dcs:Case".into()),
                ("caseID".into(), "dcs".into()),
            ],
            qn_prefix: "dcs".into(),
            quantum_numbers: vec![("J".into(), j.into())],
        }
    }

    fn molecule(species_id: &str, vsid: &str, states: Vec<MolecularState>) -> MoleculeSpecies {
        MoleculeSpecies {
            species_id: species_id.into(),
            ordinary_formula: "CO".into(),
            stoichiometric_formula: "CO".into(),
            chemical_name: "CO".into(),
            inchi: "1S/CO/c1-2".into(),
            inchikey: "UGFAIRIUMAVXCW-UHFFFAOYSA-N".into(),
            vamdc_species_id: vsid.into(),
            structure: None,
            partition_function: None,
            molecular_weight: "28".into(),
            molecular_weight_units: "amu".into(),
            comment: None,
            extra: Vec::new(),
            states,
        }
    }

    #[test]
    fn matches_states_on_equal_j() {
        let spec = molecule(
            "XS",
            "V1",
            vec![state("S-AUX", "0", true), state("S0", "0", false), state("S1", "1", false)],
        );
        let coll = molecule("XC", "V1", vec![state("C0", "0", false), state("C1", "1", false)]);
        let matching = crossmatch_states(&spec, &coll, &MatchSpec::new(["J"])).unwrap();
        assert_eq!(
            matching.pairs,
            vec![("C0".to_string(), "S0".to_string()), ("C1".to_string(), "S1".to_string())]
        );
        assert!(matching.unmatched_collisional.is_empty());
        assert!(matching.unmatched_spectroscopic.is_empty());
    }

    #[test]
    fn self_match_with_auxiliary_excluded_is_identity() {
        let m = molecule(
            "X",
            "V1",
            vec![state("AUX", "0", true), state("S0", "0", false), state("S1", "1", false)],
        );
        let matching = crossmatch_states(&m, &m, &MatchSpec::new(["J"])).unwrap();
        assert_eq!(
            matching.pairs,
            vec![("S0".to_string(), "S0".to_string()), ("S1".to_string(), "S1".to_string())]
        );
    }

    #[test]
    fn duplicate_candidates_are_ambiguous() {
        let spec = molecule("XS", "V1", vec![state("S0", "0", false), state("S0b", "0", false)]);
        let coll = molecule("XC", "V1", vec![state("C0", "0", false)]);
        match crossmatch_states(&spec, &coll, &MatchSpec::new(["J"])) {
            Err(MergeError::AmbiguousMatch { state_id, candidates }) => {
                assert_eq!(state_id, "C0");
                assert_eq!(candidates.len(), 2);
            }
            other => panic!("expected ambiguity, got {other:?}"),
        }
    }

    #[test]
    fn different_species_do_not_match() {
        let spec = molecule("XS", "VSID-A", vec![state("S0", "0", false)]);
        let coll = molecule("XC", "VSID-B", vec![state("C0", "0", false)]);
        assert!(matches!(
            crossmatch_states(&spec, &coll, &MatchSpec::new(["J"])),
            Err(MergeError::SpeciesMismatch { .. })
        ));
    }

    #[test]
    fn missing_match_key_leaves_state_unmatched() {
        let spec = molecule("XS", "V1", vec![state("S0", "0", false)]);
        let mut odd = state("C9", "0", false);
        odd.quantum_numbers.clear();
        let coll = molecule("XC", "V1", vec![odd]);
        let matching = crossmatch_states(&spec, &coll, &MatchSpec::new(["J"])).unwrap();
        assert_eq!(matching.unmatched_collisional, vec!["C9".to_string()]);
    }

    #[test]
    fn empty_match_keys_rejected() {
        let m = molecule("X", "V1", vec![]);
        assert_eq!(
            crossmatch_states(&m, &m, &MatchSpec { match_keys: vec![] }),
            Err(MergeError::EmptyMatchKeys)
        );
    }
}
