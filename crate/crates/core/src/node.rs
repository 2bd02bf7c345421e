//! A simulated federation data node: holds a full dataset, answers parsed
//! queries, and stamps each answer with a node origin so the extraction is
//! reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use crate::model::*;
use crate::query::{self, QueryAst, QueryError};
use crate::io as xsams_io;

pub const SPEED_OF_LIGHT_M_PER_S: f64 = 2.99792458e8;

/// Wavelength in angstrom for a frequency in MHz. The federation convention
/// is to query radiative data by wavelength in angstrom, so nodes index
/// their transitions by this value regardless of the stored unit.
pub fn wavelength_angstrom_from_mhz(frequency_mhz: f64) -> f64 {
    let frequency_hz = frequency_mhz * 1e6;
    let wavelength_m = SPEED_OF_LIGHT_M_PER_S / frequency_hz;
    wavelength_m * 1e10
}

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse holdings: {0}")]
    Parse(#[from] xsams_io::ParseError),
    #[error("bad node config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// One internal version of the node's data: a dated release plus the set of
/// holdings identifiers that belong to it.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVersion {
    pub version_id: String,
    pub timestamp: Timestamp,
    pub members: BTreeSet<String>,
}

/// Identity and version layout of a simulated node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub name: String,
    pub homepage_url: String,
    pub origin_identifier: String,
    /// Identifier prefix for minted sources; the self-reference is `<prefix>0`.
    pub source_prefix: String,
    pub self_source_name: Option<String>,
    pub self_source_uri: Option<String>,
    pub self_source_author: Option<String>,
    /// At least one version; holdings identifiers not listed under any
    /// version belong to the first one.
    pub versions: Vec<NodeVersion>,
}

impl NodeConfig {
    /// Key=value lines plus `version <id> <timestamp>` blocks with optional
    /// `member <id>` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, NodeError> {
        let mut name = None;
        let mut homepage_url = None;
        let mut origin_identifier = None;
        let mut source_prefix = None;
        let mut self_source_name = None;
        let mut self_source_uri = None;
        let mut self_source_author = None;
        let mut versions: Vec<NodeVersion> = Vec::new();

        for (index, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let number = index + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("version ") {
                let mut parts = rest.split_whitespace();
                let (id, ts) = match (parts.next(), parts.next()) {
                    (Some(id), Some(ts)) => (id, ts),
                    _ => {
                        return Err(NodeError::Config {
                            line: number,
                            message: "expected: version <id> <timestamp>".into(),
                        })
                    }
                };
                versions.push(NodeVersion {
                    version_id: id.to_string(),
                    timestamp: Timestamp::new(ts),
                    members: BTreeSet::new(),
                });
                continue;
            }
            if let Some(member) = line.strip_prefix("member ") {
                let version = versions.last_mut().ok_or(NodeError::Config {
                    line: number,
                    message: "member line before any version line".into(),
                })?;
                version.members.insert(member.trim().to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| NodeError::Config {
                line: number,
                message: "expected key=value".into(),
            })?;
            let value = value.trim().to_string();
            match key.trim() {
                "name" => name = Some(value),
                "homepage_url" => homepage_url = Some(value),
                "origin_identifier" => origin_identifier = Some(value),
                "source_prefix" => source_prefix = Some(value),
                "self_source_name" => self_source_name = Some(value),
                "self_source_uri" => self_source_uri = Some(value),
                "self_source_author" => self_source_author = Some(value),
                other => {
                    return Err(NodeError::Config {
                        line: number,
                        message: format!("unknown key {other}"),
                    })
                }
            }
        }

        let require = |field: Option<String>, key: &str| {
            field.ok_or_else(|| NodeError::Config {
                line: 0,
                message: format!("missing {key}"),
            })
        };
        let config = NodeConfig {
            name: require(name, "name")?,
            homepage_url: require(homepage_url, "homepage_url")?,
            origin_identifier: require(origin_identifier, "origin_identifier")?,
            source_prefix: require(source_prefix, "source_prefix")?,
            self_source_name,
            self_source_uri,
            self_source_author,
            versions,
        };
        if config.versions.is_empty() {
            return Err(NodeError::Config {
                line: 0,
                message: "at least one version line is required".into(),
            });
        }
        let mut seen = BTreeSet::new();
        for version in &config.versions {
            for member in &version.members {
                if !seen.insert(member.clone()) {
                    return Err(NodeError::Config {
                        line: 0,
                        message: format!("identifier {member} listed under two versions"),
                    });
                }
            }
        }
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, NodeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NodeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn self_source_id(&self) -> String {
        format!("{}0", self.source_prefix)
    }

    /// Version owning an identifier; unassigned identifiers belong to the
    /// first version.
    fn version_index_of(&self, id: &str) -> usize {
        self.versions
            .iter()
            .position(|v| v.members.contains(id))
            .unwrap_or(0)
    }
}

/// The node's full holdings plus, per process, the attribute map the query
/// evaluator runs against.
#[derive(Debug, Clone)]
pub struct NodeDataset {
    pub document: XsamsDocument,
    pub attributes: BTreeMap<String, BTreeMap<String, String>>,
}

/// Load holdings from an XSAMS file. A sidecar file at `<path>.attrs`
/// contributes extra per-process attributes (`process <id>` blocks of
/// `keyword=value` lines); wavelength and formula attributes are derived
/// from the holdings themselves. A zero-length holdings file is an empty
/// dataset.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<NodeDataset, NodeError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| NodeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(NodeDataset {
            document: XsamsDocument::new(),
            attributes: BTreeMap::new(),
        });
    }
    let (document, _) = xsams_io::parse(&bytes)?;

    let sidecar_path = {
        let mut os = path.as_os_str().to_os_string();
        os.push(".attrs");
        std::path::PathBuf::from(os)
    };
    let sidecar = match std::fs::read_to_string(&sidecar_path) {
        Ok(text) => parse_sidecar(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(source) => {
            return Err(NodeError::Io {
                path: sidecar_path.display().to_string(),
                source,
            })
        }
    };
    Ok(build_dataset(document, sidecar))
}

pub fn dataset_from_document(document: XsamsDocument) -> NodeDataset {
    build_dataset(document, BTreeMap::new())
}

fn parse_sidecar(
    text: &str,
) -> Result<BTreeMap<String, BTreeMap<String, String>>, NodeError> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(id) = line.strip_prefix("process ") {
            current = Some(id.trim().to_string());
            out.entry(id.trim().to_string()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| NodeError::Config {
            line: index + 1,
            message: "expected keyword=value".into(),
        })?;
        let id = current.as_ref().ok_or_else(|| NodeError::Config {
            line: index + 1,
            message: "attribute line before any process line".into(),
        })?;
        out.get_mut(id)
            .expect("block created above")
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn build_dataset(
    document: XsamsDocument,
    sidecar: BTreeMap<String, BTreeMap<String, String>>,
) -> NodeDataset {
    let mut attributes: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for transition in &document.radiative {
        let mut attrs = BTreeMap::new();
        if transition.frequency_units == "MHz" {
            if let Ok(mhz) = transition.frequency_value.trim().parse::<f64>() {
                attrs.insert(
                    "RadTransWavelength".to_string(),
                    format!("{}", wavelength_angstrom_from_mhz(mhz)),
                );
            }
        }
        if let Some(molecule) = document.molecule(&transition.species_ref) {
            attrs.insert(
                "MoleculeStoichiometricFormula".to_string(),
                molecule.stoichiometric_formula.clone(),
            );
        }
        attributes.insert(transition.id.clone(), attrs);
    }
    for collision in &document.collisions {
        attributes.entry(collision.id.clone()).or_default();
    }
    for (id, attrs) in sidecar {
        attributes.entry(id).or_default().extend(attrs);
    }
    NodeDataset {
        document,
        attributes,
    }
}

// ---------------------------------------------------------------------------
// Answering
// ---------------------------------------------------------------------------

/// Identifiers selected into an answer, in holdings order per kind.
#[derive(Debug, Default)]
struct Selection {
    species: Vec<String>,
    states: Vec<String>,
    processes: Vec<String>,
    sources: Vec<String>,
}

/// Answer a query: the matching processes, the transitive closure of
/// everything they reference, one version per contributing internal
/// release, and a fresh self-reference source.
pub fn answer(
    dataset: &NodeDataset,
    config: &NodeConfig,
    ast: &QueryAst,
    now: &Timestamp,
) -> Result<XsamsDocument, QueryError> {
    let empty = BTreeMap::new();
    let doc = &dataset.document;

    let mut matched_radiative: Vec<&RadiativeTransition> = Vec::new();
    for t in &doc.radiative {
        let attrs = dataset.attributes.get(&t.id).unwrap_or(&empty);
        if query::evaluate(ast, attrs)? {
            matched_radiative.push(t);
        }
    }
    let mut matched_collisions: Vec<&CollisionalTransition> = Vec::new();
    for c in &doc.collisions {
        let attrs = dataset.attributes.get(&c.id).unwrap_or(&empty);
        if query::evaluate(ast, attrs)? {
            matched_collisions.push(c);
        }
    }

    // Reference closure over the matched processes.
    let mut species: BTreeSet<String> = BTreeSet::new();
    let mut states: BTreeSet<String> = BTreeSet::new();
    let mut sources: BTreeSet<String> = BTreeSet::new();
    for t in &matched_radiative {
        species.insert(t.species_ref.clone());
        states.insert(t.upper_state_ref.clone());
        states.insert(t.lower_state_ref.clone());
        sources.extend(t.source_refs.iter().cloned());
    }
    for c in &matched_collisions {
        for p in c.reactants.iter().chain(&c.products) {
            species.insert(p.species_ref.clone());
            states.insert(p.state_ref.clone());
        }
        sources.extend(c.source_refs.iter().cloned());
    }
    // States pull in their energy-origin states and cited sources.
    loop {
        let mut grew = false;
        for molecule in &doc.molecules {
            for state in &molecule.states {
                if states.contains(&state.state_id) {
                    if let Some(origin_ref) = &state.energy_origin_ref {
                        grew |= states.insert(origin_ref.clone());
                    }
                    for s in &state.source_refs {
                        grew |= sources.insert(s.clone());
                    }
                }
            }
        }
        for atom in &doc.atoms {
            for state in &atom.states {
                if states.contains(&state.state_id) {
                    for s in &state.source_refs {
                        grew |= sources.insert(s.clone());
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }

    // Assemble the answer body, keeping holdings order.
    let mut out = XsamsDocument::new();
    if !doc.root_attrs.is_empty() {
        out.root_attrs = doc.root_attrs.clone();
    }
    let mut selection = Selection::default();
    for atom in &doc.atoms {
        if species.contains(&atom.species_id) {
            let mut copy = atom.clone();
            copy.states.retain(|s| states.contains(&s.state_id));
            selection.species.push(copy.species_id.clone());
            selection
                .states
                .extend(copy.states.iter().map(|s| s.state_id.clone()));
            out.atoms.push(copy);
        }
    }
    for molecule in &doc.molecules {
        if species.contains(&molecule.species_id) {
            let mut copy = molecule.clone();
            copy.states.retain(|s| states.contains(&s.state_id));
            selection.species.push(copy.species_id.clone());
            selection
                .states
                .extend(copy.states.iter().map(|s| s.state_id.clone()));
            out.molecules.push(copy);
        }
    }
    out.radiative = matched_radiative.into_iter().cloned().collect();
    out.collisions = matched_collisions.into_iter().cloned().collect();
    selection
        .processes
        .extend(out.radiative.iter().map(|t| t.id.clone()));
    selection
        .processes
        .extend(out.collisions.iter().map(|c| c.id.clone()));

    let self_id = config.self_source_id();
    for source in &doc.sources {
        if sources.contains(&source.source_id) {
            selection.sources.push(source.source_id.clone());
            out.sources.push(source.clone());
        }
    }

    // One version per contributing internal release, the self-reference
    // credited to the first of them.
    let mut per_version: Vec<Version> = config
        .versions
        .iter()
        .map(|v| Version::new(v.version_id.clone(), v.timestamp.clone()))
        .collect();
    for id in selection.species.iter() {
        per_version[config.version_index_of(id)]
            .species_refs
            .push(id.clone());
    }
    for id in selection.states.iter() {
        per_version[config.version_index_of(id)]
            .state_refs
            .push(id.clone());
    }
    for id in selection.processes.iter() {
        per_version[config.version_index_of(id)]
            .process_refs
            .push(id.clone());
    }
    for id in selection.sources.iter() {
        per_version[config.version_index_of(id)]
            .source_refs
            .push(id.clone());
    }
    let mut versions: Vec<Version> = per_version.into_iter().filter(|v| !v.is_empty()).collect();
    match versions.first_mut() {
        Some(first) => first.source_refs.insert(0, self_id.clone()),
        // Nothing matched: provenance of the empty answer is still stated,
        // as the first configured version with no members.
        None => versions.push(Version::new(
            config.versions[0].version_id.clone(),
            config.versions[0].timestamp.clone(),
        )),
    }

    // The self-reference year follows the served version, not the clock:
    // re-executing the same extraction later must reproduce the same
    // content up to extraction timestamp and production date.
    let self_year = versions[0].timestamp.year().unwrap_or(1970);
    out.sources.insert(0, self_source(config, ast, now, &self_id, self_year));

    out.origins.push(Origin {
        kind: OriginKind::Node,
        timestamp: now.clone(),
        versions,
        homepage_url: config.homepage_url.clone(),
        name: config.name.clone(),
        comments: None,
        query: Some(query::render(ast)),
        origin_identifier: Some(config.origin_identifier.clone()),
        sub_origins: Vec::new(),
    });
    Ok(out)
}

fn self_source(
    config: &NodeConfig,
    ast: &QueryAst,
    now: &Timestamp,
    self_id: &str,
    year: i32,
) -> Source {
    Source {
        source_id: self_id.to_string(),
        category: "database".into(),
        source_name: config.self_source_name.clone(),
        year,
        authors: config.self_source_author.iter().cloned().collect(),
        title: None,
        volume: None,
        page_begin: None,
        page_end: None,
        uri: config.self_source_uri.clone(),
        doi: None,
        production_date: Some(now.date_part().to_string()),
        comments: Some(query::render(ast)),
    }
}

// ---------------------------------------------------------------------------
// HTTP endpoint
// ---------------------------------------------------------------------------

/// Serve `GET /tap/sync?REQUEST=doQuery&FORMAT=XSAMS&QUERY=...` over the
/// dataset. `fixed_now`, when given, pins the extraction timestamp of every
/// answer; otherwise the current time is used. With a store handle, every
/// answer is registered on the way out and the response names its dataset
/// identifier in `X-Dataset-Identifier`. Runs until the process ends.
pub fn serve(
    dataset: NodeDataset,
    config: NodeConfig,
    listener: tiny_http::Server,
    fixed_now: Option<Timestamp>,
    store: Option<Arc<crate::store::QueryStore>>,
) {
    let dataset = Arc::new(dataset);
    let config = Arc::new(config);
    for mut request in listener.incoming_requests() {
        let response = handle_tap_request(
            &mut request,
            &dataset,
            &config,
            fixed_now.as_ref(),
            store.as_deref(),
        );
        let _ = request.respond(response);
    }
}

pub fn current_timestamp() -> Timestamp {
    Timestamp::new(chrono::Utc::now().format("%Y-%m-%dT%H:%M:%S+00:00").to_string())
}

fn handle_tap_request(
    request: &mut tiny_http::Request,
    dataset: &NodeDataset,
    config: &NodeConfig,
    fixed_now: Option<&Timestamp>,
    store: Option<&crate::store::QueryStore>,
) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let url = request.url().to_string();
    let (path, query_string) = match url.split_once('?') {
        Some((p, q)) => (p, q),
        None => (url.as_str(), ""),
    };
    if path != "/tap/sync" {
        return text_response(404, "not found");
    }
    let params: BTreeMap<String, String> = form_urlencoded::parse(query_string.as_bytes())
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    if params.get("REQUEST").map(String::as_str) != Some("doQuery") {
        return text_response(400, "REQUEST=doQuery is required");
    }
    if params.get("FORMAT").map(String::as_str) != Some("XSAMS") {
        return text_response(400, "FORMAT=XSAMS is required");
    }
    let Some(query_text) = params.get("QUERY") else {
        return text_response(400, "QUERY parameter is required");
    };
    let ast = match query::parse_query(query_text) {
        Ok(ast) => ast,
        Err(e) => return text_response(400, &format!("bad query: {e}")),
    };
    let now = fixed_now.cloned().unwrap_or_else(current_timestamp);
    match answer(dataset, config, &ast, &now) {
        Ok(doc) => {
            let body = xsams_io::serialize(&doc);
            let mut response = tiny_http::Response::from_data(body)
                .with_status_code(200)
                .with_header(content_type("application/xml; charset=utf-8"));
            // Identifier minted at extraction time, when a store is wired in.
            if let Some(store) = store {
                match store.register(&doc) {
                    Ok(record) => {
                        if let Ok(header) = tiny_http::Header::from_bytes(
                            &b"X-Dataset-Identifier"[..],
                            record.identifier.as_bytes(),
                        ) {
                            response = response.with_header(header);
                        }
                    }
                    Err(e) => return text_response(500, &format!("cannot register answer: {e}")),
                }
            }
            response
        }
        Err(e) => text_response(400, &format!("cannot evaluate query: {e}")),
    }
}

pub(crate) fn content_type(value: &str) -> tiny_http::Header {
    tiny_http::Header::from_bytes(&b"Content-Type"[..], value.as_bytes())
        .expect("static header")
}

pub(crate) fn text_response(
    status: u16,
    body: &str,
) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(content_type("text/plain; charset=utf-8"))
}

pub(crate) fn read_body(request: &mut tiny_http::Request) -> std::io::Result<Vec<u8>> {
    let mut body = Vec::new();
    request.as_reader().read_to_end(&mut body)?;
    Ok(body)
}
