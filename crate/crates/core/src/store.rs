//! The query store: registers extractions under resolvable identifiers,
//! persists them to an append-only journal, serves landing pages and
//! machine-readable records, and re-executes queries against a node.
//!
//! Identifiers are derived from the extraction's content, so registering
//! the same document twice yields the same record. The journal holds one
//! JSON record per line; replaying it rebuilds the store, last write wins.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bibtex;
use crate::io as xsams_io;
use crate::model::{OriginKind, Timestamp, XsamsDocument};
use crate::node::{self, NodeConfig, NodeDataset};
use crate::query;
use crate::validator;

pub const JOURNAL_ENV_VAR: &str = "QS_JOURNAL_PATH";
pub const IDENTIFIER_SCHEME: &str = "vamdc-qs:";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("document rejected: {0}")]
    InvalidDocument(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("unknown identifier {0}")]
    UnknownIdentifier(String),
    #[error("extraction {0} cannot be re-executed")]
    NotReexecutable(String),
    #[error("no node available: {0}")]
    NodeUnavailable(String),
}

/// One version claimed by a registered extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionStamp {
    pub version_id: String,
    pub timestamp: String,
}

/// Everything the store keeps about one registered extraction. The landing
/// page and the machine-readable record are both rendered from this alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub identifier: String,
    pub node_name: String,
    pub node_origin_identifier: String,
    pub canonical_query: String,
    pub extraction_timestamp: String,
    pub version_ids: Vec<VersionStamp>,
    pub content_digest: String,
    pub bibtex_blob: String,
    pub stored_document_path: Option<String>,
    pub reexecutable: bool,
}

type Snapshot = Arc<BTreeMap<String, ExtractionRecord>>;

/// Persistent store of extraction records.
///
/// Reads run against an immutable snapshot swapped atomically after each
/// write; registration serializes journal appends behind one lock.
pub struct QueryStore {
    journal_path: PathBuf,
    /// Directory for retained document bytes; None disables retention.
    documents_dir: Option<PathBuf>,
    snapshot: RwLock<Snapshot>,
    write_lock: Mutex<()>,
}

impl QueryStore {
    /// Open a store on a journal file, replaying any existing records.
    /// With `retain_documents`, registered documents are written next to
    /// the journal so resolution outlives node-side deletions.
    pub fn open(journal_path: impl AsRef<Path>, retain_documents: bool) -> Result<Self, StoreError> {
        let journal_path = journal_path.as_ref().to_path_buf();
        if let Some(parent) = journal_path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| StoreError::StorageFailure(e.to_string()))?;
            }
        }
        let documents_dir = if retain_documents {
            let dir = journal_path.with_extension("docs");
            std::fs::create_dir_all(&dir).map_err(|e| StoreError::StorageFailure(e.to_string()))?;
            Some(dir)
        } else {
            None
        };

        let mut records = BTreeMap::new();
        match std::fs::read_to_string(&journal_path) {
            Ok(text) => {
                for (index, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let record: ExtractionRecord = serde_json::from_str(line).map_err(|e| {
                        StoreError::StorageFailure(format!(
                            "journal line {}: {e}",
                            index + 1
                        ))
                    })?;
                    records.insert(record.identifier.clone(), record);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(StoreError::StorageFailure(e.to_string())),
        }
        Ok(QueryStore {
            journal_path,
            documents_dir,
            snapshot: RwLock::new(Arc::new(records)),
            write_lock: Mutex::new(()),
        })
    }

    fn snapshot(&self) -> Snapshot {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register a validated extraction. Returns the persisted record; the
    /// identical document registers to the identical record.
    pub fn register(&self, doc: &XsamsDocument) -> Result<ExtractionRecord, StoreError> {
        let report = validator::validate(doc);
        if !report.is_valid() {
            return Err(StoreError::InvalidDocument(validator::explain(&report)));
        }
        if doc.origins.len() != 1 {
            return Err(StoreError::InvalidDocument(format!(
                "expected exactly one root origin, found {}",
                doc.origins.len()
            )));
        }
        let origin = &doc.origins[0];
        let reexecutable = origin.kind == OriginKind::Node;
        let canonical_query = match &origin.query {
            Some(text) => {
                let ast = query::parse_query(text)
                    .map_err(|e| StoreError::InvalidDocument(format!("origin query: {e}")))?;
                query::render(&ast)
            }
            None => String::new(),
        };
        let content_digest = xsams_io::canonical_digest(doc);
        let identifier = mint_identifier(
            origin.origin_identifier.as_deref().unwrap_or(""),
            &canonical_query,
            origin.timestamp.as_str(),
            &content_digest,
        );

        let mut version_ids = Vec::new();
        origin.walk(&mut |o| {
            for v in &o.versions {
                version_ids.push(VersionStamp {
                    version_id: v.version_id.clone(),
                    timestamp: v.timestamp.as_str().to_string(),
                });
            }
        });

        let stored_document_path = match &self.documents_dir {
            Some(dir) => {
                let path = dir.join(format!(
                    "{}.xml",
                    identifier.trim_start_matches(IDENTIFIER_SCHEME)
                ));
                std::fs::write(&path, xsams_io::serialize(doc))
                    .map_err(|e| StoreError::StorageFailure(e.to_string()))?;
                Some(path.display().to_string())
            }
            None => None,
        };

        let record = ExtractionRecord {
            identifier: identifier.clone(),
            node_name: origin.name.clone(),
            node_origin_identifier: origin.origin_identifier.clone().unwrap_or_default(),
            canonical_query,
            extraction_timestamp: origin.timestamp.as_str().to_string(),
            version_ids,
            content_digest,
            bibtex_blob: bibtex::doc_to_bibtex(doc),
            stored_document_path,
            reexecutable,
        };

        let _guard = self.write_lock.lock().expect("write lock");
        let line = serde_json::to_string(&record)
            .map_err(|e| StoreError::StorageFailure(e.to_string()))?;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.journal_path)
            .map_err(|e| StoreError::StorageFailure(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| StoreError::StorageFailure(e.to_string()))?;
        file.flush().map_err(|e| StoreError::StorageFailure(e.to_string()))?;

        let mut next: BTreeMap<String, ExtractionRecord> = (*self.snapshot()).clone();
        next.insert(identifier, record.clone());
        *self.snapshot.write().expect("snapshot lock") = Arc::new(next);
        Ok(record)
    }

    /// Parse, then register; the HTTP entry point.
    pub fn register_bytes(&self, bytes: &[u8]) -> Result<ExtractionRecord, StoreError> {
        let (doc, _) =
            xsams_io::parse(bytes).map_err(|e| StoreError::InvalidDocument(e.to_string()))?;
        self.register(&doc)
    }

    pub fn resolve(&self, identifier: &str) -> Result<ExtractionRecord, StoreError> {
        self.snapshot()
            .get(identifier)
            .cloned()
            .ok_or_else(|| StoreError::UnknownIdentifier(identifier.to_string()))
    }

    /// Machine-readable rendering of the record (JSON object, field names
    /// exactly as in `ExtractionRecord`).
    pub fn landing_record(&self, identifier: &str) -> Result<String, StoreError> {
        let record = self.resolve(identifier)?;
        serde_json::to_string_pretty(&record).map_err(|e| StoreError::StorageFailure(e.to_string()))
    }

    /// Human-readable landing page for an identifier.
    pub fn landing_page(&self, identifier: &str) -> Result<String, StoreError> {
        let record = self.resolve(identifier)?;
        Ok(render_landing_page(&record))
    }

    /// Re-run the stored canonical query against a node and compare content
    /// digests. `matches` is false when the node's data changed since
    /// registration (for example because a version was deleted).
    pub fn reexecute(
        &self,
        identifier: &str,
        node: Option<(&NodeDataset, &NodeConfig)>,
        now: &Timestamp,
    ) -> Result<(XsamsDocument, bool), StoreError> {
        let record = self.resolve(identifier)?;
        if !record.reexecutable {
            return Err(StoreError::NotReexecutable(identifier.to_string()));
        }
        let (dataset, config) =
            node.ok_or_else(|| StoreError::NodeUnavailable("no node handle configured".into()))?;
        let ast = query::parse_query(&record.canonical_query)
            .map_err(|e| StoreError::StorageFailure(format!("stored query: {e}")))?;
        let fresh = node::answer(dataset, config, &ast, now)
            .map_err(|e| StoreError::NodeUnavailable(e.to_string()))?;
        let matches = xsams_io::canonical_digest(&fresh) == record.content_digest;
        Ok((fresh, matches))
    }
}

/// `vamdc-qs:` plus the first 16 hex characters of a 256-bit hash over the
/// registration tuple. Any component change flips the identifier.
pub fn mint_identifier(
    node_origin_identifier: &str,
    canonical_query: &str,
    extraction_timestamp: &str,
    content_digest: &str,
) -> String {
    let mut hasher = Sha256::new();
    for part in [
        node_origin_identifier,
        canonical_query,
        extraction_timestamp,
        content_digest,
    ] {
        hasher.update(part.as_bytes());
        hasher.update(*b"\n");
    }
    let digest = hasher.finalize();
    format!("{IDENTIFIER_SCHEME}{}", &hex::encode(digest)[..16])
}

fn html_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn render_landing_page(record: &ExtractionRecord) -> String {
    let mut versions = String::new();
    for stamp in &record.version_ids {
        versions.push_str(&format!(
            "      <tr><td>{}</td><td>{}</td></tr>\n",
            html_escape(&stamp.version_id),
            html_escape(&stamp.timestamp)
        ));
    }
    let reexecute = if record.reexecutable {
        format!(
            "  <p><a href=\"/reexecute/{0}\">Re-execute this extraction</a></p>\n",
            html_escape(&record.identifier)
        )
    } else {
        "  <p>This extraction cannot be re-executed.</p>\n".to_string()
    };
    format!(
        "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>{id}</title></head>\n<body>\n  <h1>Dataset {id}</h1>\n  <table>\n    <tr><th>Node</th><td>{node}</td></tr>\n    <tr><th>Origin identifier</th><td>{origin}</td></tr>\n    <tr><th>Query</th><td><code>{query}</code></td></tr>\n    <tr><th>Extracted</th><td>{extracted}</td></tr>\n    <tr><th>Content digest</th><td><code>{digest}</code></td></tr>\n  </table>\n  <h2>Versions</h2>\n  <table>\n    <tr><th>Version</th><th>Published</th></tr>\n{versions}  </table>\n{reexecute}  <h2>References</h2>\n  <pre>{bibtex}</pre>\n</body>\n</html>\n",
        id = html_escape(&record.identifier),
        node = html_escape(&record.node_name),
        origin = html_escape(&record.node_origin_identifier),
        query = html_escape(&record.canonical_query),
        extracted = html_escape(&record.extraction_timestamp),
        digest = html_escape(&record.content_digest),
        versions = versions,
        reexecute = reexecute,
        bibtex = html_escape(&record.bibtex_blob),
    )
}

// ---------------------------------------------------------------------------
// HTTP service
// ---------------------------------------------------------------------------

/// Node handle the service re-executes against, when configured.
pub struct ServiceNode {
    pub dataset: NodeDataset,
    pub config: NodeConfig,
}

/// Serve the store over HTTP:
///   POST /register        body: XSAMS XML -> JSON record
///   GET  /resolve/{id}    -> JSON record
///   GET  /landing/{id}    -> HTML page
///   GET  /reexecute/{id}  -> XSAMS bytes, X-Digest-Match header
/// Runs until the process ends.
pub fn serve(store: Arc<QueryStore>, listener: tiny_http::Server, node: Option<ServiceNode>) {
    let listener = Arc::new(listener);
    let node = Arc::new(node);
    let workers = 4;
    let mut handles = Vec::new();
    for _ in 0..workers {
        let listener = Arc::clone(&listener);
        let store = Arc::clone(&store);
        let node = Arc::clone(&node);
        handles.push(std::thread::spawn(move || {
            for mut request in listener.incoming_requests() {
                let response = route(&mut request, &store, node.as_ref().as_ref());
                let _ = request.respond(response);
            }
        }));
    }
    for handle in handles {
        let _ = handle.join();
    }
}

type HttpResponse = tiny_http::Response<std::io::Cursor<Vec<u8>>>;

fn route(
    request: &mut tiny_http::Request,
    store: &QueryStore,
    node: Option<&ServiceNode>,
) -> HttpResponse {
    let method = request.method().clone();
    let url = request.url().to_string();
    let path = url.split('?').next().unwrap_or("").to_string();

    match (method, path.as_str()) {
        (tiny_http::Method::Post, "/register") => {
            let body = match node::read_body(request) {
                Ok(body) => body,
                Err(e) => return node::text_response(400, &format!("cannot read body: {e}")),
            };
            match store.register_bytes(&body) {
                Ok(record) => json_response(200, &record),
                Err(e @ StoreError::InvalidDocument(_)) => node::text_response(400, &e.to_string()),
                Err(e) => node::text_response(500, &e.to_string()),
            }
        }
        (tiny_http::Method::Get, path) if path.starts_with("/resolve/") => {
            let id = &path["/resolve/".len()..];
            match store.resolve(id) {
                Ok(record) => json_response(200, &record),
                Err(e @ StoreError::UnknownIdentifier(_)) => {
                    node::text_response(404, &e.to_string())
                }
                Err(e) => node::text_response(500, &e.to_string()),
            }
        }
        (tiny_http::Method::Get, path) if path.starts_with("/landing/") => {
            let id = &path["/landing/".len()..];
            match store.landing_page(id) {
                Ok(page) => tiny_http::Response::from_string(page)
                    .with_status_code(200)
                    .with_header(node::content_type("text/html; charset=utf-8")),
                Err(StoreError::UnknownIdentifier(id)) => {
                    let body = format!(
                        "<!DOCTYPE html>\n<html><body><h1>404</h1><p>Unknown identifier {}</p></body></html>\n",
                        html_escape(&id)
                    );
                    tiny_http::Response::from_string(body)
                        .with_status_code(404)
                        .with_header(node::content_type("text/html; charset=utf-8"))
                }
                Err(e) => node::text_response(500, &e.to_string()),
            }
        }
        (tiny_http::Method::Get, path) if path.starts_with("/reexecute/") => {
            let id = &path["/reexecute/".len()..];
            let node_handle = node.map(|n| (&n.dataset, &n.config));
            match store.reexecute(id, node_handle, &node::current_timestamp()) {
                Ok((doc, matches)) => {
                    let header = tiny_http::Header::from_bytes(
                        &b"X-Digest-Match"[..],
                        if matches { &b"true"[..] } else { &b"false"[..] },
                    )
                    .expect("static header");
                    tiny_http::Response::from_data(xsams_io::serialize(&doc))
                        .with_status_code(200)
                        .with_header(node::content_type("application/xml; charset=utf-8"))
                        .with_header(header)
                }
                Err(e @ StoreError::UnknownIdentifier(_)) => {
                    node::text_response(404, &e.to_string())
                }
                Err(e @ StoreError::NotReexecutable(_)) => node::text_response(409, &e.to_string()),
                Err(e @ StoreError::NodeUnavailable(_)) => node::text_response(503, &e.to_string()),
                Err(e) => node::text_response(500, &e.to_string()),
            }
        }
        _ => node::text_response(404, "not found"),
    }
}

fn json_response<T: Serialize>(status: u16, value: &T) -> HttpResponse {
    let body = serde_json::to_vec_pretty(value).unwrap_or_default();
    tiny_http::Response::from_data(body)
        .with_status_code(status)
        .with_header(node::content_type("application/json; charset=utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_depends_on_every_component() {
        let base = mint_identifier("ivo://n", "select * where ((A = 'x'))", "t1", "d1");
        assert!(base.starts_with(IDENTIFIER_SCHEME));
        assert_eq!(base.len(), IDENTIFIER_SCHEME.len() + 16);
        assert_eq!(
            base,
            mint_identifier("ivo://n", "select * where ((A = 'x'))", "t1", "d1")
        );
        for changed in [
            mint_identifier("ivo://m", "select * where ((A = 'x'))", "t1", "d1"),
            mint_identifier("ivo://n", "select * where ((A = 'y'))", "t1", "d1"),
            mint_identifier("ivo://n", "select * where ((A = 'x'))", "t2", "d1"),
            mint_identifier("ivo://n", "select * where ((A = 'x'))", "t1", "d2"),
        ] {
            assert_ne!(base, changed);
        }
    }

    #[test]
    fn unknown_identifier_resolution_fails() {
        let dir = tempfile::tempdir().unwrap();
        let store = QueryStore::open(dir.path().join("journal"), false).unwrap();
        assert!(matches!(
            store.resolve("vamdc-qs:0000000000000000"),
            Err(StoreError::UnknownIdentifier(_))
        ));
        assert!(store.is_empty());
    }

    #[test]
    fn landing_page_escapes_markup() {
        let record = ExtractionRecord {
            identifier: "vamdc-qs:abc".into(),
            node_name: "Node <x>".into(),
            node_origin_identifier: "ivo://n".into(),
            canonical_query: "select * where ((A >= 1))".into(),
            extraction_timestamp: "2015-12-03T14:40:21+01:00".into(),
            version_ids: vec![VersionStamp {
                version_id: "VER001".into(),
                timestamp: "2015-09-01T08:10:12+01:00".into(),
            }],
            content_digest: "00".repeat(32),
            bibtex_blob: "@misc{a-1,\n  year = {2015}\n}".into(),
            stored_document_path: None,
            reexecutable: true,
        };
        let page = render_landing_page(&record);
        assert!(page.contains("Node &lt;x&gt;"));
        assert!(page.contains("A &gt;= 1"));
        assert!(page.contains("VER001"));
        assert!(page.contains("/reexecute/vamdc-qs:abc"));
    }
}
