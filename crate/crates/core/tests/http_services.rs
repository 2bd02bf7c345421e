//! Wire-level checks of the node endpoint and the query-store service.

mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use common::*;
use xsamskit::model::Timestamp;
use xsamskit::node::{self, NodeConfig};
use xsamskit::store::{self, QueryStore, ServiceNode};

struct HttpReply {
    status: u16,
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

impl HttpReply {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    fn body_text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

/// One-shot HTTP/1.0-style exchange over a fresh connection.
fn http(addr: std::net::SocketAddr, method: &str, path: &str, body: Option<&[u8]>) -> HttpReply {
    let mut stream = TcpStream::connect(addr).expect("connect");
    let body = body.unwrap_or_default();
    let request = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Length: {}\r\n\r\n",
        body.len()
    );
    stream.write_all(request.as_bytes()).expect("send head");
    stream.write_all(body).expect("send body");
    stream.flush().expect("flush");

    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).expect("read reply");
    let split = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .expect("header terminator");
    let head = String::from_utf8_lossy(&raw[..split]).into_owned();
    let mut lines = head.lines();
    let status: u16 = lines
        .next()
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|s| s.parse().ok())
        .expect("status line");
    let headers = lines
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    HttpReply {
        status,
        headers,
        body: raw[split + 4..].to_vec(),
    }
}

fn start_node_server(store: Option<Arc<QueryStore>>) -> std::net::SocketAddr {
    let dataset = node::load_dataset(fixture_path("basecol_holdings.xml")).unwrap();
    let config = NodeConfig::from_file(fixture_path("basecol.node")).unwrap();
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind");
    let addr = match server.server_addr() {
        tiny_http::ListenAddr::IP(addr) => addr,
        other => panic!("unexpected listen address {other:?}"),
    };
    std::thread::spawn(move || {
        node::serve(
            dataset,
            config,
            server,
            Some(Timestamp::new("2015-12-03T14:40:21+01:00")),
            store,
        );
    });
    addr
}

#[test]
fn tap_endpoint_answers_urlencoded_queries() {
    let addr = start_node_server(None);
    let encoded: String =
        form_urlencoded_encode("select * where ((target.MoleculeStoichiometricFormula = 'CO')) AND ((collider.AtomSymbol = 'he'))");
    let path =
        format!("/tap/sync?LANG=VSS2&REQUEST=doQuery&FORMAT=XSAMS&QUERY={encoded}");
    let reply = http(addr, "GET", &path, None);
    assert_eq!(reply.status, 200);
    let (answer, _) = xsamskit::io::parse(&reply.body).expect("XSAMS body");
    let expected = parse_fixture("basecol_extraction.xml");
    assert_origin_blocks_match(&answer.origins[0], &expected.origins[0], "tap answer");

    // Parameter validation.
    let bad = http(addr, "GET", "/tap/sync?FORMAT=XSAMS&QUERY=x", None);
    assert_eq!(bad.status, 400);
    let missing = http(addr, "GET", "/tap/sync?REQUEST=doQuery&FORMAT=XSAMS", None);
    assert_eq!(missing.status, 400);
    let wrong_path = http(addr, "GET", "/somewhere", None);
    assert_eq!(wrong_path.status, 404);
}

fn form_urlencoded_encode(text: &str) -> String {
    form_urlencoded::byte_serialize(text.as_bytes()).collect()
}

#[test]
fn tap_endpoint_can_mint_identifiers_at_extraction_time() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal");
    let store = Arc::new(QueryStore::open(&journal, false).unwrap());
    let addr = start_node_server(Some(Arc::clone(&store)));

    let encoded = form_urlencoded_encode(
        "select * where ((target.MoleculeStoichiometricFormula = 'CO')) AND ((collider.AtomSymbol = 'he'))",
    );
    let path = format!("/tap/sync?REQUEST=doQuery&FORMAT=XSAMS&QUERY={encoded}");
    let reply = http(addr, "GET", &path, None);
    assert_eq!(reply.status, 200);
    let identifier = reply
        .header("X-Dataset-Identifier")
        .expect("minted identifier")
        .to_string();
    assert!(identifier.starts_with("vamdc-qs:"));
    let record = store.resolve(&identifier).expect("registered");
    assert_eq!(
        xsamskit::canonical_digest(&xsamskit::io::parse(&reply.body).unwrap().0),
        record.content_digest
    );
}

#[test]
fn store_service_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal");
    let store = Arc::new(QueryStore::open(&journal, true).unwrap());

    let dataset = node::load_dataset(fixture_path("basecol_holdings.xml")).unwrap();
    let config = NodeConfig::from_file(fixture_path("basecol.node")).unwrap();
    let service_node = ServiceNode {
        dataset: dataset.clone(),
        config: config.clone(),
    };

    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind");
    let addr = match server.server_addr() {
        tiny_http::ListenAddr::IP(addr) => addr,
        other => panic!("unexpected listen address {other:?}"),
    };
    let serve_store = Arc::clone(&store);
    std::thread::spawn(move || {
        store::serve(serve_store, server, Some(service_node));
    });

    // Register the extraction the node produces for the reference query.
    let ast = xsamskit::parse_query(COLLISION_QUERY).unwrap();
    let extraction = node::answer(
        &dataset,
        &config,
        &ast,
        &Timestamp::new("2015-12-03T14:40:21+01:00"),
    )
    .unwrap();
    let body = xsamskit::io::serialize(&extraction);
    let reply = http(addr, "POST", "/register", Some(&body));
    assert_eq!(reply.status, 200, "{}", reply.body_text());
    let record: serde_json::Value = serde_json::from_slice(&reply.body).unwrap();
    let identifier = record["identifier"].as_str().unwrap().to_string();

    // Machine-readable resolution.
    let resolved = http(addr, "GET", &format!("/resolve/{identifier}"), None);
    assert_eq!(resolved.status, 200);
    let resolved_json: serde_json::Value = serde_json::from_slice(&resolved.body).unwrap();
    assert_eq!(resolved_json["identifier"].as_str().unwrap(), identifier);
    assert_eq!(
        resolved_json["content_digest"],
        record["content_digest"]
    );

    // Human-readable landing page.
    let landing = http(addr, "GET", &format!("/landing/{identifier}"), None);
    assert_eq!(landing.status, 200);
    let page = landing.body_text();
    assert!(page.contains("VER001"));
    assert!(page.contains("target.MoleculeStoichiometricFormula"));

    // Re-execution against the configured node.
    let reexecuted = http(addr, "GET", &format!("/reexecute/{identifier}"), None);
    assert_eq!(reexecuted.status, 200);
    assert_eq!(reexecuted.header("X-Digest-Match"), Some("true"));
    assert!(xsamskit::io::parse(&reexecuted.body).is_ok());

    // Unknown identifiers.
    let unknown = http(addr, "GET", "/resolve/vamdc-qs:0000000000000000", None);
    assert_eq!(unknown.status, 404);
    let unknown_page = http(addr, "GET", "/landing/vamdc-qs:0000000000000000", None);
    assert_eq!(unknown_page.status, 404);
    assert!(unknown_page.body_text().contains("404"));

    // A non-reexecutable record is refused with 409.
    let merged_bytes = fixture_bytes("spectcol_merged.xml");
    let merged_reply = http(addr, "POST", "/register", Some(&merged_bytes));
    assert_eq!(merged_reply.status, 200, "{}", merged_reply.body_text());
    let merged_record: serde_json::Value =
        serde_json::from_slice(&merged_reply.body).unwrap();
    assert_eq!(merged_record["reexecutable"], serde_json::json!(false));
    let refused = http(
        addr,
        "GET",
        &format!("/reexecute/{}", merged_record["identifier"].as_str().unwrap()),
        None,
    );
    assert_eq!(refused.status, 409);

    // The journal now holds both records for the next restart.
    drop(store);
    let reopened = QueryStore::open(&journal, true).unwrap();
    assert_eq!(reopened.len(), 2);
    assert!(reopened.resolve(&identifier).is_ok());
}
