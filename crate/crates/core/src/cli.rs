//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 findings (validation errors, digest mismatch),
//! 2 parse failure, 64 usage error, 66 unreadable input file. Subcommands
//! that produce documents accept `--now` so output is reproducible.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::merge::{self, MatchSpec, ToolConfig};
use crate::model::Timestamp;
use crate::node::{self, NodeConfig};
use crate::store::{self, QueryStore, ServiceNode};
use crate::{bibtex, io as xsams_io, query, validator};

const EXIT_OK: i32 = 0;
const EXIT_FINDINGS: i32 = 1;
const EXIT_PARSE: i32 = 2;
const EXIT_USAGE: i32 = 64;
const EXIT_NOINPUT: i32 = 66;

#[derive(Parser)]
#[command(
    name = "xsamskit",
    about = "Provenance-aware toolkit for federated atomic and molecular datasets",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a document against the provenance rules.
    Validate {
        /// XSAMS file to check.
        file: PathBuf,
    },
    /// Print BibTeX entries for a document's sources.
    Bibtex {
        /// XSAMS file to cite.
        file: PathBuf,
        /// Skip node self-reference sources.
        #[arg(long)]
        no_self: bool,
    },
    /// Cross-match a spectroscopic and a collisional document.
    Merge(MergeArgs),
    /// Run a query against a simulated node.
    Query(QueryArgs),
    /// Query-store operations.
    Store {
        #[command(subcommand)]
        command: StoreCommand,
    },
}

#[derive(Args)]
struct MergeArgs {
    /// Document contributing energy levels and radiative transitions.
    #[arg(long)]
    spectroscopic: PathBuf,
    /// Document contributing collisional processes.
    #[arg(long)]
    collisional: PathBuf,
    /// Comma-separated quantum numbers states must agree on, e.g. J or J,v.
    #[arg(long, value_delimiter = ',')]
    match_on: Vec<String>,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed merge timestamp (RFC 3339 with offset).
    #[arg(long)]
    now: Option<String>,
    #[arg(long, default_value = "Spectcol")]
    tool_name: String,
    #[arg(
        long,
        default_value = "http://www.vamdc.org/activities/research/software/spectcol/"
    )]
    tool_homepage: String,
    /// Comment describing the merge, stamped onto the root origin.
    #[arg(long)]
    tool_comment: Option<String>,
}

#[derive(Args)]
struct QueryArgs {
    /// Node configuration file.
    #[arg(long)]
    node: PathBuf,
    /// Node holdings (XSAMS); `<holdings>.attrs` supplies query attributes.
    #[arg(long)]
    holdings: PathBuf,
    /// Query text; required unless --serve is given.
    #[arg(long)]
    query: Option<String>,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed extraction timestamp (RFC 3339 with offset).
    #[arg(long)]
    now: Option<String>,
    /// Serve GET /tap/sync on this address instead of answering once.
    #[arg(long)]
    serve: Option<String>,
    /// Register every answer in this query-store journal; each extraction
    /// is minted its identifier on the way out.
    #[arg(long)]
    journal: Option<PathBuf>,
}

#[derive(Subcommand)]
enum StoreCommand {
    /// Serve the query store over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8321")]
        addr: String,
        /// Journal file; defaults to $QS_JOURNAL_PATH.
        #[arg(long)]
        journal: Option<PathBuf>,
        /// Node holdings for /reexecute.
        #[arg(long, requires = "node")]
        holdings: Option<PathBuf>,
        /// Node configuration for /reexecute.
        #[arg(long, requires = "holdings")]
        node: Option<PathBuf>,
        /// Do not retain registered document bytes.
        #[arg(long)]
        no_docs: bool,
    },
    /// Register an extraction and print its record.
    Register {
        file: PathBuf,
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long)]
        no_docs: bool,
    },
    /// Print the record behind an identifier.
    Resolve {
        identifier: String,
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Print the landing page behind an identifier.
    Landing {
        identifier: String,
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Re-run a stored query against a node and compare digests.
    Reexecute {
        identifier: String,
        #[arg(long)]
        holdings: PathBuf,
        #[arg(long)]
        node: PathBuf,
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        now: Option<String>,
    },
}

/// Run the CLI; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path)
        .map_err(|e| Failure::new(EXIT_NOINPUT, format!("{}: {e}", path.display())))
}

fn parse_document(path: &Path) -> Result<crate::model::XsamsDocument, Failure> {
    let bytes = read_file(path)?;
    let (doc, _) = xsams_io::parse(&bytes)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    Ok(doc)
}

fn parse_now(now: &Option<String>) -> Result<Timestamp, Failure> {
    match now {
        None => Ok(node::current_timestamp()),
        Some(text) => {
            let ts = Timestamp::new(text.clone());
            if ts.instant().is_none() {
                return Err(Failure::new(
                    EXIT_USAGE,
                    format!("--now {text:?} is not an RFC 3339 instant"),
                ));
            }
            Ok(ts)
        }
    }
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| Failure::new(EXIT_NOINPUT, format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Failure::new(EXIT_FINDINGS, e.to_string()))
        }
    }
}

fn journal_path(journal: Option<PathBuf>) -> Result<PathBuf, Failure> {
    match journal {
        Some(path) => Ok(path),
        None => std::env::var_os(store::JOURNAL_ENV_VAR)
            .map(PathBuf::from)
            .ok_or_else(|| {
                Failure::new(
                    EXIT_USAGE,
                    format!("--journal or ${} is required", store::JOURNAL_ENV_VAR),
                )
            }),
    }
}

fn open_store(journal: Option<PathBuf>, retain_documents: bool) -> Result<QueryStore, Failure> {
    let path = journal_path(journal)?;
    QueryStore::open(path, retain_documents)
        .map_err(|e| Failure::new(EXIT_FINDINGS, e.to_string()))
}

fn load_node(
    holdings: &Path,
    config: &Path,
) -> Result<(node::NodeDataset, NodeConfig), Failure> {
    let dataset = node::load_dataset(holdings).map_err(node_failure)?;
    let config = NodeConfig::from_file(config).map_err(node_failure)?;
    Ok((dataset, config))
}

fn node_failure(e: node::NodeError) -> Failure {
    let code = match &e {
        node::NodeError::Io { .. } => EXIT_NOINPUT,
        node::NodeError::Parse(_) => EXIT_PARSE,
        _ => EXIT_USAGE,
    };
    Failure::new(code, e.to_string())
}

fn dispatch(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Validate { file } => {
            let bytes = read_file(&file)?;
            let doc = match xsams_io::parse(&bytes) {
                Ok((doc, _)) => doc,
                Err(e) => {
                    eprintln!("error: {}: {e}", file.display());
                    return Ok(EXIT_PARSE);
                }
            };
            let report = validator::validate(&doc);
            println!("{}", validator::explain(&report));
            Ok(if report.is_valid() { EXIT_OK } else { EXIT_FINDINGS })
        }
        Command::Bibtex { file, no_self } => {
            let doc = parse_document(&file)?;
            let text = bibtex::doc_to_bibtex_filtered(&doc, !no_self);
            if !text.is_empty() {
                println!("{text}");
            }
            Ok(EXIT_OK)
        }
        Command::Merge(args) => {
            let spec_doc = parse_document(&args.spectroscopic)?;
            let coll_doc = parse_document(&args.collisional)?;
            if args.match_on.is_empty() {
                return Err(Failure::new(EXIT_USAGE, "--match-on requires at least one key"));
            }
            let now = parse_now(&args.now)?;
            let tool = ToolConfig {
                name: args.tool_name,
                homepage_url: args.tool_homepage,
                comment: args.tool_comment,
            };
            let merged = merge::merge(
                &spec_doc,
                &coll_doc,
                &MatchSpec {
                    match_keys: args.match_on,
                },
                &tool,
                &now,
            )
            .map_err(|e| Failure::new(EXIT_FINDINGS, e.to_string()))?;
            emit(&args.out, &xsams_io::serialize(&merged))?;
            Ok(EXIT_OK)
        }
        Command::Query(args) => {
            let (dataset, config) = load_node(&args.holdings, &args.node)?;
            let store = match &args.journal {
                Some(journal) => Some(Arc::new(
                    QueryStore::open(journal, true)
                        .map_err(|e| Failure::new(EXIT_FINDINGS, e.to_string()))?,
                )),
                None => None,
            };
            if let Some(addr) = args.serve {
                let listener = tiny_http::Server::http(&addr)
                    .map_err(|e| Failure::new(EXIT_FINDINGS, format!("cannot bind {addr}: {e}")))?;
                eprintln!("serving node {} on http://{addr}/tap/sync", config.name);
                let fixed_now = args.now.map(Timestamp::new);
                node::serve(dataset, config, listener, fixed_now, store);
                return Ok(EXIT_OK);
            }
            let text = args
                .query
                .ok_or_else(|| Failure::new(EXIT_USAGE, "--query is required without --serve"))?;
            let ast = query::parse_query(&text)
                .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
            let now = parse_now(&args.now)?;
            let answer = node::answer(&dataset, &config, &ast, &now)
                .map_err(|e| Failure::new(EXIT_FINDINGS, e.to_string()))?;
            if let Some(store) = &store {
                let record = store
                    .register(&answer)
                    .map_err(|e| Failure::new(EXIT_FINDINGS, e.to_string()))?;
                eprintln!("registered {}", record.identifier);
            }
            emit(&args.out, &xsams_io::serialize(&answer))?;
            Ok(EXIT_OK)
        }
        Command::Store { command } => dispatch_store(command),
    }
}

fn dispatch_store(command: StoreCommand) -> Result<i32, Failure> {
    match command {
        StoreCommand::Serve {
            addr,
            journal,
            holdings,
            node: node_config,
            no_docs,
        } => {
            let store = Arc::new(open_store(journal, !no_docs)?);
            let node = match (holdings, node_config) {
                (Some(holdings), Some(config)) => {
                    let (dataset, config) = load_node(&holdings, &config)?;
                    Some(ServiceNode { dataset, config })
                }
                _ => None,
            };
            let listener = tiny_http::Server::http(&addr)
                .map_err(|e| Failure::new(EXIT_FINDINGS, format!("cannot bind {addr}: {e}")))?;
            eprintln!("query store listening on http://{addr}/");
            store::serve(store, listener, node);
            Ok(EXIT_OK)
        }
        StoreCommand::Register {
            file,
            journal,
            no_docs,
        } => {
            let doc = parse_document(&file)?;
            let store = open_store(journal, !no_docs)?;
            let record = store
                .register(&doc)
                .map_err(|e| Failure::new(EXIT_FINDINGS, e.to_string()))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&record).expect("record serializes")
            );
            Ok(EXIT_OK)
        }
        StoreCommand::Resolve {
            identifier,
            journal,
        } => {
            let store = open_store(journal, false)?;
            match store.landing_record(&identifier) {
                Ok(json) => {
                    println!("{json}");
                    Ok(EXIT_OK)
                }
                Err(e) => Err(Failure::new(EXIT_FINDINGS, e.to_string())),
            }
        }
        StoreCommand::Landing {
            identifier,
            journal,
        } => {
            let store = open_store(journal, false)?;
            let page = store
                .landing_page(&identifier)
                .map_err(|e| Failure::new(EXIT_FINDINGS, e.to_string()))?;
            println!("{page}");
            Ok(EXIT_OK)
        }
        StoreCommand::Reexecute {
            identifier,
            holdings,
            node: node_config,
            journal,
            out,
            now,
        } => {
            let store = open_store(journal, false)?;
            let (dataset, config) = load_node(&holdings, &node_config)?;
            let now = parse_now(&now)?;
            let (doc, matches) = store
                .reexecute(&identifier, Some((&dataset, &config)), &now)
                .map_err(|e| Failure::new(EXIT_FINDINGS, e.to_string()))?;
            if let Some(out) = out {
                emit(&Some(out), &xsams_io::serialize(&doc))?;
            }
            println!("match={matches}");
            Ok(if matches { EXIT_OK } else { EXIT_FINDINGS })
        }
    }
}
