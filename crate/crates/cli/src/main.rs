use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use paperchat_core::{ChatTurn, DistillationReport, DocId, Settings, Workspace, WorkspaceError};
use paperchat_service::ApiError;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "paperchat", version, about = "Ground conversations in a corpus of papers")]
struct Cli {
    /// Use offline backends instead of the configured HTTP endpoints.
    #[arg(long, global = true)]
    mock: bool,
    /// Print the JSON payloads the HTTP API returns.
    #[arg(long, global = true)]
    json: bool,
    /// Corpus directory.
    #[arg(long, global = true, value_name = "DIR")]
    corpus: Option<PathBuf>,
    /// TOML settings file, applied after the environment.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// JSON array of scripted chat replies, used with --mock.
    #[arg(long, global = true, value_name = "FILE")]
    script: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add a plain-text paper to the corpus.
    Ingest {
        file: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long)]
        title: String,
    },
    /// Condense a raw document into its distilled version.
    Distill {
        doc_id: String,
        #[arg(long)]
        ratio: Option<f64>,
        /// Print the full report as JSON.
        #[arg(long)]
        report: bool,
    },
    /// Manage the vector index.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Answer one question with no history.
    Ask {
        question: String,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Interactive conversation; one question per line.
    Chat {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Subcommand)]
enum IndexAction {
    /// Re-chunk and re-embed every document.
    Rebuild,
}

#[derive(Debug)]
enum Failure {
    Pipeline(ApiError),
    Io(String),
}

impl From<WorkspaceError> for Failure {
    fn from(e: WorkspaceError) -> Self {
        Failure::Pipeline(e.into())
    }
}

impl From<paperchat_core::ConfigError> for Failure {
    fn from(e: paperchat_core::ConfigError) -> Self {
        WorkspaceError::from(e).into()
    }
}

fn error_line(f: &Failure) -> String {
    match f {
        Failure::Pipeline(e) => match &e.stage {
            Some(stage) => format!("error: {} at stage {stage}: {}", e.code.as_str(), e.message),
            None => format!("error: {}: {}", e.code.as_str(), e.message),
        },
        Failure::Io(msg) => format!("error: io: {msg}"),
    }
}

fn settings(cli: &Cli, k: Option<usize>) -> Result<Settings, Failure> {
    let mut s = Settings::from_env()?;
    if let Some(path) = &cli.config {
        s.apply_file(path)?;
    }
    if cli.mock {
        s.mock_mode = true;
    }
    if let Some(dir) = &cli.corpus {
        s.corpus_dir = dir.clone();
    }
    if let Some(script) = &cli.script {
        s.mock_script = Some(script.clone());
    }
    if let Some(k) = k {
        s.k_retrieve = k;
    }
    s.validate()?;
    Ok(s)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("payload serializes"));
}

fn print_report(r: &DistillationReport) {
    let verdict = if r.accepted { "accepted" } else { "rejected" };
    println!("{verdict}: {} -> {}", r.original_doc_id, r.distilled_doc_id);
    println!(
        "overall ratio {:.3} (target {:.3} +/- {:.3}) after {} attempt(s)",
        r.overall_ratio, r.target_ratio, r.ratio_tolerance, r.attempts
    );
}

fn print_turn(turn: &ChatTurn, verbose: bool) {
    if verbose {
        println!("standalone question: {}", turn.standalone_question);
        let keys: Vec<&str> = turn.retrieved.hits.iter().map(|h| h.citation_key.as_str()).collect();
        println!("retrieved: {}", keys.join("; "));
        println!();
    }
    println!("{}", turn.answer);
    let report = &turn.citation_report;
    if !report.detected.is_empty() {
        println!();
        for key in &report.grounded {
            println!("[grounded] {key}");
        }
        for key in &report.ungrounded {
            println!("[ungrounded] {key}");
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Ingest { file, key, title } => {
            let text = std::fs::read_to_string(file).map_err(|e| Failure::Io(format!("{}: {e}", file.display())))?;
            let mut ws = Workspace::open(settings(cli, None)?)?;
            let meta = ws.ingest(&text, key, title)?;
            if cli.json {
                print_json(&json!({ "doc_id": meta.doc_id }));
            } else {
                println!("{}", meta.doc_id);
            }
        }
        Command::Distill { doc_id, ratio, report } => {
            let mut ws = Workspace::open(settings(cli, None)?)?;
            let d = ws.distill(&DocId::new(doc_id.clone()), *ratio)?;
            if cli.json || *report {
                print_json(&d.report);
            } else {
                print_report(&d.report);
            }
        }
        Command::Index {
            action: IndexAction::Rebuild,
        } => {
            let mut ws = Workspace::open(settings(cli, None)?)?;
            let n = ws.rebuild_index()?;
            if cli.json {
                print_json(&json!({ "chunks_indexed": n }));
            } else {
                println!("indexed {n} chunks");
            }
        }
        Command::Ask { question, k } => {
            let ws = Workspace::open(settings(cli, *k)?)?;
            let mut session = ws.new_session("ask");
            let turn = ws.run_turn(&mut session, question)?;
            if cli.json {
                print_json(&turn);
            } else {
                print_turn(&turn, false);
            }
        }
        Command::Chat { k } => {
            let ws = Workspace::open(settings(cli, *k)?)?;
            chat_loop(cli, &ws)?;
        }
        Command::Serve { port, host } => {
            let ws = Workspace::open(settings(cli, None)?)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Failure::Io(format!("bad address {host}:{port}: {e}")))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
            eprintln!("listening on http://{addr}");
            rt.block_on(paperchat_service::serve(addr, ws))
                .map_err(|e| Failure::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn chat_loop(cli: &Cli, ws: &Workspace) -> Result<(), Failure> {
    let mut session = ws.new_session("repl");
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        if !cli.json {
            print!("> ");
            io::stdout().flush().ok();
        }
        let Some(line) = lines.next() else { break };
        let line = line.map_err(|e| Failure::Io(e.to_string()))?;
        let query = line.trim();
        if query.is_empty() {
            continue;
        }
        if query == "/quit" || query == "/exit" {
            break;
        }
        match ws.run_turn(&mut session, query) {
            Ok(turn) if cli.json => println!("{}", serde_json::to_string(&turn).expect("turn serializes")),
            Ok(turn) => {
                print_turn(&turn, true);
                println!();
            }
            Err(e) => eprintln!("{}", error_line(&Failure::from(e))),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", error_line(&f));
            ExitCode::from(1)
        }
    }
}
