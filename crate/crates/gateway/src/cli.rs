//! Command-line front end. Prints JSON (or plain text where noted) to
//! stdout; errors go to stderr with exit code 2 for validation failures
//! and 1 for everything else.

use std::io::{Read, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use stagewise_core::agent::Decision;
use stagewise_core::domain::record::read_corpus;
use stagewise_core::domain::{EventDraft, Stage};
use stagewise_core::layout::DataLayout;
use stagewise_core::retrieval::{build_index, save_index};

use crate::app::{App, Settings};
use crate::error::GatewayError;

type Result<T> = std::result::Result<T, GatewayError>;

#[derive(Parser, Debug)]
#[command(name = "stagewise", version, about = "Stage-wise search sessions with editable intermediate results")]
pub struct Cli {
    /// Data directory (index, sessions, profiles, store, batches).
    #[arg(long, global = true, env = "NEXT_SEARCH_DATA_DIR", default_value = "./data")]
    pub data: PathBuf,
    /// Backend config file.
    #[arg(long, global = true, env = "NEXT_SEARCH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Index this corpus at startup instead of loading the stored index.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build and persist the retrieval index.
    #[command(subcommand)]
    Index(IndexCmd),
    #[command(subcommand)]
    Session(SessionCmd),
    /// Feedback suggestions and preference learning.
    #[command(subcommand)]
    Agent(AgentCmd),
    /// Debug template store.
    #[command(subcommand)]
    Store(StoreCmd),
    /// Compile logs from a date window into a training batch.
    Compile(CompileArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Subcommand, Debug)]
pub enum IndexCmd {
    Build {
        /// Output path; defaults to `<data>/index`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum SessionCmd {
    /// Open a session and print its id.
    Open {
        #[arg(long)]
        query: String,
        #[arg(long, default_value = "anonymous")]
        user: String,
        #[arg(long)]
        id: Option<String>,
    },
    /// Submit feedback drafts, one JSON object per line ("-" reads stdin).
    Feedback {
        #[arg(long)]
        id: String,
        #[arg(long)]
        file: PathBuf,
    },
    /// Re-execute the log from scratch and print the answer.
    Replay {
        #[arg(long)]
        id: String,
    },
    /// Print the session state, or one stage's output.
    Show {
        #[arg(long)]
        id: String,
        #[arg(long)]
        stage: Option<Stage>,
    },
    /// Re-run stages left dirty or failed.
    Retry {
        #[arg(long)]
        id: String,
    },
    List,
}

#[derive(Subcommand, Debug)]
pub enum AgentCmd {
    Learn {
        #[arg(long)]
        user: String,
    },
    Suggest {
        #[arg(long)]
        session: String,
        #[arg(long)]
        stage: Stage,
        /// Ask the configured language model instead of the rules.
        #[arg(long)]
        llm: bool,
    },
    /// Print the rendered prompt for a stage.
    Prompt {
        #[arg(long)]
        session: String,
        #[arg(long)]
        stage: Stage,
    },
    Confirm {
        #[arg(long)]
        session: String,
        #[arg(long)]
        proposal: String,
        #[arg(long, value_parser = parse_decision)]
        decision: Decision,
    },
}

#[derive(Subcommand, Debug)]
pub enum StoreCmd {
    /// Package a session's feedback into a template and publish it.
    Package {
        #[arg(long)]
        session: String,
        #[arg(long)]
        title: Option<String>,
        #[arg(long, default_value_t = 0)]
        price: u64,
        /// Publish even without a positive rating.
        #[arg(long)]
        publish: bool,
    },
    Match {
        #[arg(long)]
        query: String,
    },
    Apply {
        #[arg(long)]
        template: String,
        #[arg(long)]
        session: String,
        #[arg(long, default_value = "anonymous")]
        user: String,
    },
    Purchase {
        #[arg(long)]
        template: String,
        #[arg(long)]
        user: String,
    },
    Grant {
        #[arg(long)]
        user: String,
        #[arg(long)]
        credits: u64,
    },
    Balances,
    Show {
        #[arg(long)]
        template: Option<String>,
    },
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    /// First day, inclusive (YYYY-MM-DD).
    #[arg(long)]
    pub from: NaiveDate,
    /// Last day, inclusive.
    #[arg(long)]
    pub to: NaiveDate,
    /// Directory of session logs; defaults to `<data>/sessions`.
    #[arg(long)]
    pub logs: Option<PathBuf>,
    /// Output root; defaults to `<data>/batches`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

fn parse_decision(s: &str) -> std::result::Result<Decision, String> {
    match s {
        "accept" => Ok(Decision::Accept),
        "reject" => Ok(Decision::Reject),
        other => Err(format!("expected accept or reject, got {other:?}")),
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(GatewayError::Internal(e.to_string())),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| GatewayError::Internal(e.to_string()))?;
    emit(&(text + "\n"))
}

fn settings(cli: &Cli) -> Settings {
    Settings { data_dir: cli.data.clone(), config: cli.config.clone(), corpus: cli.corpus.clone() }
}

fn read_drafts(file: &PathBuf) -> Result<Vec<EventDraft>> {
    let text = if file.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        s
    } else {
        std::fs::read_to_string(file).map_err(|e| GatewayError::BadRequest(format!("{}: {e}", file.display())))?
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| GatewayError::BadRequest(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = settings(&cli);
    match cli.command {
        Command::Index(IndexCmd::Build { out }) => {
            let corpus = cli.corpus.ok_or_else(|| GatewayError::BadRequest("index build needs --corpus".into()))?;
            let index = build_index(read_corpus(&corpus)?)?;
            let out = out.unwrap_or_else(|| DataLayout::new(&cli.data).index());
            if let Some(dir) = out.parent() {
                std::fs::create_dir_all(dir).map_err(|e| GatewayError::Internal(e.to_string()))?;
            }
            save_index(&index, &out)?;
            let stats = index.stats();
            print_json(&serde_json::json!({
                "path": out,
                "total_chunks": stats.total_chunks,
                "total_tokens": stats.total_tokens,
                "avg_chunk_length": stats.avg_chunk_length,
            }))
        }
        Command::Session(cmd) => session(&App::open(&settings)?, cmd),
        Command::Agent(cmd) => agent(&App::open(&settings)?, cmd),
        Command::Store(cmd) => store(&App::open(&settings)?, cmd),
        Command::Compile(a) => {
            let app = App::open(&settings)?;
            let compiled = app.compile(a.from, a.to, a.logs.as_deref(), a.out.as_deref())?;
            print_json(&compiled)
        }
        Command::Serve(a) => {
            let app = Arc::new(App::open(&settings)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| GatewayError::Internal(e.to_string()))?;
            let addr = SocketAddr::new(a.host, a.port);
            rt.block_on(crate::http::serve(app, addr, |bound| {
                println!("listening on http://{bound}");
            }))
            .map_err(|e| GatewayError::Internal(format!("serve: {e}")))
        }
    }
}

fn session(app: &App, cmd: SessionCmd) -> Result<()> {
    match cmd {
        SessionCmd::Open { query, user, id } => {
            let shared = app.open_session(&query, &user, id)?;
            emit(&format!("{}\n", shared.id()))
        }
        SessionCmd::Feedback { id, file } => {
            let mut out = Vec::new();
            for draft in read_drafts(&file)? {
                out.push(app.submit(&id, draft)?);
            }
            print_json(&out)
        }
        SessionCmd::Replay { id } => {
            let state = app.replay(&id)?;
            emit(&state.answer.render())
        }
        SessionCmd::Show { id, stage } => {
            let state = app.state(&id)?;
            match stage {
                Some(s) => print_json(&state.stage_json(s)),
                None => print_json(&*state),
            }
        }
        SessionCmd::Retry { id } => print_json(&app.retry(&id)?),
        SessionCmd::List => {
            let ids = app.layout().session_ids().map_err(|e| GatewayError::Internal(e.to_string()))?;
            emit(&ids.iter().map(|id| format!("{id}\n")).collect::<String>())
        }
    }
}

fn agent(app: &App, cmd: AgentCmd) -> Result<()> {
    match cmd {
        AgentCmd::Learn { user } => print_json(&app.learn(&user)?),
        AgentCmd::Suggest { session, stage, llm } => print_json(&app.proposals(&session, stage, llm)?),
        AgentCmd::Prompt { session, stage } => emit(&format!("{}\n", app.prompt(&session, stage)?)),
        AgentCmd::Confirm { session, proposal, decision } => print_json(&app.confirm(&session, &proposal, decision)?),
    }
}

fn store(app: &App, cmd: StoreCmd) -> Result<()> {
    match cmd {
        StoreCmd::Package { session, title, price, publish } => {
            let title = match title {
                Some(t) => t,
                None => app.state(&session)?.query.text.clone(),
            };
            print_json(&app.package(&session, &title, price, publish)?)
        }
        StoreCmd::Match { query } => print_json(&app.match_query(&query)),
        StoreCmd::Apply { template, session, user } => print_json(&app.apply(&template, &session, &user)?),
        StoreCmd::Purchase { template, user } => print_json(&app.purchase(&template, &user)?),
        StoreCmd::Grant { user, credits } => print_json(&app.grant(&user, credits)?),
        StoreCmd::Balances => print_json(&app.balances()),
        StoreCmd::Show { template: Some(t) } => print_json(&app.template(&t, None)?),
        StoreCmd::Show { template: None } => print_json(&app.templates()),
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
