//! Operations shared by the CLI and the HTTP service. Every state change
//! goes through the session runtime (and therefore validation).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use stagewise_core::agent::{
    self, load_profile, load_proposals, render_prompt, save_profile, save_proposals, suggest_feedback,
    suggest_with_llm, Decision, Proposal, ProposalStatus,
};
use stagewise_core::domain::record::read_corpus;
use stagewise_core::domain::{Action, EventDraft, FeedbackEvent, Stage, Timestamp, UserProfile, UserQuery};
use stagewise_core::layout::DataLayout;
use stagewise_core::offline::{compile, export_batch, load_logs, Manifest, Window};
use stagewise_core::pipeline::{GeneratorKind, LlmClient, LlmGenerator, PipelineConfig};
use stagewise_core::retrieval::{build_index, load_index};
use stagewise_core::session::{read_log, replay, LogRecord, SessionRuntime, SessionState, SharedSession, SubmitReport};
use stagewise_core::store::{
    apply_template, package_template, ApplyReport, DebugTemplate, LedgerEntry, Store, UsageKind,
};
use stagewise_core::{Index, Pipeline};
use tokio::sync::watch;

use crate::error::GatewayError;
use crate::llm::HttpLlmClient;

type Result<T> = std::result::Result<T, GatewayError>;

/// Where data lives and which corpus/config to use.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    pub data_dir: PathBuf,
    /// Backend config; defaults to `<data_dir>/config` when that exists.
    pub config: Option<PathBuf>,
    /// Corpus to index at startup instead of loading `<data_dir>/index`.
    pub corpus: Option<PathBuf>,
}

pub struct App {
    layout: DataLayout,
    runtime: SessionRuntime,
    store: Mutex<Store>,
    llm: Option<Arc<dyn LlmClient>>,
    /// Record counts per session, for push subscribers.
    watchers: Mutex<HashMap<String, watch::Sender<usize>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Submitted {
    pub event: FeedbackEvent,
    pub report: SubmitReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Confirmed {
    pub proposal: Proposal,
    pub report: Option<SubmitReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Learned {
    pub profile: UserProfile,
    pub new_sessions: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Compiled {
    pub path: PathBuf,
    pub manifest: Manifest,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Balances {
    pub escrow: i64,
    pub balances: BTreeMap<String, i64>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn io(e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Internal(e.to_string())
}

pub fn load_index_or_corpus(settings: &Settings, layout: &DataLayout) -> Result<Index> {
    if let Some(corpus) = &settings.corpus {
        return Ok(build_index(read_corpus(corpus)?)?);
    }
    let path = layout.index();
    if !path.is_file() {
        return Err(GatewayError::BadRequest(format!(
            "no index at {}; run `stagewise index build --corpus <file>` or pass --corpus",
            path.display()
        )));
    }
    Ok(load_index(&path)?)
}

impl App {
    pub fn open(settings: &Settings) -> Result<Self> {
        let layout = DataLayout::new(&settings.data_dir);
        std::fs::create_dir_all(layout.root()).map_err(io)?;
        let config = match settings.config.clone().or_else(|| Some(layout.config()).filter(|p| p.is_file())) {
            Some(path) => PipelineConfig::load(&path)?,
            None => PipelineConfig::default(),
        };
        let index = Arc::new(load_index_or_corpus(settings, &layout)?);
        let llm: Option<Arc<dyn LlmClient>> = match (&config.generator_kind, &config.generator_endpoint) {
            (GeneratorKind::ExternalLlm, Some(endpoint)) => Some(Arc::new(HttpLlmClient::new(endpoint.clone()))),
            _ => None,
        };
        let mut pipeline = Pipeline::new(index, config);
        if let Some(client) = &llm {
            pipeline = pipeline.with_generator(Arc::new(LlmGenerator::new(client.clone())));
        }
        let store = Store::open(&layout.store())?;
        Ok(App {
            runtime: SessionRuntime::new(Arc::new(pipeline), Some(layout.clone())),
            layout,
            store: Mutex::new(store),
            llm,
            watchers: Mutex::new(HashMap::new()),
        })
    }

    pub fn layout(&self) -> &DataLayout {
        &self.layout
    }

    pub fn pipeline(&self) -> &Arc<Pipeline> {
        self.runtime.pipeline()
    }

    // ---- sessions

    pub fn open_session(&self, text: &str, user_id: &str, session_id: Option<String>) -> Result<Arc<SharedSession>> {
        let query = UserQuery::new(uuid::Uuid::new_v4().to_string(), user_id, text, Timestamp::now());
        let shared = self.runtime.open_session(query, session_id)?;
        self.notify(&shared);
        Ok(shared)
    }

    pub fn session(&self, id: &str) -> Result<Arc<SharedSession>> {
        Ok(self.runtime.get(id)?)
    }

    pub fn state(&self, id: &str) -> Result<Arc<SessionState>> {
        Ok(self.session(id)?.state())
    }

    pub fn submit(&self, id: &str, draft: EventDraft) -> Result<Submitted> {
        let shared = self.session(id)?;
        let now = Timestamp::now();
        let result = shared.write(|s| s.submit_draft(draft, now));
        self.notify(&shared);
        let (event, report) = result?;
        if let Action::Rate { rating, .. } = &event.action {
            lock(&self.store).note_rating(id, *rating, now)?;
        }
        Ok(Submitted { event, report })
    }

    pub fn retry(&self, id: &str) -> Result<SubmitReport> {
        let shared = self.session(id)?;
        let result = shared.write(|s| s.retry(Timestamp::now()));
        self.notify(&shared);
        Ok(result?)
    }

    /// Re-executes the session's log from scratch, checking every logged
    /// outcome on the way.
    pub fn replay(&self, id: &str) -> Result<SessionState> {
        let path = self.layout.log(id);
        if !path.is_file() {
            return Err(GatewayError::NotFound(format!("unknown session {id}")));
        }
        Ok(replay(self.pipeline(), &read_log(&path)?)?)
    }

    pub fn records_after(&self, id: &str, after: usize) -> Result<Vec<LogRecord>> {
        Ok(self.session(id)?.records_after(after))
    }

    /// Receiver of the session's record count, bumped after every write.
    pub fn subscribe(&self, shared: &SharedSession) -> watch::Receiver<usize> {
        let mut w = lock(&self.watchers);
        w.entry(shared.id()).or_insert_with(|| watch::channel(shared.record_count()).0).subscribe()
    }

    fn notify(&self, shared: &SharedSession) {
        if let Some(tx) = lock(&self.watchers).get(&shared.id()) {
            tx.send_replace(shared.record_count());
        }
    }

    // ---- shadow agent

    fn profile_of(&self, user_id: &str) -> Result<UserProfile> {
        Ok(load_profile(&self.layout.profile(user_id), user_id)?)
    }

    /// Generates proposals for `stage`, stores them with the session and
    /// returns the ones pending against the current state.
    pub fn proposals(&self, id: &str, stage: Stage, use_llm: bool) -> Result<Vec<Proposal>> {
        let shared = self.session(id)?;
        let state = shared.state();
        let profile = self.profile_of(state.user_id())?;
        let index = self.pipeline().index();
        let now = Timestamp::now();
        let fresh = if use_llm {
            let client = self.llm.as_ref().ok_or_else(|| {
                GatewayError::BadRequest("no language model configured (generator.kind = external_llm)".into())
            })?;
            suggest_with_llm(client.as_ref(), stage, &state, &profile, index, now)?.proposals
        } else {
            suggest_feedback(stage, &state, &profile, index, now)
        };
        let path = self.layout.proposals(id);
        shared.write(|_| -> Result<Vec<Proposal>> {
            let mut all = load_proposals(&path)?;
            for p in fresh {
                if !all.iter().any(|q| q.proposal_id == p.proposal_id) {
                    all.push(p);
                }
            }
            save_proposals(&path, &all)?;
            Ok(all
                .into_iter()
                .filter(|p| {
                    p.status == ProposalStatus::Pending
                        && p.generated_at_offset == state.log_offset
                        && p.proposed_event.stage == stage
                })
                .collect())
        })
    }

    pub fn confirm(&self, id: &str, proposal_id: &str, decision: Decision) -> Result<Confirmed> {
        let shared = self.session(id)?;
        let path = self.layout.proposals(id);
        let result = shared.write(|s| -> Result<Confirmed> {
            let mut all = load_proposals(&path)?;
            let outcome = agent::confirm(s, &mut all, proposal_id, decision, Timestamp::now());
            save_proposals(&path, &all)?;
            let report = outcome?;
            let proposal = all.into_iter().find(|p| p.proposal_id == proposal_id).expect("confirmed proposal exists");
            Ok(Confirmed { proposal, report })
        });
        self.notify(&shared);
        result
    }

    pub fn prompt(&self, id: &str, stage: Stage) -> Result<String> {
        let state = self.state(id)?;
        let profile = self.profile_of(state.user_id())?;
        Ok(render_prompt(stage, &profile, &state, self.pipeline().index())?)
    }

    fn learned_path(&self, user_id: &str) -> PathBuf {
        self.layout.profiles().join(format!(".learned-{user_id}"))
    }

    /// Folds every not-yet-learned session of `user_id` into the profile.
    pub fn learn(&self, user_id: &str) -> Result<Learned> {
        let learned_path = self.learned_path(user_id);
        let seen: BTreeSet<String> =
            std::fs::read_to_string(&learned_path).map(|s| s.lines().map(str::to_string).collect()).unwrap_or_default();
        let mut logs = Vec::new();
        let mut new_sessions = Vec::new();
        for id in self.layout.session_ids().map_err(io)? {
            if seen.contains(&id) {
                continue;
            }
            let Ok(records) = read_log(&self.layout.log(&id)) else { continue };
            let owner = match records.first() {
                Some(LogRecord::Bootstrap { query, .. }) => query.user_id.clone(),
                _ => continue,
            };
            if owner == user_id {
                logs.push(records);
                new_sessions.push(id);
            }
        }
        let profile = agent::update_profile(&self.profile_of(user_id)?, &logs)?;
        save_profile(&self.layout.profile(user_id), &profile)?;
        if !new_sessions.is_empty() {
            let all: BTreeSet<&String> = seen.iter().chain(&new_sessions).collect();
            let body: String = all.into_iter().map(|s| format!("{s}\n")).collect();
            std::fs::write(&learned_path, body).map_err(io)?;
        }
        Ok(Learned { profile, new_sessions })
    }

    // ---- store

    pub fn package(&self, session_id: &str, title: &str, price: u64, publish: bool) -> Result<DebugTemplate> {
        let records = self.session(session_id)?.records_after(0);
        let template = package_template(&records, title, price, publish, Timestamp::now())?;
        lock(&self.store).publish(template.clone())?;
        Ok(template)
    }

    pub fn templates(&self) -> Vec<DebugTemplate> {
        lock(&self.store).templates().cloned().collect()
    }

    /// Returns a template, counting a view when a viewer is named.
    pub fn template(&self, template_id: &str, viewer: Option<&str>) -> Result<DebugTemplate> {
        let mut store = lock(&self.store);
        if let Some(user) = viewer {
            store.record_usage(template_id, UsageKind::View, user, Timestamp::now())?;
        }
        Ok(store.get(template_id)?.clone())
    }

    pub fn match_query(&self, text: &str) -> Vec<(f64, DebugTemplate)> {
        let q = UserQuery::new("match", "anonymous", text, Timestamp::now());
        lock(&self.store).match_query(&q).into_iter().map(|(s, t)| (s, t.clone())).collect()
    }

    pub fn apply(&self, template_id: &str, session_id: &str, user_id: &str) -> Result<ApplyReport> {
        let template = lock(&self.store).get(template_id)?.clone();
        let shared = self.session(session_id)?;
        let result = shared.write(|s| apply_template(&template, s, Timestamp::now()));
        self.notify(&shared);
        let report = result?;
        lock(&self.store).note_application(template_id, session_id, user_id, &report, Timestamp::now())?;
        Ok(report)
    }

    pub fn purchase(&self, template_id: &str, user_id: &str) -> Result<LedgerEntry> {
        Ok(lock(&self.store).record_usage(template_id, UsageKind::Purchase, user_id, Timestamp::now())?)
    }

    pub fn grant(&self, user_id: &str, credits: u64) -> Result<LedgerEntry> {
        Ok(lock(&self.store).grant(user_id, credits, Timestamp::now())?)
    }

    pub fn balances(&self) -> Balances {
        let store = lock(&self.store);
        Balances { escrow: store.escrow(), balances: store.balances() }
    }

    // ---- offline

    pub fn compile(&self, from: NaiveDate, to: NaiveDate, logs: Option<&Path>, out: Option<&Path>) -> Result<Compiled> {
        let window = Window::days(from, to)?;
        let sessions = self.layout.sessions();
        let inputs = load_logs(logs.unwrap_or(&sessions))?;
        let batch = compile(&inputs, &window);
        let batches = self.layout.batches();
        let (path, manifest) = export_batch(&batch, &window, out.unwrap_or(&batches))?;
        Ok(Compiled { path, manifest })
    }
}
