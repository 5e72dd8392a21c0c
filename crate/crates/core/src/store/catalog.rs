use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ledger::balances;
use super::template::{match_templates, ApplyReport};
use super::{DebugTemplate, LedgerEntry, Metrics, StoreError, UsageKind};
use crate::domain::{record, Rating, Timestamp, UserQuery};

/// A template application still waiting for the session's rating.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Application {
    session_id: String,
    template_id: String,
    user_id: String,
}

/// Templates, the append-only ledger and pending applications, optionally
/// backed by a directory (`templates/<id>`, `ledger`, `balances`,
/// `applications`).
#[derive(Debug, Default)]
pub struct Store {
    root: Option<PathBuf>,
    templates: BTreeMap<String, DebugTemplate>,
    ledger: Vec<LedgerEntry>,
    applications: Vec<Application>,
}

fn io(e: impl std::fmt::Display) -> StoreError {
    StoreError::Io(e.to_string())
}

impl Store {
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// Opens (or creates) a store directory. Metrics are recomputed from the
    /// ledger, which is the source of truth.
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(root.join("templates")).map_err(io)?;
        let mut store = Store { root: Some(root.to_path_buf()), ..Default::default() };
        for entry in std::fs::read_dir(root.join("templates")).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')) {
                continue;
            }
            let mut ts: Vec<DebugTemplate> =
                record::read_lines(&path).map_err(|e| StoreError::Format(e.to_string()))?;
            let t = ts.pop().ok_or_else(|| StoreError::Format(format!("{} is empty", path.display())))?;
            store.templates.insert(t.template_id.clone(), t);
        }
        let read = |name: &str| -> Result<_, StoreError> {
            let path = root.join(name);
            if !path.exists() {
                return Ok(None);
            }
            Ok(Some(path))
        };
        if let Some(p) = read("ledger")? {
            store.ledger = record::read_lines(&p).map_err(|e| StoreError::Format(e.to_string()))?;
        }
        if let Some(p) = read("applications")? {
            store.applications = record::read_lines(&p).map_err(|e| StoreError::Format(e.to_string()))?;
        }
        for t in store.templates.values_mut() {
            t.metrics = Metrics::default();
        }
        for e in store.ledger.clone() {
            store.bump(&e);
        }
        Ok(store)
    }

    pub fn templates(&self) -> impl Iterator<Item = &DebugTemplate> {
        self.templates.values()
    }

    pub fn get(&self, template_id: &str) -> Result<&DebugTemplate, StoreError> {
        self.templates.get(template_id).ok_or_else(|| StoreError::UnknownTemplate(template_id.into()))
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    /// Adds or replaces a template; existing metrics are kept.
    pub fn publish(&mut self, mut template: DebugTemplate) -> Result<(), StoreError> {
        if let Some(old) = self.templates.get(&template.template_id) {
            template.metrics = old.metrics;
        }
        if let Some(root) = &self.root {
            let path = root.join("templates").join(&template.template_id);
            record::write_atomic(&path, (record::encode(&template) + "\n").as_bytes()).map_err(io)?;
        }
        self.templates.insert(template.template_id.clone(), template);
        Ok(())
    }

    pub fn match_query(&self, query: &UserQuery) -> Vec<(f64, &DebugTemplate)> {
        match_templates(self.templates.values(), query)
    }

    fn bump(&mut self, e: &LedgerEntry) {
        let Some(t) = e.template_id.as_ref().and_then(|id| self.templates.get_mut(id)) else { return };
        let m = &mut t.metrics;
        match e.kind {
            UsageKind::View => m.views += 1,
            UsageKind::Download => m.downloads += 1,
            UsageKind::Resolution => m.resolutions += 1,
            UsageKind::Purchase => m.purchases += 1,
            UsageKind::Grant => {}
        }
    }

    fn append(&mut self, entry: LedgerEntry) -> Result<LedgerEntry, StoreError> {
        if let Some(root) = &self.root {
            let mut f = OpenOptions::new().create(true).append(true).open(root.join("ledger")).map_err(io)?;
            f.write_all((record::encode(&entry) + "\n").as_bytes()).map_err(io)?;
            f.sync_data().map_err(io)?;
        }
        self.bump(&entry);
        self.ledger.push(entry.clone());
        self.persist_balances()?;
        Ok(entry)
    }

    fn persist_balances(&self) -> Result<(), StoreError> {
        let Some(root) = &self.root else { return Ok(()) };
        let (b, escrow) = balances(&self.ledger);
        let body = serde_json::json!({ "escrow": escrow, "balances": b });
        record::write_atomic(&root.join("balances"), (body.to_string() + "\n").as_bytes()).map_err(io)
    }

    /// Appends one usage entry. Purchases move the template price from the
    /// payer to the author and fail without a trace if the payer is short.
    pub fn record_usage(
        &mut self,
        template_id: &str,
        kind: UsageKind,
        payer: &str,
        at: Timestamp,
    ) -> Result<LedgerEntry, StoreError> {
        if kind == UsageKind::Grant {
            return Err(StoreError::Format("grants carry no template; use Store::grant".into()));
        }
        let t = self.get(template_id)?;
        let (credits, payee) = match kind {
            UsageKind::Purchase => {
                let balance = self.balance(payer);
                if balance < t.price_credits as i64 {
                    return Err(StoreError::InsufficientCredits {
                        payer: payer.into(),
                        balance,
                        price: t.price_credits,
                    });
                }
                (t.price_credits, Some(t.author_id.clone()))
            }
            _ => (0, None),
        };
        self.append(LedgerEntry {
            template_id: Some(template_id.into()),
            payer_id: payer.into(),
            payee_id: payee,
            kind,
            credits,
            at,
        })
    }

    /// Moves credits from escrow to a user.
    pub fn grant(&mut self, user: &str, credits: u64, at: Timestamp) -> Result<LedgerEntry, StoreError> {
        if credits as i64 > self.escrow() {
            return Err(StoreError::InsufficientCredits {
                payer: "escrow".into(),
                balance: self.escrow(),
                price: credits,
            });
        }
        self.append(LedgerEntry {
            template_id: None,
            payer_id: user.into(),
            payee_id: Some(user.into()),
            kind: UsageKind::Grant,
            credits,
            at,
        })
    }

    pub fn balances(&self) -> BTreeMap<String, i64> {
        balances(&self.ledger).0
    }

    pub fn balance(&self, user: &str) -> i64 {
        self.balances().get(user).copied().unwrap_or(0)
    }

    pub fn escrow(&self) -> i64 {
        balances(&self.ledger).1
    }

    /// Records a download for a completed application. If at least one step
    /// applied, a later like on the session counts as a resolution.
    pub fn note_application(
        &mut self,
        template_id: &str,
        session_id: &str,
        user: &str,
        report: &ApplyReport,
        at: Timestamp,
    ) -> Result<(), StoreError> {
        self.record_usage(template_id, UsageKind::Download, user, at)?;
        if !report.applied.is_empty() {
            self.applications.retain(|a| a.session_id != session_id);
            self.applications.push(Application {
                session_id: session_id.into(),
                template_id: template_id.into(),
                user_id: user.into(),
            });
            self.persist_applications()?;
        }
        Ok(())
    }

    /// Feeds a session rating back; a like on a session with a pending
    /// application records one resolution.
    pub fn note_rating(
        &mut self,
        session_id: &str,
        rating: Rating,
        at: Timestamp,
    ) -> Result<Option<LedgerEntry>, StoreError> {
        let Some(pos) = self.applications.iter().position(|a| a.session_id == session_id) else { return Ok(None) };
        if rating != Rating::Like {
            return Ok(None);
        }
        let app = self.applications.remove(pos);
        self.persist_applications()?;
        self.record_usage(&app.template_id, UsageKind::Resolution, &app.user_id, at).map(Some)
    }

    fn persist_applications(&self) -> Result<(), StoreError> {
        let Some(root) = &self.root else { return Ok(()) };
        let body: String = self.applications.iter().map(|a| record::encode(a) + "\n").collect();
        record::write_atomic(&root.join("applications"), body.as_bytes()).map_err(io)
    }
}
