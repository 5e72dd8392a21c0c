use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{topic_of, AgentError};
use crate::domain::record;
use crate::domain::{Action, Layout, Preference, UserProfile, Verbosity};
use crate::session::{LogRecord, LogView};
use crate::text::tokenize;

/// A (dimension, value) pair exhibited by one session.
pub type Observation = (String, String);

const CONVENIENCE: &[&str] = &[
    "walk",
    "walking",
    "distance",
    "near",
    "nearby",
    "close",
    "closest",
    "convenient",
    "convenience",
    "min",
    "minutes",
];
const COST: &[&str] = &["cheap", "cheapest", "cheaper", "budget", "price", "prices", "cost", "affordable", "lowest"];

fn accommodation_priority(text: &str) -> Option<&'static str> {
    let tokens = tokenize(text);
    let count = |kws: &[&str]| tokens.iter().filter(|t| kws.contains(&t.as_str())).count();
    let (conv, cost) = (count(CONVENIENCE), count(COST));
    match conv.cmp(&cost) {
        std::cmp::Ordering::Greater => Some("convenience"),
        std::cmp::Ordering::Less => Some("cost"),
        std::cmp::Ordering::Equal => None,
    }
}

fn layout_name(l: Layout) -> &'static str {
    match l {
        Layout::Prose => "prose",
        Layout::Bullets => "bullets",
    }
}

fn verbosity_name(v: Verbosity) -> &'static str {
    match v {
        Verbosity::Brief => "brief",
        Verbosity::Normal => "normal",
        Verbosity::Detailed => "detailed",
    }
}

/// Distinct preference observations in one session log.
pub fn observations(view: &LogView<'_>) -> BTreeSet<Observation> {
    let mut out = BTreeSet::new();
    let mut push = |d: &str, v: &str| {
        out.insert((d.to_string(), v.to_string()));
    };
    for step in &view.steps {
        let before = step.before;
        let section_topic = |section_id: &str| {
            let sub = before.answer.section(section_id)?.sub_id.as_deref()?;
            topic_of(&before.plan.get(sub)?.text)
        };
        match &step.event.action {
            Action::SetFilter { filter } => {
                let f = filter.normalized();
                f.domain_allow.iter().flatten().for_each(|d| push("trusted_domain", d));
                f.domain_block.iter().flatten().for_each(|d| push("blocked_domain", d));
            }
            Action::RemoveSubQuery { sub_id } => {
                if let Some(t) = before.plan.get(sub_id).and_then(|s| topic_of(&s.text)) {
                    push("query_scope", &format!("no_{t}"));
                }
            }
            Action::AddSubQuery { text, .. } => {
                if let Some(t) = topic_of(text) {
                    push("query_scope", &format!("include_{t}"));
                }
            }
            Action::EditSection { section_id, new_text } => {
                if section_topic(section_id) == Some("hotels") {
                    if let Some(p) = accommodation_priority(new_text) {
                        push("accommodation_priority", p);
                    }
                }
                if new_text.lines().filter(|l| l.trim_start().starts_with("- ")).count() >= 2 {
                    push("style_layout", "bullets");
                }
            }
            Action::CorrectFact { section_id, note } => {
                if section_topic(section_id) == Some("hotels") {
                    if let Some(p) = accommodation_priority(note) {
                        push("accommodation_priority", p);
                    }
                }
            }
            Action::AdjustStyle { style } => {
                if style.layout != before.answer.style.layout {
                    push("style_layout", layout_name(style.layout));
                }
                if style.verbosity != before.answer.style.verbosity {
                    push("verbosity", verbosity_name(style.verbosity));
                }
            }
            _ => {}
        }
    }
    out
}

/// Folds session logs into `profile`.
///
/// Each log counts as one opportunity; each (dimension, value) counts at
/// most once per log. Confidence is `(count + 1) / (sessions + 2)` for every
/// preference, so preferences not seen again decay instead of vanishing.
/// Logs that cannot be parsed are skipped.
pub fn update_profile(profile: &UserProfile, logs: &[Vec<LogRecord>]) -> Result<UserProfile, AgentError> {
    let mut next = profile.clone();
    if logs.is_empty() {
        return Ok(next);
    }
    let mut counts: BTreeMap<Observation, u32> =
        next.preferences.iter().map(|p| ((p.dimension.clone(), p.value.clone()), p.count)).collect();
    for records in logs {
        let view = match LogView::new(records) {
            Ok(v) => v,
            Err(e) => {
                tracing::warn!(error = %e, "skipping unreadable log");
                continue;
            }
        };
        if view.user_id() != next.user_id {
            return Err(AgentError::ForeignLog { expected: next.user_id.clone(), found: view.user_id().to_string() });
        }
        next.sessions_observed += 1;
        for obs in observations(&view) {
            *counts.entry(obs).or_default() += 1;
        }
        for step in &view.steps {
            let kinds = next.history_digest.entry(step.event.stage).or_default();
            *kinds.entry(step.event.action.kind().to_string()).or_default() += 1;
        }
    }
    let n = next.sessions_observed as f64;
    next.preferences = counts
        .into_iter()
        .map(|((dimension, value), count)| Preference {
            dimension,
            value,
            confidence: (count as f64 + 1.0) / (n + 2.0),
            count,
        })
        .collect();
    Ok(next)
}

pub fn save_profile(path: &Path, profile: &UserProfile) -> Result<(), AgentError> {
    let line = record::encode(&record::Record::UserProfile(profile.clone())) + "\n";
    record::write_atomic(path, line.as_bytes()).map_err(|e| AgentError::Io(e.to_string()))
}

/// Loads a profile, or an empty one when the file does not exist.
pub fn load_profile(path: &Path, user_id: &str) -> Result<UserProfile, AgentError> {
    if !path.exists() {
        return Ok(UserProfile::empty(user_id));
    }
    let records: Vec<record::Record> = record::read_lines(path).map_err(|e| AgentError::Io(e.to_string()))?;
    records
        .into_iter()
        .find_map(|r| match r {
            record::Record::UserProfile(p) => Some(p),
            _ => None,
        })
        .ok_or_else(|| AgentError::Io(format!("{} holds no profile record", path.display())))
}
