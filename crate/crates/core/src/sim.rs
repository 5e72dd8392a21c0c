//! Seeded generator of valid feedback events, used by the property tests,
//! the acceptance suite and the benchmarks.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    Action, Actor, AnswerStyle, Constraint, FeedbackEvent, Layout, Rating, RelevanceLabel, RetrievalFilter, Stage,
    Timestamp, Tone, Verbosity,
};
use crate::pipeline::MAX_SUBQUERIES;
use crate::session::{Session, SessionError, SessionState};

const SUB_TEXTS: &[&str] = &[
    "Which hotels are close to the venue?",
    "How do I get there by train?",
    "What is the registration fee?",
    "Where is the conference held?",
    "What are the dates of the event?",
    "Which flights arrive nearby?",
    "What should I see in the city?",
];

const CONSTRAINT_KEYS: &[&str] = &["budget", "date", "city", "max_distance"];
const CONSTRAINT_VALUES: &[&str] = &["low", "July 2025", "Padua", "1 km", "150 EUR"];

const EDIT_LINES: &[&str] = &[
    "Hotel Plaza is a short walk from the venue.",
    "Trains run hourly from Venice.",
    "Registration closes in June.",
    "The main sessions start on Monday.",
    "Book early for lower prices.",
];

/// Random source of valid events for one session at a time.
pub struct EventGen {
    rng: ChaCha8Rng,
    seed: u64,
    domains: Vec<String>,
    clock: Timestamp,
    issued: u64,
}

impl EventGen {
    /// `domains` are the candidates for generated filters, usually the
    /// source domains of the corpus.
    pub fn new(seed: u64, domains: Vec<String>) -> Self {
        EventGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            domains,
            clock: "2025-03-11T08:00:00.000Z".parse().expect("valid timestamp"),
            issued: 0,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// A random action that passes validation against `state`.
    /// Ratings are drawn only when `allow_rate` is set.
    pub fn action(&mut self, state: &SessionState, allow_rate: bool) -> Action {
        let mut kinds: Vec<&str> = vec!["refine", "filter", "style", "correct", "edit"];
        if state.plan.len() < MAX_SUBQUERIES {
            kinds.push("add");
        }
        if state.plan.len() > 1 {
            kinds.extend(["remove", "reorder"]);
        }
        if !ranked_subs(state).is_empty() {
            kinds.extend(["annotate", "rerank", "annotate", "rerank"]);
        }
        if allow_rate {
            kinds.push("rate");
        }
        let kind = *kinds.choose(&mut self.rng).expect("non-empty");
        self.make(kind, state)
    }

    fn pick<'a>(&mut self, items: &'a [&'a str]) -> &'a str {
        items.choose(&mut self.rng).expect("non-empty")
    }

    fn make(&mut self, kind: &str, state: &SessionState) -> Action {
        let plan = &state.plan;
        let sub_ids = plan.sub_ids();
        match kind {
            "add" => {
                let constraints = if self.rng.gen_bool(0.3) {
                    vec![Constraint::new(self.pick(CONSTRAINT_KEYS), self.pick(CONSTRAINT_VALUES))]
                } else {
                    vec![]
                };
                Action::AddSubQuery {
                    text: self.pick(SUB_TEXTS).to_string(),
                    insert_position: self.rng.gen_range(0..=plan.len()),
                    constraints,
                }
            }
            "remove" => Action::RemoveSubQuery { sub_id: sub_ids.choose(&mut self.rng).expect("plan").clone() },
            "reorder" => {
                let mut permutation = sub_ids.clone();
                permutation.shuffle(&mut self.rng);
                Action::ReorderSubQueries { permutation }
            }
            "refine" => Action::RefineConstraint {
                sub_id: sub_ids.choose(&mut self.rng).expect("plan").clone(),
                key: self.pick(CONSTRAINT_KEYS).to_string(),
                value: self.pick(CONSTRAINT_VALUES).to_string(),
            },
            "annotate" | "rerank" => {
                let subs = ranked_subs(state);
                let sub_id = subs.choose(&mut self.rng).expect("some evidence").to_string();
                let list = state.evidence.list(&sub_id).expect("listed");
                let len = list.len();
                let chunk_id = list.entries[self.rng.gen_range(0..len)].chunk_id.clone();
                if kind == "annotate" {
                    let label =
                        *[RelevanceLabel::Relevant, RelevanceLabel::PartiallyRelevant, RelevanceLabel::Irrelevant]
                            .choose(&mut self.rng)
                            .expect("labels");
                    Action::AnnotateRelevance { sub_id, chunk_id, label }
                } else {
                    Action::RerankEvidence { sub_id, chunk_id, new_rank: self.rng.gen_range(1..=len) }
                }
            }
            "filter" => Action::SetFilter { filter: self.filter() },
            "style" => Action::AdjustStyle { style: self.style() },
            "correct" | "edit" => {
                let sections = &state.answer.sections;
                let section_id = sections[self.rng.gen_range(0..sections.len())].section_id.clone();
                if kind == "correct" {
                    Action::CorrectFact { section_id, note: format!("wrong detail {}", self.rng.gen_range(0..100)) }
                } else {
                    let n = self.rng.gen_range(1..=3);
                    let lines: Vec<String> = (0..n).map(|_| self.pick(EDIT_LINES).to_string()).collect();
                    let new_text = if self.rng.gen_bool(0.5) {
                        lines.iter().map(|l| format!("- {l}")).collect::<Vec<_>>().join("\n")
                    } else {
                        lines.join(" ")
                    };
                    Action::EditSection { section_id, new_text }
                }
            }
            "rate" => Action::Rate {
                rating: if self.rng.gen_bool(0.5) { Rating::Like } else { Rating::Dislike },
                comment: None,
            },
            other => unreachable!("unknown kind {other}"),
        }
    }

    pub fn style(&mut self) -> AnswerStyle {
        AnswerStyle {
            tone: *[Tone::Neutral, Tone::Formal, Tone::Casual].choose(&mut self.rng).expect("tones"),
            verbosity: *[Verbosity::Brief, Verbosity::Normal, Verbosity::Detailed]
                .choose(&mut self.rng)
                .expect("verbosities"),
            layout: *[Layout::Prose, Layout::Bullets].choose(&mut self.rng).expect("layouts"),
        }
    }

    fn filter(&mut self) -> RetrievalFilter {
        let mut f = RetrievalFilter::default();
        let mut domains = self.domains.clone();
        domains.shuffle(&mut self.rng);
        match self.rng.gen_range(0..4) {
            0 => {}
            1 if !domains.is_empty() => {
                let n = self.rng.gen_range(1..=domains.len().min(3));
                f.domain_allow = Some(domains[..n].to_vec());
            }
            2 if !domains.is_empty() => f.domain_block = Some(vec![domains[0].clone()]),
            _ => {
                let base = NaiveDate::from_ymd_opt(2024, 6, 1).expect("date");
                let from = base + Duration::days(self.rng.gen_range(0..300));
                f.time_from = Some(from);
                if self.rng.gen_bool(0.5) {
                    f.time_to = Some(from + Duration::days(self.rng.gen_range(0..400)));
                }
            }
        }
        f
    }

    /// A valid next event for `state` with a reproducible id.
    pub fn event(&mut self, state: &SessionState, actor: Actor, allow_rate: bool) -> FeedbackEvent {
        let action = self.action(state, allow_rate);
        self.issued += 1;
        self.clock =
            Timestamp::from_millis(self.clock.millis() + self.rng.gen_range(1_000..120_000)).expect("in range");
        let mut e = FeedbackEvent::new(state.session_id.clone(), state.log_offset + 1, actor, self.clock, action);
        e.event_id = format!("sim-{}-{}", self.seed, self.issued);
        e
    }

    /// Submits `n` random human events to `session`.
    pub fn drive(&mut self, session: &mut Session, n: usize, allow_rate: bool) -> Result<(), SessionError> {
        for _ in 0..n {
            let e = self.event(session.state(), Actor::Human, allow_rate);
            session.submit(e)?;
        }
        Ok(())
    }
}

/// Sub-queries in the plan with at least one ranked chunk.
fn ranked_subs(state: &SessionState) -> Vec<&str> {
    state
        .plan
        .sub_queries
        .iter()
        .map(|q| q.sub_id.as_str())
        .filter(|id| state.evidence.list(id).is_some_and(|l| !l.is_empty()))
        .collect()
}

/// The stages strictly upstream of `stage` in pipeline order.
pub fn upstream_of(stage: Stage) -> &'static [Stage] {
    let i = Stage::PIPELINE.iter().position(|s| *s == stage).unwrap_or(Stage::PIPELINE.len());
    &Stage::PIPELINE[..i]
}
