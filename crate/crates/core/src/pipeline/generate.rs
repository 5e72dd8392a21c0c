use std::collections::BTreeSet;

use super::PipelineError;
use crate::domain::{
    Answer, AnswerSection, AnswerStyle, EvidenceSet, Layout, QueryPlan, RankedList, SubQuery, Tone, UserQuery,
    ValidationState, Verbosity, NO_EVIDENCE_SECTION_ID, NO_EVIDENCE_TEXT,
};
use crate::par::{self, ExecMode};
use crate::retrieval::Index;
use crate::text::sentences;

/// Everything a generator sees for one section.
#[derive(Clone, Copy, Debug)]
pub struct SectionInput<'a> {
    pub query: &'a UserQuery,
    pub sub: &'a SubQuery,
    pub evidence: &'a RankedList,
    /// Chunks the section must not cite.
    pub avoid: &'a [String],
    pub style: AnswerStyle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedText {
    pub text: String,
    pub citations: Vec<String>,
}

/// Stage 3 contract, one section at a time.
pub trait Generator: Send + Sync {
    fn generate_section(&self, input: &SectionInput<'_>, index: &Index) -> Result<GeneratedText, PipelineError>;
}

/// Which existing sections to rebuild.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegenScope {
    /// Every section that is not user-validated or user-corrected.
    All,
    Sections(Vec<String>),
}

impl RegenScope {
    fn includes(&self, section_id: &str) -> bool {
        match self {
            RegenScope::All => true,
            RegenScope::Sections(ids) => ids.iter().any(|s| s == section_id),
        }
    }
}

/// Deterministic extractive backend: the first 1/2/3 sentences (brief /
/// normal / detailed) of the top-ranked citable chunk.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExtractiveMock;

fn sentence_budget(v: Verbosity) -> usize {
    match v {
        Verbosity::Brief => 1,
        Verbosity::Normal => 2,
        Verbosity::Detailed => 3,
    }
}

pub(crate) fn no_evidence_text(layout: Layout) -> String {
    match layout {
        Layout::Prose => NO_EVIDENCE_TEXT.to_string(),
        Layout::Bullets => format!("- {NO_EVIDENCE_TEXT}"),
    }
}

impl Generator for ExtractiveMock {
    fn generate_section(&self, input: &SectionInput<'_>, index: &Index) -> Result<GeneratedText, PipelineError> {
        let Some(top) = input.evidence.entries.iter().find(|e| !input.avoid.contains(&e.chunk_id)) else {
            return Ok(GeneratedText { text: no_evidence_text(input.style.layout), citations: vec![] });
        };
        let chunk = index
            .chunk(&top.chunk_id)
            .ok_or_else(|| PipelineError::GenerationFailed(format!("chunk {} missing from index", top.chunk_id)))?;
        let mut picked: Vec<String> =
            sentences(&chunk.text).into_iter().take(sentence_budget(input.style.verbosity)).collect();
        if picked.is_empty() {
            picked.push(chunk.text.trim().to_string());
        }
        match input.style.tone {
            Tone::Neutral => {}
            Tone::Formal => picked[0] = format!("According to {}, {}", chunk.source_domain, picked[0]),
            Tone::Casual => picked[0] = format!("In short: {}", picked[0]),
        }
        let id = &chunk.chunk_id;
        let text = match input.style.layout {
            Layout::Prose => format!("{} [{id}]", picked.join(" ")),
            Layout::Bullets => picked.iter().map(|s| format!("- {s} [{id}]")).collect::<Vec<_>>().join("\n"),
        };
        Ok(GeneratedText { text, citations: vec![id.clone()] })
    }
}

fn no_evidence_section(query: &UserQuery, style: AnswerStyle) -> AnswerSection {
    AnswerSection {
        section_id: NO_EVIDENCE_SECTION_ID.into(),
        sub_id: None,
        heading: query.text.clone(),
        text: no_evidence_text(style.layout),
        citations: vec![],
        validation_state: ValidationState::Fresh,
        note: None,
        rejected_citations: vec![],
    }
}

/// Builds the answer for `plan` in plan order.
///
/// Sections of removed sub-queries are dropped and new sub-queries always
/// get a section. Preserved sections keep their text verbatim; their
/// citations are pruned to chunks still present in `evidence`. Other
/// existing sections are rebuilt when `scope` includes them, avoiding their
/// rejected citations; a rebuilt flagged section returns to `fresh`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_answer(
    generator: &dyn Generator,
    index: &Index,
    query: &UserQuery,
    plan: &QueryPlan,
    evidence: &EvidenceSet,
    style: AnswerStyle,
    prior: Option<&Answer>,
    scope: &RegenScope,
    exec: ExecMode,
) -> Result<(Answer, Vec<String>), PipelineError> {
    let present: BTreeSet<String> = evidence.all_chunk_ids();
    let prune = |s: &AnswerSection| {
        let mut s = s.clone();
        s.citations.retain(|c| present.contains(c));
        s
    };
    let prior_for = |sub: &SubQuery| prior.and_then(|a| a.section_for_sub(&sub.sub_id));

    let degenerate = plan.sub_queries.iter().all(|s| evidence.list(&s.sub_id).is_none_or(|l| l.is_empty()));
    let any_preserved =
        plan.sub_queries.iter().any(|s| prior_for(s).is_some_and(|p| p.validation_state.is_preserved()));
    if degenerate && !any_preserved {
        let old = prior.and_then(|a| a.section(NO_EVIDENCE_SECTION_ID));
        return Ok(match old {
            Some(s) if s.validation_state.is_preserved() || !scope.includes(&s.section_id) => {
                (Answer { sections: vec![s.clone()], style }, vec![])
            }
            _ => {
                let mut fresh = no_evidence_section(query, style);
                if let Some(s) = old {
                    fresh.note = s.note.clone();
                }
                (Answer { sections: vec![fresh], style }, vec![NO_EVIDENCE_SECTION_ID.to_string()])
            }
        });
    }

    let empty = RankedList::default();
    let mut slots: Vec<Option<AnswerSection>> = Vec::with_capacity(plan.len());
    let mut todo: Vec<(usize, SectionInput<'_>)> = Vec::new();
    for (i, sub) in plan.sub_queries.iter().enumerate() {
        let old = prior_for(sub);
        match old {
            Some(s) if s.validation_state.is_preserved() || !scope.includes(&s.section_id) => {
                slots.push(Some(prune(s)));
            }
            _ => {
                slots.push(None);
                let avoid = old.map(|s| s.rejected_citations.as_slice()).unwrap_or(&[]);
                let list = evidence.list(&sub.sub_id).unwrap_or(&empty);
                todo.push((i, SectionInput { query, sub, evidence: list, avoid, style }));
            }
        }
    }

    let outputs = par::map_ordered(exec, &todo, |(_, input)| generator.generate_section(input, index));
    let mut regenerated = Vec::with_capacity(todo.len());
    for ((i, input), out) in todo.iter().zip(outputs) {
        let mut out = out?;
        out.citations.retain(|c| input.evidence.contains(c) && !input.avoid.contains(c));
        let old = prior_for(input.sub);
        let section_id = AnswerSection::section_id_for(&input.sub.sub_id);
        regenerated.push(section_id.clone());
        slots[*i] = Some(AnswerSection {
            section_id,
            sub_id: Some(input.sub.sub_id.clone()),
            heading: input.sub.text.clone(),
            text: out.text,
            citations: out.citations,
            validation_state: ValidationState::Fresh,
            note: old.and_then(|s| s.note.clone()),
            rejected_citations: input.avoid.to_vec(),
        });
    }
    let sections = slots.into_iter().map(|s| s.expect("every slot filled")).collect();
    Ok((Answer { sections, style }, regenerated))
}
