//! Hooks for an external model backend. The transport lives behind
//! [`LlmClient`] so the core crate stays network-free.

use std::sync::{Arc, LazyLock};

use regex::Regex;

use super::{GeneratedText, Generator, PipelineError, SectionInput};
use crate::domain::Layout;
use crate::retrieval::Index;

/// Text-in, text-out completion endpoint.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, String>;
}

static CITATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([A-Za-z0-9_.:-]+)\]").unwrap());

/// Chunk ids written as `[id]` markers, in order of first appearance.
pub fn extract_citations(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in CITATION.captures_iter(text) {
        let id = c[1].to_string();
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

/// Generator that asks a model to write each section from the ranked
/// passages. Citations outside the section's evidence are dropped; the
/// section may end up uncited.
pub struct LlmGenerator {
    client: Arc<dyn LlmClient>,
}

impl LlmGenerator {
    pub fn new(client: Arc<dyn LlmClient>) -> Self {
        LlmGenerator { client }
    }

    fn prompt(&self, input: &SectionInput<'_>, index: &Index) -> String {
        let mut p = format!(
            "Answer the sub-query using only the passages below. Cite passages as [chunk_id].\n\
             Tone: {:?}. Verbosity: {:?}. Layout: {}.\n\
             User query: {}\nSub-query: {}\nPassages:\n",
            input.style.tone,
            input.style.verbosity,
            match input.style.layout {
                Layout::Prose => "prose",
                Layout::Bullets => "bullet lines starting with \"- \"",
            },
            input.query.text,
            input.sub.text,
        );
        for e in input.evidence.entries.iter().filter(|e| !input.avoid.contains(&e.chunk_id)) {
            if let Some(c) = index.chunk(&e.chunk_id) {
                p.push_str(&format!("[{}] ({}) {}\n", c.chunk_id, c.source_domain, c.text));
            }
        }
        p
    }
}

impl Generator for LlmGenerator {
    fn generate_section(&self, input: &SectionInput<'_>, index: &Index) -> Result<GeneratedText, PipelineError> {
        let text = self.client.complete(&self.prompt(input, index)).map_err(PipelineError::GenerationFailed)?;
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(PipelineError::GenerationFailed("empty completion".into()));
        }
        let citations = extract_citations(&text)
            .into_iter()
            .filter(|c| input.evidence.contains(c) && !input.avoid.contains(c))
            .collect();
        Ok(GeneratedText { text, citations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn citation_markers() {
        assert_eq!(extract_citations("a [D2] b [D1] c [D2] [not valid]"), ["D2", "D1"]);
    }
}
