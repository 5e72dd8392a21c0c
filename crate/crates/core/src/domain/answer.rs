use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationState {
    Fresh,
    UserValidated,
    UserCorrected,
    Flagged,
}

impl ValidationState {
    /// Sections whose text is authored or confirmed by the user and must
    /// survive regeneration verbatim.
    pub fn is_preserved(self) -> bool {
        matches!(self, ValidationState::UserValidated | ValidationState::UserCorrected)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tone {
    #[default]
    Neutral,
    Formal,
    Casual,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verbosity {
    Brief,
    #[default]
    Normal,
    Detailed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    Prose,
    Bullets,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerStyle {
    pub tone: Tone,
    pub verbosity: Verbosity,
    pub layout: Layout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSection {
    pub section_id: String,
    /// Sub-query this section answers; `None` for the no-evidence section.
    pub sub_id: Option<String>,
    pub heading: String,
    pub text: String,
    pub citations: Vec<String>,
    pub validation_state: ValidationState,
    pub note: Option<String>,
    /// Chunks the user flagged as wrong for this section; regeneration
    /// never cites them again.
    pub rejected_citations: Vec<String>,
}

impl AnswerSection {
    pub fn section_id_for(sub_id: &str) -> String {
        format!("sec-{sub_id}")
    }
}

pub const NO_EVIDENCE_SECTION_ID: &str = "sec-none";
pub const NO_EVIDENCE_TEXT: &str = "No supporting evidence found.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub sections: Vec<AnswerSection>,
    pub style: AnswerStyle,
}

impl Answer {
    pub fn section(&self, section_id: &str) -> Option<&AnswerSection> {
        self.sections.iter().find(|s| s.section_id == section_id)
    }

    pub fn section_for_sub(&self, sub_id: &str) -> Option<&AnswerSection> {
        self.sections.iter().find(|s| s.sub_id.as_deref() == Some(sub_id))
    }

    pub fn cited_chunks(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in self.sections.iter().flat_map(|s| &s.citations) {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }

    /// Plain-text rendering: heading line followed by the body, sections
    /// separated by a blank line.
    pub fn render(&self) -> String {
        self.sections.iter().map(|s| format!("## {}\n{}\n", s.heading, s.text)).collect::<Vec<_>>().join("\n")
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.sections.is_empty() {
            return Err("answer has no sections".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.sections {
            if !seen.insert(&s.section_id) {
                return Err(format!("duplicate section_id {}", s.section_id));
            }
            if s.validation_state == ValidationState::Flagged && s.note.as_deref().is_none_or(|n| n.trim().is_empty()) {
                return Err(format!("flagged section {} has no note", s.section_id));
            }
        }
        Ok(())
    }
}
