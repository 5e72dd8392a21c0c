//! The three pipeline stages behind pluggable interfaces, with the
//! deterministic reference backends (rule decomposer, BM25 retriever,
//! extractive generator).

mod config;
mod decompose;
mod generate;
mod llm;

use std::sync::Arc;

pub use config::{DecomposerKind, GeneratorKind, PipelineConfig};
pub use decompose::{fill_slots, Decomposer, RuleDecomposer, RuleMatch, TRAVEL_EVENT_TEMPLATES};
pub use generate::{assemble_answer, ExtractiveMock, GeneratedText, Generator, RegenScope, SectionInput};
pub use llm::{extract_citations, LlmClient, LlmGenerator};

use crate::domain::{
    Answer, AnswerStyle, EvidenceSet, QueryPlan, RankedList, RetrievalFilter, Stage, SubQuery, UserProfile, UserQuery,
};
use crate::par::{self, ExecMode};
use crate::retrieval::{self, Bm25Params, Index};

/// Upper bound on sub-queries per plan.
pub const MAX_SUBQUERIES: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("decomposition failed: {0}")]
    DecompositionFailed(String),
    #[error("retrieval failed: {0}")]
    RetrievalFailed(String),
    #[error("generation failed: {0}")]
    GenerationFailed(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl PipelineError {
    /// Stage the failure belongs to, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::InvalidQuery(_) | PipelineError::DecompositionFailed(_) => Some(Stage::Decomposition),
            PipelineError::RetrievalFailed(_) => Some(Stage::Retrieval),
            PipelineError::GenerationFailed(_) => Some(Stage::Generation),
            PipelineError::Config(_) => None,
        }
    }
}

/// Runs `search` for every sub-query of `plan`, fanning out per sub-query
/// according to `mode`. Keys equal the plan's sub_ids.
pub fn execute_plan(
    plan: &QueryPlan,
    index: &Index,
    filter: &RetrievalFilter,
    k: usize,
    params: Bm25Params,
    mode: ExecMode,
) -> EvidenceSet {
    let lists = par::map_ordered(mode, &plan.sub_queries, |s| retrieval::search(index, s, filter, k, params));
    EvidenceSet {
        per_subquery: plan.sub_ids().into_iter().zip(lists).collect(),
        active_filter: filter.clone(),
        ..Default::default()
    }
}

/// Configured stage backends over one immutable index.
#[derive(Clone)]
pub struct Pipeline {
    index: Arc<Index>,
    config: PipelineConfig,
    decomposer: Arc<dyn Decomposer>,
    generator: Arc<dyn Generator>,
    exec: ExecMode,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("config", &self.config).field("exec", &self.exec).finish_non_exhaustive()
    }
}

impl Pipeline {
    /// Pipeline with the reference backends. An `external_llm` generator
    /// needs a client and must be installed with [`Pipeline::with_generator`].
    pub fn new(index: Arc<Index>, config: PipelineConfig) -> Self {
        Pipeline {
            index,
            config,
            decomposer: Arc::new(RuleDecomposer::new()),
            generator: Arc::new(ExtractiveMock),
            exec: ExecMode::default(),
        }
    }

    pub fn with_decomposer(mut self, decomposer: Arc<dyn Decomposer>) -> Self {
        self.decomposer = decomposer;
        self
    }

    pub fn with_generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_exec_mode(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn exec_mode(&self) -> ExecMode {
        self.exec
    }

    pub fn decompose(&self, query: &UserQuery, profile: Option<&UserProfile>) -> Result<QueryPlan, PipelineError> {
        self.decomposer.decompose(query, profile)
    }

    pub fn retrieve(&self, sub: &SubQuery, filter: &RetrievalFilter) -> RankedList {
        retrieval::search(&self.index, sub, filter, self.config.k, self.config.bm25)
    }

    pub fn execute_plan(&self, plan: &QueryPlan, filter: &RetrievalFilter) -> EvidenceSet {
        execute_plan(plan, &self.index, filter, self.config.k, self.config.bm25, self.exec)
    }

    pub fn generate_answer(
        &self,
        query: &UserQuery,
        plan: &QueryPlan,
        evidence: &EvidenceSet,
        style: AnswerStyle,
    ) -> Result<Answer, PipelineError> {
        self.regenerate(query, plan, evidence, style, None, &RegenScope::All).map(|(a, _)| a)
    }

    /// Rebuilds the answer against `prior`, regenerating only the sections
    /// in `scope`. Returns the answer and the regenerated section ids.
    pub fn regenerate(
        &self,
        query: &UserQuery,
        plan: &QueryPlan,
        evidence: &EvidenceSet,
        style: AnswerStyle,
        prior: Option<&Answer>,
        scope: &RegenScope,
    ) -> Result<(Answer, Vec<String>), PipelineError> {
        assemble_answer(self.generator.as_ref(), &self.index, query, plan, evidence, style, prior, scope, self.exec)
    }

    /// Decompose, retrieve and generate with the default style and an
    /// empty filter.
    pub fn run(&self, query: &UserQuery) -> Result<(QueryPlan, EvidenceSet, Answer), PipelineError> {
        let plan = self.decompose(query, None)?;
        let evidence = self.execute_plan(&plan, &RetrievalFilter::default());
        let answer = self.generate_answer(query, &plan, &evidence, AnswerStyle::default())?;
        Ok((plan, evidence, answer))
    }
}
