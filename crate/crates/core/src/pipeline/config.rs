use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::retrieval::{Bm25Params, DEFAULT_K};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecomposerKind {
    #[default]
    Rules,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    ExtractiveMock,
    ExternalLlm,
}

/// Backend configuration. Read from a `key = value` file with the keys
/// `decomposer.kind`, `generator.kind`, `generator.endpoint`, `retrieval.k`,
/// `retrieval.bm25.k1` and `retrieval.bm25.b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub decomposer_kind: DecomposerKind,
    pub generator_kind: GeneratorKind,
    pub generator_endpoint: Option<String>,
    pub k: usize,
    pub bm25: Bm25Params,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            decomposer_kind: DecomposerKind::Rules,
            generator_kind: GeneratorKind::ExtractiveMock,
            generator_endpoint: None,
            k: DEFAULT_K,
            bm25: Bm25Params::default(),
        }
    }
}

impl FromStr for PipelineConfig {
    type Err = PipelineError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = PipelineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| PipelineError::Config(format!("line {}: {msg}", n + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            match key {
                "decomposer.kind" => {
                    cfg.decomposer_kind = match value {
                        "rules" => DecomposerKind::Rules,
                        _ => return Err(bad("decomposer.kind must be `rules`")),
                    }
                }
                "generator.kind" => {
                    cfg.generator_kind = match value {
                        "extractive_mock" => GeneratorKind::ExtractiveMock,
                        "external_llm" => GeneratorKind::ExternalLlm,
                        _ => return Err(bad("generator.kind must be `extractive_mock` or `external_llm`")),
                    }
                }
                "generator.endpoint" => cfg.generator_endpoint = (!value.is_empty()).then(|| value.to_string()),
                "retrieval.k" => {
                    cfg.k = value.parse().ok().filter(|k| *k >= 1).ok_or_else(|| bad("retrieval.k must be >= 1"))?
                }
                "retrieval.bm25.k1" => {
                    cfg.bm25.k1 = value.parse().ok().filter(|v: &f64| *v >= 0.0).ok_or_else(|| bad("invalid k1"))?
                }
                "retrieval.bm25.b" => {
                    cfg.bm25.b =
                        value.parse().ok().filter(|v: &f64| (0.0..=1.0).contains(v)).ok_or_else(|| bad("invalid b"))?
                }
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        if cfg.generator_kind == GeneratorKind::ExternalLlm && cfg.generator_endpoint.is_none() {
            return Err(PipelineError::Config("generator.kind = external_llm requires generator.endpoint".into()));
        }
        Ok(cfg)
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        text.parse()
    }
}
