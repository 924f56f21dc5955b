use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agent::AgentConfig;
use crate::cache::CacheMode;
use crate::kg::Direction;
use crate::metrics::RaRule;
use crate::retrieval::RetrieverConfig;

/// Input files. Test triples are expanded into one case per direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub catalog: PathBuf,
    /// Optional `id<TAB>label` file for relation labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<PathBuf>,
    #[serde(default = "default_directions")]
    pub directions: Vec<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cases: Option<usize>,
}

fn default_directions() -> Vec<Direction> {
    vec![Direction::Tail]
}

/// Backend behind one of the two agent tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolBackend {
    /// MediaWiki search + extracts.
    Wikipedia {
        #[serde(default = "default_wikipedia")]
        endpoint: String,
    },
    /// Custom-Search-style JSON web search. The key is read from the named
    /// environment variable.
    Websearch {
        endpoint: String,
        engine_id: String,
        api_key_env: String,
    },
    /// Exact (query → documents) fixture file.
    Recorded { path: PathBuf },
    /// Keyword search over a local document collection.
    Corpus { path: PathBuf },
}

fn default_wikipedia() -> String {
    "https://en.wikipedia.org/w/api.php".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolsConfig {
    pub basic: ToolBackend,
    pub advanced: ToolBackend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmBackend {
    /// Scripted turns from a JSON script book; no network.
    Script { path: PathBuf },
    /// OpenAI-compatible chat completions endpoint.
    Http {
        base_url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerBackend {
    #[default]
    Lexical,
    Remote { url: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub retriever: RetrieverConfig,
    pub tools: ToolsConfig,
    pub llm: LlmBackend,
    #[serde(default)]
    pub scorer: ScorerBackend,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub cache_mode: CacheMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metrics_n")]
    pub metrics_n: Vec<usize>,
    #[serde(default)]
    pub ra_rule: RaRule,
    /// Stamp every trajectory step with a fixed time instead of the clock.
    #[serde(default)]
    pub fixed_timestamps: bool,
}

fn default_concurrency() -> usize {
    4
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".kgc-cache")
}

fn default_metrics_n() -> Vec<usize> {
    vec![1, 3, 5, 10]
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!(
            "{}: {e}",
            path.display()
        )))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.train);
        fix(&mut self.data.test);
        fix(&mut self.data.catalog);
        if let Some(r) = &mut self.data.relations {
            fix(r);
        }
        fix(&mut self.cache_dir);
        for t in [&mut self.tools.basic, &mut self.tools.advanced] {
            if let ToolBackend::Recorded { path } | ToolBackend::Corpus { path } = t {
                fix(path);
            }
        }
        if let LlmBackend::Script { path } = &mut self.llm {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.concurrency == 0 {
            return fail("concurrency must be at least 1");
        }
        if self.metrics_n.is_empty() || self.metrics_n.contains(&0) {
            return fail("metrics_n must be a non-empty list of positive integers");
        }
        if self.metrics_n.windows(2).any(|w| w[0] >= w[1]) {
            return fail("metrics_n must be sorted ascending without duplicates");
        }
        if self.data.directions.is_empty() {
            return fail("data.directions must be non-empty");
        }
        if self.agent.max_gen_attempts == 0 {
            return fail("agent.max_gen_attempts must be at least 1");
        }
        Ok(())
    }

    /// TOML rendering of the resolved config. Secrets never appear: only
    /// the names of the variables holding them are part of the config.
    pub fn snapshot(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("# unserializable config: {e}\n"))
    }
}
