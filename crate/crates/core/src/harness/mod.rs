//! Evaluation runs: config loading, the concurrent case loop, linking,
//! scoring and the run directory.
//!
//! A run directory holds `report.json`, `report.txt`, `trajectories.jsonl`,
//! `predictions.jsonl`, `linking_audit.tsv`, `per_case.csv` and
//! `config_snapshot`.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    run_agent, AgentDeps, ChatCompletionsClient, Clock, FixedClock, LlmClient, ScriptBook,
    ScriptVars, SystemClock, TerminatedBy, Trajectory,
};
use crate::cache::{CacheStats, ReplayCache, ReqwestTransport, Transport};
use crate::kg::{
    compute_relation_cardinality, load_entity_catalog, load_triples, Catalog, EvalCase,
    KnowledgeGraph, RelationCardinalityTable,
};
use crate::linking::{write_audit_line, AliasIndex, LinkResult};
use crate::metrics::{
    rank_of_gold, retriever_usage, MetricReport, RaRule, RankedPrediction, ReportRow,
    RetrieverUsage,
};
use crate::retrieval::{
    CorpusRetriever, LexicalScorer, RecordedRetriever, RelevanceScorer, RemoteScorer, Retriever,
    ToolKind, Toolbox, WebSearchRetriever, WikipediaRetriever,
};

pub use config::{DataConfig, LlmBackend, RunConfig, ScorerBackend, ToolBackend, ToolsConfig};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot read {path}: {reason}")]
    Input { path: String, reason: String },
    #[error("io error at {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("missing environment variable {0}")]
    MissingEnv(String),
    #[error("scoring failed: {0}")]
    Metric(#[from] crate::metrics::MetricError),
    #[error("unknown case {case}; available: {available}")]
    UnknownCase { case: String, available: String },
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Input {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, HarnessError> {
    File::open(path).map(BufReader::new).map_err(|e| input_err(path, e))
}

/// Everything a run shares across workers.
pub struct Dataset {
    pub train: KnowledgeGraph,
    pub cases: Vec<EvalCase>,
    pub entities: Catalog,
    pub relations: Catalog,
    pub cardinality: RelationCardinalityTable,
}

impl Dataset {
    pub fn load(data: &DataConfig) -> Result<Self, HarnessError> {
        let (train, _) = load_triples(open(&data.train)?).map_err(|e| input_err(&data.train, e))?;
        let (test, _) = load_triples(open(&data.test)?).map_err(|e| input_err(&data.test, e))?;
        let entities =
            load_entity_catalog(open(&data.catalog)?).map_err(|e| input_err(&data.catalog, e))?;
        let relations = match &data.relations {
            Some(p) => load_entity_catalog(open(p)?).map_err(|e| input_err(p, e))?,
            None => Catalog::new(),
        };
        let cardinality = compute_relation_cardinality(&train).unwrap_or_default();
        let mut cases = Vec::new();
        for (i, t) in test.triples().iter().enumerate() {
            for &d in &data.directions {
                cases.push(EvalCase::from_triple(i, t, d));
            }
        }
        if let Some(max) = data.max_cases {
            cases.truncate(max);
        }
        Ok(Self {
            train,
            cases,
            entities,
            relations,
            cardinality,
        })
    }
}

/// Outcome of one case.
#[derive(Debug, Clone)]
pub struct CaseResult {
    pub trajectory: Trajectory,
    pub links: Vec<LinkResult>,
    pub prediction: RankedPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub metrics: MetricReport,
    pub retriever_usage: RetrieverUsage,
    pub mean_iterations: f64,
    pub terminated_by: BTreeMap<TerminatedBy, usize>,
    pub failed_cases: usize,
    pub cache: CacheStats,
    pub config: RunConfig,
    pub started_at: String,
    pub finished_at: String,
}

impl RunReport {
    pub fn render(&self) -> String {
        let mut out = self.metrics.render_table();
        let u = &self.retriever_usage;
        out.push_str(&format!(
            "cases: {}  failed: {}  mean iterations: {:.2}\n",
            self.metrics.case_count, self.failed_cases, self.mean_iterations
        ));
        out.push_str(&format!(
            "retriever usage: basic {}  advanced {}  no retrieval {} of {}\n",
            u.basic_calls, u.advanced_calls, u.no_retrieval_cases, u.cases
        ));
        let hist: Vec<String> = self
            .terminated_by
            .iter()
            .map(|(k, v)| format!("{k} {v}"))
            .collect();
        out.push_str(&format!("terminated by: {}\n", hist.join(", ")));
        out.push_str(&format!(
            "cache: {} hits, {} misses, {} network calls\n",
            self.cache.hits, self.cache.misses, self.cache.network_calls
        ));
        out
    }
}

fn tool_kind_backend(
    tool: ToolKind,
    backend: &ToolBackend,
    cache: &Arc<ReplayCache>,
) -> Result<Arc<dyn Retriever>, HarnessError> {
    let r: Arc<dyn Retriever> = match backend {
        ToolBackend::Wikipedia { endpoint } => {
            Arc::new(WikipediaRetriever::new(endpoint.clone(), cache.clone()))
        }
        ToolBackend::Websearch {
            endpoint,
            engine_id,
            api_key_env,
        } => {
            let key = std::env::var(api_key_env)
                .map_err(|_| HarnessError::MissingEnv(api_key_env.clone()))?;
            Arc::new(WebSearchRetriever::new(endpoint.clone(), engine_id.clone(), key, cache.clone()))
        }
        ToolBackend::Recorded { path } => Arc::new(
            RecordedRetriever::from_path(tool, path).map_err(|e| input_err(path, e))?,
        ),
        ToolBackend::Corpus { path } => {
            Arc::new(CorpusRetriever::from_path(tool, path).map_err(|e| input_err(path, e))?)
        }
    };
    Ok(r)
}

enum LlmSource {
    Script(ScriptBook),
    Shared(Arc<dyn LlmClient>),
}

/// Runs every case and returns the per-case results in case order.
/// Failures inside a case become empty predictions.
pub fn evaluate_cases(
    cfg: &RunConfig,
    data: &Dataset,
    transport: Arc<dyn Transport>,
) -> Result<(Vec<CaseResult>, CacheStats), HarnessError> {
    let cache = Arc::new(ReplayCache::new(cfg.cache_dir.clone(), cfg.cache_mode, transport));
    let tools = Toolbox::new(
        tool_kind_backend(ToolKind::Basic, &cfg.tools.basic, &cache)?,
        tool_kind_backend(ToolKind::Advanced, &cfg.tools.advanced, &cache)?,
    );
    let scorer: Box<dyn RelevanceScorer> = match &cfg.scorer {
        ScorerBackend::Lexical => Box::new(LexicalScorer::new(cfg.retriever.stopwords.clone())),
        ScorerBackend::Remote { url } => Box::new(RemoteScorer::new(url.clone(), cache.clone())),
    };
    let llm = match &cfg.llm {
        LlmBackend::Script { path } => LlmSource::Script(
            ScriptBook::from_path(path).map_err(|e| input_err(path, e))?,
        ),
        LlmBackend::Http {
            base_url,
            model,
            api_key_env,
        } => {
            let key = match api_key_env {
                Some(var) => {
                    Some(std::env::var(var).map_err(|_| HarnessError::MissingEnv(var.clone()))?)
                }
                None => None,
            };
            LlmSource::Shared(Arc::new(ChatCompletionsClient::new(
                base_url.clone(),
                model.clone(),
                key,
                cfg.seed,
                cache.clone(),
            )))
        }
    };
    let clock: Box<dyn Clock> = if cfg.fixed_timestamps {
        Box::new(FixedClock::default())
    } else {
        Box::new(SystemClock)
    };
    let index = AliasIndex::build(&data.entities);

    let run_case = |case: &EvalCase| -> CaseResult {
        let scripted;
        let client: &dyn LlmClient = match &llm {
            LlmSource::Shared(c) => c.as_ref(),
            LlmSource::Script(book) => {
                scripted = book.llm_for(
                    &case.id,
                    ScriptVars {
                        entity: data.entities.label_or_id(case.query.known_entity.as_str()).into(),
                        relation: data.relations.label_or_id(case.query.relation.as_str()).into(),
                        entity_id: case.query.known_entity.to_string(),
                        relation_id: case.query.relation.to_string(),
                    },
                );
                &scripted
            }
        };
        let deps = AgentDeps {
            llm: client,
            tools: &tools,
            scorer: scorer.as_ref(),
            kg: &data.train,
            entities: &data.entities,
            relations: &data.relations,
            retriever: &cfg.retriever,
            clock: clock.as_ref(),
        };
        let (trajectory, surfaces) = match run_agent(case, &deps, &cfg.agent) {
            Ok((t, c)) => (t, c.into_vec()),
            Err(e) => (Trajectory::failed(case.clone(), e.to_string()), Vec::new()),
        };
        let (links, ranked) = index.link_ranked_detailed(&surfaces);
        let mut prediction = RankedPrediction::new(case.clone(), ranked);
        prediction.trajectory_ref = Some(case.id.clone());
        CaseResult {
            trajectory,
            links,
            prediction,
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let results: Vec<CaseResult> = pool.install(|| data.cases.par_iter().map(run_case).collect());
    Ok((results, cache.stats()))
}

/// Aggregates per-case results; a pure reduction in case order.
pub fn summarize(
    cfg: &RunConfig,
    data: &Dataset,
    results: &[CaseResult],
    cache: CacheStats,
) -> Result<RunReport, HarnessError> {
    let preds: Vec<RankedPrediction> = results.iter().map(|r| r.prediction.clone()).collect();
    let metrics = MetricReport::compute(&preds, &data.cardinality, &cfg.metrics_n, cfg.ra_rule)?;
    let trajectories: Vec<&Trajectory> = results.iter().map(|r| &r.trajectory).collect();
    let mut terminated_by = BTreeMap::new();
    for t in &trajectories {
        *terminated_by.entry(t.terminated_by).or_insert(0) += 1;
    }
    let iterations: usize = trajectories.iter().map(|t| t.iterations()).sum();
    Ok(RunReport {
        rows: metrics.rows(),
        metrics,
        retriever_usage: retriever_usage(trajectories.iter().copied()),
        mean_iterations: iterations as f64 / trajectories.len().max(1) as f64,
        terminated_by,
        failed_cases: trajectories.iter().filter(|t| t.error.is_some()).count(),
        cache,
        config: cfg.clone(),
        started_at: String::new(),
        finished_at: String::new(),
    })
}

/// Writes the run directory.
pub fn write_run_dir(
    out: &Path,
    cfg: &RunConfig,
    results: &[CaseResult],
    report: &RunReport,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("report.json");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    let path = out.join("report.txt");
    fs::write(&path, report.render()).map_err(io_err(&path))?;
    let path = out.join("config_snapshot");
    fs::write(&path, cfg.snapshot()).map_err(io_err(&path))?;

    let jsonl = |name: &str, lines: Vec<String>| -> Result<(), HarnessError> {
        let path = out.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        for l in lines {
            writeln!(w, "{l}").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))
    };
    jsonl(
        "trajectories.jsonl",
        results
            .iter()
            .map(|r| serde_json::to_string(&r.trajectory).expect("trajectory serializes"))
            .collect(),
    )?;
    jsonl(
        "predictions.jsonl",
        results
            .iter()
            .map(|r| serde_json::to_string(&r.prediction).expect("prediction serializes"))
            .collect(),
    )?;

    let path = out.join("linking_audit.tsv");
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    for r in results {
        for link in &r.links {
            write!(w, "{}\t", r.trajectory.case.id).map_err(io_err(&path))?;
            write_audit_line(&mut w, link).map_err(io_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = out.join("per_case.csv");
    let csv_err = |e: csv::Error| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record([
        "case_id", "direction", "known_entity", "relation", "gold", "rank", "terminated_by",
        "iterations", "basic_calls", "advanced_calls", "candidates", "linked", "error",
    ])
    .map_err(csv_err)?;
    for r in results {
        let t = &r.trajectory;
        let q = &t.case.query;
        w.write_record([
            t.case.id.clone(),
            q.direction.to_string(),
            q.known_entity.to_string(),
            q.relation.to_string(),
            t.case.gold.to_string(),
            rank_of_gold(&r.prediction).map(|x| x.to_string()).unwrap_or_default(),
            t.terminated_by.to_string(),
            t.iterations().to_string(),
            t.tool_calls(ToolKind::Basic).to_string(),
            t.tool_calls(ToolKind::Advanced).to_string(),
            t.final_candidates.len().to_string(),
            r.prediction.entities.len().to_string(),
            t.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Full evaluation with a caller-supplied transport.
pub fn run_eval_with(
    cfg: &RunConfig,
    out: &Path,
    transport: Arc<dyn Transport>,
) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let started_at = now();
    let data = Dataset::load(&cfg.data)?;
    let (results, stats) = evaluate_cases(cfg, &data, transport)?;
    let mut report = summarize(cfg, &data, &results, stats)?;
    report.started_at = started_at;
    report.finished_at = now();
    write_run_dir(out, cfg, &results, &report)?;
    Ok(report)
}

/// Full evaluation over the network (through the replay cache).
pub fn run_eval(cfg: &RunConfig, out: &Path) -> Result<RunReport, HarnessError> {
    let transport = ReqwestTransport::new(cfg.retriever.timeout.max(Duration::from_secs(1)), 2)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    run_eval_with(cfg, out, Arc::new(transport))
}

pub fn load_trajectories(run_dir: &Path) -> Result<Vec<Trajectory>, HarnessError> {
    let path = run_dir.join("trajectories.jsonl");
    open(&path)?
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| input_err(&path, e))?;
            serde_json::from_str(&l).map_err(|e| input_err(&path, e))
        })
        .collect()
}

pub fn show_trajectory(run_dir: &Path, case_id: &str) -> Result<String, HarnessError> {
    let all = load_trajectories(run_dir)?;
    match all.iter().find(|t| t.case.id == case_id) {
        Some(t) => Ok(t.render()),
        None => Err(HarnessError::UnknownCase {
            case: case_id.to_string(),
            available: all.iter().map(|t| t.case.id.as_str()).collect::<Vec<_>>().join(", "),
        }),
    }
}

/// Metrics-only mode over a predictions JSONL file and a training graph.
pub fn score_predictions(
    predictions: &Path,
    train: &Path,
    ns: &[usize],
    rule: RaRule,
) -> Result<MetricReport, HarnessError> {
    let (kg, _) = load_triples(open(train)?).map_err(|e| input_err(train, e))?;
    let table = compute_relation_cardinality(&kg).unwrap_or_default();
    let preds: Vec<RankedPrediction> = open(predictions)?
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| input_err(predictions, e))?;
            let p: RankedPrediction =
                serde_json::from_str(&l).map_err(|e| input_err(predictions, e))?;
            Ok(RankedPrediction::new(p.case, p.entities))
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(MetricReport::compute(&preds, &table, ns, rule)?)
}

/// Default run-directory name next to the config.
pub fn default_run_dir(config_path: &Path) -> PathBuf {
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    config_path.parent().unwrap_or(Path::new(".")).join("runs").join(stem)
}
