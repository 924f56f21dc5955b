//! Emerging-entities benchmark construction.
//!
//! Entities whose inception (or, failing that, publication date) falls in
//! a half-open window `[start, end)` and that belong to one of the
//! configured categories are fetched with all their entity-valued
//! statements. `(head, relation)` groups with too many distinct tails are
//! dropped, and the survivors are written as kg TSV files plus a manifest.

mod wikidata;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::CacheError;
use crate::kg::{write_catalog, write_triples, EntityId, EntityRecord, RelationId, Triple};

pub use wikidata::{
    parse_wikidata_time, EntityDoc, WikidataClient, INCEPTION, INSTANCE_OF, OCCUPATION,
    PUBLICATION_DATE, SUBCLASS_OF,
};

/// Default category whitelist. Only a handful of categories are known
/// for certain (artists, albums, TV shows, films, plus the classes seen in
/// sample entities); the rest is a reconstruction and meant to be edited.
pub const DEFAULT_CATEGORIES: &[(&str, &str)] = &[
    ("Q5398426", "television series"),
    ("Q11424", "film"),
    ("Q482994", "album"),
    ("Q483501", "artist"),
    ("Q177220", "singer"),
    ("Q33999", "actor"),
    ("Q639669", "musician"),
    ("Q215380", "musical group"),
    ("Q134556", "single"),
    ("Q7889", "video game"),
    ("Q571", "book"),
    ("Q115305900", "large language model"),
    ("Q27686", "hotel"),
    ("Q163740", "nonprofit organization"),
    ("Q4830453", "business"),
    ("Q7397", "software"),
    ("Q41176", "building"),
    ("Q21191270", "television series episode"),
    ("Q1656682", "event"),
    ("Q24856", "film series"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuilderConfig {
    pub window_start: NaiveDate,
    /// Exclusive.
    pub window_end: NaiveDate,
    pub categories: Vec<String>,
    pub max_tail_cardinality: usize,
    /// Base URL for entity data and the labels API.
    pub endpoint: String,
    pub sparql_endpoint: String,
    pub page_size: usize,
    /// Also accept entities whose class is a direct subclass of a category.
    pub subclass_expansion: bool,
    pub parallelism: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            window_start: NaiveDate::from_ymd_opt(2025, 1, 1).expect("valid date"),
            window_end: NaiveDate::from_ymd_opt(2025, 5, 1).expect("valid date"),
            categories: DEFAULT_CATEGORIES.iter().map(|(id, _)| id.to_string()).collect(),
            max_tail_cardinality: 10,
            endpoint: "https://www.wikidata.org".into(),
            sparql_endpoint: "https://query.wikidata.org/sparql".into(),
            page_size: 500,
            subclass_expansion: false,
            parallelism: 4,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        let fail = |m: &str| Err(BuildError::Config(m.to_string()));
        if self.window_start >= self.window_end {
            return fail("window_start must be before window_end");
        }
        if self.categories.is_empty() {
            return fail("categories must be non-empty");
        }
        if self.page_size == 0 || self.max_tail_cardinality == 0 || self.parallelism == 0 {
            return fail("page_size, max_tail_cardinality and parallelism must be positive");
        }
        Ok(())
    }

    pub fn in_window(&self, date: NaiveDate) -> bool {
        self.window_start <= date && date < self.window_end
    }

    /// One SPARQL page of candidate items, ordered by item id.
    pub fn selection_query(&self, offset: usize) -> String {
        let classes: Vec<String> = self.categories.iter().map(|c| format!("wd:{c}")).collect();
        let class_pattern = if self.subclass_expansion {
            "{ ?item wdt:P31/wdt:P279? ?cls } UNION { ?item wdt:P106 ?cls }"
        } else {
            "{ ?item wdt:P31 ?cls } UNION { ?item wdt:P106 ?cls }"
        };
        format!(
            "SELECT DISTINCT ?item WHERE {{ VALUES ?cls {{ {} }} {} \
             {{ ?item wdt:P571 ?d }} UNION {{ ?item wdt:P577 ?d }} \
             FILTER(?d >= \"{}T00:00:00Z\"^^xsd:dateTime && ?d < \"{}T00:00:00Z\"^^xsd:dateTime) }} \
             ORDER BY ?item LIMIT {} OFFSET {}",
            classes.join(" "),
            class_pattern,
            self.window_start,
            self.window_end,
            self.page_size,
            offset
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("invalid builder config: {0}")]
    Config(String),
    #[error(transparent)]
    Fetch(#[from] CacheError),
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("io error at {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("build interrupted ({reason}); progress saved to {progress}, rerun to resume")]
    Interrupted { progress: String, reason: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> BuildError + '_ {
    move |e| BuildError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateSource {
    Inception,
    PublicationDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEntityBundle {
    pub id: EntityId,
    pub label: String,
    pub description: String,
    pub inception: NaiveDate,
    pub date_source: DateSource,
    /// Instance-of and occupation classes.
    pub categories: Vec<String>,
    /// Statements with this entity as head.
    pub triples: Vec<Triple>,
    pub aliases: Vec<String>,
}

impl RawEntityBundle {
    /// `None` when the document has no usable date or label-independent id.
    pub fn from_doc(doc: &EntityDoc) -> Option<Self> {
        let (inception, date_source) = doc.emergence_date()?;
        let id = EntityId::new(doc.id.clone()).ok()?;
        let mut categories: Vec<String> = doc.values(INSTANCE_OF).to_vec();
        categories.extend(doc.values(OCCUPATION).iter().cloned());
        let triples = doc
            .links
            .iter()
            .flat_map(|(p, targets)| targets.iter().map(move |t| (p, t)))
            .filter_map(|(p, t)| {
                Some(Triple::new(
                    id.clone(),
                    RelationId::new(p.clone()).ok()?,
                    EntityId::new(t.clone()).ok()?,
                ))
            })
            .collect();
        Some(Self {
            label: doc.label.clone().unwrap_or_else(|| doc.id.clone()),
            description: doc.description.clone().unwrap_or_default(),
            id,
            inception,
            date_source,
            categories,
            triples,
            aliases: doc.aliases.clone(),
        })
    }
}

/// Saved between runs so an interrupted build can pick up where it stopped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildProgress {
    pub selection_complete: bool,
    pub pages_done: usize,
    pub selected: Vec<String>,
    /// Fetched entities; `None` marks ids that were fetched and rejected.
    pub fetched: BTreeMap<String, Option<RawEntityBundle>>,
}

impl BuildProgress {
    pub fn load(path: &Path) -> Result<Self, BuildError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| BuildError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), BuildError> {
        let text = serde_json::to_string_pretty(self).expect("progress serializes");
        write_atomic(path, text.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BuildError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

fn category_match(
    bundle: &RawEntityBundle,
    cfg: &BuilderConfig,
    client: &WikidataClient,
) -> Result<bool, BuildError> {
    let wanted: BTreeSet<&str> = cfg.categories.iter().map(String::as_str).collect();
    if bundle.categories.iter().any(|c| wanted.contains(c.as_str())) {
        return Ok(true);
    }
    if cfg.subclass_expansion {
        for class in &bundle.categories {
            let doc = client.entity(class)?;
            if doc.values(SUBCLASS_OF).iter().any(|c| wanted.contains(c.as_str())) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

fn fetch_one(
    id: &str,
    cfg: &BuilderConfig,
    client: &WikidataClient,
) -> Result<Option<RawEntityBundle>, BuildError> {
    let doc = client.entity(id)?;
    let Some(bundle) = RawEntityBundle::from_doc(&doc) else {
        return Ok(None);
    };
    if !cfg.in_window(bundle.inception) || !category_match(&bundle, cfg, client)? {
        return Ok(None);
    }
    Ok(Some(bundle))
}

/// Selects and fetches every in-window, in-category entity, ordered by id.
/// With a `progress` path, finished work is recorded there and skipped on
/// the next call; a failure saves progress and reports `Interrupted`.
pub fn fetch_emerging_entities(
    cfg: &BuilderConfig,
    client: &WikidataClient,
    progress: Option<&Path>,
) -> Result<Vec<RawEntityBundle>, BuildError> {
    cfg.validate()?;
    let mut state = match progress {
        Some(p) => BuildProgress::load(p)?,
        None => BuildProgress::default(),
    };
    let interrupted = |state: &BuildProgress, err: BuildError| -> BuildError {
        match progress {
            Some(p) => match state.save(p) {
                Ok(()) => BuildError::Interrupted {
                    progress: p.display().to_string(),
                    reason: err.to_string(),
                },
                Err(save_err) => save_err,
            },
            None => err,
        }
    };

    while !state.selection_complete {
        let query = cfg.selection_query(state.pages_done * cfg.page_size);
        match client.select_ids(&query) {
            Ok(ids) => {
                state.selection_complete = ids.len() < cfg.page_size;
                state.pages_done += 1;
                state.selected.extend(ids);
            }
            Err(e) => return Err(interrupted(&state, e)),
        }
    }
    let selected: BTreeSet<String> = state.selected.iter().cloned().collect();

    let todo: Vec<&String> = selected.iter().filter(|id| !state.fetched.contains_key(*id)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| BuildError::Config(e.to_string()))?;
    let results: Vec<(String, Result<Option<RawEntityBundle>, BuildError>)> = pool.install(|| {
        todo.par_iter()
            .map(|id| ((*id).clone(), fetch_one(id, cfg, client)))
            .collect()
    });
    let mut first_err = None;
    for (id, r) in results {
        match r {
            Ok(b) => {
                state.fetched.insert(id, b);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(interrupted(&state, e));
    }
    if let Some(p) = progress {
        state.save(p)?;
    }
    Ok(selected
        .iter()
        .filter_map(|id| state.fetched.get(id).cloned().flatten())
        .collect())
}

/// Drops every `(head, relation)` group with more than `max_card` distinct
/// tails; survivors keep their input order.
pub fn apply_cardinality_filter(bundles: &[RawEntityBundle], max_card: usize) -> Vec<Triple> {
    let mut groups: BTreeMap<(&EntityId, &RelationId), BTreeSet<&EntityId>> = BTreeMap::new();
    for t in bundles.iter().flat_map(|b| &b.triples) {
        groups.entry((&t.head, &t.relation)).or_default().insert(&t.tail);
    }
    let mut seen = BTreeSet::new();
    bundles
        .iter()
        .flat_map(|b| &b.triples)
        .filter(|t| groups[&(&t.head, &t.relation)].len() <= max_card)
        .filter(|t| seen.insert((*t).clone()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub triple_count: usize,
    pub relation_count: usize,
    /// Distinct head (emerging) entities.
    pub entity_count: usize,
    pub window: Window,
    pub categories: Vec<String>,
    pub build_timestamp: String,
    pub endpoint: String,
    /// Entities dated by publication date for lack of an inception date.
    pub publication_date_fallbacks: Vec<String>,
}

/// Writes `triples.tsv`, `catalog.tsv`, `relations.tsv` and
/// `manifest.json`. Heads outside the window are dropped again here.
/// Output is sorted, so identical inputs give identical bytes apart from
/// the timestamp.
pub fn emit_benchmark(
    triples: &[Triple],
    bundles: &[RawEntityBundle],
    labels: &BTreeMap<String, String>,
    cfg: &BuilderConfig,
    out_dir: &Path,
    timestamp: &str,
) -> Result<Manifest, BuildError> {
    let heads: BTreeMap<&EntityId, &RawEntityBundle> = bundles
        .iter()
        .filter(|b| cfg.in_window(b.inception))
        .map(|b| (&b.id, b))
        .collect();
    let kept: BTreeSet<&Triple> = triples.iter().filter(|t| heads.contains_key(&t.head)).collect();

    let mut records: BTreeMap<EntityId, EntityRecord> = BTreeMap::new();
    for t in &kept {
        for id in [&t.head, &t.tail] {
            if records.contains_key(id) {
                continue;
            }
            let record = match heads.get(id) {
                Some(b) => EntityRecord::new(
                    b.id.clone(),
                    b.label.clone(),
                    b.aliases.clone(),
                    Some(b.description.clone()),
                ),
                None => EntityRecord::new(
                    id.clone(),
                    labels.get(id.as_str()).cloned().unwrap_or_else(|| id.to_string()),
                    Vec::new(),
                    None,
                ),
            };
            records.insert(id.clone(), record);
        }
    }
    let relations: BTreeSet<&RelationId> = kept.iter().map(|t| &t.relation).collect();
    let used_heads: BTreeSet<&EntityId> = kept.iter().map(|t| &t.head).collect();

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut buf = Vec::new();
    write_triples(&mut buf, kept.iter().copied()).map_err(io_err(out_dir))?;
    write_atomic(&out_dir.join("triples.tsv"), &buf)?;

    let mut buf = Vec::new();
    write_catalog(&mut buf, records.values()).map_err(io_err(out_dir))?;
    write_atomic(&out_dir.join("catalog.tsv"), &buf)?;

    let mut buf = String::new();
    for r in &relations {
        let label = labels.get(r.as_str()).map(String::as_str).unwrap_or(r.as_str());
        buf.push_str(&format!("{r}\t{}\n", label.replace(['\t', '\n'], " ")));
    }
    write_atomic(&out_dir.join("relations.tsv"), buf.as_bytes())?;

    let manifest = Manifest {
        triple_count: kept.len(),
        relation_count: relations.len(),
        entity_count: used_heads.len(),
        window: Window {
            start: cfg.window_start,
            end: cfg.window_end,
        },
        categories: cfg.categories.clone(),
        build_timestamp: timestamp.to_string(),
        endpoint: cfg.endpoint.clone(),
        publication_date_fallbacks: used_heads
            .iter()
            .filter(|h| heads[*h].date_source == DateSource::PublicationDate)
            .map(|h| h.to_string())
            .collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&out_dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

/// Full build: select, fetch (resumable via `out_dir/progress.json`),
/// filter, label and emit.
pub fn build_emerging(
    cfg: &BuilderConfig,
    client: &WikidataClient,
    out_dir: &Path,
    timestamp: &str,
) -> Result<Manifest, BuildError> {
    let progress: PathBuf = out_dir.join("progress.json");
    let bundles = fetch_emerging_entities(cfg, client, Some(&progress))?;
    let triples = apply_cardinality_filter(&bundles, cfg.max_tail_cardinality);
    let mut wanted: BTreeSet<String> = BTreeSet::new();
    for t in &triples {
        wanted.insert(t.tail.to_string());
        wanted.insert(t.relation.to_string());
    }
    let labels = client.labels(&wanted)?;
    emit_benchmark(&triples, &bundles, &labels, cfg, out_dir, timestamp)
}
