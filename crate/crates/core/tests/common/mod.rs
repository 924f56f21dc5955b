//! Fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use kgc_agent::cache::{HttpRequest, HttpResponse, Transport, TransportError};
use serde_json::{json, Value};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

const SYLLABLES: [&str; 10] = ["ka", "lo", "mi", "ra", "ten", "vu", "zor", "pel", "dan", "shi"];

/// A pronounceable name unique to `i` (< 1000).
pub fn word(i: usize) -> String {
    let s: String = [i / 100, (i / 10) % 10, i % 10].iter().map(|&d| SYLLABLES[d]).collect();
    let mut c = s.chars();
    let first = c.next().unwrap().to_ascii_uppercase();
    format!("{first}{}", c.as_str())
}

pub const PLANTED_RELATIONS: [(&str, &str); 5] = [
    ("P1", "operator"),
    ("P2", "architect"),
    ("P3", "namesake"),
    ("P4", "owner"),
    ("P5", "founder"),
];

pub struct Planted {
    pub dir: PathBuf,
    /// (head label, relation label, answer label) per case.
    pub facts: Vec<(String, String, String)>,
    pub documents: Vec<(String, String)>,
}

fn filler(i: usize) -> [String; 4] {
    [
        format!("It opened to visitors in spring after {} years of planning.", 3 + i % 7),
        "Local guides describe the site as quiet and well kept.".to_string(),
        format!("A small museum nearby records {} exhibits.", 40 + i),
        "Access is by regional rail or by road.".to_string(),
    ]
}

/// Writes a synthetic benchmark of `n` tail-prediction cases whose answers
/// are planted verbatim in a document collection.
pub fn planted_benchmark(dir: &Path, n: usize) -> Planted {
    fs::create_dir_all(dir).unwrap();
    let mut catalog = String::new();
    let mut test = String::new();
    let mut train = String::new();
    let mut corpus = String::new();
    let mut facts = Vec::new();
    let mut documents = Vec::new();
    for i in 0..n {
        let (pid, rel) = PLANTED_RELATIONS[i % PLANTED_RELATIONS.len()];
        let head = format!("{} Station", word(i));
        let answer = format!("{} Ridge", word(500 + i));
        catalog.push_str(&format!("E{i}\t{head}\t\tsynthetic landmark {i}\n"));
        catalog.push_str(&format!("A{i}\t{answer}\t\t\n"));
        test.push_str(&format!("E{i}\t{pid}\tA{i}\n"));
        let f = filler(i);
        let text = format!(
            "{} {} {} The {rel} of {head} is {answer}. {}",
            head.clone() + " is a landmark in the northern district.",
            f[0],
            f[1],
            f[2]
        );
        let text = format!("{text} {}", f[3]);
        corpus.push_str(&json!({"source_id": format!("doc:{i}"), "title": head, "text": text}).to_string());
        corpus.push('\n');
        documents.push((head.clone(), text));
        facts.push((head, rel.to_string(), answer));
    }
    // Training facts over separate entities so every relation has examples.
    for j in 0..10 {
        let (pid, _) = PLANTED_RELATIONS[j % PLANTED_RELATIONS.len()];
        catalog.push_str(&format!("T{j}\t{} Tower\t\t\n", word(900 + j)));
        catalog.push_str(&format!("U{j}\t{} Hall\t\t\n", word(950 + j)));
        train.push_str(&format!("T{j}\t{pid}\tU{j}\n"));
    }
    let relations: String = PLANTED_RELATIONS.iter().map(|(p, l)| format!("{p}\t{l}\n")).collect();
    fs::write(dir.join("catalog.tsv"), catalog).unwrap();
    fs::write(dir.join("relations.tsv"), relations).unwrap();
    fs::write(dir.join("test.tsv"), test).unwrap();
    fs::write(dir.join("train.tsv"), train).unwrap();
    fs::write(dir.join("corpus.jsonl"), corpus).unwrap();
    fs::write(
        dir.join("script.json"),
        json!({"default": [
            {"tool": "basic", "query": "{entity} {relation}"},
            {"text": "The passages state the answer directly.\nDECISION: SUFFICIENT"},
            {"answer_from_evidence": "The {relation} of {entity} is ([^.]+)\\.", "fallback": "<answer>unknown</answer>"}
        ]})
        .to_string(),
    )
    .unwrap();
    Planted {
        dir: dir.to_path_buf(),
        facts,
        documents,
    }
}

/// Config text for a planted benchmark; `basic` is the TOML body of the
/// basic tool table.
pub fn planted_config(concurrency: usize, basic: &str, cache_mode: &str) -> String {
    format!(
        r#"concurrency = {concurrency}
fixed_timestamps = true
cache_dir = "cache"
cache_mode = "{cache_mode}"

[data]
train = "train.tsv"
test = "test.tsv"
catalog = "catalog.tsv"
relations = "relations.tsv"

[tools.basic]
{basic}

[tools.advanced]
kind = "corpus"
path = "corpus.jsonl"

[llm]
kind = "script"
path = "script.json"
"#
    )
}

fn query_param(url: &str, name: &str) -> Option<String> {
    url::Url::parse(url)
        .ok()?
        .query_pairs()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.into_owned())
}

/// A MediaWiki-style endpoint over an in-memory document list: search
/// matches titles contained in the query; extracts return the text.
pub struct FakeWiki {
    pub docs: Vec<(String, String)>,
    pub calls: AtomicU64,
}

impl FakeWiki {
    pub fn new(docs: Vec<(String, String)>) -> Self {
        Self {
            docs,
            calls: AtomicU64::new(0),
        }
    }
}

impl Transport for FakeWiki {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let ok = |v: Value| Ok(HttpResponse { status: 200, body: v.to_string() });
        if let Some(q) = query_param(&req.url, "srsearch") {
            let hits: Vec<Value> = self
                .docs
                .iter()
                .enumerate()
                .filter(|(_, (title, _))| q.contains(title.as_str()))
                .map(|(i, (title, _))| json!({"pageid": 1000 + i, "title": title}))
                .collect();
            return ok(json!({"query": {"search": hits}}));
        }
        if let Some(id) = query_param(&req.url, "pageids") {
            let i: usize = id.parse::<usize>().unwrap_or(0).saturating_sub(1000);
            if let Some((title, text)) = self.docs.get(i) {
                return ok(json!({"query": {"pages": [{"pageid": 1000 + i, "title": title, "extract": text}]}}));
            }
        }
        Err(TransportError::Failed { url: req.url.clone(), reason: "unknown request".into() })
    }
}

/// A Wikidata-style endpoint backed by `tests/fixtures/wikidata`. SPARQL
/// pages are cut from the recorded selection by LIMIT/OFFSET; ids in
/// `fail` are unavailable.
pub struct FakeWikidata {
    root: PathBuf,
    pub fail: Mutex<Vec<String>>,
    pub calls: AtomicU64,
}

impl FakeWikidata {
    pub fn new(fail: &[&str]) -> Self {
        Self {
            root: fixtures().join("wikidata"),
            fail: Mutex::new(fail.iter().map(|s| s.to_string()).collect()),
            calls: AtomicU64::new(0),
        }
    }
}

fn sparql_clause(query: &str, word: &str) -> usize {
    query
        .split_whitespace()
        .skip_while(|w| *w != word)
        .nth(1)
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

impl Transport for FakeWikidata {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fail = |why: &str| Err(TransportError::Failed { url: req.url.clone(), reason: why.into() });
        let ok = |body: String| Ok(HttpResponse { status: 200, body });
        if let Some(q) = query_param(&req.url, "query") {
            let all: Vec<String> =
                serde_json::from_str(&fs::read_to_string(self.root.join("selection.json")).unwrap()).unwrap();
            let (limit, offset) = (sparql_clause(&q, "LIMIT"), sparql_clause(&q, "OFFSET"));
            let rows: Vec<Value> = all
                .iter()
                .skip(offset)
                .take(limit)
                .map(|id| json!({"item": {"type": "uri", "value": format!("http://www.wikidata.org/entity/{id}")}}))
                .collect();
            return ok(json!({"head": {"vars": ["item"]}, "results": {"bindings": rows}}).to_string());
        }
        if let Some(ids) = query_param(&req.url, "ids") {
            let labels: BTreeMap<String, String> =
                serde_json::from_str(&fs::read_to_string(self.root.join("labels.json")).unwrap()).unwrap();
            let mut entities = serde_json::Map::new();
            for id in ids.split('|') {
                let e = match labels.get(id) {
                    Some(l) => json!({"id": id, "labels": {"en": {"language": "en", "value": l}}}),
                    None => json!({"id": id, "missing": ""}),
                };
                entities.insert(id.to_string(), e);
            }
            return ok(json!({"entities": entities}).to_string());
        }
        if let Some(rest) = req.url.split("Special:EntityData/").nth(1) {
            let id = rest.trim_end_matches(".json");
            if self.fail.lock().unwrap().iter().any(|f| f == id) {
                return fail("simulated outage");
            }
            return match fs::read_to_string(self.root.join("entities").join(format!("{id}.json"))) {
                Ok(body) => ok(body),
                Err(_) => Ok(HttpResponse { status: 404, body: String::new() }),
            };
        }
        fail("unknown request")
    }
}
