mod common;

use std::fs;
use std::sync::{Arc, Mutex};

use common::{fixtures, planted_benchmark};
use kgc_agent::cache::{HttpRequest, HttpResponse, OfflineTransport, Transport, TransportError};
use kgc_agent::harness::{run_eval_with, show_trajectory, HarnessError, RunConfig};
use serde_json::json;

fn all_files(dir: &std::path::Path) -> Vec<String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(all_files(&p));
        } else {
            out.push(fs::read_to_string(&p).unwrap_or_default());
        }
    }
    out
}

/// Answers every chat request directly and remembers the headers it saw.
struct AnsweringLlm {
    headers: Mutex<Vec<(String, String)>>,
}

impl Transport for AnsweringLlm {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.headers.lock().unwrap().extend(req.headers.iter().cloned());
        let body = json!({"choices": [{"message": {"role": "assistant", "content": "<answer>unknown</answer>"}}]});
        Ok(HttpResponse { status: 200, body: body.to_string() })
    }
}

fn http_config(dir: &std::path::Path, env: &str) -> RunConfig {
    planted_benchmark(dir, 3);
    let text = format!(
        r#"concurrency = 2
fixed_timestamps = true
cache_dir = "cache"

[data]
train = "train.tsv"
test = "test.tsv"
catalog = "catalog.tsv"

[tools.basic]
kind = "corpus"
path = "corpus.jsonl"

[tools.advanced]
kind = "corpus"
path = "corpus.jsonl"

[llm]
kind = "http"
base_url = "http://llm.test/v1"
model = "m"
api_key_env = "{env}"
"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    RunConfig::load(&path).unwrap()
}

#[test]
fn api_key_stays_out_of_cache_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let secret = "sk-very-secret-value-123";
    std::env::set_var("KGC_TEST_LLM_KEY", secret);
    let cfg = http_config(tmp.path(), "KGC_TEST_LLM_KEY");
    let llm = Arc::new(AnsweringLlm { headers: Mutex::new(Vec::new()) });
    let report = run_eval_with(&cfg, &tmp.path().join("run"), llm.clone()).unwrap();
    assert_eq!(report.metrics.case_count, 3);
    assert!(llm.headers.lock().unwrap().iter().any(|(_, v)| v.contains(secret)));
    let files = all_files(tmp.path());
    assert!(files.len() > 5);
    assert!(files.iter().all(|f| !f.contains(secret)));
}

#[test]
fn missing_api_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = http_config(tmp.path(), "KGC_TEST_UNSET_VARIABLE");
    let err = run_eval_with(&cfg, &tmp.path().join("run"), Arc::new(OfflineTransport)).unwrap_err();
    assert!(matches!(err, HarnessError::MissingEnv(v) if v == "KGC_TEST_UNSET_VARIABLE"));
}

#[test]
fn unreachable_llm_marks_cases_failed_and_run_continues() {
    let tmp = tempfile::tempdir().unwrap();
    std::env::set_var("KGC_TEST_LLM_KEY2", "x");
    let cfg = http_config(tmp.path(), "KGC_TEST_LLM_KEY2");
    let out = tmp.path().join("run");
    let report = run_eval_with(&cfg, &out, Arc::new(OfflineTransport)).unwrap();
    assert_eq!(report.failed_cases, 3);
    assert_eq!(report.metrics.mrr, 0.0);
    let shown = show_trajectory(&out, "00000-tail").unwrap();
    assert!(shown.contains("ERROR"), "{shown}");
}

#[test]
fn show_trajectory_lists_known_cases_on_miss() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&fixtures().join("episodes/run.toml")).unwrap();
    run_eval_with(&cfg, tmp.path(), Arc::new(OfflineTransport)).unwrap();
    match show_trajectory(tmp.path(), "nope") {
        Err(HarnessError::UnknownCase { available, .. }) => assert!(available.contains("00001-tail")),
        other => panic!("unexpected {other:?}"),
    }
    for f in ["report.json", "report.txt", "config_snapshot", "trajectories.jsonl", "predictions.jsonl", "linking_audit.tsv", "per_case.csv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}
