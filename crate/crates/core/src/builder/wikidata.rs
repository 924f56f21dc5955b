use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::NaiveDate;
use serde_json::{json, Value};

use super::{BuildError, DateSource};
use crate::cache::{CacheKind, HttpRequest, ReplayCache};

pub const INSTANCE_OF: &str = "P31";
pub const SUBCLASS_OF: &str = "P279";
pub const OCCUPATION: &str = "P106";
pub const INCEPTION: &str = "P571";
pub const PUBLICATION_DATE: &str = "P577";

/// Labels are fetched this many ids per request.
const LABEL_BATCH: usize = 50;

/// Client for a Wikidata-compatible deployment: the SPARQL service for
/// selection, `Special:EntityData` for statements and `wbgetentities` for
/// labels. Every request goes through the replay cache.
#[derive(Clone)]
pub struct WikidataClient {
    endpoint: String,
    sparql_endpoint: String,
    cache: Arc<ReplayCache>,
}

/// The parts of one entity document the builder needs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityDoc {
    pub id: String,
    pub label: Option<String>,
    pub description: Option<String>,
    pub aliases: Vec<String>,
    /// Entity-valued statements, property → target ids, in document order.
    pub links: BTreeMap<String, Vec<String>>,
    /// Time-valued statements, property → dates.
    pub dates: BTreeMap<String, Vec<NaiveDate>>,
}

impl EntityDoc {
    pub fn values(&self, property: &str) -> &[String] {
        self.links.get(property).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Inception, else publication date; the earliest value of whichever
    /// property is present.
    pub fn emergence_date(&self) -> Option<(NaiveDate, DateSource)> {
        let first = |p: &str| self.dates.get(p).and_then(|d| d.iter().min().copied());
        first(INCEPTION)
            .map(|d| (d, DateSource::Inception))
            .or_else(|| first(PUBLICATION_DATE).map(|d| (d, DateSource::PublicationDate)))
    }
}

/// Parses a Wikidata time literal (`+2025-03-01T00:00:00Z`). Month or day
/// `00` (reduced precision) is read as the first of the period.
pub fn parse_wikidata_time(s: &str) -> Option<NaiveDate> {
    let s = s.trim_start_matches('+');
    if s.starts_with('-') {
        return None;
    }
    let date = s.split('T').next()?;
    let mut parts = date.split('-');
    let y: i32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let d: u32 = parts.next()?.parse().ok()?;
    NaiveDate::from_ymd_opt(y, m.max(1), d.max(1))
}

fn entity_id_from_uri(uri: &str) -> Option<String> {
    uri.rsplit('/').next().filter(|s| !s.is_empty()).map(str::to_string)
}

fn bad(what: impl Into<String>) -> BuildError {
    BuildError::BadResponse(what.into())
}

impl WikidataClient {
    pub fn new(
        endpoint: impl Into<String>,
        sparql_endpoint: impl Into<String>,
        cache: Arc<ReplayCache>,
    ) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            sparql_endpoint: sparql_endpoint.into(),
            cache,
        }
    }

    fn get(&self, url: String) -> Result<Value, BuildError> {
        let canonical = json!({"url": url});
        let req = HttpRequest::get(&url).header("Accept", "application/json");
        let body = self.cache.fetch(CacheKind::Wikidata, &canonical, &req)?;
        serde_json::from_str(&body).map_err(|e| bad(format!("{url}: {e}")))
    }

    pub fn sparql_url(&self, query: &str) -> Result<String, BuildError> {
        let url = url::Url::parse_with_params(
            &self.sparql_endpoint,
            &[("query", query), ("format", "json")],
        )
        .map_err(|e| BuildError::Config(format!("sparql endpoint: {e}")))?;
        Ok(url.to_string())
    }

    pub fn entity_data_url(&self, id: &str) -> String {
        format!("{}/wiki/Special:EntityData/{id}.json", self.endpoint)
    }

    pub fn labels_url(&self, ids: &[String]) -> Result<String, BuildError> {
        let url = url::Url::parse_with_params(
            &format!("{}/w/api.php", self.endpoint),
            &[
                ("action", "wbgetentities"),
                ("ids", &ids.join("|")),
                ("props", "labels"),
                ("languages", "en"),
                ("format", "json"),
            ],
        )
        .map_err(|e| BuildError::Config(format!("endpoint: {e}")))?;
        Ok(url.to_string())
    }

    /// Item ids selected by one page of a SPARQL query.
    pub fn select_ids(&self, query: &str) -> Result<Vec<String>, BuildError> {
        let v = self.get(self.sparql_url(query)?)?;
        let rows = v
            .pointer("/results/bindings")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("sparql: no results.bindings"))?;
        Ok(rows
            .iter()
            .filter_map(|r| r.pointer("/item/value").and_then(Value::as_str))
            .filter_map(entity_id_from_uri)
            .collect())
    }

    pub fn entity(&self, id: &str) -> Result<EntityDoc, BuildError> {
        let v = self.get(self.entity_data_url(id))?;
        let entities = v
            .get("entities")
            .and_then(Value::as_object)
            .ok_or_else(|| bad(format!("{id}: no entities object")))?;
        // Redirected ids come back under their target id.
        let e = entities
            .get(id)
            .or_else(|| entities.values().next())
            .ok_or_else(|| bad(format!("{id}: empty entities object")))?;
        Ok(parse_entity(id, e))
    }

    /// English labels for `ids`; ids without one are absent from the map.
    pub fn labels(&self, ids: &BTreeSet<String>) -> Result<BTreeMap<String, String>, BuildError> {
        let ids: Vec<String> = ids.iter().cloned().collect();
        let mut out = BTreeMap::new();
        for batch in ids.chunks(LABEL_BATCH) {
            let v = self.get(self.labels_url(batch)?)?;
            let Some(entities) = v.get("entities").and_then(Value::as_object) else {
                return Err(bad("wbgetentities: no entities object"));
            };
            for (id, e) in entities {
                if let Some(l) = e.pointer("/labels/en/value").and_then(Value::as_str) {
                    out.insert(id.clone(), l.to_string());
                }
            }
        }
        Ok(out)
    }
}

fn parse_entity(id: &str, e: &Value) -> EntityDoc {
    let text = |p: &str| e.pointer(p).and_then(Value::as_str).map(str::to_string);
    let mut doc = EntityDoc {
        id: id.to_string(),
        label: text("/labels/en/value"),
        description: text("/descriptions/en/value"),
        aliases: e
            .pointer("/aliases/en")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .filter_map(|x| x.get("value").and_then(Value::as_str))
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default(),
        ..Default::default()
    };
    let Some(claims) = e.get("claims").and_then(Value::as_object) else {
        return doc;
    };
    for (property, statements) in claims {
        for st in statements.as_array().into_iter().flatten() {
            if st.get("rank").and_then(Value::as_str) == Some("deprecated") {
                continue;
            }
            let Some(dv) = st.pointer("/mainsnak/datavalue") else {
                continue;
            };
            match dv.get("type").and_then(Value::as_str) {
                Some("wikibase-entityid") => {
                    if let Some(target) = dv.pointer("/value/id").and_then(Value::as_str) {
                        let list = doc.links.entry(property.clone()).or_default();
                        if !list.iter().any(|t| t == target) {
                            list.push(target.to_string());
                        }
                    }
                }
                Some("time") => {
                    if let Some(d) = dv
                        .pointer("/value/time")
                        .and_then(Value::as_str)
                        .and_then(parse_wikidata_time)
                    {
                        doc.dates.entry(property.clone()).or_default().push(d);
                    }
                }
                _ => {}
            }
        }
    }
    doc
}
