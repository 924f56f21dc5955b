//! Canonical TSV formats.
//!
//! Triples: `head<TAB>relation<TAB>tail<LF>`, UTF-8, no header.
//! Catalog: `id<TAB>label<TAB>alias1|alias2|...<TAB>description<LF>`.

use std::io::{BufRead, Write};

use super::{Catalog, EntityId, EntityRecord, KgError, KnowledgeGraph, RelationId, Triple};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub lines: usize,
    pub triples: usize,
    pub duplicates: usize,
}

fn field<'a>(line: usize, name: &str, raw: &'a str) -> Result<&'a str, KgError> {
    if raw.is_empty() {
        Err(KgError::Malformed {
            line,
            reason: format!("empty {name} field"),
        })
    } else {
        Ok(raw)
    }
}

fn strip_eol(line: &str) -> &str {
    line.strip_suffix('\r').unwrap_or(line)
}

/// Reads a triples TSV. Duplicates are dropped and counted; line numbers in
/// errors are 1-based.
pub fn load_triples<R: BufRead>(source: R) -> Result<(KnowledgeGraph, IngestStats), KgError> {
    let mut kg = KnowledgeGraph::new();
    let mut stats = IngestStats::default();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = strip_eol(&line);
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(KgError::Malformed {
                line: lineno,
                reason: format!("expected 3 tab-separated fields, found {}", parts.len()),
            });
        }
        let head = EntityId::new(field(lineno, "head", parts[0])?)
            .map_err(|e| malformed(lineno, e))?;
        let relation = RelationId::new(field(lineno, "relation", parts[1])?)
            .map_err(|e| malformed(lineno, e))?;
        let tail = EntityId::new(field(lineno, "tail", parts[2])?)
            .map_err(|e| malformed(lineno, e))?;
        if kg.insert(Triple::new(head, relation, tail)) {
            stats.triples += 1;
        } else {
            stats.duplicates += 1;
        }
    }
    Ok((kg, stats))
}

fn malformed(line: usize, e: KgError) -> KgError {
    KgError::Malformed {
        line,
        reason: e.to_string(),
    }
}

pub fn write_triples<'a, W: Write>(
    mut out: W,
    triples: impl IntoIterator<Item = &'a Triple>,
) -> std::io::Result<()> {
    for t in triples {
        writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
    }
    Ok(())
}

/// Reads a catalog TSV. The label is placed at alias position 0.
pub fn load_entity_catalog<R: BufRead>(source: R) -> Result<Catalog, KgError> {
    let mut catalog = Catalog::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = strip_eol(&line);
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(4, '\t').collect();
        if parts.len() < 2 {
            return Err(KgError::Malformed {
                line: lineno,
                reason: format!("expected at least 2 tab-separated fields, found {}", parts.len()),
            });
        }
        let id = EntityId::new(field(lineno, "id", parts[0])?).map_err(|e| malformed(lineno, e))?;
        let label = field(lineno, "label", parts[1].trim())?;
        let aliases = parts
            .get(2)
            .map(|a| {
                a.split('|')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect::<Vec<_>>()
            })
            .unwrap_or_default();
        let description = parts.get(3).map(|d| d.trim().to_string());
        let record = EntityRecord::new(id.clone(), label, aliases, description);
        if !catalog.insert(record) {
            return Err(KgError::DuplicateEntity {
                line: lineno,
                id: id.to_string(),
            });
        }
    }
    Ok(catalog)
}

fn tsv_clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub fn write_catalog<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a EntityRecord>,
) -> std::io::Result<()> {
    for r in records {
        let aliases: Vec<String> = r
            .aliases
            .iter()
            .skip(1)
            .map(|a| tsv_clean(a).replace('|', " "))
            .collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.id,
            tsv_clean(&r.label),
            aliases.join("|"),
            tsv_clean(r.description.as_deref().unwrap_or(""))
        )?;
    }
    Ok(())
}
