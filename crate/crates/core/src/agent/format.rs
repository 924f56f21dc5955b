use std::collections::HashSet;

use serde::{Deserialize, Serialize};

const OPEN: &str = "<answer>";
const CLOSE: &str = "</answer>";

/// Ordered, trimmed, case-insensitively unique answer surfaces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateList {
    surfaces: Vec<String>,
}

impl CandidateList {
    /// Builds a list from raw pieces: trims, drops empties and keeps the
    /// first of any case-insensitive duplicates.
    pub fn from_raw<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut surfaces = Vec::new();
        for item in items {
            let s = item.as_ref().trim();
            if s.is_empty() {
                continue;
            }
            if seen.insert(s.to_lowercase()) {
                surfaces.push(s.to_string());
            }
        }
        Self { surfaces }
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    pub fn into_vec(self) -> Vec<String> {
        self.surfaces
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatError {
    #[error("missing_block: no <answer>...</answer> block")]
    MissingBlock,
    #[error("multiple_blocks: more than one answer block")]
    MultipleBlocks,
    #[error("unbalanced_tags: answer tags are not properly paired")]
    UnbalancedTags,
    #[error("empty_answer: answer block has no candidates")]
    Empty,
}

impl FormatError {
    pub fn code(self) -> &'static str {
        match self {
            FormatError::MissingBlock => "missing_block",
            FormatError::MultipleBlocks => "multiple_blocks",
            FormatError::UnbalancedTags => "unbalanced_tags",
            FormatError::Empty => "empty_answer",
        }
    }
}

/// Tag positions, matched case-insensitively. ASCII lowercasing keeps byte
/// offsets aligned with the original string.
fn positions(haystack_lower: &str, needle: &str) -> Vec<usize> {
    haystack_lower.match_indices(needle).map(|(i, _)| i).collect()
}

/// Accepts exactly one well-formed `<answer>…</answer>` block, splits its
/// interior on commas and returns the cleaned candidate list.
pub fn check_answer_format(raw: &str) -> Result<CandidateList, FormatError> {
    let lower = raw.to_ascii_lowercase();
    let opens = positions(&lower, OPEN);
    let closes = positions(&lower, CLOSE);
    match (opens.len(), closes.len()) {
        (0, 0) => return Err(FormatError::MissingBlock),
        (1, 1) => {}
        (o, c) if o == c => return Err(FormatError::MultipleBlocks),
        _ => return Err(FormatError::UnbalancedTags),
    }
    let (start, end) = (opens[0] + OPEN.len(), closes[0]);
    if end < start {
        return Err(FormatError::UnbalancedTags);
    }
    let list = CandidateList::from_raw(raw[start..end].split(','));
    if list.is_empty() {
        Err(FormatError::Empty)
    } else {
        Ok(list)
    }
}

/// Best-effort candidates from a reply that failed the format check: tags
/// are removed and the remainder is split on commas.
pub fn salvage_candidates(raw: &str) -> CandidateList {
    let mut text = raw.to_string();
    for tag in [OPEN, CLOSE] {
        loop {
            let lower = text.to_ascii_lowercase();
            match lower.find(tag) {
                Some(i) => text.replace_range(i..i + tag.len(), ","),
                None => break,
            }
        }
    }
    CandidateList::from_raw(text.split([',', '\n']))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(raw: &str) -> Vec<String> {
        check_answer_format(raw).unwrap().into_vec()
    }

    #[test]
    fn well_formed_block() {
        assert_eq!(
            ok("<answer>politician, sheriff, judge, lawyer</answer>"),
            vec!["politician", "sheriff", "judge", "lawyer"]
        );
    }

    #[test]
    fn empty_block_is_rejected() {
        assert_eq!(check_answer_format("<answer></answer>"), Err(FormatError::Empty));
        assert_eq!(check_answer_format("<answer> , ,</answer>"), Err(FormatError::Empty));
    }

    #[test]
    fn case_insensitive_dedup_keeps_first() {
        assert_eq!(ok("<answer>a, A, b</answer>"), vec!["a", "b"]);
    }

    #[test]
    fn reasoning_outside_the_block_is_allowed() {
        assert_eq!(
            ok("Given that it is a military conflict ... <answer>battle, war</answer>"),
            vec!["battle", "war"]
        );
    }

    #[test]
    fn structural_failures() {
        assert_eq!(check_answer_format("battle, war"), Err(FormatError::MissingBlock));
        assert_eq!(
            check_answer_format("<answer>a</answer><answer>b</answer>"),
            Err(FormatError::MultipleBlocks)
        );
        assert_eq!(check_answer_format("<answer>a, b"), Err(FormatError::UnbalancedTags));
        assert_eq!(check_answer_format("</answer>a<answer>"), Err(FormatError::UnbalancedTags));
    }

    #[test]
    fn salvage_splits_whatever_is_there() {
        assert_eq!(
            salvage_candidates("<answer>politician, lawyer").into_vec(),
            vec!["politician", "lawyer"]
        );
        assert!(salvage_candidates("").is_empty());
    }
}
