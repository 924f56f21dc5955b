//! Rule-based sentence segmentation.
//!
//! A boundary is placed after `.`, `?` or `!` (plus any closing quotes or
//! brackets) when it is followed by whitespace and then an uppercase letter,
//! an opening quote or bracket, or a digit. A period does not end a sentence
//! when the token before it is a known abbreviation, a single letter (an
//! initial such as "J."), a dotted acronym ("U.S."), or a one- or two-digit
//! number ("1. FC Köln"). A blank line always ends a sentence.

use std::ops::Range;

/// Shipped abbreviation list, lowercase and without the trailing period.
pub const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "rev", "hon", "gen", "col",
    "lt", "sgt", "capt", "cmdr", "gov", "sen", "rep", "pres", "jan", "feb", "mar", "apr", "jun",
    "jul", "aug", "sep", "sept", "oct", "nov", "dec", "no", "nos", "vol", "vols", "pp", "ed",
    "eds", "est", "approx", "inc", "ltd", "co", "corp", "bros", "dept", "univ", "assn", "ave",
    "blvd", "rd", "etc", "vs", "cf", "al", "e.g", "i.e", "u.s", "u.k", "u.n", "e.u",
];

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '['];

fn is_abbreviation(token: &str) -> bool {
    let token = token.trim_start_matches(OPENERS);
    if token.is_empty() {
        return false;
    }
    let lower = token.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    let mut chars = token.chars();
    let first = chars.next().unwrap();
    if first.is_alphabetic() && chars.next().is_none() {
        return true;
    }
    if token.len() <= 2 && token.chars().all(|c| c.is_ascii_digit()) {
        return true;
    }
    // dotted acronym: single letters separated by periods, e.g. "U.S"
    token.contains('.')
        && token
            .split('.')
            .all(|p| p.chars().count() == 1 && p.chars().all(char::is_alphabetic))
}

/// Byte ranges of each sentence, trimmed of surrounding whitespace.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    let push = |from: usize, to: usize, spans: &mut Vec<Range<usize>>| {
        let piece = &text[from..to];
        let lead = piece.len() - piece.trim_start().len();
        let trimmed = piece.trim();
        if !trimmed.is_empty() {
            spans.push(from + lead..from + lead + trimmed.len());
        }
    };

    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            // blank line: newline, optional horizontal space, newline
            let mut k = i + 1;
            while k < chars.len() && chars[k].1 != '\n' && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k < chars.len() && chars[k].1 == '\n' {
                push(start, pos, &mut spans);
                while k < chars.len() && chars[k].1.is_whitespace() {
                    k += 1;
                }
                start = chars.get(k).map_or(text.len(), |x| x.0);
                i = k;
                continue;
            }
        }
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len() && (matches!(chars[j].1, '.' | '?' | '!') || CLOSERS.contains(&chars[j].1)) {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |x| x.0);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k > j && k < chars.len() {
                let next = chars[k].1;
                let opens = next.is_uppercase() || OPENERS.contains(&next) || next.is_numeric();
                let blocked = c == '.' && {
                    let token_start = text[start..pos]
                        .rfind(char::is_whitespace)
                        .map_or(start, |w| start + w + 1);
                    is_abbreviation(&text[token_start..pos])
                };
                if opens && !blocked {
                    push(start, end, &mut spans);
                    start = chars[k].0;
                    i = k;
                    continue;
                }
            }
            i = j.max(i + 1);
            continue;
        }
        i += 1;
    }
    push(start, text.len(), &mut spans);
    spans
}

pub fn segment_sentences(text: &str) -> Vec<String> {
    sentence_spans(text)
        .into_iter()
        .map(|r| text[r].to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("   \n ").is_empty());
    }

    #[test]
    fn three_plain_boundaries() {
        assert_eq!(
            segment_sentences("A is here. B follows! C?"),
            vec!["A is here.", "B follows!", "C?"]
        );
    }

    #[test]
    fn abbreviations_initials_and_ordinals_do_not_split() {
        let s = "In Jan. 2012, he returned to J. League, loaned by 1. FC Köln to Urawa Red Diamonds.";
        assert_eq!(segment_sentences(s), vec![s]);
        assert_eq!(
            segment_sentences("Dr. Smith moved to the U.S. Army base. It was cold."),
            vec!["Dr. Smith moved to the U.S. Army base.", "It was cold."]
        );
    }

    #[test]
    fn lowercase_continuation_is_not_a_boundary() {
        assert_eq!(segment_sentences("Version 2.0 is out. e.g. this."), vec!["Version 2.0 is out. e.g. this."]);
    }

    #[test]
    fn quotes_and_digits_open_sentences() {
        assert_eq!(
            segment_sentences("He said \"stop.\" Then left. \"Why?\" she asked. 2025 was busy."),
            vec!["He said \"stop.\"", "Then left.", "\"Why?\" she asked.", "2025 was busy."]
        );
    }

    #[test]
    fn years_still_end_sentences() {
        assert_eq!(
            segment_sentences("It premiered in 2025. It ran for 16 episodes."),
            vec!["It premiered in 2025.", "It ran for 16 episodes."]
        );
    }

    #[test]
    fn blank_lines_separate() {
        assert_eq!(
            segment_sentences("== Plot ==\n\nThe story follows a headhunter"),
            vec!["== Plot ==", "The story follows a headhunter"]
        );
    }

    proptest! {
        #[test]
        fn sentences_reassemble_the_input(
            words in proptest::collection::vec(
                prop::sample::select(vec![
                    "Alpha", "beta.", "Gamma!", "delta?", "Jan.", "J.", "1.", "2025.", "\"Eps\"",
                    "zeta", "(Eta)", "\n\n", "U.S.", "ok", "Köln.",
                ]),
                0..40,
            )
        ) {
            let text = words.join(" ");
            let sentences = segment_sentences(&text);
            let squash = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
            prop_assert_eq!(squash(&sentences.concat()), squash(&text));
            prop_assert!(sentences.iter().all(|s| !s.is_empty() && s.trim() == s));
        }
    }
}
