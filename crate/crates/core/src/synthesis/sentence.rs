//! Rule-based sentence segmentation used by context truncation.
//!
//! A sentence ends at a run of `.`, `!` or `?` that is followed by whitespace
//! or the end of the text. A `.` does not end a sentence when the token it
//! closes is a known abbreviation or a single-letter initial.

use std::ops::Range;

const TERMINATORS: [char; 3] = ['.', '!', '?'];

/// Lowercased abbreviations, including their final period.
pub const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.", "ft.", "gen.", "gov.",
    "sen.", "rep.", "rev.", "capt.", "col.", "lt.", "sgt.", "vs.", "etc.", "e.g.", "i.e.", "cf.",
    "al.", "approx.", "no.", "nos.", "vol.", "pp.", "fig.", "inc.", "ltd.", "co.", "corp.", "jan.",
    "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.", "oct.", "nov.", "dec.",
    "u.s.", "u.k.", "u.n.", "u.s.a.", "a.m.", "p.m.",
];

fn is_guarded(token: &str) -> bool {
    let lower = token.to_lowercase();
    let lower = lower.trim_start_matches(['(', '"', '\'', '[']);
    if ABBREVIATIONS.contains(&lower) {
        return true;
    }
    let mut chars = lower.chars();
    matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}

/// Byte ranges of the sentences of `text`, each trimmed of surrounding
/// whitespace and including its terminator run.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut token_start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c.is_whitespace() {
            token_start = i + c.len_utf8();
            continue;
        }
        let s = *start.get_or_insert(i);
        if !TERMINATORS.contains(&c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        while let Some(&(j, d)) = iter.peek() {
            if TERMINATORS.contains(&d) {
                end = j + d.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        let at_boundary = iter.peek().is_none_or(|&(_, d)| d.is_whitespace());
        if !at_boundary {
            continue;
        }
        if c == '.' && end - i == 1 && is_guarded(&text[token_start..end]) {
            continue;
        }
        spans.push(s..end);
        start = None;
    }
    if let Some(s) = start {
        spans.push(s..text.trim_end().len());
    }
    spans
}
