//! Mapping decoded values onto the ontology's surface forms.
//!
//! 1. shared value normalization;
//! 2. time-typed slots: 12-hour times become zero-padded 24-hour `HH:MM`;
//! 3. alias groups: a value in a group is replaced by the group's first member
//!    (for categorical slots, by the first member that is a candidate);
//! 4. categorical slots only: a value that is still not a candidate maps to the
//!    candidate with the highest token-set Dice score when that score reaches
//!    the threshold and no other candidate ties it.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{jsonl, CorpusError, SlotDescriptor};
use crate::normalize::normalize_value;

pub const DEFAULT_ALIASES_JSON: &str = include_str!("../../data/canonical_aliases.json");
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.8;

static TWELVE_HOUR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{1,2})(?:[:.](\d{2}))?\s*([ap])\.?\s?m\.?$").expect("valid regex")
});
static TWENTY_FOUR_HOUR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{1,2})[:.](\d{2})$").expect("valid regex"));

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasFile {
    pub groups: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Canonicalizer {
    groups: Vec<Vec<String>>,
    group_of: HashMap<String, usize>,
    threshold: f64,
}

impl Default for Canonicalizer {
    fn default() -> Self {
        Self::from_json(DEFAULT_ALIASES_JSON).expect("embedded alias table is valid")
    }
}

impl Canonicalizer {
    /// Later groups cannot steal a value already claimed by an earlier group.
    pub fn new(file: AliasFile, threshold: f64) -> Self {
        let groups: Vec<Vec<String>> = file
            .groups
            .into_iter()
            .map(|g| {
                g.iter()
                    .map(|v| normalize_value(v))
                    .filter(|v| !v.is_empty())
                    .collect()
            })
            .filter(|g: &Vec<String>| !g.is_empty())
            .collect();
        let mut group_of = HashMap::new();
        for (i, g) in groups.iter().enumerate() {
            for v in g {
                group_of.entry(v.clone()).or_insert(i);
            }
        }
        Canonicalizer {
            groups,
            group_of,
            threshold,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let file: AliasFile = serde_json::from_str(text)
            .map_err(|e| CorpusError::malformed("alias table", e.to_string()))?;
        Ok(Self::new(file, DEFAULT_MATCH_THRESHOLD))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::from_json(&jsonl::read_file(path)?)
    }

    /// No aliases, only normalization, time rewriting and candidate matching.
    pub fn without_aliases() -> Self {
        Self::new(AliasFile::default(), DEFAULT_MATCH_THRESHOLD)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn group(&self, value: &str) -> Option<&[String]> {
        self.group_of.get(value).map(|&i| self.groups[i].as_slice())
    }

    pub fn canonicalize(&self, value: &str, slot: &SlotDescriptor) -> String {
        let mut v = normalize_value(value);
        if is_time_slot(&slot.slot_name) {
            v = rewrite_time(&v);
        }
        if !slot.is_categorical() {
            return match self.group(&v) {
                Some(g) => g[0].clone(),
                None => v,
            };
        }
        let candidates = &slot.value_candidates;
        if candidates.contains(&v) {
            return v;
        }
        if let Some(hit) = self
            .group(&v)
            .and_then(|g| g.iter().find(|m| candidates.contains(m)))
        {
            return hit.clone();
        }
        match best_candidate(&v, candidates) {
            Some((c, score)) if score >= self.threshold => c.clone(),
            _ => v,
        }
    }
}

pub fn is_time_slot(slot_name: &str) -> bool {
    matches!(slot_name, "leaveat" | "arriveby" | "leave at" | "arrive by")
        || slot_name.ends_with("time")
}

/// `5pm` → `17:00`, `9:30 a.m.` → `09:30`, `9:05` → `09:05`. Anything else,
/// including out-of-range clock values, is returned unchanged.
pub fn rewrite_time(value: &str) -> String {
    if let Some(c) = TWELVE_HOUR.captures(value) {
        let hour: u32 = c[1].parse().unwrap_or(99);
        let minute: u32 = c
            .get(2)
            .map_or(Some(0), |m| m.as_str().parse().ok())
            .unwrap_or(99);
        if (1..=12).contains(&hour) && minute < 60 {
            let h24 = match (&c[3], hour) {
                ("a", 12) => 0,
                ("a", h) => h,
                ("p", 12) => 12,
                (_, h) => h + 12,
            };
            return format!("{h24:02}:{minute:02}");
        }
    } else if let Some(c) = TWENTY_FOUR_HOUR.captures(value) {
        let hour: u32 = c[1].parse().unwrap_or(99);
        let minute: u32 = c[2].parse().unwrap_or(99);
        if hour < 24 && minute < 60 {
            return format!("{hour:02}:{minute:02}");
        }
    }
    value.to_string()
}

/// Dice coefficient over whitespace token sets.
pub fn token_overlap(a: &str, b: &str) -> f64 {
    let ta: HashSet<&str> = a.split_whitespace().collect();
    let tb: HashSet<&str> = b.split_whitespace().collect();
    if ta.is_empty() && tb.is_empty() {
        return 0.0;
    }
    2.0 * ta.intersection(&tb).count() as f64 / (ta.len() + tb.len()) as f64
}

/// The unique best-scoring candidate, or None on a tie or an empty list.
fn best_candidate<'c>(value: &str, candidates: &'c [String]) -> Option<(&'c String, f64)> {
    let mut best: Option<(&String, f64)> = None;
    let mut tied = false;
    for c in candidates {
        let s = token_overlap(value, c);
        match best {
            Some((_, b)) if s < b => {}
            Some((_, b)) if s == b => tied = true,
            _ => {
                best = Some((c, s));
                tied = false;
            }
        }
    }
    if tied {
        None
    } else {
        best
    }
}
