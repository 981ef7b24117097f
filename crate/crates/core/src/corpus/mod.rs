//! Canonical in-memory records and their loaders.
//!
//! External datasets are parsed into three record families: [`QaExample`] for
//! QA corpora, [`Dialogue`] for dialogue corpora and [`SlotDescriptor`] (held in
//! a [`Schema`]) for slot ontologies. Records that violate an invariant are
//! dropped and reported through [`Loaded::rejected`]; only unreadable or
//! syntactically broken files are fatal.

mod dialogue;
pub mod jsonl;
mod qa;
mod schema;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::normalize_value;

pub use dialogue::{
    load_dialogue_dataset, parse_dialogue_dataset, DialogueFormat, DialogueLoadOptions,
    UnknownSlotPolicy,
};
pub use qa::{
    find_char_span, load_extractive_dataset, load_multichoice_dataset, load_unified_jsonl,
    parse_extractive_dataset, parse_multichoice_dataset, ExtractiveFormat, MultiChoiceFormat,
};
pub use schema::{load_schema, parse_schema, DomainEntry, Schema, SchemaFile, SlotEntry};

/// Sentinel answer for unanswerable questions.
pub const NONE_VALUE: &str = "none";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {format} input: {detail}")]
    MalformedFile {
        format: &'static str,
        detail: String,
    },
    #[error("slot `{slot_id}` in dialogue `{dialogue_id}` is not in the schema")]
    UnknownSlot {
        slot_id: String,
        dialogue_id: String,
    },
    #[error("duplicate slot `{0}` in schema")]
    DuplicateSlot(String),
    #[error("invalid slot `{slot_id}`: {detail}")]
    InvalidSlot { slot_id: String, detail: String },
}

impl CorpusError {
    pub(crate) fn malformed(format: &'static str, detail: impl fmt::Display) -> Self {
        CorpusError::MalformedFile {
            format,
            detail: detail.to_string(),
        }
    }
}

/// Why a single record was dropped during loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    /// The declared answer text differs from the context substring at its span.
    SpanMismatch,
    /// Declared span does not fit inside the context.
    SpanOutOfBounds,
    /// The gold option does not address one of the options.
    GoldIndexOutOfRange,
    /// An answerable record without any answer annotation.
    MissingAnswer,
    TooFewChoices,
    ChoicesOnExtractive,
    DuplicateId,
    EmptyUtterance,
    /// A gold state is attached to a system turn or a turn that does not exist.
    GoldOnNonUserTurn,
    /// The dialogue annotates a slot missing from the schema (only with
    /// [`UnknownSlotPolicy::DropDialogue`]).
    UnknownSlot(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::SpanMismatch => write!(f, "span text mismatch"),
            RejectReason::SpanOutOfBounds => write!(f, "span out of bounds"),
            RejectReason::GoldIndexOutOfRange => write!(f, "gold index out of range"),
            RejectReason::MissingAnswer => write!(f, "missing answer"),
            RejectReason::TooFewChoices => write!(f, "fewer than two choices"),
            RejectReason::ChoicesOnExtractive => write!(f, "extractive record with choices"),
            RejectReason::DuplicateId => write!(f, "duplicate id"),
            RejectReason::EmptyUtterance => write!(f, "empty utterance"),
            RejectReason::GoldOnNonUserTurn => write!(f, "gold state on non-user turn"),
            RejectReason::UnknownSlot(s) => write!(f, "unknown slot {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub record_id: String,
    pub reason: RejectReason,
}

/// Records accepted by a loader plus the ones it dropped.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub rejected: Vec<Rejection>,
}

impl<T> Loaded<T> {
    pub fn count_rejected(&self, reason: &RejectReason) -> usize {
        self.rejected.iter().filter(|r| &r.reason == reason).count()
    }
}

impl<T> Default for Loaded<T> {
    fn default() -> Self {
        Loaded {
            records: Vec::new(),
            rejected: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaKind {
    #[serde(alias = "Extractive")]
    Extractive,
    #[serde(alias = "MultiChoice", alias = "multi-choice")]
    MultiChoice,
}

/// One unified QA record.
///
/// `answer_char_span` is a half-open range of Unicode scalar offsets into
/// `context` (the convention of SQuAD-style annotations).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub kind: QaKind,
    pub question: String,
    pub context: String,
    pub choices: Vec<String>,
    pub answer: String,
    pub answer_char_span: Option<(usize, usize)>,
    pub source: String,
}

impl QaExample {
    pub fn is_unanswerable(&self) -> bool {
        self.answer == NONE_VALUE
    }

    /// Byte range of the answer span inside `context`.
    pub fn span_bytes(&self) -> Option<Range<usize>> {
        let (start, end) = self.answer_char_span?;
        char_range_to_bytes(&self.context, start, end)
    }

    /// Checks the record-level invariants, returning the first violation.
    pub fn check(&self) -> Result<(), RejectReason> {
        match self.kind {
            QaKind::Extractive => {
                if !self.choices.is_empty() {
                    return Err(RejectReason::ChoicesOnExtractive);
                }
            }
            QaKind::MultiChoice => {
                if self.choices.len() < 2 {
                    return Err(RejectReason::TooFewChoices);
                }
                if !self.is_unanswerable() && !self.choices.contains(&self.answer) {
                    return Err(RejectReason::GoldIndexOutOfRange);
                }
            }
        }
        if !self.is_unanswerable() {
            if let Some((start, end)) = self.answer_char_span {
                let range = char_range_to_bytes(&self.context, start, end)
                    .ok_or(RejectReason::SpanOutOfBounds)?;
                if self.context[range] != self.answer {
                    return Err(RejectReason::SpanMismatch);
                }
            }
        }
        Ok(())
    }
}

/// Converts a half-open char range to a byte range, `None` when out of bounds
/// or inverted.
pub fn char_range_to_bytes(text: &str, start: usize, end: usize) -> Option<Range<usize>> {
    if start > end {
        return None;
    }
    let mut boundaries = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()));
    let byte_start = boundaries.nth(start)?;
    let byte_end = if end == start {
        byte_start
    } else {
        boundaries.nth(end - start - 1)?
    };
    Some(byte_start..byte_end)
}

/// Byte offset to char offset.
pub fn byte_to_char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    #[serde(alias = "User", alias = "USER")]
    User,
    #[serde(alias = "System", alias = "SYSTEM")]
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: Speaker,
    pub utterance: String,
}

impl DialogueTurn {
    pub fn user(utterance: impl Into<String>) -> Self {
        DialogueTurn {
            speaker: Speaker::User,
            utterance: utterance.into(),
        }
    }

    pub fn system(utterance: impl Into<String>) -> Self {
        DialogueTurn {
            speaker: Speaker::System,
            utterance: utterance.into(),
        }
    }
}

/// Slot assignments at one turn. A slot that is absent has value "none".
///
/// Values are normalized on insertion and on deserialization; "none" and
/// empty values are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<String, String>", into = "BTreeMap<String, String>")]
pub struct DialogueState {
    assignments: BTreeMap<String, String>,
}

impl DialogueState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a normalized value. Returns false (and removes the slot) when
    /// the value normalizes to none.
    pub fn insert(&mut self, slot_id: impl Into<String>, value: &str) -> bool {
        let slot_id = slot_id.into();
        let v = normalize_value(value);
        if v.is_empty() || v == NONE_VALUE {
            self.assignments.remove(&slot_id);
            false
        } else {
            self.assignments.insert(slot_id, v);
            true
        }
    }

    pub fn remove(&mut self, slot_id: &str) -> Option<String> {
        self.assignments.remove(slot_id)
    }

    pub fn get(&self, slot_id: &str) -> Option<&str> {
        self.assignments.get(slot_id).map(String::as_str)
    }

    pub fn contains(&self, slot_id: &str) -> bool {
        self.assignments.contains_key(slot_id)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.assignments
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn slot_ids(&self) -> impl Iterator<Item = &str> {
        self.assignments.keys().map(String::as_str)
    }

    /// Keeps only the slots accepted by `keep`.
    pub fn restricted(&self, mut keep: impl FnMut(&str) -> bool) -> DialogueState {
        DialogueState {
            assignments: self
                .assignments
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

impl From<BTreeMap<String, String>> for DialogueState {
    fn from(map: BTreeMap<String, String>) -> Self {
        let mut state = DialogueState::new();
        for (k, v) in map {
            state.insert(k, &v);
        }
        state
    }
}

impl From<DialogueState> for BTreeMap<String, String> {
    fn from(state: DialogueState) -> Self {
        state.assignments
    }
}

impl<K: Into<String>, V: AsRef<str>> FromIterator<(K, V)> for DialogueState {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut state = DialogueState::new();
        for (k, v) in iter {
            state.insert(k, v.as_ref());
        }
        state
    }
}

/// A dialogue with per-user-turn gold states keyed by index into `turns`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<DialogueTurn>,
    #[serde(default)]
    pub gold_states: BTreeMap<usize, DialogueState>,
}

impl Dialogue {
    /// Indices of user turns in order.
    pub fn user_turn_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.speaker == Speaker::User)
            .map(|(i, _)| i)
    }

    pub fn check(&self) -> Result<(), RejectReason> {
        if self.turns.iter().any(|t| t.utterance.trim().is_empty()) {
            return Err(RejectReason::EmptyUtterance);
        }
        for &idx in self.gold_states.keys() {
            match self.turns.get(idx) {
                Some(t) if t.speaker == Speaker::User => {}
                _ => return Err(RejectReason::GoldOnNonUserTurn),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Categorical,
    #[serde(alias = "non-categorical", alias = "noncategorical")]
    NonCategorical,
}

/// One tracked slot and the question used to query it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDescriptor {
    pub slot_id: String,
    pub domain: String,
    pub slot_name: String,
    pub kind: SlotKind,
    pub value_candidates: Vec<String>,
    /// Schema-provided question text; the default template is used when absent.
    pub question: Option<String>,
}

impl SlotDescriptor {
    pub fn new(domain: &str, slot_name: &str, kind: SlotKind, candidates: &[&str]) -> Self {
        SlotDescriptor {
            slot_id: format!("{domain}-{slot_name}"),
            domain: domain.to_string(),
            slot_name: slot_name.to_string(),
            kind,
            value_candidates: candidates.iter().map(|c| normalize_value(c)).collect(),
            question: None,
        }
    }

    pub fn with_question(mut self, question: &str) -> Self {
        self.question = Some(question.to_string());
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == SlotKind::Categorical
    }
}
