//! Lookup-table answerer keyed by the SHA-256 of the input text.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AnswerRequest, AnswerResponse, Backend, BackendError};
use crate::corpus::{jsonl, CorpusError, Dialogue, SlotDescriptor, NONE_VALUE};
use crate::prompt::{build_slot_query, PromptConfig};

/// One line of a lookup file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupEntry {
    pub input_text: String,
    pub output_text: String,
}

/// Answers from a fixed table; inputs not in the table answer `"none"`.
/// Immutable once built, so it can be shared across workers freely.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    entries: Vec<LookupEntry>,
    index: HashMap<String, usize>,
}

pub fn input_hash(input_text: &str) -> String {
    hex::encode(Sha256::digest(input_text.as_bytes()))
}

impl OracleBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry unless the input is already present. Returns whether it
    /// was added; a conflicting later entry is ignored.
    pub fn insert(
        &mut self,
        input_text: impl Into<String>,
        output_text: impl Into<String>,
    ) -> bool {
        let input_text = input_text.into();
        let output_text = output_text.into();
        let h = input_hash(&input_text);
        if let Some(&i) = self.index.get(&h) {
            if self.entries[i].output_text != output_text {
                log::debug!(
                    "oracle: keeping `{}` over `{}` for a repeated input",
                    self.entries[i].output_text,
                    output_text
                );
            }
            return false;
        }
        self.index.insert(h, self.entries.len());
        self.entries.push(LookupEntry {
            input_text,
            output_text,
        });
        true
    }

    pub fn lookup(&self, input_text: &str) -> Option<&str> {
        self.lookup_hash(&input_hash(input_text))
    }

    pub fn lookup_hash(&self, hash_hex: &str) -> Option<&str> {
        self.index
            .get(hash_hex)
            .map(|&i| self.entries[i].output_text.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[LookupEntry] {
        &self.entries
    }

    pub fn from_entries(entries: impl IntoIterator<Item = LookupEntry>) -> Self {
        let mut oracle = Self::new();
        for e in entries {
            oracle.insert(e.input_text, e.output_text);
        }
        oracle
    }

    /// Reads a lookup JSONL file (`{"input_text", "output_text"}` per line).
    pub fn read_lookup(path: &Path) -> Result<Self, CorpusError> {
        Ok(Self::from_entries(jsonl::read::<LookupEntry>(path)?))
    }

    pub fn write_lookup<W: Write>(&self, writer: W) -> std::io::Result<()> {
        jsonl::write(writer, &self.entries)
    }
}

impl Backend for OracleBackend {
    fn answer(&self, requests: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, BackendError> {
        Ok(requests
            .iter()
            .map(|r| AnswerResponse {
                id: r.id.clone(),
                output_text: self.lookup(&r.input_text).unwrap_or(NONE_VALUE).to_string(),
            })
            .collect())
    }
}

/// An oracle that answers every slot query the tracker can build over the
/// gold-annotated turns with the gold value, or `"none"` when unassigned.
///
/// Both the extractive query and, for categorical slots, the multi-choice
/// query are registered. When two cells produce the same query text the first
/// one wins.
pub fn oracle_from_gold(
    dialogues: &[Dialogue],
    slots: &[SlotDescriptor],
    config: &PromptConfig,
) -> OracleBackend {
    let mut oracle = OracleBackend::new();
    for dialogue in dialogues {
        for (&idx, gold) in &dialogue.gold_states {
            let history = &dialogue.turns[..=idx];
            for slot in slots {
                let answer = gold.get(&slot.slot_id).unwrap_or(NONE_VALUE);
                let passes: &[bool] = if slot.is_categorical() {
                    &[true, false]
                } else {
                    &[true]
                };
                for &force_extractive in passes {
                    let query = build_slot_query(slot, history, force_extractive, config)
                        .expect("history ends at a gold turn and is nonempty");
                    oracle.insert(query.text, answer);
                }
            }
        }
    }
    oracle
}
