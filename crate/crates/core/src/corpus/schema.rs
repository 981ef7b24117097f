use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl;
use super::{CorpusError, SlotDescriptor, SlotKind};
use crate::normalize::normalize_value;

/// On-disk schema layout shared by MultiWOZ and SGD:
/// `{"domains":[{"name","slots":[{"name","kind","candidates","question"}]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub domains: Vec<DomainEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub name: String,
    pub slots: Vec<SlotEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub name: String,
    pub kind: SlotKind,
    #[serde(default)]
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

/// Ordered, validated slot list with lookup by slot id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    slots: Vec<SlotDescriptor>,
    index: HashMap<String, usize>,
}

impl Schema {
    /// Validates uniqueness of slot ids and categorical candidate lists.
    pub fn new(slots: Vec<SlotDescriptor>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(slots.len());
        for (i, slot) in slots.iter().enumerate() {
            if slot.domain.is_empty() || slot.slot_name.is_empty() {
                return Err(CorpusError::InvalidSlot {
                    slot_id: slot.slot_id.clone(),
                    detail: "empty domain or slot name".into(),
                });
            }
            if slot.slot_id != format!("{}-{}", slot.domain, slot.slot_name) {
                return Err(CorpusError::InvalidSlot {
                    slot_id: slot.slot_id.clone(),
                    detail: "slot id must be `domain-slot_name`".into(),
                });
            }
            if index.insert(slot.slot_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateSlot(slot.slot_id.clone()));
            }
            match slot.kind {
                SlotKind::Categorical => {
                    if slot.value_candidates.is_empty() {
                        return Err(CorpusError::InvalidSlot {
                            slot_id: slot.slot_id.clone(),
                            detail: "categorical slot without candidates".into(),
                        });
                    }
                    let unique: HashSet<_> = slot.value_candidates.iter().collect();
                    if unique.len() != slot.value_candidates.len() {
                        return Err(CorpusError::InvalidSlot {
                            slot_id: slot.slot_id.clone(),
                            detail: "duplicate candidates".into(),
                        });
                    }
                }
                SlotKind::NonCategorical => {
                    if !slot.value_candidates.is_empty() {
                        return Err(CorpusError::InvalidSlot {
                            slot_id: slot.slot_id.clone(),
                            detail: "non-categorical slot with candidates".into(),
                        });
                    }
                }
            }
        }
        Ok(Schema { slots, index })
    }

    pub fn slots(&self) -> &[SlotDescriptor] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, slot_id: &str) -> Option<&SlotDescriptor> {
        self.index.get(slot_id).map(|&i| &self.slots[i])
    }

    pub fn contains(&self, slot_id: &str) -> bool {
        self.index.contains_key(slot_id)
    }

    /// Domains in first-appearance order.
    pub fn domains(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.slots
            .iter()
            .map(|s| s.domain.as_str())
            .filter(|d| seen.insert(*d))
            .collect()
    }

    pub fn has_domain(&self, domain: &str) -> bool {
        self.slots.iter().any(|s| s.domain == domain)
    }

    pub fn domain_of(&self, slot_id: &str) -> Option<&str> {
        self.get(slot_id).map(|s| s.domain.as_str())
    }

    pub fn to_file(&self) -> SchemaFile {
        let mut domains: Vec<DomainEntry> = Vec::new();
        for slot in &self.slots {
            let entry = SlotEntry {
                name: slot.slot_name.clone(),
                kind: slot.kind,
                candidates: slot.value_candidates.clone(),
                question: slot.question.clone(),
            };
            match domains.iter_mut().find(|d| d.name == slot.domain) {
                Some(d) => d.slots.push(entry),
                None => domains.push(DomainEntry {
                    name: slot.domain.clone(),
                    slots: vec![entry],
                }),
            }
        }
        SchemaFile { domains }
    }
}

fn is_integer_literal(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

impl SchemaFile {
    /// Builds and validates the slot list.
    pub fn into_schema(self, number_slots_noncategorical: bool) -> Result<Schema, CorpusError> {
        Schema::new(self.into_slots(number_slots_noncategorical))
    }

    /// The slot list without validation. With `number_slots_noncategorical`,
    /// categorical slots whose candidates are all integer literals become
    /// non-categorical. Candidates of non-categorical slots are discarded.
    pub fn into_slots(self, number_slots_noncategorical: bool) -> Vec<SlotDescriptor> {
        let mut slots = Vec::new();
        for domain in self.domains {
            for entry in domain.slots {
                let mut candidates: Vec<String> = entry
                    .candidates
                    .iter()
                    .map(|c| normalize_value(c))
                    .collect();
                let mut kind = entry.kind;
                if kind == SlotKind::Categorical
                    && number_slots_noncategorical
                    && !candidates.is_empty()
                    && candidates.iter().all(|c| is_integer_literal(c))
                {
                    kind = SlotKind::NonCategorical;
                }
                if kind == SlotKind::NonCategorical {
                    candidates.clear();
                }
                slots.push(SlotDescriptor {
                    slot_id: format!("{}-{}", domain.name, entry.name),
                    domain: domain.name.clone(),
                    slot_name: entry.name,
                    kind,
                    value_candidates: candidates,
                    question: entry.question.filter(|q| !q.trim().is_empty()),
                });
            }
        }
        slots
    }
}

pub fn parse_schema(text: &str, number_slots_noncategorical: bool) -> Result<Schema, CorpusError> {
    let file: SchemaFile =
        serde_json::from_str(text).map_err(|e| CorpusError::malformed("schema", e))?;
    file.into_schema(number_slots_noncategorical)
}

pub fn load_schema(path: &Path, number_slots_noncategorical: bool) -> Result<Schema, CorpusError> {
    parse_schema(&jsonl::read_file(path)?, number_slots_noncategorical)
}
