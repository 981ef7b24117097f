//! Dialogue corpus ingestion (MultiWOZ 2.x `data.json`, SGD dialogue files and
//! the toolkit's own dialogue JSONL).

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::jsonl;
use super::{
    CorpusError, Dialogue, DialogueState, DialogueTurn, Loaded, RejectReason, Rejection, Schema,
    Speaker, NONE_VALUE,
};
use crate::normalize::normalize_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DialogueFormat {
    /// MultiWOZ 2.0/2.1 `data.json`: `{dialogue_id: {"log": [...]}}`, user
    /// turns at even positions, belief state in the following system turn's
    /// `metadata`.
    MultiWozJson,
    /// SGD dialogue file: a list of `{dialogue_id, turns: [{speaker, utterance,
    /// frames: [{service, state: {slot_values}}]}]}`.
    SgdJson,
    /// One [`Dialogue`] per line.
    Jsonl,
}

/// What to do with annotations for slots the schema does not define.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownSlotPolicy {
    #[default]
    Error,
    /// Drop the whole dialogue and report it as rejected.
    DropDialogue,
    /// Drop only the offending assignment.
    Ignore,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DialogueLoadOptions {
    pub unknown_slots: UnknownSlotPolicy,
}

pub fn load_dialogue_dataset(
    path: &Path,
    schema: &Schema,
    format: DialogueFormat,
    options: DialogueLoadOptions,
) -> Result<Loaded<Dialogue>, CorpusError> {
    parse_dialogue_dataset(&jsonl::read_file(path)?, schema, format, options)
}

pub fn parse_dialogue_dataset(
    text: &str,
    schema: &Schema,
    format: DialogueFormat,
    options: DialogueLoadOptions,
) -> Result<Loaded<Dialogue>, CorpusError> {
    let raw = match format {
        DialogueFormat::MultiWozJson => parse_multiwoz(text)?,
        DialogueFormat::SgdJson => parse_sgd(text)?,
        DialogueFormat::Jsonl => jsonl::parse_str::<RawDialogue>(text)?,
    };
    let mut out = Loaded::default();
    let mut seen = HashSet::new();
    'dialogues: for raw in raw {
        let mut gold_states = BTreeMap::new();
        for (turn, assignments) in raw.gold_states {
            let mut state = DialogueState::new();
            for (slot_id, value) in assignments {
                if is_unset(&value) {
                    continue;
                }
                if !schema.contains(&slot_id) {
                    match options.unknown_slots {
                        UnknownSlotPolicy::Error => {
                            return Err(CorpusError::UnknownSlot {
                                slot_id,
                                dialogue_id: raw.id,
                            })
                        }
                        UnknownSlotPolicy::DropDialogue => {
                            out.rejected.push(Rejection {
                                record_id: raw.id,
                                reason: RejectReason::UnknownSlot(slot_id),
                            });
                            continue 'dialogues;
                        }
                        UnknownSlotPolicy::Ignore => continue,
                    }
                }
                state.insert(slot_id, &value);
            }
            gold_states.insert(turn, state);
        }
        let dialogue = Dialogue {
            id: raw.id,
            turns: raw.turns,
            gold_states,
        };
        let verdict = dialogue.check().and_then(|_| {
            if seen.contains(&dialogue.id) {
                Err(RejectReason::DuplicateId)
            } else {
                Ok(())
            }
        });
        match verdict {
            Ok(()) => {
                seen.insert(dialogue.id.clone());
                out.records.push(dialogue);
            }
            Err(reason) => out.rejected.push(Rejection {
                record_id: dialogue.id,
                reason,
            }),
        }
    }
    Ok(out)
}

/// Annotation strings that mean "no value".
fn is_unset(value: &str) -> bool {
    let v = normalize_value(value);
    v.is_empty() || v == NONE_VALUE || v == "not mentioned"
}

/// Dialogue before schema validation and value normalization.
#[derive(Deserialize)]
struct RawDialogue {
    id: String,
    turns: Vec<DialogueTurn>,
    #[serde(default)]
    gold_states: BTreeMap<usize, BTreeMap<String, String>>,
}

#[derive(Deserialize)]
struct MultiWozDialogue {
    log: Vec<MultiWozTurn>,
}

#[derive(Deserialize)]
struct MultiWozTurn {
    text: String,
    #[serde(default)]
    metadata: BTreeMap<String, Value>,
}

/// `{"book": {...}, "semi": {...}}` per domain. Book slots are named
/// `book <slot>`; slot names are lowercased (`leaveAt` → `leaveat`).
fn multiwoz_assignments(metadata: &BTreeMap<String, Value>) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (domain, frames) in metadata {
        for (section, prefix) in [("semi", ""), ("book", "book ")] {
            let Some(Value::Object(slots)) = frames.get(section) else {
                continue;
            };
            for (name, value) in slots {
                // `booked` holds reservation records, not a slot value
                let Value::String(value) = value else {
                    continue;
                };
                let slot_id = format!("{}-{prefix}{}", domain.to_lowercase(), name.to_lowercase());
                out.insert(slot_id, value.clone());
            }
        }
    }
    out
}

fn parse_multiwoz(text: &str) -> Result<Vec<RawDialogue>, CorpusError> {
    let file: BTreeMap<String, MultiWozDialogue> =
        serde_json::from_str(text).map_err(|e| CorpusError::malformed("MultiWOZ", e))?;
    let mut out = Vec::with_capacity(file.len());
    for (id, dialogue) in file {
        let id = id.strip_suffix(".json").unwrap_or(&id).to_string();
        let mut turns = Vec::with_capacity(dialogue.log.len());
        let mut gold_states = BTreeMap::new();
        for (i, turn) in dialogue.log.iter().enumerate() {
            let speaker = if i % 2 == 0 {
                Speaker::User
            } else {
                Speaker::System
            };
            turns.push(DialogueTurn {
                speaker,
                utterance: turn.text.trim().to_string(),
            });
            if speaker == Speaker::User {
                if let Some(next) = dialogue.log.get(i + 1) {
                    gold_states.insert(i, multiwoz_assignments(&next.metadata));
                }
            }
        }
        out.push(RawDialogue {
            id,
            turns,
            gold_states,
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct SgdDialogue {
    dialogue_id: String,
    turns: Vec<SgdTurn>,
}

#[derive(Deserialize)]
struct SgdTurn {
    speaker: String,
    utterance: String,
    #[serde(default)]
    frames: Vec<SgdFrame>,
}

#[derive(Deserialize)]
struct SgdFrame {
    service: String,
    #[serde(default)]
    state: Option<SgdState>,
}

#[derive(Deserialize)]
struct SgdState {
    #[serde(default)]
    slot_values: BTreeMap<String, Vec<String>>,
}

fn parse_sgd(text: &str) -> Result<Vec<RawDialogue>, CorpusError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CorpusError::malformed("SGD", e))?;
    let dialogues: Vec<SgdDialogue> = match value {
        Value::Array(_) => serde_json::from_value(value),
        other => serde_json::from_value(other).map(|d| vec![d]),
    }
    .map_err(|e| CorpusError::malformed("SGD", e))?;

    let mut out = Vec::with_capacity(dialogues.len());
    for d in dialogues {
        let mut turns = Vec::with_capacity(d.turns.len());
        let mut gold_states = BTreeMap::new();
        for (i, turn) in d.turns.into_iter().enumerate() {
            let speaker = match turn.speaker.to_ascii_uppercase().as_str() {
                "USER" => Speaker::User,
                "SYSTEM" => Speaker::System,
                other => {
                    return Err(CorpusError::malformed(
                        "SGD",
                        format!("dialogue {}: unknown speaker {other}", d.dialogue_id),
                    ))
                }
            };
            if speaker == Speaker::User {
                let mut assignments = BTreeMap::new();
                for frame in &turn.frames {
                    let Some(state) = &frame.state else { continue };
                    for (slot, values) in &state.slot_values {
                        if let Some(v) = values.first() {
                            assignments.insert(format!("{}-{slot}", frame.service), v.clone());
                        }
                    }
                }
                gold_states.insert(i, assignments);
            }
            turns.push(DialogueTurn {
                speaker,
                utterance: turn.utterance,
            });
        }
        out.push(RawDialogue {
            id: d.dialogue_id,
            turns,
            gold_states,
        });
    }
    Ok(out)
}
