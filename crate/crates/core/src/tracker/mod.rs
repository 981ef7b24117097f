//! Two-pass slot tracking.
//!
//! At each user turn every slot is first asked as an extractive question over
//! the full history; a non-"none" answer opens the slot's gate. Gated categorical
//! slots are then asked again as multi-choice questions over their candidates
//! and take that answer, or are closed again when it is "none". Gated
//! non-categorical slots keep the extractive answer. Values are canonicalized
//! after gating.

pub mod canonical;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{answer_batch, AnswerRequest, Backend, BackendError};
use crate::corpus::{Dialogue, DialogueState, DialogueTurn, Schema, Speaker, NONE_VALUE};
use crate::prompt::{build_slot_query, parse_answer, PromptConfig, PromptError};

pub use canonical::{Canonicalizer, DEFAULT_MATCH_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrackError {
    #[error("dialogue `{0}`: history is empty")]
    EmptyHistory(String),
    #[error("dialogue `{dialogue_id}`: turn {turn_index} is not a user turn")]
    NotUserTurn {
        dialogue_id: String,
        turn_index: usize,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("could not start worker pool: {0}")]
    WorkerPool(String),
}

/// Tracker output for one user turn, including the diagnostics of both passes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnPrediction {
    pub dialogue_id: String,
    /// Index into the dialogue's turns; always a user turn.
    pub turn_index: usize,
    pub state: DialogueState,
    /// Final gate per schema slot, after multi-choice "none" answers close it.
    #[serde(default)]
    pub gate: BTreeMap<String, bool>,
    /// Normalized extractive answer per schema slot (`"none"` when empty).
    #[serde(default)]
    pub raw_values: BTreeMap<String, String>,
    /// Normalized multi-choice answer per queried categorical slot.
    #[serde(default)]
    pub pass2_values: BTreeMap<String, String>,
}

/// One line of a predictions JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub state: DialogueState,
}

impl TurnPrediction {
    pub fn record(&self) -> PredictionRecord {
        PredictionRecord {
            dialogue_id: self.dialogue_id.clone(),
            turn_index: self.turn_index,
            state: self.state.clone(),
        }
    }

    pub fn has_diagnostics(&self) -> bool {
        !self.raw_values.is_empty()
    }
}

impl From<PredictionRecord> for TurnPrediction {
    fn from(r: PredictionRecord) -> Self {
        TurnPrediction {
            dialogue_id: r.dialogue_id,
            turn_index: r.turn_index,
            state: r.state,
            gate: BTreeMap::new(),
            raw_values: BTreeMap::new(),
            pass2_values: BTreeMap::new(),
        }
    }
}

pub struct Tracker<'a> {
    schema: &'a Schema,
    backend: &'a dyn Backend,
    prompt: PromptConfig,
    canonicalizer: Canonicalizer,
}

fn request_id(dialogue_id: &str, turn_index: usize, slot_id: &str, pass: u8) -> String {
    format!("{dialogue_id}|{turn_index}|{slot_id}|{pass}")
}

impl<'a> Tracker<'a> {
    pub fn new(schema: &'a Schema, backend: &'a dyn Backend) -> Self {
        Tracker {
            schema,
            backend,
            prompt: PromptConfig::default(),
            canonicalizer: Canonicalizer::default(),
        }
    }

    pub fn with_prompt_config(mut self, prompt: PromptConfig) -> Self {
        self.prompt = prompt;
        self
    }

    pub fn with_canonicalizer(mut self, canonicalizer: Canonicalizer) -> Self {
        self.canonicalizer = canonicalizer;
        self
    }

    pub fn schema(&self) -> &Schema {
        self.schema
    }

    /// Tracks the last turn of `history`, which must be a user turn.
    pub fn track_turn(
        &self,
        dialogue_id: &str,
        history: &[DialogueTurn],
    ) -> Result<TurnPrediction, TrackError> {
        let last = history
            .last()
            .ok_or_else(|| TrackError::EmptyHistory(dialogue_id.to_string()))?;
        let turn_index = history.len() - 1;
        if last.speaker != Speaker::User {
            return Err(TrackError::NotUserTurn {
                dialogue_id: dialogue_id.to_string(),
                turn_index,
            });
        }
        let query = |slot, force_extractive| {
            build_slot_query(slot, history, force_extractive, &self.prompt).map_err(
                |PromptError::EmptyHistory| TrackError::EmptyHistory(dialogue_id.to_string()),
            )
        };

        let slots = self.schema.slots();
        let mut first = Vec::with_capacity(slots.len());
        for slot in slots {
            first.push(AnswerRequest::new(
                request_id(dialogue_id, turn_index, &slot.slot_id, 1),
                query(slot, true)?.text,
            ));
        }
        let answers = answer_batch(&first, self.backend)?;

        let mut prediction = TurnPrediction {
            dialogue_id: dialogue_id.to_string(),
            turn_index,
            state: DialogueState::new(),
            gate: BTreeMap::new(),
            raw_values: BTreeMap::new(),
            pass2_values: BTreeMap::new(),
        };
        let mut second = Vec::new();
        let mut second_slots = Vec::new();
        for (slot, answer) in slots.iter().zip(&answers) {
            let parsed = parse_answer(&answer.output_text);
            let active = !parsed.is_none;
            prediction.gate.insert(slot.slot_id.clone(), active);
            prediction.raw_values.insert(
                slot.slot_id.clone(),
                if active {
                    parsed.value.clone()
                } else {
                    NONE_VALUE.to_string()
                },
            );
            if !active {
                continue;
            }
            if slot.is_categorical() {
                second.push(AnswerRequest::new(
                    request_id(dialogue_id, turn_index, &slot.slot_id, 2),
                    query(slot, false)?.text,
                ));
                second_slots.push(slot);
            } else {
                let value = self.canonicalizer.canonicalize(&parsed.value, slot);
                prediction.state.insert(slot.slot_id.clone(), &value);
            }
        }

        if !second.is_empty() {
            for (slot, answer) in second_slots
                .into_iter()
                .zip(answer_batch(&second, self.backend)?)
            {
                let parsed = parse_answer(&answer.output_text);
                if parsed.is_none {
                    prediction
                        .pass2_values
                        .insert(slot.slot_id.clone(), NONE_VALUE.to_string());
                    prediction.gate.insert(slot.slot_id.clone(), false);
                } else {
                    let value = self.canonicalizer.canonicalize(&parsed.value, slot);
                    prediction
                        .pass2_values
                        .insert(slot.slot_id.clone(), parsed.value);
                    prediction.state.insert(slot.slot_id.clone(), &value);
                }
            }
        }
        Ok(prediction)
    }

    /// One prediction per user turn, each from the full history up to it.
    pub fn track_dialogue(&self, dialogue: &Dialogue) -> Result<Vec<TurnPrediction>, TrackError> {
        dialogue
            .user_turn_indices()
            .map(|i| self.track_turn(&dialogue.id, &dialogue.turns[..=i]))
            .collect()
    }

    /// Tracks dialogues in parallel on `workers` threads (0 = all cores).
    /// Output is ordered by `(dialogue_id, turn_index)`.
    pub fn track_corpus(
        &self,
        dialogues: &[Dialogue],
        workers: usize,
    ) -> Result<Vec<TurnPrediction>, TrackError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| TrackError::WorkerPool(e.to_string()))?;
        let per_dialogue: Vec<Vec<TurnPrediction>> = pool.install(|| {
            dialogues
                .par_iter()
                .map(|d| self.track_dialogue(d))
                .collect::<Result<_, _>>()
        })?;
        let mut out: Vec<TurnPrediction> = per_dialogue.into_iter().flatten().collect();
        out.sort_by(|a, b| {
            (a.dialogue_id.as_str(), a.turn_index).cmp(&(b.dialogue_id.as_str(), b.turn_index))
        });
        Ok(out)
    }
}
