//! Text-to-text model inputs and decoded-answer parsing.
//!
//! Every input is one sequence:
//!
//! ```text
//! input      := prefix SP question SP [choicesSeg SP] context
//! choicesSeg := "Choices:" SP choice (" [sep] " choice)*
//! ```
//!
//! where `prefix` is `Extractive Question:` or `Multi-Choice Question:`. Dialogue
//! contexts render each turn as `user: <utterance>` / `system: <utterance>`
//! joined by single spaces. The same functions produce training records and
//! inference queries, so the bytes a model is trained on and queried with can
//! never drift apart.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DialogueTurn, QaExample, QaKind, SlotDescriptor, SlotKind, Speaker};
use crate::normalize::normalize_value;

pub const EXTRACTIVE_PREFIX: &str = "Extractive Question:";
pub const MULTI_CHOICE_PREFIX: &str = "Multi-Choice Question:";
pub const CHOICES_MARKER: &str = "Choices:";
pub const CHOICE_SEPARATOR: &str = " [sep] ";
pub const USER_TAG: &str = "user:";
pub const SYSTEM_TAG: &str = "system:";

/// Default character budget for one model input (roughly 1024 subword tokens).
pub const DEFAULT_MAX_INPUT_CHARS: usize = 4 * 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("dialogue history is empty")]
    EmptyHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    /// Slot queries longer than this (in chars) lose their oldest turns first.
    /// The most recent turn is always kept.
    pub max_input_chars: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            max_input_chars: DEFAULT_MAX_INPUT_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedInput {
    pub text: String,
    pub kind: QaKind,
}

fn prefix(kind: QaKind) -> &'static str {
    match kind {
        QaKind::Extractive => EXTRACTIVE_PREFIX,
        QaKind::MultiChoice => MULTI_CHOICE_PREFIX,
    }
}

/// Everything before the context, including the trailing space.
fn head(kind: QaKind, question: &str, choices: &[String]) -> String {
    let mut text = String::with_capacity(question.len() + 32);
    text.push_str(prefix(kind));
    text.push(' ');
    text.push_str(question);
    text.push(' ');
    if kind == QaKind::MultiChoice {
        text.push_str(CHOICES_MARKER);
        text.push(' ');
        text.push_str(&choices.join(CHOICE_SEPARATOR));
        text.push(' ');
    }
    text
}

pub fn serialize_qa(example: &QaExample) -> SerializedInput {
    let mut text = head(example.kind, &example.question, &example.choices);
    text.push_str(&example.context);
    SerializedInput {
        text,
        kind: example.kind,
    }
}

fn render_turn(turn: &DialogueTurn) -> String {
    let tag = match turn.speaker {
        Speaker::User => USER_TAG,
        Speaker::System => SYSTEM_TAG,
    };
    format!("{tag} {}", turn.utterance)
}

pub fn serialize_dialogue_context(turns: &[DialogueTurn]) -> Result<String, PromptError> {
    if turns.is_empty() {
        return Err(PromptError::EmptyHistory);
    }
    Ok(turns.iter().map(render_turn).collect::<Vec<_>>().join(" "))
}

/// The schema question when present, else
/// `what is the <slot> of the <domain> that user wants?`.
pub fn slot_to_question(slot: &SlotDescriptor) -> String {
    match &slot.question {
        Some(q) => q.clone(),
        None => format!(
            "what is the {} of the {} that user wants?",
            slot.slot_name, slot.domain
        ),
    }
}

/// Builds the query for one slot over a dialogue history.
///
/// The query is extractive when `force_extractive` is set or the slot is
/// non-categorical; otherwise it is multi-choice over the slot's candidates.
pub fn build_slot_query(
    slot: &SlotDescriptor,
    turns: &[DialogueTurn],
    force_extractive: bool,
    config: &PromptConfig,
) -> Result<SerializedInput, PromptError> {
    if turns.is_empty() {
        return Err(PromptError::EmptyHistory);
    }
    let kind = if force_extractive || slot.kind == SlotKind::NonCategorical {
        QaKind::Extractive
    } else {
        QaKind::MultiChoice
    };
    let mut text = head(kind, &slot_to_question(slot), &slot.value_candidates);

    let rendered: Vec<String> = turns.iter().map(render_turn).collect();
    let lens: Vec<usize> = rendered.iter().map(|r| r.chars().count()).collect();
    let head_len = text.chars().count();
    // context length for turns[first..] is sum(lens) + separating spaces
    let mut first = 0;
    let mut context_len = lens.iter().sum::<usize>() + lens.len() - 1;
    while first + 1 < rendered.len() && head_len + context_len > config.max_input_chars {
        context_len -= lens[first] + 1;
        first += 1;
    }
    text.push_str(&rendered[first..].join(" "));
    Ok(SerializedInput { text, kind })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub value: String,
    pub is_none: bool,
}

/// Normalizes a decoded answer; empty output and "none" both mean no value.
pub fn parse_answer(output_text: &str) -> ParsedAnswer {
    let value = normalize_value(output_text);
    if value.is_empty() || value == crate::corpus::NONE_VALUE {
        ParsedAnswer {
            value: String::new(),
            is_none: true,
        }
    } else {
        ParsedAnswer {
            value,
            is_none: false,
        }
    }
}
