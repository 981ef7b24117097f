//! Extractive and multi-choice QA dataset ingestion.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::jsonl;
use super::{
    byte_to_char_offset, char_range_to_bytes, CorpusError, Loaded, QaExample, QaKind, RejectReason,
    Rejection, NONE_VALUE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractiveFormat {
    /// SQuAD 2.0 JSON (`data[].paragraphs[].qas[]`, `is_impossible`).
    Squad2Json,
    /// MRQA 2019 shared-task JSONL (header line + one paragraph per line).
    MrqaJsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiChoiceFormat {
    /// RACE article records (`article`, `questions`, `options`, `answers`).
    RaceJson,
    /// DREAM `[turns, questions, id]` triples.
    DreamJson,
}

pub fn load_extractive_dataset(
    path: &Path,
    format: ExtractiveFormat,
) -> Result<Loaded<QaExample>, CorpusError> {
    parse_extractive_dataset(&jsonl::read_file(path)?, format)
}

pub fn load_multichoice_dataset(
    path: &Path,
    format: MultiChoiceFormat,
) -> Result<Loaded<QaExample>, CorpusError> {
    parse_multichoice_dataset(&jsonl::read_file(path)?, format)
}

/// Reads a file in the unified QA JSONL format, validating every record.
pub fn load_unified_jsonl(path: &Path) -> Result<Loaded<QaExample>, CorpusError> {
    let mut acc = Accumulator::default();
    for ex in jsonl::read::<QaExample>(path)? {
        acc.push(ex);
    }
    Ok(acc.finish())
}

pub fn parse_extractive_dataset(
    text: &str,
    format: ExtractiveFormat,
) -> Result<Loaded<QaExample>, CorpusError> {
    match format {
        ExtractiveFormat::Squad2Json => parse_squad2(text),
        ExtractiveFormat::MrqaJsonl => parse_mrqa(text),
    }
}

pub fn parse_multichoice_dataset(
    text: &str,
    format: MultiChoiceFormat,
) -> Result<Loaded<QaExample>, CorpusError> {
    match format {
        MultiChoiceFormat::RaceJson => parse_race(text),
        MultiChoiceFormat::DreamJson => parse_dream(text),
    }
}

/// Collects records, enforcing invariants and id uniqueness.
#[derive(Default)]
struct Accumulator {
    seen: HashSet<String>,
    out: Loaded<QaExample>,
}

impl Accumulator {
    fn push(&mut self, ex: QaExample) {
        let verdict = ex.check().and_then(|_| {
            if self.seen.contains(&ex.id) {
                Err(RejectReason::DuplicateId)
            } else {
                Ok(())
            }
        });
        match verdict {
            Ok(()) => {
                self.seen.insert(ex.id.clone());
                self.out.records.push(ex);
            }
            Err(reason) => self.reject(ex.id, reason),
        }
    }

    fn reject(&mut self, record_id: String, reason: RejectReason) {
        log::debug!("dropping {record_id}: {reason}");
        self.out.rejected.push(Rejection { record_id, reason });
    }

    fn finish(self) -> Loaded<QaExample> {
        self.out
    }
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
    #[serde(default)]
    is_impossible: bool,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

fn parse_squad2(text: &str) -> Result<Loaded<QaExample>, CorpusError> {
    let file: SquadFile =
        serde_json::from_str(text).map_err(|e| CorpusError::malformed("SQuAD 2.0", e))?;
    let mut acc = Accumulator::default();
    for paragraph in file.data.into_iter().flat_map(|a| a.paragraphs) {
        for qa in paragraph.qas {
            if qa.is_impossible {
                acc.push(QaExample {
                    id: qa.id,
                    kind: QaKind::Extractive,
                    question: qa.question,
                    context: paragraph.context.clone(),
                    choices: vec![],
                    answer: NONE_VALUE.to_string(),
                    answer_char_span: None,
                    source: "squad2".into(),
                });
                continue;
            }
            let Some(first) = qa.answers.into_iter().next() else {
                acc.reject(qa.id, RejectReason::MissingAnswer);
                continue;
            };
            let end = first.answer_start + first.text.chars().count();
            acc.push(QaExample {
                id: qa.id,
                kind: QaKind::Extractive,
                question: qa.question,
                context: paragraph.context.clone(),
                choices: vec![],
                answer: first.text,
                answer_char_span: Some((first.answer_start, end)),
                source: "squad2".into(),
            });
        }
    }
    Ok(acc.finish())
}

#[derive(Deserialize)]
struct MrqaParagraph {
    context: String,
    qas: Vec<MrqaQa>,
}

#[derive(Deserialize)]
struct MrqaQa {
    qid: String,
    question: String,
    #[serde(default)]
    detected_answers: Vec<MrqaDetected>,
}

#[derive(Deserialize)]
struct MrqaDetected {
    text: String,
    /// Inclusive `[start, end]` character offsets.
    char_spans: Vec<(usize, usize)>,
}

fn parse_mrqa(text: &str) -> Result<Loaded<QaExample>, CorpusError> {
    let mut acc = Accumulator::default();
    let mut source = String::from("mrqa");
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| CorpusError::malformed("MRQA", format!("line {}: {e}", n + 1)))?;
        if let Some(header) = value.get("header") {
            if let Some(name) = header.get("dataset").and_then(Value::as_str) {
                source = name.to_string();
            }
            continue;
        }
        let paragraph: MrqaParagraph = serde_json::from_value(value)
            .map_err(|e| CorpusError::malformed("MRQA", format!("line {}: {e}", n + 1)))?;
        for qa in paragraph.qas {
            let span = qa
                .detected_answers
                .iter()
                .find_map(|d| d.char_spans.first().map(|&(s, e)| (d, s, e + 1)));
            let Some((detected, start, end)) = span else {
                acc.reject(qa.qid, RejectReason::MissingAnswer);
                continue;
            };
            acc.push(QaExample {
                id: qa.qid,
                kind: QaKind::Extractive,
                question: qa.question,
                context: paragraph.context.clone(),
                choices: vec![],
                answer: detected.text.clone(),
                answer_char_span: Some((start, end)),
                source: source.clone(),
            });
        }
    }
    Ok(acc.finish())
}

/// Accepts a JSON array, a single JSON value, or JSON Lines.
fn json_values(text: &str, format: &'static str) -> Result<Vec<Value>, CorpusError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Array(items)) => Ok(items),
        Ok(v) => Ok(vec![v]),
        Err(whole_err) => {
            let mut out = Vec::new();
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let v = serde_json::from_str(line).map_err(|e| {
                    CorpusError::malformed(
                        format,
                        format!("not JSON ({whole_err}) nor JSONL (line {}: {e})", n + 1),
                    )
                })?;
                out.push(v);
            }
            Ok(out)
        }
    }
}

#[derive(Deserialize)]
struct RaceRecord {
    #[serde(default)]
    id: Option<String>,
    article: String,
    questions: Vec<String>,
    options: Vec<Vec<String>>,
    answers: Vec<Value>,
}

/// "A".."Z" or a non-negative integer index.
fn race_gold_index(answer: &Value) -> Option<usize> {
    match answer {
        Value::String(s) => {
            let s = s.trim();
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_uppercase() => Some((c as u8 - b'A') as usize),
                _ => s.parse().ok(),
            }
        }
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        _ => None,
    }
}

fn parse_race(text: &str) -> Result<Loaded<QaExample>, CorpusError> {
    let mut acc = Accumulator::default();
    for (n, value) in json_values(text, "RACE")?.into_iter().enumerate() {
        let record: RaceRecord = serde_json::from_value(value)
            .map_err(|e| CorpusError::malformed("RACE", format!("record {}: {e}", n + 1)))?;
        if record.questions.len() != record.options.len()
            || record.questions.len() != record.answers.len()
        {
            return Err(CorpusError::malformed(
                "RACE",
                format!(
                    "record {}: questions/options/answers length mismatch",
                    n + 1
                ),
            ));
        }
        let article_id = record.id.unwrap_or_else(|| format!("race-{n}"));
        for (qi, ((question, options), answer)) in record
            .questions
            .into_iter()
            .zip(record.options)
            .zip(record.answers)
            .enumerate()
        {
            let id = format!("{article_id}-{qi}");
            if options.len() < 2 {
                acc.reject(id, RejectReason::TooFewChoices);
                continue;
            }
            match race_gold_index(&answer).and_then(|i| options.get(i).cloned()) {
                Some(gold) => acc.push(QaExample {
                    id,
                    kind: QaKind::MultiChoice,
                    question,
                    context: record.article.clone(),
                    choices: options,
                    answer: gold,
                    answer_char_span: None,
                    source: "race".into(),
                }),
                None => acc.reject(id, RejectReason::GoldIndexOutOfRange),
            }
        }
    }
    Ok(acc.finish())
}

#[derive(Deserialize)]
struct DreamQuestion {
    question: String,
    choice: Vec<String>,
    answer: String,
}

fn parse_dream(text: &str) -> Result<Loaded<QaExample>, CorpusError> {
    let mut acc = Accumulator::default();
    for (n, value) in json_values(text, "DREAM")?.into_iter().enumerate() {
        let (turns, questions, id): (Vec<String>, Vec<DreamQuestion>, String) =
            serde_json::from_value(value)
                .map_err(|e| CorpusError::malformed("DREAM", format!("record {}: {e}", n + 1)))?;
        let context = turns.join(" ");
        for (qi, q) in questions.into_iter().enumerate() {
            let id = format!("{id}-{qi}");
            if q.choice.len() < 2 {
                acc.reject(id, RejectReason::TooFewChoices);
                continue;
            }
            if !q.choice.contains(&q.answer) {
                acc.reject(id, RejectReason::GoldIndexOutOfRange);
                continue;
            }
            acc.push(QaExample {
                id,
                kind: QaKind::MultiChoice,
                question: q.question,
                context: context.clone(),
                choices: q.choice,
                answer: q.answer,
                answer_char_span: None,
                source: "dream".into(),
            });
        }
    }
    Ok(acc.finish())
}

/// Locates `answer` in `context` and returns its char span, for building
/// records from sources that give only answer text.
pub fn find_char_span(context: &str, answer: &str) -> Option<(usize, usize)> {
    let byte = context.find(answer)?;
    let start = byte_to_char_offset(context, byte);
    let end = start + answer.chars().count();
    debug_assert!(char_range_to_bytes(context, start, end).is_some());
    Some((start, end))
}
