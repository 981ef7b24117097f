//! Unanswerable question synthesis.
//!
//! Two constructions turn answerable QA records into "none" records:
//!
//! - negative question sampling pairs a passage with a question drawn from a
//!   pool of questions asked about *other* passages;
//! - context truncation cuts the passage right before the first sentence that
//!   contains the answer, so the answer is no longer present.
//!
//! [`synthesize_stream`] walks the sources once; each source independently
//! becomes unanswerable with probability `alpha`, using negative sampling with
//! probability `nqs_fraction` and truncation otherwise (truncation failures
//! fall back to negative sampling). Every decision for source `i` draws from
//! the substream `(seed, "synthesis", i)`, see [`crate::rng`].

mod sentence;

use std::collections::{HashMap, HashSet};
use std::ops::Range;

use rand_core::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{QaExample, QaKind, NONE_VALUE};
use crate::rng::{below, digest64, substream, unit_f64};

pub use sentence::{sentence_spans, ABBREVIATIONS};

const RNG_PURPOSE: &str = "synthesis";
/// Random draws before falling back to a scan for an eligible pool entry.
const MAX_REJECTION_DRAWS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthesisError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("no pool question from a different passage is available for `{0}`")]
    PoolExhausted(String),
    #[error("answer of `{0}` lies in the first sentence; truncation would leave no context")]
    AnswerInFirstSentence(String),
    #[error("`{0}` has no usable answer span")]
    MissingSpan(String),
    #[error("`{id}` cannot be truncated: {reason}")]
    NotTruncatable { id: String, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Probability that a source is replaced by an unanswerable variant.
    pub alpha: f64,
    /// Share of unanswerable variants built by negative question sampling.
    pub nqs_fraction: f64,
    pub seed: u64,
    /// Whether multi-choice sources may receive negative questions. When off
    /// they always pass through unchanged.
    pub nqs_multichoice: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            alpha: 0.3,
            nqs_fraction: 0.95,
            seed: 0,
            nqs_multichoice: false,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        for (name, v) in [("alpha", self.alpha), ("nqs_fraction", self.nqs_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthesisError::InvalidConfig(format!(
                    "{name} must be in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Identity of a passage: a digest of its text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PassageId(pub u64);

impl PassageId {
    pub fn of(context: &str) -> Self {
        PassageId(digest64(context))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub question: String,
    pub passage: PassageId,
}

/// Questions available for negative sampling, with the questions asked about
/// each passage so a draw never reuses one of the target's own questions.
#[derive(Debug, Clone, Default)]
pub struct QuestionPool {
    entries: Vec<PoolEntry>,
    by_passage: HashMap<PassageId, HashSet<String>>,
}

impl QuestionPool {
    pub fn new(entries: Vec<PoolEntry>) -> Self {
        let mut by_passage: HashMap<PassageId, HashSet<String>> = HashMap::new();
        for e in &entries {
            by_passage
                .entry(e.passage)
                .or_default()
                .insert(e.question.clone());
        }
        QuestionPool {
            entries,
            by_passage,
        }
    }

    /// Pools every question of `examples` (across all their datasets).
    pub fn from_examples(examples: &[QaExample]) -> Self {
        Self::new(
            examples
                .iter()
                .map(|e| PoolEntry {
                    question: e.question.clone(),
                    passage: PassageId::of(&e.context),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    fn eligible(&self, entry: &PoolEntry, target: &QaExample, passage: PassageId) -> bool {
        entry.passage != passage
            && entry.question != target.question
            && !self
                .by_passage
                .get(&passage)
                .is_some_and(|own| own.contains(&entry.question))
    }
}

/// Replaces the question of `target` with one asked about another passage and
/// labels the result unanswerable.
///
/// Draws uniformly until an eligible entry appears; after a bounded number of
/// draws it scans the pool from a random offset, so the call terminates and
/// reports [`SynthesisError::PoolExhausted`] when nothing is eligible.
/// Multi-choice targets keep their kind and choices.
pub fn sample_negative_question(
    target: &QaExample,
    pool: &QuestionPool,
    rng: &mut impl RngCore,
) -> Result<QaExample, SynthesisError> {
    if pool.is_empty() {
        return Err(SynthesisError::PoolExhausted(target.id.clone()));
    }
    let passage = PassageId::of(&target.context);
    let mut picked = None;
    for _ in 0..MAX_REJECTION_DRAWS {
        let entry = &pool.entries[below(rng, pool.len())];
        if pool.eligible(entry, target, passage) {
            picked = Some(entry);
            break;
        }
    }
    if picked.is_none() {
        let offset = below(rng, pool.len());
        picked = (0..pool.len())
            .map(|k| &pool.entries[(offset + k) % pool.len()])
            .find(|e| pool.eligible(e, target, passage));
    }
    let entry = picked.ok_or_else(|| SynthesisError::PoolExhausted(target.id.clone()))?;
    let mut out = target.clone();
    out.id = format!("{}#nqs", target.id);
    out.question = entry.question.clone();
    out.answer = NONE_VALUE.to_string();
    out.answer_char_span = None;
    if out.kind == QaKind::Extractive {
        out.choices.clear();
    }
    Ok(out)
}

fn contains_ignore_case(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// Cuts the context before the first sentence containing the answer.
///
/// The cut starts at the first sentence overlapping the answer span and moves
/// further back while the remaining prefix still contains the answer string
/// (case-insensitively), so the output never mentions the answer.
pub fn truncate_context(example: &QaExample) -> Result<QaExample, SynthesisError> {
    if example.kind != QaKind::Extractive {
        return Err(SynthesisError::NotTruncatable {
            id: example.id.clone(),
            reason: "not extractive",
        });
    }
    if example.is_unanswerable() {
        return Err(SynthesisError::NotTruncatable {
            id: example.id.clone(),
            reason: "already unanswerable",
        });
    }
    let answer: Range<usize> = example
        .span_bytes()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| SynthesisError::MissingSpan(example.id.clone()))?;

    let sentences = sentence_spans(&example.context);
    let mut keep = sentences
        .iter()
        .position(|s| s.end > answer.start)
        .unwrap_or(sentences.len());
    while keep > 0
        && contains_ignore_case(&example.context[..sentences[keep - 1].end], &example.answer)
    {
        keep -= 1;
    }
    if keep == 0 {
        return Err(SynthesisError::AnswerInFirstSentence(example.id.clone()));
    }
    let mut out = example.clone();
    out.id = format!("{}#ct", example.id);
    out.context = example.context[..sentences[keep - 1].end].to_string();
    out.answer = NONE_VALUE.to_string();
    out.answer_char_span = None;
    Ok(out)
}

/// How an output record came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Source,
    NegativeQuestion,
    TruncatedContext,
    /// Truncation was selected but impossible; negative sampling was used.
    NegativeQuestionFallback,
}

impl Origin {
    pub fn is_synthesized(self) -> bool {
        self != Origin::Source
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synthesized {
    pub example: QaExample,
    pub origin: Origin,
}

/// Output for source number `index`.
pub fn synthesize_one(
    index: usize,
    source: &QaExample,
    pool: &QuestionPool,
    config: &SynthesisConfig,
) -> Result<Synthesized, SynthesisError> {
    let mut rng = substream(config.seed, RNG_PURPOSE, index as u64);
    let make_negative = unit_f64(&mut rng) < config.alpha;
    let use_nqs = unit_f64(&mut rng) < config.nqs_fraction;
    let passthrough = Synthesized {
        example: source.clone(),
        origin: Origin::Source,
    };
    if !make_negative || (source.kind == QaKind::MultiChoice && !config.nqs_multichoice) {
        return Ok(passthrough);
    }
    if !use_nqs {
        if let Ok(example) = truncate_context(source) {
            return Ok(Synthesized {
                example,
                origin: Origin::TruncatedContext,
            });
        }
    }
    let example = sample_negative_question(source, pool, &mut rng)?;
    Ok(Synthesized {
        example,
        origin: if use_nqs {
            Origin::NegativeQuestion
        } else {
            Origin::NegativeQuestionFallback
        },
    })
}

/// Synthesizes outputs for `range` of `sources`; concatenating the shards of a
/// partition in order equals [`synthesize_stream`].
pub fn synthesize_shard(
    sources: &[QaExample],
    range: Range<usize>,
    pool: &QuestionPool,
    config: &SynthesisConfig,
) -> Result<Vec<Synthesized>, SynthesisError> {
    config.validate()?;
    sources[range.clone()]
        .par_iter()
        .enumerate()
        .map(|(k, src)| synthesize_one(range.start + k, src, pool, config))
        .collect()
}

/// One output per source, in source order, fully determined by
/// `(sources, config)`. The negative-question pool is the union of all
/// source questions.
pub fn synthesize_stream(
    sources: &[QaExample],
    config: &SynthesisConfig,
) -> Result<Vec<Synthesized>, SynthesisError> {
    config.validate()?;
    let pool = QuestionPool::from_examples(sources);
    synthesize_shard(sources, 0..sources.len(), &pool, config)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisStats {
    pub total: usize,
    pub unchanged: usize,
    pub negative_question: usize,
    pub truncated_context: usize,
    pub negative_question_fallback: usize,
}

impl SynthesisStats {
    pub fn from_outputs(outputs: &[Synthesized]) -> Self {
        let mut stats = SynthesisStats {
            total: outputs.len(),
            ..Default::default()
        };
        for o in outputs {
            match o.origin {
                Origin::Source => stats.unchanged += 1,
                Origin::NegativeQuestion => stats.negative_question += 1,
                Origin::TruncatedContext => stats.truncated_context += 1,
                Origin::NegativeQuestionFallback => stats.negative_question_fallback += 1,
            }
        }
        stats
    }

    pub fn synthesized(&self) -> usize {
        self.total - self.unchanged
    }

    /// Negative-question share of synthesized records, fallbacks included.
    pub fn nqs_share(&self) -> f64 {
        (self.negative_question + self.negative_question_fallback) as f64
            / self.synthesized().max(1) as f64
    }
}
