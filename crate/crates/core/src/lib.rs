//! Tooling for zero-shot dialogue state tracking through question answering.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`corpus`]: loaders for extractive QA (SQuAD 2.0, MRQA), multi-choice QA
//!   (RACE, DREAM) and dialogue corpora (MultiWOZ, SGD), plus the unified JSONL
//!   interchange formats.
//! - [`prompt`]: the single-sequence text-to-text model input shared by QA
//!   training records and slot queries, and parsing of decoded answers.
//! - [`synthesis`]: unanswerable question synthesis (negative question sampling
//!   and context truncation) mixed into a seeded, shardable training stream.
//! - [`backend`]: the answerer contract, a gold-derived oracle, a synthetic noisy
//!   answerer and an HTTP client for the `/v1/answer` wire protocol.
//! - [`tracker`]: two-pass slot tracking (extractive gating, then multi-choice
//!   values for active categorical slots) and value canonicalization.
//! - [`eval`]: joint/average goal accuracy, slot gate accuracy, per-domain
//!   scores, error taxonomy and oracle-gate rescoring.

pub mod backend;
pub mod corpus;
pub mod eval;
pub mod normalize;
pub mod prompt;
pub mod rng;
pub mod synthesis;
pub mod tracker;

pub use corpus::{
    Dialogue, DialogueState, DialogueTurn, QaExample, QaKind, Schema, SlotDescriptor, SlotKind,
    Speaker, NONE_VALUE,
};
