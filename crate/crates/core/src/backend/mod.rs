//! The answerer contract.
//!
//! A backend maps serialized model inputs to decoded output strings. Callers go
//! through [`answer_batch`], which validates the batch and returns responses in
//! request order no matter how the backend ordered them.

mod noisy;
mod oracle;
mod remote;

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use noisy::{NoiseConfig, NoisyBackend};
pub use oracle::{input_hash, oracle_from_gold, LookupEntry, OracleBackend};
pub use remote::{RemoteBackend, RemoteConfig, ANSWER_PATH, HEALTH_PATH};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub id: String,
    pub input_text: String,
}

impl AnswerRequest {
    pub fn new(id: impl Into<String>, input_text: impl Into<String>) -> Self {
        AnswerRequest {
            id: id.into(),
            input_text: input_text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub id: String,
    pub output_text: String,
}

/// Body of `POST /v1/answer`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRequestBody {
    pub requests: Vec<AnswerRequest>,
}

/// Body of a successful `/v1/answer` reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerResponseBody {
    pub responses: Vec<AnswerResponse>,
}

/// Body of `GET /v1/health`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthBody {
    pub status: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {detail}")]
    Unavailable { attempts: u32, detail: String },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("backend rejected the batch with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("invalid request batch: {0}")]
    InvalidRequest(String),
}

/// Something that answers serialized inputs.
///
/// Implementations must be callable from several threads at once. A conforming
/// backend is deterministic: equal `input_text` gives equal `output_text`.
pub trait Backend: Send + Sync {
    /// Raw answers for one batch. Order and completeness are checked by
    /// [`answer_batch`], not here.
    fn answer(&self, requests: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn answer(&self, requests: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, BackendError> {
        (**self).answer(requests)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn answer(&self, requests: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, BackendError> {
        (**self).answer(requests)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn answer(&self, requests: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, BackendError> {
        (**self).answer(requests)
    }
}

pub(crate) fn validate_requests(requests: &[AnswerRequest]) -> Result<(), BackendError> {
    if requests.is_empty() {
        return Err(BackendError::InvalidRequest("empty batch".into()));
    }
    let mut seen = HashSet::with_capacity(requests.len());
    for r in requests {
        if r.input_text.is_empty() {
            return Err(BackendError::InvalidRequest(format!(
                "request `{}` has empty input_text",
                r.id
            )));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(BackendError::InvalidRequest(format!(
                "duplicate request id `{}`",
                r.id
            )));
        }
    }
    Ok(())
}

/// Checks that `responses` answer exactly the ids of `requests` and puts them
/// in request order.
pub fn reorder_responses(
    requests: &[AnswerRequest],
    responses: Vec<AnswerResponse>,
) -> Result<Vec<AnswerResponse>, BackendError> {
    if responses.len() != requests.len() {
        return Err(BackendError::ProtocolViolation(format!(
            "{} responses for {} requests",
            responses.len(),
            requests.len()
        )));
    }
    let mut by_id: HashMap<String, AnswerResponse> = HashMap::with_capacity(responses.len());
    for r in responses {
        if by_id.contains_key(&r.id) {
            return Err(BackendError::ProtocolViolation(format!(
                "duplicate response id `{}`",
                r.id
            )));
        }
        by_id.insert(r.id.clone(), r);
    }
    requests
        .iter()
        .map(|q| {
            by_id.remove(&q.id).ok_or_else(|| {
                BackendError::ProtocolViolation(format!("no response for request `{}`", q.id))
            })
        })
        .collect()
}

/// Answers a batch: one response per request, in request order.
pub fn answer_batch<B: Backend + ?Sized>(
    requests: &[AnswerRequest],
    backend: &B,
) -> Result<Vec<AnswerResponse>, BackendError> {
    validate_requests(requests)?;
    let responses = backend.answer(requests)?;
    reorder_responses(requests, responses)
}

/// Counts the requests and batches that pass through to the inner backend.
pub struct CountingBackend<B> {
    inner: B,
    requests: AtomicUsize,
    batches: AtomicUsize,
}

impl<B: Backend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            requests: AtomicUsize::new(0),
            batches: AtomicUsize::new(0),
        }
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn batches(&self) -> usize {
        self.batches.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.requests.store(0, Ordering::SeqCst);
        self.batches.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn answer(&self, requests: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, BackendError> {
        self.requests.fetch_add(requests.len(), Ordering::SeqCst);
        self.batches.fetch_add(1, Ordering::SeqCst);
        self.inner.answer(requests)
    }
}

/// Answers every request with the same text.
#[derive(Debug, Clone)]
pub struct ConstantBackend(pub String);

impl Backend for ConstantBackend {
    fn answer(&self, requests: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, BackendError> {
        Ok(requests
            .iter()
            .map(|r| AnswerResponse {
                id: r.id.clone(),
                output_text: self.0.clone(),
            })
            .collect())
    }
}
