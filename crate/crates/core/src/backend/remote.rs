//! HTTP client for the answer wire protocol.
//!
//! `POST {base}/v1/answer` with `{"requests":[{"id","input_text"}]}` answers
//! `{"responses":[{"id","output_text"}]}` with status 200; 503 means the
//! server is temporarily unavailable. `GET {base}/v1/health` answers
//! `{"status":"ok"}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::{
    reorder_responses, AnswerRequest, AnswerRequestBody, AnswerResponse, AnswerResponseBody,
    Backend, BackendError, HealthBody,
};

pub const ANSWER_PATH: &str = "/v1/answer";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Requests per HTTP call.
    pub batch_size: usize,
    /// Concurrent HTTP calls.
    pub max_inflight: usize,
    pub attempts: u32,
    /// Delay before the second attempt; doubles on each further attempt.
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            batch_size: 32,
            max_inflight: 4,
            attempts: 3,
            backoff_base: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Failure {
    Retryable(String),
    Fatal(BackendError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        if config.batch_size == 0 || config.max_inflight == 0 || config.attempts == 0 {
            return Err(BackendError::InvalidRequest(
                "batch_size, max_inflight and attempts must be positive".into(),
            ));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteBackend { config, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// Probes the health endpoint once.
    pub fn health(&self) -> Result<(), BackendError> {
        let unavailable = |detail: String| BackendError::Unavailable {
            attempts: 1,
            detail,
        };
        let mut resp = self
            .agent
            .get(&self.url(HEALTH_PATH))
            .call()
            .map_err(|e| unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(unavailable(format!("health check returned HTTP {status}")));
        }
        let body: HealthBody = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::ProtocolViolation(format!("health body: {e}")))?;
        if body.status != "ok" {
            return Err(unavailable(format!("health status `{}`", body.status)));
        }
        Ok(())
    }

    fn post_once(&self, batch: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, Failure> {
        let body = AnswerRequestBody {
            requests: batch.to_vec(),
        };
        let mut resp = match self.agent.post(&self.url(ANSWER_PATH)).send_json(&body) {
            Ok(r) => r,
            Err(e) => return Err(Failure::Retryable(e.to_string())),
        };
        match resp.status().as_u16() {
            200 => {}
            503 => return Err(Failure::Retryable("HTTP 503".into())),
            status => {
                let body = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(Failure::Fatal(BackendError::Rejected { status, body }));
            }
        }
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Err(Failure::Retryable(format!("reading body: {e}"))),
        };
        let parsed: AnswerResponseBody = serde_json::from_str(&text).map_err(|e| {
            Failure::Fatal(BackendError::ProtocolViolation(format!(
                "response body: {e}"
            )))
        })?;
        reorder_responses(batch, parsed.responses).map_err(Failure::Fatal)
    }

    fn post_with_retry(
        &self,
        batch: &[AnswerRequest],
    ) -> Result<Vec<AnswerResponse>, BackendError> {
        let mut delay = self.config.backoff_base;
        let mut attempt = 1;
        loop {
            match self.post_once(batch) {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(detail)) if attempt >= self.config.attempts => {
                    log::error!(
                        "backend {}: attempt {attempt} failed: {detail}; giving up",
                        self.config.base_url
                    );
                    return Err(BackendError::Unavailable {
                        attempts: attempt,
                        detail,
                    });
                }
                Err(Failure::Retryable(detail)) => {
                    log::warn!(
                        "backend {}: attempt {attempt} failed: {detail}; retrying in {delay:?}",
                        self.config.base_url
                    );
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

impl Backend for RemoteBackend {
    /// Splits the requests into batches of `batch_size`, keeps at most
    /// `max_inflight` of them in flight, and returns responses in request order.
    fn answer(&self, requests: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, BackendError> {
        let batches: Vec<&[AnswerRequest]> = requests.chunks(self.config.batch_size).collect();
        if batches.len() <= 1 {
            return batches
                .first()
                .map_or(Ok(Vec::new()), |b| self.post_with_retry(b));
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<Vec<AnswerResponse>, BackendError>>>> =
            Mutex::new(vec![None; batches.len()]);
        let workers = self.config.max_inflight.min(batches.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= batches.len() {
                        break;
                    }
                    let r = self.post_with_retry(batches[i]);
                    results.lock().expect("results lock")[i] = Some(r);
                });
            }
        });
        let mut out = Vec::with_capacity(requests.len());
        for r in results.into_inner().expect("results lock") {
            out.extend(r.expect("every batch is processed")?);
        }
        Ok(out)
    }
}
