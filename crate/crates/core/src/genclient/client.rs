use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{DecodingConfig, Payload};
use super::GenError;
use crate::numeric;
use crate::theme::Facet;

/// An OpenAI-compatible service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    /// Base URL up to and including the API version, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token. No auth header is sent
    /// when it is unset or empty.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

impl Endpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Endpoint {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_key_env(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
            timeout_secs: 300,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

/// One generated continuation with the metadata archived beside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub finish_reason: Option<String>,
    /// The service stopped at the token budget.
    pub truncated: bool,
    pub request_id: Option<String>,
    pub response_id: Option<String>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub retries: u32,
}

struct Reply {
    body: Value,
    request_id: Option<String>,
    retries: u32,
}

pub struct Client {
    agent: ureq::Agent,
    endpoint: Endpoint,
    retry: RetryPolicy,
}

fn is_retryable(status: u16) -> bool {
    status == 408 || status == 429 || status >= 500
}

impl Client {
    pub fn new(endpoint: Endpoint, retry: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(retry.timeout_secs)))
            .build()
            .into();
        Client { agent, endpoint, retry }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// POST `body` to `path`, retrying transport failures, 408, 429 and 5xx
    /// with exponential backoff.
    fn post(&self, path: &str, body: &Value) -> Result<Reply, GenError> {
        let url = self.endpoint.url(path);
        let token = std::env::var(&self.endpoint.api_key_env).ok().filter(|t| !t.is_empty());
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(t) = &token {
                req = req.header("Authorization", &format!("Bearer {t}"));
            }
            let last = attempt >= self.retry.max_retries;
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let request_id = resp
                        .headers()
                        .get("x-request-id")
                        .and_then(|v| v.to_str().ok())
                        .map(str::to_string);
                    let text = resp.body_mut().read_to_string().map_err(|e| GenError::Transport {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    })?;
                    if (200..300).contains(&status) {
                        let body = serde_json::from_str(&text).map_err(|e| GenError::Decode(e.to_string()))?;
                        return Ok(Reply {
                            body,
                            request_id,
                            retries: attempt,
                        });
                    }
                    if last || !is_retryable(status) {
                        return Err(GenError::Service {
                            status,
                            body: text,
                            attempts: attempt + 1,
                        });
                    }
                    log::warn!("{url}: status {status}, retrying");
                }
                Err(e) => {
                    if last {
                        return Err(GenError::Transport {
                            attempts: attempt + 1,
                            message: e.to_string(),
                        });
                    }
                    log::warn!("{url}: {e}, retrying");
                }
            }
            thread::sleep(self.retry.delay(attempt));
            attempt += 1;
        }
    }

    /// Request one continuation. No stop sequence and no seed are sent.
    pub fn fetch_continuation(&self, payload: &Payload, decoding: &DecodingConfig) -> Result<Generation, GenError> {
        let (path, body) = match payload {
            Payload::Completion { prompt } => (
                "completions",
                json!({
                    "model": self.endpoint.model,
                    "prompt": prompt,
                    "temperature": decoding.temperature,
                    "top_p": decoding.top_p,
                    "max_tokens": decoding.max_tokens,
                }),
            ),
            Payload::Chat { system, user } => (
                "chat/completions",
                json!({
                    "model": self.endpoint.model,
                    "messages": [
                        {"role": "system", "content": system},
                        {"role": "user", "content": user},
                    ],
                    "temperature": decoding.temperature,
                    "top_p": decoding.top_p,
                    "max_tokens": decoding.max_tokens,
                }),
            ),
        };
        let reply = self.post(path, &body)?;
        let choice = &reply.body["choices"][0];
        let text = match payload {
            Payload::Completion { .. } => choice["text"].as_str(),
            Payload::Chat { .. } => choice["message"]["content"].as_str(),
        }
        .ok_or_else(|| GenError::Decode("response has no completion text".into()))?
        .to_string();
        let finish_reason = choice["finish_reason"].as_str().map(str::to_string);
        Ok(Generation {
            text,
            truncated: finish_reason.as_deref() == Some("length"),
            finish_reason,
            request_id: reply.request_id,
            response_id: reply.body["id"].as_str().map(str::to_string),
            prompt_tokens: reply.body["usage"]["prompt_tokens"].as_u64(),
            completion_tokens: reply.body["usage"]["completion_tokens"].as_u64(),
            retries: reply.retries,
        })
    }

    /// Embed `sentences` in batches of `batch_size`, returning unit vectors in
    /// input order. The theme facet requests `dim` dimensions explicitly.
    pub fn fetch_embeddings(
        &self,
        sentences: &[String],
        facet: Facet,
        dim: usize,
        batch_size: usize,
    ) -> Result<Vec<Vec<f64>>, GenError> {
        if sentences.is_empty() {
            return Err(GenError::EmptyBatch);
        }
        let mut out = Vec::with_capacity(sentences.len());
        for (b, batch) in sentences.chunks(batch_size.max(1)).enumerate() {
            let mut body = json!({"model": self.endpoint.model, "input": batch});
            if facet == Facet::Theme {
                body["dimensions"] = json!(dim);
            }
            let reply = self.post("embeddings", &body)?;
            let data = reply.body["data"]
                .as_array()
                .ok_or_else(|| GenError::Decode("embedding response has no data array".into()))?;
            let mut slots: Vec<Option<Vec<f64>>> = vec![None; batch.len()];
            for (pos, item) in data.iter().enumerate() {
                let index = item["index"].as_u64().map_or(pos, |i| i as usize);
                let vector: Vec<f64> =
                    serde_json::from_value(item["embedding"].clone()).map_err(|e| GenError::Decode(e.to_string()))?;
                let global = b * batch_size.max(1) + index;
                if vector.len() != dim {
                    return Err(GenError::DimensionMismatch {
                        index: global,
                        expected: dim,
                        found: vector.len(),
                    });
                }
                let unit = numeric::normalized(&vector)
                    .ok_or_else(|| GenError::Decode(format!("embedding {global} is a zero vector")))?;
                match slots.get_mut(index) {
                    Some(slot) => *slot = Some(unit),
                    None => return Err(GenError::Decode(format!("embedding index {index} out of range"))),
                }
            }
            for (i, slot) in slots.into_iter().enumerate() {
                out.push(slot.ok_or(GenError::MissingIndex(b * batch_size.max(1) + i))?);
            }
        }
        Ok(out)
    }
}

/// Run `jobs` with at most `max_in_flight` running at once. Results come
/// back in job order.
pub fn run_concurrent<J, T, F>(jobs: &[J], max_in_flight: usize, work: F) -> Vec<T>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync,
{
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..max_in_flight.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = work(job);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}
