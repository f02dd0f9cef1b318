//! Client for an external text-embedding endpoint.
//!
//! The endpoint accepts `{"texts": [...]}` and answers
//! `{"embeddings": [[...], ...]}`, one row per text.

use std::time::Duration;

use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding request failed after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("embedding service rejected the request with status {0}")]
    Rejected(u16),
    #[error("embedding response is malformed: {0}")]
    Malformed(String),
    #[error("embedding service returned {found} vectors for {expected} texts")]
    Count { expected: usize, found: usize },
    #[error("embedding {index} has dimension {found}, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding {index} contains a non-finite value")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone)]
pub struct EmbedConfig {
    pub url: String,
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
}

impl EmbedConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(30),
            retries: 3,
            backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingClient {
    http: reqwest::Client,
    config: EmbedConfig,
}

impl EmbeddingClient {
    pub fn new(config: EmbedConfig) -> Result<Self, EmbedError> {
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| EmbedError::Unavailable {
                attempts: 0,
                last: e.to_string(),
            })?;
        Ok(Self { http, config })
    }

    /// Embeds `texts`, retrying with doubling delays on transport errors,
    /// 5xx and 429. Other 4xx statuses fail at once.
    pub async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let attempts = self.config.retries + 1;
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self
                .http
                .post(&self.config.url)
                .json(&Request { texts })
                .send()
                .await
            {
                Ok(resp) if resp.status().is_success() => {
                    let body: Response = resp
                        .json()
                        .await
                        .map_err(|e| EmbedError::Malformed(e.to_string()))?;
                    return check(body.embeddings, texts.len());
                }
                Ok(resp) if retryable(resp.status()) => last = format!("status {}", resp.status()),
                Ok(resp) => return Err(EmbedError::Rejected(resp.status().as_u16())),
                Err(e) => last = e.to_string(),
            }
            tracing::warn!(attempt, %last, "embedding request failed");
            if attempt < attempts {
                tokio::time::sleep(delay).await;
                delay *= 2;
            }
        }
        Err(EmbedError::Unavailable { attempts, last })
    }
}

fn retryable(status: StatusCode) -> bool {
    status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS
}

fn check(rows: Vec<Vec<f64>>, expected: usize) -> Result<Vec<Vec<f64>>, EmbedError> {
    if rows.len() != expected {
        return Err(EmbedError::Count {
            expected,
            found: rows.len(),
        });
    }
    let dim = rows[0].len();
    for (index, row) in rows.iter().enumerate() {
        if row.len() != dim || dim == 0 {
            return Err(EmbedError::Dimension {
                index,
                expected: dim,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite { index });
        }
    }
    Ok(rows)
}
