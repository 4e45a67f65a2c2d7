//! HTTP client for a remote image-text matching service.
//!
//! Protocol: `POST <url>` with `{"image": .., "text": ..}`, answered by
//! `{"score": <number>}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ImageRef, OracleBackend, OracleError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_backoff_ms: 200,
        }
    }
}

impl RetryPolicy {
    /// Runs `op` until it succeeds or attempts run out, sleeping
    /// `base * 2^i` after the i-th failure. Errors for which `retryable`
    /// returns false are returned immediately.
    pub fn run<T, E>(
        &self,
        mut op: impl FnMut() -> Result<T, E>,
        retryable: impl Fn(&E) -> bool,
    ) -> Result<T, (E, u32)> {
        let attempts = self.attempts.max(1);
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    attempt += 1;
                    if attempt >= attempts || !retryable(&e) {
                        return Err((e, attempt));
                    }
                    let delay = self.base_backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    std::thread::sleep(Duration::from_millis(delay));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Sent verbatim as `Authorization` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_header: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            auth_header: None,
            retry: RetryPolicy::default(),
        }
    }

    pub(crate) fn agent(&self) -> ureq::Agent {
        ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(self.timeout_ms))
            .build()
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    image: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

pub(crate) enum CallError {
    Transport(String),
    /// The server answered but the payload is unusable; not retried.
    Protocol(String),
}

/// POSTs `body` and decodes the JSON reply, retrying transport failures and 5xx.
pub(crate) fn post_json<Req: Serialize, Resp: serde::de::DeserializeOwned>(
    agent: &ureq::Agent,
    config: &RemoteConfig,
    body: &Req,
) -> Result<Resp, (CallError, u32)> {
    config.retry.run(
        || {
            let mut request = agent.post(&config.url);
            if let Some(auth) = &config.auth_header {
                request = request.set("Authorization", auth);
            }
            match request.send_json(body) {
                Ok(response) => response
                    .into_json::<Resp>()
                    .map_err(|e| CallError::Protocol(format!("bad response body: {e}"))),
                Err(ureq::Error::Status(code, _)) if code >= 500 || code == 429 => {
                    Err(CallError::Transport(format!("HTTP {code}")))
                }
                Err(ureq::Error::Status(code, _)) => {
                    Err(CallError::Protocol(format!("HTTP {code}")))
                }
                Err(e) => Err(CallError::Transport(e.to_string())),
            }
        },
        |e| matches!(e, CallError::Transport(_)),
    )
}

pub struct RemoteBackend {
    id: String,
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(id: impl Into<String>, config: RemoteConfig) -> Self {
        let agent = config.agent();
        Self {
            id: id.into(),
            config,
            agent,
        }
    }
}

impl OracleBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, image: &ImageRef, text: &str) -> Result<f64, OracleError> {
        let body = ScoreRequest {
            image: image.as_str(),
            text,
        };
        match post_json::<_, ScoreResponse>(&self.agent, &self.config, &body) {
            Ok(r) => Ok(r.score),
            Err((CallError::Transport(reason), attempts)) => {
                Err(OracleError::BackendUnavailable { attempts, reason })
            }
            Err((CallError::Protocol(reason), attempts)) => {
                Err(OracleError::BackendUnavailable { attempts, reason })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn retry_stops_after_attempts() {
        let calls = Cell::new(0);
        let policy = RetryPolicy {
            attempts: 3,
            base_backoff_ms: 0,
        };
        let out: Result<(), _> = policy.run(
            || {
                calls.set(calls.get() + 1);
                Err::<(), _>("down")
            },
            |_| true,
        );
        assert_eq!(out.unwrap_err().1, 3);
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn non_retryable_returns_at_once() {
        let calls = Cell::new(0);
        let out: Result<(), _> = RetryPolicy::default().run(
            || {
                calls.set(calls.get() + 1);
                Err::<(), _>("bad")
            },
            |_| false,
        );
        assert_eq!(out.unwrap_err().1, 1);
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn succeeds_after_transient_failure() {
        let calls = Cell::new(0);
        let policy = RetryPolicy {
            attempts: 3,
            base_backoff_ms: 1,
        };
        let out = policy.run(
            || {
                calls.set(calls.get() + 1);
                if calls.get() < 2 {
                    Err("flaky")
                } else {
                    Ok(7)
                }
            },
            |_| true,
        );
        assert_eq!(out.ok(), Some(7));
    }
}
