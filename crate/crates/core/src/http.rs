//! Blocking JSON-over-HTTP transport shared by the remote embedder and
//! generator clients: bounded in-flight requests plus exponential backoff on
//! retryable failures (timeouts, connection errors, 429, 5xx).

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing::{debug, warn};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based count of failures so far).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 1u32 << attempt.saturating_sub(1).min(16);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        InFlightLimit {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut current = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *current >= self.max {
            current = self.freed.wait(current).unwrap_or_else(|e| e.into_inner());
        }
        *current += 1;
        InFlightGuard { limit: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut current = self.limit.current.lock().unwrap_or_else(|e| e.into_inner());
        *current -= 1;
        self.limit.freed.notify_one();
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    client: Client,
    retry: RetryPolicy,
    limit: Arc<InFlightLimit>,
}

impl JsonClient {
    pub fn new(retry: RetryPolicy, max_in_flight: usize, timeout: Duration) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("cannot build http client: {e}")))?;
        Ok(JsonClient {
            client,
            retry,
            limit: Arc::new(InFlightLimit::new(max_in_flight)),
        })
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    /// POSTs `body` to `url` and decodes the JSON response, retrying transient
    /// failures. The returned transport error carries the number of attempts.
    pub fn post<Req, Resp>(&self, url: &str, body: &Req) -> Result<Resp>
    where
        Req: Serialize + ?Sized,
        Resp: DeserializeOwned,
    {
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _slot = self.limit.acquire();
                self.post_once(url, body)
            };
            match outcome {
                Ok(resp) => {
                    if attempt > 1 {
                        debug!(url, attempt, "request succeeded after retry");
                    }
                    return Ok(resp);
                }
                Err(Failure::Fatal(message)) => {
                    return Err(Error::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(Failure::Retryable(message)) => {
                    if attempt >= max_attempts {
                        warn!(url, attempt, %message, "giving up");
                        return Err(Error::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    let delay = self.retry.delay_after(attempt);
                    warn!(url, attempt, %message, ?delay, "retrying");
                    thread::sleep(delay);
                }
            }
        }
    }

    fn post_once<Req, Resp>(&self, url: &str, body: &Req) -> std::result::Result<Resp, Failure>
    where
        Req: Serialize + ?Sized,
        Resp: DeserializeOwned,
    {
        let response = self.client.post(url).json(body).send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                Failure::Retryable(e.to_string())
            } else {
                Failure::Fatal(e.to_string())
            }
        })?;
        let status = response.status();
        if status != StatusCode::OK {
            let message = format!("{url} returned {status}");
            return Err(if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                Failure::Retryable(message)
            } else {
                Failure::Fatal(message)
            });
        }
        response.json::<Resp>().map_err(|e| {
            if e.is_timeout() {
                Failure::Retryable(e.to_string())
            } else {
                Failure::Fatal(format!("invalid response body from {url}: {e}"))
            }
        })
    }
}

pub(crate) fn join_url(endpoint: &str, route: &str) -> String {
    format!("{}/{}", endpoint.trim_end_matches('/'), route)
}
