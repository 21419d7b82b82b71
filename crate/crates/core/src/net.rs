//! Remote transport shared by the encoder and LM backends: OpenAI-compatible
//! JSON POSTs with bounded in-flight requests, exponential backoff, and the
//! disk response cache.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;

use crate::cache::{request_key, DiskCache};
use crate::error::{Error, Result};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "C2L_API_KEY";
/// Environment variable holding the base URL.
pub const API_BASE_ENV: &str = "C2L_API_BASE";

/// Blocking JSON POST. Implemented by the HTTP client and by test fakes.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value) -> Result<(u16, String)>;
}

/// reqwest-backed transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value) -> Result<(u16, String)> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Remote {
            status: None,
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| Error::Remote {
            status: Some(status),
            message: e.to_string(),
            retryable: true,
        })?;
        Ok((status, text))
    }
}

/// Counting semaphore bounding concurrent remote requests.
pub struct RequestLimiter {
    state: Mutex<usize>,
    available: Condvar,
    max: usize,
}

impl RequestLimiter {
    pub fn new(max: usize) -> Self {
        RequestLimiter {
            state: Mutex::new(0),
            available: Condvar::new(),
            max: max.max(1),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut in_flight = self.state.lock().expect("limiter lock poisoned");
        while *in_flight >= self.max {
            in_flight = self.available.wait(in_flight).expect("limiter wait");
        }
        *in_flight += 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a RequestLimiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut in_flight = self.limiter.state.lock().expect("limiter lock poisoned");
        *in_flight -= 1;
        self.limiter.available.notify_one();
    }
}

/// Retry policy: up to `max_retries` extra attempts with exponential
/// backoff on retryable failures (HTTP 429/5xx, transport errors).
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_backoff: Duration::from_millis(250),
        }
    }
}

/// Shared client state for one remote endpoint.
#[derive(Clone)]
pub struct RemoteClient {
    pub base_url: String,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    cache: Option<Arc<DiskCache>>,
    limiter: Arc<RequestLimiter>,
    retry: RetryPolicy,
}

impl RemoteClient {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        transport: Arc<dyn Transport>,
        cache: Option<Arc<DiskCache>>,
        max_in_flight: usize,
        retry: RetryPolicy,
    ) -> Self {
        RemoteClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            transport,
            cache,
            limiter: Arc::new(RequestLimiter::new(max_in_flight)),
            retry,
        }
    }

    /// Resolve the base URL from explicit config or `C2L_API_BASE`.
    pub fn base_url_from_env(configured: Option<&str>) -> Result<String> {
        if let Some(url) = configured {
            return Ok(url.to_string());
        }
        std::env::var(API_BASE_ENV)
            .map_err(|_| Error::Config(format!("no endpoint configured and {API_BASE_ENV} unset")))
    }

    fn call_once(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}{}", self.base_url, path);
        let _slot = self.limiter.acquire();
        let (status, text) = self.transport.post_json(&url, self.api_key.as_deref(), body)?;
        if status == 429 || status >= 500 {
            return Err(Error::Remote {
                status: Some(status),
                message: text,
                retryable: true,
            });
        }
        if status >= 400 {
            return Err(Error::Remote {
                status: Some(status),
                message: text,
                retryable: false,
            });
        }
        serde_json::from_str(&text).map_err(|e| Error::Remote {
            status: Some(status),
            message: format!("bad response body: {e}"),
            retryable: false,
        })
    }

    fn call_with_retry(&self, path: &str, body: &Value) -> Result<Value> {
        let mut attempt = 0;
        loop {
            match self.call_once(path, body) {
                Err(Error::Remote {
                    retryable: true,
                    status,
                    message,
                }) if attempt < self.retry.max_retries => {
                    log::warn!(
                        "remote call {path} failed (status {status:?}), retry {}/{}: {message}",
                        attempt + 1,
                        self.retry.max_retries
                    );
                    std::thread::sleep(self.retry.base_backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// POST `body` to `path`, serving repeats from the disk cache when one
    /// is configured. `kind`/`identity`/`params` enter the cache key.
    pub fn post_cached(
        &self,
        kind: &str,
        identity: &str,
        params: &Value,
        path: &str,
        body: &Value,
    ) -> Result<Value> {
        let key = request_key(kind, identity, params, body);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                return Ok(hit);
            }
        }
        let response = self.call_with_retry(path, body)?;
        if let Some(cache) = &self.cache {
            cache.put(&key, &response)?;
        }
        Ok(response)
    }
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient")
            .field("base_url", &self.base_url)
            .field("cached", &self.cache.is_some())
            .finish()
    }
}
