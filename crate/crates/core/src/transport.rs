//! HTTP transport with bounded retries, jittered backoff and a per-endpoint
//! request-rate ceiling. All live clients go through the `Transport` trait
//! so tests can substitute an in-memory fake.

use rand::Rng;
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, Clone)]
#[error("transport error after {attempts} attempt(s): {reason}")]
pub struct TransportError {
    pub attempts: u32,
    pub reason: String,
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<String, TransportError>;
    fn post(&self, url: &str, body: &str) -> Result<String, TransportError>;
}

/// Minimum-interval limiter: at most `rps` requests per second.
pub struct RateLimiter {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(rps: f64) -> RateLimiter {
        let rps = if rps <= 0.0 { 3.0 } else { rps };
        RateLimiter {
            min_interval: Duration::from_secs_f64(1.0 / rps),
            last: Mutex::new(None),
        }
    }

    pub fn wait(&self) {
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

/// Blocking reqwest-backed transport with retry and rate limiting.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
    max_retries: u32,
}

impl HttpTransport {
    pub fn new(rps: f64, max_retries: u32) -> HttpTransport {
        HttpTransport {
            client: reqwest::blocking::Client::new(),
            limiter: RateLimiter::new(rps),
            max_retries,
        }
    }

    fn with_retries<F>(&self, mut send: F) -> Result<String, TransportError>
    where
        F: FnMut() -> Result<String, String>,
    {
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.wait();
            match send() {
                Ok(body) => return Ok(body),
                Err(reason) if attempt > self.max_retries => {
                    return Err(TransportError {
                        attempts: attempt,
                        reason,
                    })
                }
                Err(reason) => {
                    let base = 200u64 * (1 << attempt.min(6));
                    let jitter = rand::thread_rng().gen_range(0..base / 2 + 1);
                    log::warn!("request failed ({reason}), retrying in {}ms", base + jitter);
                    std::thread::sleep(Duration::from_millis(base + jitter));
                }
            }
        }
    }

    fn check(resp: reqwest::blocking::Response) -> Result<String, String> {
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("http status {status}"));
        }
        resp.text().map_err(|e| e.to_string())
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<String, TransportError> {
        self.with_retries(|| {
            self.client
                .get(url)
                .send()
                .map_err(|e| e.to_string())
                .and_then(Self::check)
        })
    }

    fn post(&self, url: &str, body: &str) -> Result<String, TransportError> {
        self.with_retries(|| {
            self.client
                .post(url)
                .body(body.to_string())
                .send()
                .map_err(|e| e.to_string())
                .and_then(Self::check)
        })
    }
}
