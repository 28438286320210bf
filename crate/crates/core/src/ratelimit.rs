//! Token-bucket rate limiting, one bucket per backend id.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RateLimitError {
    #[error("capacity must be >= 1, got {0}")]
    InvalidCapacity(f64),
    #[error("refill rate must be > 0, got {0}")]
    InvalidRefill(f64),
}

/// A thread-safe token bucket. `capacity` bounds bursts; `refill_per_sec`
/// bounds the sustained rate.
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<BucketState>,
}

struct BucketState {
    tokens: f64,
    last_refill: Instant,
}

impl TokenBucket {
    pub fn new(capacity: f64, refill_per_sec: f64) -> Result<Self, RateLimitError> {
        if capacity < 1.0 || !capacity.is_finite() {
            return Err(RateLimitError::InvalidCapacity(capacity));
        }
        if refill_per_sec <= 0.0 || !refill_per_sec.is_finite() {
            return Err(RateLimitError::InvalidRefill(refill_per_sec));
        }
        Ok(Self {
            capacity,
            refill_per_sec,
            state: Mutex::new(BucketState {
                tokens: capacity,
                last_refill: Instant::now(),
            }),
        })
    }

    fn refill(&self, state: &mut BucketState) {
        let now = Instant::now();
        let elapsed = now.duration_since(state.last_refill).as_secs_f64();
        state.tokens = (state.tokens + elapsed * self.refill_per_sec).min(self.capacity);
        state.last_refill = now;
    }

    /// Takes one token if available without blocking.
    pub fn try_acquire(&self) -> bool {
        let mut state = self.state.lock().expect("bucket lock");
        self.refill(&mut state);
        if state.tokens >= 1.0 {
            state.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    /// Blocks until a token is available, then takes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("bucket lock");
                self.refill(&mut state);
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.tokens) / self.refill_per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Buckets keyed by backend id. Backends without an entry are unthrottled.
#[derive(Clone, Default)]
pub struct RateLimitSet {
    buckets: HashMap<String, Arc<TokenBucket>>,
}

impl RateLimitSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        backend_id: &str,
        capacity: f64,
        refill_per_sec: f64,
    ) -> Result<(), RateLimitError> {
        self.buckets.insert(
            backend_id.to_string(),
            Arc::new(TokenBucket::new(capacity, refill_per_sec)?),
        );
        Ok(())
    }

    /// Blocks until the backend's bucket grants a token; immediate when the
    /// backend has no bucket.
    pub fn acquire(&self, backend_id: &str) {
        if let Some(bucket) = self.buckets.get(backend_id) {
            bucket.acquire();
        }
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }
}
