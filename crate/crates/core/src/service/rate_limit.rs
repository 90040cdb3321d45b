//! Per-client token buckets.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

pub struct MonotonicClock(Instant);

impl Default for MonotonicClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }
}

/// Clock advanced by hand, for tests.
#[derive(Default)]
pub struct ManualClock(Mutex<Duration>);

impl ManualClock {
    pub fn advance(&self, by: Duration) {
        *self.0.lock().unwrap() += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateLimitConfig {
    pub rate_per_sec: f64,
    pub burst: u32,
}

impl RateLimitConfig {
    /// Parses `"r/b"` (tokens per second / burst). `"off"` yields `None`.
    pub fn parse(s: &str) -> Result<Option<Self>, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("off") {
            return Ok(None);
        }
        let (r, b) = s
            .split_once('/')
            .ok_or_else(|| format!("rate limit {s:?} is not of the form rate/burst"))?;
        let rate_per_sec: f64 = r.trim().parse().map_err(|_| format!("bad rate {r:?}"))?;
        let burst: u32 = b.trim().parse().map_err(|_| format!("bad burst {b:?}"))?;
        if !(rate_per_sec > 0.0 && rate_per_sec.is_finite()) || burst == 0 {
            return Err(format!("rate limit {s:?} must have positive rate and burst"));
        }
        Ok(Some(Self { rate_per_sec, burst }))
    }
}

struct Bucket {
    tokens: f64,
    updated: Duration,
}

pub struct RateLimiter {
    config: Option<RateLimitConfig>,
    clock: Arc<dyn Clock>,
    buckets: Mutex<HashMap<String, Bucket>>,
}

impl RateLimiter {
    pub fn new(config: Option<RateLimitConfig>, clock: Arc<dyn Clock>) -> Self {
        Self {
            config,
            clock,
            buckets: Mutex::new(HashMap::new()),
        }
    }

    pub fn disabled() -> Self {
        Self::new(None, Arc::new(MonotonicClock::default()))
    }

    /// Takes one token for `client`, or returns the whole seconds until one is available.
    pub fn check(&self, client: &str) -> Result<(), u64> {
        let Some(cfg) = self.config else {
            return Ok(());
        };
        let now = self.clock.now();
        let mut buckets = self.buckets.lock().unwrap();
        let bucket = buckets.entry(client.to_string()).or_insert(Bucket {
            tokens: f64::from(cfg.burst),
            updated: now,
        });
        let elapsed = now.saturating_sub(bucket.updated).as_secs_f64();
        bucket.tokens = (bucket.tokens + elapsed * cfg.rate_per_sec).min(f64::from(cfg.burst));
        bucket.updated = now;
        if bucket.tokens >= 1.0 {
            bucket.tokens -= 1.0;
            Ok(())
        } else {
            let wait = (1.0 - bucket.tokens) / cfg.rate_per_sec;
            Err((wait.ceil() as u64).max(1))
        }
    }
}
