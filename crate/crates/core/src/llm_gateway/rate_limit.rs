use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket holding up to one minute's worth of requests.
pub struct RateLimiter {
    per_min: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(limit: u32) -> Self {
        let per_min = f64::from(limit.max(1));
        RateLimiter {
            per_min,
            state: Mutex::new((per_min, Instant::now())),
        }
    }

    /// How long the caller must wait before its token is available. The
    /// token is reserved immediately, so concurrent callers queue up.
    pub fn reserve(&self) -> Duration {
        let mut state = self.state.lock().expect("rate limiter poisoned");
        let (tokens, last) = &mut *state;
        let now = Instant::now();
        let refill = now.duration_since(*last).as_secs_f64() * self.per_min / 60.0;
        *tokens = (*tokens + refill).min(self.per_min);
        *last = now;
        *tokens -= 1.0;
        if *tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-*tokens * 60.0 / self.per_min)
        }
    }

    pub fn acquire(&self) {
        let wait = self.reserve();
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_then_wait() {
        let rl = RateLimiter::per_minute(3);
        for _ in 0..3 {
            assert_eq!(rl.reserve(), Duration::ZERO);
        }
        let wait = rl.reserve();
        assert!(
            wait > Duration::from_secs(19) && wait <= Duration::from_secs(20),
            "{wait:?}"
        );
        let next = rl.reserve();
        assert!(next > wait);
    }
}
