use std::thread;
use std::time::Duration;

/// Classifies errors that are worth another attempt.
pub trait Retryable {
    fn is_retryable(&self) -> bool;
}

/// Exponential backoff: the n-th retry waits `base_delay * 2^(n-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        self.base_delay
            .saturating_mul(1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX))
    }
}

pub fn with_retry<T, E: Retryable>(policy: &RetryPolicy, call: impl FnMut() -> Result<T, E>) -> Result<T, E> {
    with_retry_using(policy, thread::sleep, call)
}

/// As [`with_retry`], with an injectable sleep.
pub fn with_retry_using<T, E: Retryable>(
    policy: &RetryPolicy,
    mut sleep: impl FnMut(Duration),
    mut call: impl FnMut() -> Result<T, E>,
) -> Result<T, E> {
    let max = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match call() {
            Ok(value) => return Ok(value),
            Err(err) if attempt < max && err.is_retryable() => {
                sleep(policy.delay_before_retry(attempt));
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}
