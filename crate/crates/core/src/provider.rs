//! Transport plumbing shared by the inference and embedding clients:
//! error classification, retry with exponential backoff, HTTP and
//! child-process JSON transports.

use std::future::Future;
use std::path::PathBuf;
use std::process::Stdio;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::AsyncWriteExt;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    /// Transport-level failure; retried.
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    /// Request timed out; retried.
    #[error("provider timed out after {0:?}")]
    Timeout(Duration),
    /// The provider answered but the answer is unusable; not retried.
    #[error("provider rejected request: {0}")]
    Rejected(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, Self::Rejected(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 200,
            timeout_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Delay before attempt `attempt` (1-based, so attempt 2 waits `base`).
    pub fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << attempt.saturating_sub(2).min(16)))
    }
}

/// Runs `op` under a per-attempt timeout, retrying retryable errors with
/// exponential backoff up to `policy.max_attempts` attempts.
pub async fn with_retry<T, F, Fut>(policy: &RetryPolicy, mut op: F) -> Result<T, ProviderError>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Result<T, ProviderError>>,
{
    let attempts = policy.max_attempts.max(1);
    let mut last = ProviderError::Unavailable("no attempt made".into());
    for attempt in 1..=attempts {
        if attempt > 1 {
            tokio::time::sleep(policy.backoff(attempt)).await;
        }
        let result = match tokio::time::timeout(policy.timeout(), op()).await {
            Ok(r) => r,
            Err(_) => Err(ProviderError::Timeout(policy.timeout())),
        };
        match result {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() => {
                tracing::debug!(attempt, error = %e, "provider call failed");
                last = e;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// POSTs `body` as JSON and decodes a JSON response.
pub async fn post_json<Req: Serialize + ?Sized, Resp: DeserializeOwned>(
    client: &reqwest::Client,
    url: &str,
    bearer: Option<&str>,
    body: &Req,
) -> Result<Resp, ProviderError> {
    let mut req = client.post(url).json(body);
    if let Some(token) = bearer {
        req = req.bearer_auth(token);
    }
    let resp = req
        .send()
        .await
        .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
    let status = resp.status();
    if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
        return Err(ProviderError::Unavailable(format!("HTTP {status}")));
    }
    if !status.is_success() {
        let text = resp.text().await.unwrap_or_default();
        return Err(ProviderError::Rejected(format!("HTTP {status}: {text}")));
    }
    resp.json::<Resp>()
        .await
        .map_err(|e| ProviderError::Rejected(format!("malformed response: {e}")))
}

/// A command run once per request: JSON request on stdin, JSON response on stdout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessCommand {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

impl ProcessCommand {
    pub async fn call<Req: Serialize + ?Sized, Resp: DeserializeOwned>(
        &self,
        body: &Req,
    ) -> Result<Resp, ProviderError> {
        let mut child = tokio::process::Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| ProviderError::Unavailable(format!("spawn {}: {e}", self.program.display())))?;
        let payload = serde_json::to_vec(body).map_err(|e| ProviderError::Rejected(e.to_string()))?;
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(&payload)
                .await
                .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        }
        let out = child
            .wait_with_output()
            .await
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        if !out.status.success() {
            return Err(ProviderError::Unavailable(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        serde_json::from_slice(&out.stdout)
            .map_err(|e| ProviderError::Rejected(format!("malformed response: {e}")))
    }
}
