//! Fetching a results file from an http(s) URL.
//!
//! The client honours the standard proxy environment variables. The future
//! returned by [`fetch_url`] can be dropped at any await point to cancel.

use std::time::Duration;

use thiserror::Error;

use super::DEFAULT_MAX_BYTES;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("only http and https URLs are supported: {0}")]
    BadScheme(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("response exceeds the limit of {limit} bytes")]
    TooLarge { limit: usize },
    #[error("server answered with status {0}")]
    BadStatus(u16),
}

#[derive(Debug, Clone)]
pub struct FetchLimits {
    pub max_bytes: usize,
    pub max_redirects: usize,
    pub timeout: Duration,
}

impl Default for FetchLimits {
    fn default() -> Self {
        Self {
            max_bytes: DEFAULT_MAX_BYTES,
            max_redirects: 5,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fetched {
    pub bytes: Vec<u8>,
    pub declared_name: Option<String>,
    pub final_url: String,
}

/// Last non-empty path segment of a URL.
pub fn name_from_url(url: &reqwest::Url) -> Option<String> {
    url.path_segments()?
        .rfind(|s| !s.is_empty())
        .map(str::to_string)
}

pub async fn fetch_url(url: &str, limits: &FetchLimits) -> Result<Fetched, FetchError> {
    let parsed = reqwest::Url::parse(url).map_err(|e| FetchError::Network(e.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(FetchError::BadScheme(parsed.scheme().to_string()));
    }
    let client = reqwest::Client::builder()
        .redirect(reqwest::redirect::Policy::limited(limits.max_redirects))
        .timeout(limits.timeout)
        .build()
        .map_err(|e| FetchError::Network(e.to_string()))?;
    let mut resp = client
        .get(parsed)
        .send()
        .await
        .map_err(|e| FetchError::Network(e.to_string()))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(FetchError::BadStatus(status.as_u16()));
    }
    if let Some(len) = resp.content_length() {
        if len > limits.max_bytes as u64 {
            return Err(FetchError::TooLarge {
                limit: limits.max_bytes,
            });
        }
    }
    let final_url = resp.url().clone();
    let mut bytes = Vec::new();
    while let Some(chunk) = resp
        .chunk()
        .await
        .map_err(|e| FetchError::Network(e.to_string()))?
    {
        if bytes.len() + chunk.len() > limits.max_bytes {
            return Err(FetchError::TooLarge {
                limit: limits.max_bytes,
            });
        }
        bytes.extend_from_slice(&chunk);
    }
    Ok(Fetched {
        bytes,
        declared_name: name_from_url(&final_url),
        final_url: final_url.to_string(),
    })
}
