//! Remote token-probability provider for echo-scoring HTTP endpoints.
//!
//! Request body: `{"text": query + "\n" + ref}`. Response body:
//! `{"tokens": [{"text": ..., "logprob": ...}]}` with natural-log probabilities.

use std::time::Duration;

use log::debug;
use serde::{Deserialize, Serialize};

use super::{TokenProvider, TokenScore};
use crate::error::{CoftError, Result};
use crate::segmentation::Span;

pub const QUERY_SEPARATOR: &str = "\n";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    text: &'a str,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RemoteToken {
    pub text: String,
    /// Natural log. Some endpoints send null for the very first token.
    pub logprob: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    tokens: Vec<RemoteToken>,
}

pub struct RemoteProvider {
    url: String,
    key: Option<String>,
    http: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(url: impl Into<String>, key: Option<String>, timeout_ms: u64) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .map_err(|e| CoftError::Config(format!("http client: {e}")))?;
        Ok(RemoteProvider {
            url: url.into(),
            key,
            http,
        })
    }

    fn fetch(&self, text: &str) -> Result<Vec<RemoteToken>> {
        let mut req = self.http.post(&self.url).json(&ScoreRequest { text });
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| CoftError::Provider(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(CoftError::Provider(format!("HTTP {status} from {}", self.url)));
        }
        let body: ScoreResponse = resp
            .json()
            .map_err(|e| CoftError::Provider(format!("bad response body: {e}")))?;
        Ok(body.tokens)
    }
}

impl TokenProvider for RemoteProvider {
    fn name(&self) -> &str {
        "remote"
    }

    fn token_logprobs(&self, query: &str, ref_text: &str) -> Result<Vec<TokenScore>> {
        let sent = format!("{query}{QUERY_SEPARATOR}{ref_text}");
        let tokens = self.fetch(&sent)?;
        align_tokens(&sent, query.len() + QUERY_SEPARATOR.len(), &tokens)
    }
}

/// Greedy left-to-right alignment of endpoint tokens against `sent`.
///
/// Tokens are matched after trimming surrounding whitespace; whitespace-only
/// tokens carry no span and are dropped. Tokens ending at or before
/// `ref_start` belong to the query and are discarded; spans of the rest are
/// rebased onto the reference text.
pub fn align_tokens(sent: &str, ref_start: usize, tokens: &[RemoteToken]) -> Result<Vec<TokenScore>> {
    let mut cursor = 0;
    let mut out = Vec::new();
    for tok in tokens {
        let rest = &sent[cursor..];
        cursor += rest.len() - rest.trim_start().len();
        let needle = tok.text.trim();
        if needle.is_empty() {
            continue;
        }
        if !sent[cursor..].starts_with(needle) {
            return Err(CoftError::Alignment {
                offset: cursor.saturating_sub(ref_start),
                token: tok.text.clone(),
            });
        }
        let start = cursor;
        cursor += needle.len();
        if cursor <= ref_start {
            continue;
        }
        let logprob = tok.logprob.unwrap_or_else(|| {
            debug!("token {:?} without logprob, scoring as certain", tok.text);
            0.0
        });
        let span = Span::new(start.max(ref_start) - ref_start, cursor - ref_start);
        out.push(TokenScore {
            text: span.slice(&sent[ref_start..]).to_string(),
            span,
            logprob2: logprob / std::f64::consts::LN_2,
        });
    }
    Ok(out)
}
