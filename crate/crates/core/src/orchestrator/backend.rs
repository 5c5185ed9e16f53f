//! Model backends: a deterministic timing simulator and an HTTP client for a
//! real model server.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request to {url} failed: {message}")]
    Request { url: String, message: String },
    #[error("bad stream line {line}: {message}")]
    Stream { line: usize, message: String },
    #[error("backend returned no tokens")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Talker,
    Planner,
}

/// Distribution of the Planner's sentinel token delay for queries it
/// classifies as simple: absent with `p_absent`, otherwise late
/// (uniform on `late_ms`) with `p_late`, otherwise on time (uniform on
/// `on_time_ms`). `p_late` is an unconditional probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentinelDelay {
    pub p_absent: f64,
    pub p_late: f64,
    pub on_time_ms: (f64, f64),
    pub late_ms: (f64, f64),
}

impl Default for SentinelDelay {
    fn default() -> Self {
        Self {
            p_absent: 0.018,
            p_late: 0.031,
            on_time_ms: (200.0, 400.0),
            late_ms: (400.0, 800.0),
        }
    }
}

impl SentinelDelay {
    /// Maps two uniforms to a delay; `None` means no sentinel.
    pub fn sample(&self, u_kind: f64, u_delay: f64) -> Option<f64> {
        let lerp = |(lo, hi): (f64, f64)| lo + (hi - lo) * u_delay;
        if u_kind < self.p_absent {
            None
        } else if u_kind < self.p_absent + self.p_late {
            // strictly after the window even at u_delay = 0
            Some(lerp(self.late_ms).max(self.late_ms.0 + 1e-6))
        } else {
            Some(lerp(self.on_time_ms))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackendTiming {
    pub talker_first_ms: f64,
    pub talker_per_token_ms: f64,
    pub planner_first_ms: f64,
    pub planner_per_token_ms: f64,
    /// Relative half-width of the uniform jitter on first-token latency.
    pub first_token_jitter: f64,
    pub sentinel: SentinelDelay,
}

impl Default for BackendTiming {
    fn default() -> Self {
        Self {
            talker_first_ms: 210.0,
            talker_per_token_ms: 30.0,
            planner_first_ms: 520.0,
            planner_per_token_ms: 310.0,
            first_token_jitter: 0.1,
            sentinel: SentinelDelay::default(),
        }
    }
}

impl BackendTiming {
    pub fn validate(&self) -> bool {
        let s = &self.sentinel;
        [
            self.talker_first_ms,
            self.talker_per_token_ms,
            self.planner_first_ms,
            self.planner_per_token_ms,
            self.first_token_jitter,
            s.on_time_ms.0,
            s.late_ms.0,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
            && self.first_token_jitter < 1.0
            && s.on_time_ms.0 <= s.on_time_ms.1
            && s.late_ms.0 <= s.late_ms.1
            && (0.0..=1.0).contains(&s.p_absent)
            && (0.0..=1.0).contains(&s.p_late)
            && s.p_absent + s.p_late <= 1.0
    }

    fn lane(&self, lane: Lane) -> (f64, f64) {
        match lane {
            Lane::Talker => (self.talker_first_ms, self.talker_per_token_ms),
            Lane::Planner => (self.planner_first_ms, self.planner_per_token_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateRequest<'a> {
    pub lane: Lane,
    pub prompt: &'a str,
    pub max_tokens: usize,
    /// What the simulated model says; real backends ignore it.
    pub draft: &'a str,
    /// Decoding resumes an earlier call, so there is no prefill delay.
    pub continuation: bool,
    /// Multiplier on first-token latency, drawn by the caller.
    pub jitter: f64,
}

/// One streamed token; `t_ms` is relative to the start of the call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamToken {
    pub token: String,
    pub t_ms: f64,
}

pub trait Backend: Send + Sync {
    fn generate(&self, req: &GenerateRequest<'_>) -> Result<Vec<StreamToken>, BackendError>;
}

/// Splits text into words that keep their trailing whitespace, so that
/// concatenating the pieces restores the text (minus leading space).
pub fn stream_pieces(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    let mut in_space = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_space = true;
        } else {
            if in_space || start.is_none() {
                if let Some(s) = start {
                    out.push(&text[s..i]);
                }
                start = Some(i);
            }
            in_space = false;
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Streams the draft with the configured lane timings.
#[derive(Debug, Clone, Default)]
pub struct SimulatedBackend {
    pub timing: BackendTiming,
}

impl Backend for SimulatedBackend {
    fn generate(&self, req: &GenerateRequest<'_>) -> Result<Vec<StreamToken>, BackendError> {
        let (first, per) = self.timing.lane(req.lane);
        let first = if req.continuation { per } else { first * req.jitter };
        Ok(stream_pieces(req.draft)
            .into_iter()
            .take(req.max_tokens)
            .enumerate()
            .map(|(i, t)| StreamToken {
                token: t.to_string(),
                t_ms: first + per * i as f64,
            })
            .collect())
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
}

/// Client for a model server that answers `POST {base}/talker` and
/// `POST {base}/planner` with newline-delimited `{token, t_ms}` objects.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    pub base_url: String,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
        }
    }
}

/// Parses a `{token, t_ms}` line stream.
pub fn parse_stream(body: &str) -> Result<Vec<StreamToken>, BackendError> {
    let mut out: Vec<StreamToken> = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: StreamToken = serde_json::from_str(line).map_err(|e| BackendError::Stream {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !t.t_ms.is_finite() || out.last().is_some_and(|p| t.t_ms < p.t_ms) {
            return Err(BackendError::Stream {
                line: i + 1,
                message: format!("timestamp {} out of order", t.t_ms),
            });
        }
        out.push(t);
    }
    if out.is_empty() {
        return Err(BackendError::Empty);
    }
    Ok(out)
}

impl Backend for RemoteBackend {
    fn generate(&self, req: &GenerateRequest<'_>) -> Result<Vec<StreamToken>, BackendError> {
        let path = match req.lane {
            Lane::Talker => "talker",
            Lane::Planner => "planner",
        };
        let url = format!("{}/{path}", self.base_url);
        let fail = |message: String| BackendError::Request {
            url: url.clone(),
            message,
        };
        let body = serde_json::to_string(&RemoteRequest {
            prompt: req.prompt,
            max_tokens: req.max_tokens,
        })
        .map_err(|e| fail(e.to_string()))?;
        let resp = ureq::post(&url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| fail(e.to_string()))?;
        let text = resp.into_body().read_to_string().map_err(|e| fail(e.to_string()))?;
        parse_stream(&text)
    }
}
