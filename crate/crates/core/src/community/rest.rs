//! HTTP port.
//!
//! Endpoints, relative to `base_url`:
//! - `GET /posts?since=<ms>[&page=<token>]`
//! - `GET /posts/<id>/responses?since=<ms>[&page=<token>]`
//! - `POST /posts/<id>/responses` with `{"text", "author_role"}`
//!
//! List endpoints answer `{"items": [...], "next_page": <token or null>}`.
//! Timestamps are integer epoch ms or RFC 3339 strings. Network failures and
//! 5xx answers are retried with exponential backoff; 404 on a post-scoped
//! endpoint maps to [`PortError::UnknownPost`].

use super::{CommunityPort, PortError};
use crate::corpus::{AuthorRole, Millis, Post, PostLabel, ResponseMsg};
use crate::evaluation::ValenceLabel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;
use ureq::Agent;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RestConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".into(),
            token_env: "SUPPORTBOT_COMMUNITY_TOKEN".into(),
            timeout_ms: 10_000,
            max_attempts: 4,
            backoff_base_ms: 200,
        }
    }
}

pub struct RestPort {
    agent: Agent,
    base: String,
    token: Option<String>,
    max_attempts: u32,
    backoff_base: Duration,
    retries: Arc<AtomicU64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WireTime {
    Ms(i64),
    Text(String),
}

impl WireTime {
    fn millis(self) -> Result<Millis, PortError> {
        match self {
            WireTime::Ms(ms) => Ok(ms),
            WireTime::Text(s) => chrono::DateTime::parse_from_rfc3339(&s)
                .map(|t| t.timestamp_millis())
                .map_err(|e| PortError::Malformed(format!("timestamp {s:?}: {e}"))),
        }
    }
}

#[derive(Deserialize)]
struct WirePost {
    id: String,
    author_id: String,
    text: String,
    created_at: WireTime,
    #[serde(default)]
    has_image: bool,
    #[serde(default)]
    forum_id: String,
    #[serde(default)]
    category: Option<PostLabel>,
    #[serde(default)]
    valence: Option<ValenceLabel>,
}

#[derive(Deserialize)]
struct WireResponse {
    id: String,
    post_id: String,
    author_id: String,
    author_role: AuthorRole,
    text: String,
    created_at: WireTime,
    #[serde(default)]
    valence: Option<ValenceLabel>,
}

impl WirePost {
    fn into_post(self) -> Result<Post, PortError> {
        Ok(Post {
            id: self.id,
            author_id: self.author_id,
            text: self.text,
            created_at: self.created_at.millis()?,
            has_image: self.has_image,
            forum_id: self.forum_id,
            category: self.category,
            valence: self.valence,
        })
    }
}

impl WireResponse {
    fn into_response(self) -> Result<ResponseMsg, PortError> {
        Ok(ResponseMsg {
            id: self.id,
            post_id: self.post_id,
            author_id: self.author_id,
            author_role: self.author_role,
            text: self.text,
            created_at: self.created_at.millis()?,
            valence: self.valence,
        })
    }
}

#[derive(Deserialize)]
struct Page<T> {
    items: Vec<T>,
    #[serde(default)]
    next_page: Option<String>,
}

#[derive(Serialize)]
struct PublishBody<'a> {
    text: &'a str,
    author_role: AuthorRole,
}

enum Outcome<T> {
    Done(T),
    Retry(String),
}

impl RestPort {
    /// Reads the bearer token from `config.token_env` if that variable is set.
    pub fn new(config: &RestConfig) -> Self {
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        Self::with_token(config, token)
    }

    pub fn with_token(config: &RestConfig, token: Option<String>) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        Self {
            agent,
            base: config.base_url.trim_end_matches('/').to_string(),
            token,
            max_attempts: config.max_attempts.max(1),
            backoff_base: Duration::from_millis(config.backoff_base_ms),
            retries: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Retries performed so far, across all requests.
    pub fn retry_count(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn auth(&self) -> Option<String> {
        self.token.as_ref().map(|t| format!("Bearer {t}"))
    }

    fn with_retry<T>(
        &self,
        post_id: Option<&str>,
        mut attempt: impl FnMut() -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
        parse: impl Fn(&mut ureq::http::Response<ureq::Body>) -> Result<T, PortError>,
    ) -> Result<T, PortError> {
        let mut last = String::new();
        for n in 0..self.max_attempts {
            if n > 0 {
                self.retries.fetch_add(1, Ordering::Relaxed);
                std::thread::sleep(self.backoff_base * 2u32.saturating_pow(n - 1));
            }
            let outcome = match attempt() {
                Err(e) => Outcome::Retry(e.to_string()),
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status >= 500 {
                        let body = resp.body_mut().read_to_string().unwrap_or_default();
                        Outcome::Retry(format!("status {status}: {body}"))
                    } else if status == 404 && post_id.is_some() {
                        return Err(PortError::UnknownPost(post_id.unwrap_or_default().into()));
                    } else if !(200..300).contains(&status) {
                        let body = resp.body_mut().read_to_string().unwrap_or_default();
                        return Err(PortError::Status { status, body });
                    } else {
                        Outcome::Done(parse(&mut resp)?)
                    }
                }
            };
            match outcome {
                Outcome::Done(v) => return Ok(v),
                Outcome::Retry(msg) => {
                    log::warn!("community request failed (attempt {}): {msg}", n + 1);
                    last = msg;
                }
            }
        }
        Err(PortError::Network { attempts: self.max_attempts, message: last })
    }

    fn get_page<T: DeserializeOwned>(
        &self,
        url: &str,
        since: Millis,
        page: Option<&str>,
        post_id: Option<&str>,
    ) -> Result<Page<T>, PortError> {
        let since = since.to_string();
        self.with_retry(
            post_id,
            || {
                let mut req = self.agent.get(url).query("since", &since);
                if let Some(p) = page {
                    req = req.query("page", p);
                }
                if let Some(a) = self.auth() {
                    req = req.header("Authorization", &a);
                }
                req.call()
            },
            |resp| resp.body_mut().read_json::<Page<T>>().map_err(|e| PortError::Malformed(e.to_string())),
        )
    }

    fn get_all<T: DeserializeOwned>(&self, url: &str, since: Millis, post_id: Option<&str>) -> Result<Vec<T>, PortError> {
        let mut items = Vec::new();
        let mut page: Option<String> = None;
        loop {
            let p = self.get_page::<T>(url, since, page.as_deref(), post_id)?;
            items.extend(p.items);
            match p.next_page {
                Some(next) if Some(&next) != page.as_ref() => page = Some(next),
                _ => return Ok(items),
            }
        }
    }
}

fn encode_segment(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

impl CommunityPort for RestPort {
    fn fetch_posts(&mut self, since: Millis) -> Result<Vec<Post>, PortError> {
        let url = format!("{}/posts", self.base);
        let mut posts = self.get_all::<WirePost>(&url, since, None)?.into_iter().map(WirePost::into_post).collect::<Result<Vec<_>, _>>()?;
        posts.retain(|p| p.created_at > since);
        posts.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(posts)
    }

    fn fetch_responses(&mut self, post_id: &str, since: Millis) -> Result<Vec<ResponseMsg>, PortError> {
        let url = format!("{}/posts/{}/responses", self.base, encode_segment(post_id));
        let mut rs = self
            .get_all::<WireResponse>(&url, since, Some(post_id))?
            .into_iter()
            .map(WireResponse::into_response)
            .collect::<Result<Vec<_>, _>>()?;
        rs.retain(|r| r.created_at > since);
        rs.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(rs)
    }

    fn publish(&mut self, post_id: &str, text: &str, author_role: AuthorRole) -> Result<ResponseMsg, PortError> {
        let url = format!("{}/posts/{}/responses", self.base, encode_segment(post_id));
        let body = PublishBody { text, author_role };
        self.with_retry(
            Some(post_id),
            || {
                let mut req = self.agent.post(&url);
                if let Some(a) = self.auth() {
                    req = req.header("Authorization", &a);
                }
                req.send_json(&body)
            },
            |resp| resp.body_mut().read_json::<WireResponse>().map_err(|e| PortError::Malformed(e.to_string()))?.into_response(),
        )
    }
}
