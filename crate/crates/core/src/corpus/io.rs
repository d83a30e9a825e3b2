//! Line-delimited JSON corpus files.
//!
//! Every non-empty line is one record tagged by `type`:
//!
//! ```text
//! {"type":"post","id":"p1","author_id":"u1","text":"...","created_at":1565000000000,"has_image":false,"forum_id":"f1"}
//! {"type":"response","id":"r1","post_id":"p1","author_id":"u2","author_role":"human","text":"...","created_at":1565000060000}
//! ```
//!
//! Posts may also carry `category` and `valence`; responses may carry
//! `valence`. Any other field is rejected, so records holding personal data
//! never enter the system.

use super::types::{AuthorRole, Corpus, Post, ResponseMsg};
use super::CorpusError;
use crate::text::Tokenizer;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Post(Post),
    Response(ResponseMsg),
}

/// Inclusive token-count bounds for post text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBounds {
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for LengthBounds {
    fn default() -> Self {
        Self { min_tokens: 6, max_tokens: 3000 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub bounds: LengthBounds,
    pub tokenizer: Tokenizer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectReason {
    Malformed(String),
    NonPositiveTimestamp,
    DuplicateId(String),
    LengthOutOfBounds { tokens: usize },
    UnknownPost(String),
    ResponseBeforePost,
    RoleMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Clone, Debug)]
pub struct LoadReport {
    pub corpus: Corpus,
    pub rejections: Vec<Rejection>,
}

pub fn load_corpus<R: BufRead>(reader: R, opts: &LoadOptions) -> Result<LoadReport, CorpusError> {
    let mut rejections = Vec::new();
    let mut seen = HashSet::new();
    let mut posts: Vec<Post> = Vec::new();
    let mut pending: Vec<(usize, ResponseMsg)> = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(CorpusError::Read)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut reject = |reason| rejections.push(Rejection { line: line_no, reason });
        let record: Record = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                reject(RejectReason::Malformed(e.to_string()));
                continue;
            }
        };
        match record {
            Record::Post(post) => {
                if post.created_at <= 0 {
                    reject(RejectReason::NonPositiveTimestamp);
                    continue;
                }
                let n = opts.tokenizer.tokenize(&post.text).len();
                if n < opts.bounds.min_tokens || n > opts.bounds.max_tokens {
                    log::warn!("line {line_no}: post {} has {n} tokens, outside bounds", post.id);
                    reject(RejectReason::LengthOutOfBounds { tokens: n });
                    continue;
                }
                if !seen.insert(post.id.clone()) {
                    reject(RejectReason::DuplicateId(post.id));
                    continue;
                }
                posts.push(post);
            }
            Record::Response(response) => {
                if response.created_at <= 0 {
                    reject(RejectReason::NonPositiveTimestamp);
                    continue;
                }
                if !seen.insert(response.id.clone()) {
                    reject(RejectReason::DuplicateId(response.id));
                    continue;
                }
                pending.push((line_no, response));
            }
        }
    }

    // Responses are validated against posts once the whole stream is read,
    // so record order in the file does not matter.
    let by_id: BTreeMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut responses = Vec::with_capacity(pending.len());
    for (line, r) in pending {
        let reason = match by_id.get(r.post_id.as_str()) {
            None => Some(RejectReason::UnknownPost(r.post_id.clone())),
            Some(p) if r.created_at < p.created_at => Some(RejectReason::ResponseBeforePost),
            Some(p) if (r.author_role == AuthorRole::Poster) != (r.author_id == p.author_id) => Some(RejectReason::RoleMismatch),
            Some(_) => None,
        };
        match reason {
            Some(reason) => rejections.push(Rejection { line, reason }),
            None => responses.push(r),
        }
    }
    rejections.sort_by_key(|r| r.line);
    if !rejections.is_empty() {
        log::warn!("{} corpus records rejected", rejections.len());
    }
    Ok(LoadReport { corpus: Corpus::new(posts, responses), rejections })
}

pub fn load_corpus_file(path: &Path, opts: &LoadOptions) -> Result<LoadReport, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Open { path: path.to_path_buf(), source })?;
    load_corpus(std::io::BufReader::new(file), opts)
}

pub fn post_line(post: &Post) -> String {
    serde_json::to_string(&Record::Post(post.clone())).expect("post serialises")
}

pub fn response_line(r: &ResponseMsg) -> String {
    serde_json::to_string(&Record::Response(r.clone())).expect("response serialises")
}

/// Writes posts first, then responses, one record per line.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut w: W) -> std::io::Result<()> {
    for p in corpus.posts() {
        writeln!(w, "{}", post_line(p))?;
    }
    for r in corpus.responses() {
        writeln!(w, "{}", response_line(r))?;
    }
    w.flush()
}

/// Reads a stop-word list: one entry per line, blank lines and `#` comments
/// ignored. Multi-word entries are matched as contiguous token runs.
pub fn read_stopwords(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Open { path: path.to_path_buf(), source })?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect())
}
