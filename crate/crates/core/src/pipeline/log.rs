//! Append-only, line-delimited event log.
//!
//! Each line is `{"timestamp": ms, "event_type": ..., "payload": {...}}`.
//! Only newline-terminated lines count as written; a torn final line left
//! by a crash is discarded and truncated away when the log is reopened.

use super::{ExperimentRecord, PendingReview, PipelineError, ReviewState, SkipReason};
use crate::corpus::{Millis, Post, ResponseMsg, TopCategory};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_type", content = "payload", rename_all = "snake_case")]
pub enum Event {
    PostSeen {
        post: Post,
    },
    /// A qualifying response arrived before the post was overlooked.
    Answered {
        post_id: String,
    },
    Classified {
        post_id: String,
        category: TopCategory,
    },
    Skipped {
        post_id: String,
        reason: SkipReason,
    },
    Enrolled {
        record: ExperimentRecord,
    },
    DraftCreated {
        review: PendingReview,
    },
    ReviewResolved {
        review_id: String,
        state: ReviewState,
        final_text: String,
        operator_id: Option<String>,
    },
    /// Written before the publish call so a restart can reconcile.
    PublishIntent {
        review_id: String,
    },
    Published {
        review_id: String,
        response: ResponseMsg,
    },
    Observed {
        response: ResponseMsg,
    },
    TrackSweep,
    WindowClosed {
        post_id: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp: Millis,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Default)]
pub struct EventLog {
    entries: Vec<LogEntry>,
    file: Option<File>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// An in-memory log pre-filled with `entries`.
    pub fn from_entries(entries: Vec<LogEntry>) -> Self {
        Self { entries, file: None }
    }

    /// Opens or creates a log file, loading every complete line.
    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut entries = Vec::new();
        let mut good_len = 0u64;
        {
            let mut reader = BufReader::new(&file);
            let mut line = String::new();
            let mut lineno = 0usize;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 || !line.ends_with('\n') {
                    break;
                }
                lineno += 1;
                let entry: LogEntry =
                    serde_json::from_str(line.trim_end()).map_err(|e| PipelineError::Log(format!("{}:{lineno}: {e}", path.display())))?;
                entries.push(entry);
                good_len += n as u64;
            }
        }
        if file.metadata()?.len() != good_len {
            log::warn!("discarding torn tail of {}", path.display());
            file.set_len(good_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Self { entries, file: Some(file) })
    }

    /// Reads a log file without opening it for writing.
    pub fn read(path: &Path) -> Result<Vec<LogEntry>, PipelineError> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for (i, line) in reader.split(b'\n').enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let entry = serde_json::from_slice(&line).map_err(|e| PipelineError::Log(format!("{}:{}: {e}", path.display(), i + 1)))?;
            out.push(entry);
        }
        Ok(out)
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn append(&mut self, entry: LogEntry) -> Result<(), PipelineError> {
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&entry).map_err(|e| PipelineError::Log(e.to_string()))?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.flush()?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn sync(&mut self) -> Result<(), PipelineError> {
        if let Some(f) = self.file.as_mut() {
            f.sync_all()?;
        }
        Ok(())
    }
}
