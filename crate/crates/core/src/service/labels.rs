//! Append-only label log. Every event is written and synced before the
//! caller may acknowledge it; replaying the file over the corpus labels
//! reproduces the labeled set.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub seq: u64,
    pub doc_id: String,
    pub chosen_leaf: usize,
    /// Leaf order the expert was shown.
    pub offered_permutation: Vec<usize>,
    pub expert_id: String,
    pub timestamp: DateTime<Utc>,
    /// Replaces an earlier label of the same document.
    #[serde(default)]
    pub is_override: bool,
}

pub struct LabelLog {
    path: Option<PathBuf>,
    file: Option<File>,
    events: Vec<LabelEvent>,
}

impl LabelLog {
    /// Kept in memory only; for tests and read-only serving.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            events: Vec::new(),
        }
    }

    /// Opens or creates the log and reads back every complete line. A torn
    /// final line (crash mid-append) was never acknowledged; it is cut off so
    /// the next append starts on a clean line.
    pub fn open(path: &Path) -> Result<Self> {
        let mut events = Vec::new();
        let mut valid_len = 0u64;
        let mut torn = false;
        if path.exists() {
            let mut reader = BufReader::new(File::open(path)?);
            let mut line = String::new();
            let mut number = 0;
            loop {
                line.clear();
                let read = reader.read_line(&mut line)?;
                if read == 0 {
                    break;
                }
                number += 1;
                // events are written together with their newline
                if !line.ends_with('\n') {
                    log::warn!("dropping torn final line of {}", path.display());
                    torn = true;
                    break;
                }
                if !line.trim().is_empty() {
                    match serde_json::from_str::<LabelEvent>(line.trim_end()) {
                        Ok(e) => events.push(e),
                        Err(e) => {
                            return Err(Error::Format {
                                path: path.to_owned(),
                                message: format!("line {number}: {e}"),
                            })
                        }
                    }
                }
                valid_len += read as u64;
            }
        }
        if torn {
            OpenOptions::new()
                .write(true)
                .open(path)?
                .set_len(valid_len)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_owned()),
            file: Some(file),
            events,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn events(&self) -> &[LabelEvent] {
        &self.events
    }

    pub fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    /// Assigns the sequence number, writes and syncs, then records the event.
    pub fn append(&mut self, mut event: LabelEvent) -> Result<LabelEvent> {
        event.seq = self.next_seq();
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&event)?;
            line.push(b'\n');
            let before = f.metadata()?.len();
            if let Err(e) = f.write_all(&line).and_then(|_| f.sync_data()) {
                // leave no partial line behind for the next append
                let _ = f.set_len(before);
                return Err(e.into());
            }
        }
        self.events.push(event.clone());
        Ok(event)
    }
}

/// Corpus labels with every event applied in order.
pub fn replay(initial: &HashMap<String, usize>, events: &[LabelEvent]) -> HashMap<String, usize> {
    let mut out = initial.clone();
    for e in events {
        out.insert(e.doc_id.clone(), e.chosen_leaf);
    }
    out
}
