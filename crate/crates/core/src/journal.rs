//! The crash-safe run journal.
//!
//! Entries are length-delimited JSONL: each line is `<byte len> <json>\n`.
//! The length prefix makes torn writes detectable even when the severed JSON
//! happens to parse. A torn final line is tolerated (and truncated on
//! repair); a bad line anywhere else means real corruption and is an error
//! naming the line.
//!
//! The journal is append-only; the last entry per job id is authoritative.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal I/O error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("corrupted journal line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("injected crash: journal writer is dead")]
    CrashInjected,
}

/// Job states recorded in the journal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JournalState {
    InFlight,
    Done,
    Failed,
}

/// One journal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub job_id: String,
    pub state: JournalState,
    pub timestamp: String,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Fault injection for crash-recovery tests: after `appends` successful
/// appends, the writer emits a torn fragment of the next entry and then
/// refuses all further writes, as if the process had been killed mid-write.
#[derive(Debug, Clone, Copy)]
pub struct FaultPlan {
    pub crash_after_appends: usize,
}

/// Appending journal writer.
pub struct JournalWriter {
    path: PathBuf,
    file: File,
    appends: usize,
    fault: Option<FaultPlan>,
    dead: bool,
}

impl JournalWriter {
    pub fn open(path: &Path) -> Result<JournalWriter, JournalError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| JournalError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| JournalError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(JournalWriter {
            path: path.to_path_buf(),
            file,
            appends: 0,
            fault: None,
            dead: false,
        })
    }

    pub fn with_fault(mut self, fault: Option<FaultPlan>) -> Self {
        self.fault = fault;
        self
    }

    pub fn append(&mut self, entry: &JournalEntry) -> Result<(), JournalError> {
        if self.dead {
            return Err(JournalError::CrashInjected);
        }
        let json = serde_json::to_string(entry).expect("journal entries serialize");
        let line = format!("{} {}\n", json.len(), json);
        if let Some(fault) = self.fault {
            if self.appends >= fault.crash_after_appends {
                // Write a torn prefix and die, like a kill -9 mid-write.
                let torn = &line.as_bytes()[..line.len() / 2];
                let _ = self.file.write_all(torn);
                let _ = self.file.flush();
                self.dead = true;
                return Err(JournalError::CrashInjected);
            }
        }
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| JournalError::Io {
                path: self.path.display().to_string(),
                source,
            })?;
        self.appends += 1;
        Ok(())
    }
}

/// Result of reading a journal: entries plus whether a torn tail was present.
#[derive(Debug)]
pub struct JournalContents {
    pub entries: Vec<JournalEntry>,
    pub torn_tail: bool,
}

impl JournalContents {
    /// Final state per job id (last entry wins).
    pub fn final_states(&self) -> HashMap<String, &JournalEntry> {
        let mut map = HashMap::new();
        for entry in &self.entries {
            map.insert(entry.job_id.clone(), entry);
        }
        map
    }
}

/// Reads a journal, tolerating a torn final line. Corruption anywhere else
/// is an error with the offending line number.
pub fn read_journal(path: &Path) -> Result<JournalContents, JournalError> {
    let mut contents = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut contents))
        .map_err(|source| JournalError::Io {
            path: path.display().to_string(),
            source,
        })?;
    let text = String::from_utf8_lossy(&contents);
    let unterminated_tail = !contents.is_empty() && !contents.ends_with(b"\n");
    let lines: Vec<&str> = text.lines().collect();
    let mut entries = Vec::new();
    let mut torn_tail = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let is_last = i + 1 == lines.len();
        match parse_frame(line) {
            // A complete frame missing only its newline is accepted as-is.
            Ok(entry) => entries.push(entry),
            Err(message) => {
                if is_last && unterminated_tail {
                    torn_tail = true;
                } else {
                    return Err(JournalError::Corrupt {
                        line: i + 1,
                        message,
                    });
                }
            }
        }
    }
    Ok(JournalContents { entries, torn_tail })
}

/// Parses one `<len> <json>` frame.
fn parse_frame(line: &str) -> Result<JournalEntry, String> {
    let (len_str, json) = line.split_once(' ').ok_or("missing length prefix")?;
    let declared: usize = len_str
        .parse()
        .map_err(|_| format!("bad length prefix {len_str:?}"))?;
    if json.len() != declared {
        return Err(format!(
            "length mismatch: declared {declared}, actual {}",
            json.len()
        ));
    }
    serde_json::from_str(json).map_err(|e| e.to_string())
}

/// Truncates a torn final line in place, leaving a clean journal.
pub fn repair_journal(path: &Path) -> Result<(), JournalError> {
    let io_err = |source| JournalError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut contents = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut contents))
        .map_err(io_err)?;
    if contents.is_empty() || contents.ends_with(b"\n") {
        return Ok(());
    }
    let keep = contents
        .iter()
        .rposition(|&b| b == b'\n')
        .map_or(0, |p| p + 1);
    OpenOptions::new()
        .write(true)
        .open(path)
        .and_then(|f| f.set_len(keep as u64))
        .map_err(io_err)
}
