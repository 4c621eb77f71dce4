//! Per-questionnaire append-only logs: token events and response records,
//! one JSON document per line.
//!
//! All writers go through [`QuestionnaireLog::write`], which holds an
//! in-process mutex plus an exclusive advisory lock on `.lock`, so the
//! service and the CLI never interleave appends. Before every write the
//! writer re-reads whatever other processes appended since it last looked.
//!
//! Recovery: a final line without its terminating newline is the remnant of
//! an interrupted append and is truncated away; a malformed line anywhere
//! else is corruption and surfaces as an error.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::survey::{
    ResponseRecord, TokenClass, TokenDigester, TokenFingerprint, TokenRegistry, TokenState,
};

pub(super) const TOKENS_FILE: &str = "tokens.log";
pub(super) const RESPONSES_FILE: &str = "responses.log";
pub(super) const SALT_FILE: &str = "salt";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub(super) enum TokenEvent {
    Issued {
        fingerprint: TokenFingerprint,
        level: u32,
        class: TokenClass,
    },
    Redeemed {
        fingerprint: TokenFingerprint,
    },
    Revoked {
        fingerprint: TokenFingerprint,
    },
}

#[derive(Debug, Serialize, Deserialize)]
pub(super) struct LoggedResponse {
    pub version: u64,
    pub record: ResponseRecord,
}

/// Mutable state reachable only with the writer lock held.
pub(super) struct WriterState {
    pub registry: TokenRegistry,
    pub responded: HashSet<TokenFingerprint>,
    tokens_offset: u64,
    responses_offset: u64,
    tokens_lines: usize,
    responses_lines: usize,
    tokens: File,
    responses: File,
}

pub(super) struct QuestionnaireLog {
    dir: PathBuf,
    pub digester: TokenDigester,
    writer: Mutex<WriterState>,
    records: RwLock<Vec<Arc<ResponseRecord>>>,
}

/// Exclusive access for one write transaction.
pub(super) struct WriteGuard<'a> {
    pub state: MutexGuard<'a, WriterState>,
    log: &'a QuestionnaireLog,
    _file_lock: File,
}

impl QuestionnaireLog {
    pub fn open(dir: &Path, questionnaire_id: &str) -> Result<Self, StoreError> {
        let salt_path = dir.join(SALT_FILE);
        let salt = std::fs::read_to_string(&salt_path).map_err(|e| StoreError::io(&salt_path, e))?;
        let digester = TokenDigester::from_hex(&salt).ok_or_else(|| StoreError::Corrupt {
            path: salt_path.clone(),
            line: 1,
            message: "salt is not 32 hex digits".into(),
        })?;
        let open = |name: &str| {
            let path = dir.join(name);
            OpenOptions::new()
                .create(true)
                .read(true)
                .append(true)
                .open(&path)
                .map_err(|e| StoreError::io(&path, e))
        };
        let log = Self {
            dir: dir.to_path_buf(),
            digester,
            writer: Mutex::new(WriterState {
                registry: TokenRegistry::new(questionnaire_id),
                responded: HashSet::new(),
                tokens_offset: 0,
                responses_offset: 0,
                tokens_lines: 0,
                responses_lines: 0,
                tokens: open(TOKENS_FILE)?,
                responses: open(RESPONSES_FILE)?,
            }),
            records: RwLock::new(Vec::new()),
        };
        // Initial replay, including recovery of a torn tail.
        drop(log.write()?);
        Ok(log)
    }

    /// Takes the writer lock and brings in-memory state up to date with the
    /// files.
    pub fn write(&self) -> Result<WriteGuard<'_>, StoreError> {
        let mut state = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let lock_path = self.dir.join(LOCK_FILE);
        let file_lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| StoreError::io(&lock_path, e))?;
        file_lock.lock().map_err(|e| StoreError::io(&lock_path, e))?;
        self.catch_up(&mut state)?;
        Ok(WriteGuard {
            state,
            log: self,
            _file_lock: file_lock,
        })
    }

    pub fn version(&self) -> u64 {
        self.records.read().unwrap_or_else(|e| e.into_inner()).len() as u64
    }

    /// First `at` records (all of them when `None`), plus the version they
    /// correspond to.
    pub fn snapshot(&self, at: Option<u64>) -> Result<(u64, Vec<Arc<ResponseRecord>>), StoreError> {
        let records = self.records.read().unwrap_or_else(|e| e.into_inner());
        let current = records.len() as u64;
        let version = match at {
            Some(v) if v > current => {
                return Err(StoreError::VersionAhead {
                    requested: v,
                    current,
                })
            }
            Some(v) => v,
            None => current,
        };
        Ok((version, records[..version as usize].to_vec()))
    }

    fn catch_up(&self, state: &mut WriterState) -> Result<(), StoreError> {
        let path = self.dir.join(TOKENS_FILE);
        let (lines, end, next_line) =
            read_tail(&mut state.tokens, state.tokens_offset, state.tokens_lines + 1, &path)?;
        for (line_no, line) in lines {
            let event: TokenEvent = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
            apply_token_event(&mut state.registry, &event);
        }
        state.tokens_offset = end;
        state.tokens_lines = next_line - 1;

        let path = self.dir.join(RESPONSES_FILE);
        let (lines, end, next_line) = read_tail(
            &mut state.responses,
            state.responses_offset,
            state.responses_lines + 1,
            &path,
        )?;
        if !lines.is_empty() {
            let mut records = self.records.write().unwrap_or_else(|e| e.into_inner());
            for (line_no, line) in lines {
                let logged: LoggedResponse =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        path: path.clone(),
                        line: line_no,
                        message: e.to_string(),
                    })?;
                if logged.version != records.len() as u64 + 1 {
                    return Err(StoreError::Corrupt {
                        path: path.clone(),
                        line: line_no,
                        message: format!(
                            "version {} out of sequence (expected {})",
                            logged.version,
                            records.len() + 1
                        ),
                    });
                }
                let fp = logged.record.token_fingerprint.clone();
                // A stored response is itself proof of redemption.
                let _ = state.registry.redeem(&fp);
                state.responded.insert(fp);
                records.push(Arc::new(logged.record));
            }
        }
        state.responses_offset = end;
        state.responses_lines = next_line - 1;
        Ok(())
    }
}

impl WriteGuard<'_> {
    pub fn append_token_events(&mut self, events: &[TokenEvent]) -> Result<(), StoreError> {
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).expect("token events serialize"));
            buf.push('\n');
        }
        let path = self.log.dir.join(TOKENS_FILE);
        let state = &mut *self.state;
        durable_append(&mut state.tokens, &mut state.tokens_offset, buf.as_bytes(), &path)?;
        state.tokens_lines += events.len();
        for e in events {
            apply_token_event(&mut state.registry, e);
        }
        Ok(())
    }

    /// Appends one response line; returns the new version.
    pub fn append_response(&mut self, record: ResponseRecord) -> Result<u64, StoreError> {
        // Only the writer pushes, so the length cannot move under us.
        let version = self.log.version() + 1;
        let logged = LoggedResponse { version, record };
        let mut line = serde_json::to_string(&logged).expect("records serialize");
        line.push('\n');
        let path = self.log.dir.join(RESPONSES_FILE);
        let state = &mut *self.state;
        durable_append(&mut state.responses, &mut state.responses_offset, line.as_bytes(), &path)?;
        state.responses_lines += 1;
        let fp = logged.record.token_fingerprint.clone();
        let _ = state.registry.redeem(&fp);
        state.responded.insert(fp);
        self.log
            .records
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .push(Arc::new(logged.record));
        Ok(version)
    }
}

fn apply_token_event(registry: &mut TokenRegistry, event: &TokenEvent) {
    match event {
        TokenEvent::Issued {
            fingerprint,
            level,
            class,
        } => {
            registry.insert(fingerprint.clone(), *level, *class);
        }
        TokenEvent::Redeemed { fingerprint } => {
            if registry.get(fingerprint).map(|r| r.state) == Some(TokenState::Unused) {
                let _ = registry.redeem(fingerprint);
            }
        }
        TokenEvent::Revoked { fingerprint } => {
            let _ = registry.revoke(fingerprint);
        }
    }
}

/// Writes `bytes` at the end of the file and syncs. On failure the file is
/// cut back to `offset` so no partial record survives.
fn durable_append(file: &mut File, offset: &mut u64, bytes: &[u8], path: &Path) -> Result<(), StoreError> {
    let result = file.write_all(bytes).and_then(|_| file.sync_data());
    match result {
        Ok(()) => {
            *offset += bytes.len() as u64;
            Ok(())
        }
        Err(e) => {
            let _ = file.set_len(*offset);
            Err(StoreError::io(path, e))
        }
    }
}

/// Complete lines after `offset`, numbered from `first_line`, the offset
/// just past the last complete line, and the next line number. A torn final
/// line is truncated.
fn read_tail(
    file: &mut File,
    offset: u64,
    first_line: usize,
    path: &Path,
) -> Result<(Vec<(usize, String)>, u64, usize), StoreError> {
    let mut tail = Vec::new();
    file.seek(SeekFrom::Start(offset)).map_err(|e| StoreError::io(path, e))?;
    file.read_to_end(&mut tail).map_err(|e| StoreError::io(path, e))?;

    let complete = tail.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < tail.len() {
        file.set_len(offset + complete as u64)
            .and_then(|_| file.sync_data())
            .map_err(|e| StoreError::io(path, e))?;
    }
    let text = std::str::from_utf8(&tail[..complete]).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        line: first_line,
        message: e.to_string(),
    })?;
    let mut next_line = first_line;
    let mut lines = Vec::new();
    for l in text.lines() {
        if !l.trim().is_empty() {
            lines.push((next_line, l.to_string()));
        }
        next_line += 1;
    }
    Ok((lines, offset + complete as u64, next_line))
}
