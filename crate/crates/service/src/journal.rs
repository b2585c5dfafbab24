//! Append-only session logs.
//!
//! Each session owns one JSON-lines file. The first record snapshots the
//! knowledge base document and the session configuration; every later
//! record is one accepted answer. State is never written, only the inputs
//! needed to replay it.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use coverdx::{Finding, KbDocument, KnowledgeBase, SessionConfig, SessionState, TranscriptEntry};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Record {
    Open {
        id: Uuid,
        kb: String,
        document: Box<KbDocument>,
        config: SessionConfig,
    },
    Answer {
        symptom: String,
        finding: Finding,
    },
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    pub fn path_for(store: &Path, id: Uuid) -> PathBuf {
        store.join(format!("{id}.jsonl"))
    }

    pub fn create(store: &Path, id: Uuid, kb_name: &str, kb: &KnowledgeBase, config: &SessionConfig) -> Result<Self, ServiceError> {
        let path = Self::path_for(store, id);
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| ServiceError::io(&path, e))?;
        let mut journal = Self { path, file };
        journal.append(&Record::Open {
            id,
            kb: kb_name.to_owned(),
            document: Box::new(kb.to_document()),
            config: config.clone(),
        })?;
        Ok(journal)
    }

    /// Writes one record and syncs it before returning.
    pub fn append(&mut self, record: &Record) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(record).expect("records always serialize");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| ServiceError::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// A session rebuilt from its log.
#[derive(Debug)]
pub struct Recovered {
    pub id: Uuid,
    pub kb_name: String,
    pub state: SessionState,
    pub journal: Journal,
}

/// Replays one log. A final line without a trailing newline is a write
/// that was cut short; it is dropped and the file truncated to the last
/// complete record.
pub fn recover(path: &Path) -> Result<Recovered, ServiceError> {
    let bad = |message: String| ServiceError::Recovery {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| ServiceError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut good_len = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| ServiceError::io(path, e))?;
        if n == 0 {
            break;
        }
        if !line.ends_with('\n') {
            tracing::warn!(path = %path.display(), "dropping incomplete trailing record");
            break;
        }
        if line.trim().is_empty() {
            good_len += n as u64;
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| bad(format!("record {}: {e}", records.len() + 1)))?;
        records.push(record);
        good_len += n as u64;
    }

    let mut records = records.into_iter();
    let Some(Record::Open { id, kb, document, config }) = records.next() else {
        return Err(bad("log does not start with an open record".into()));
    };
    let transcript = records
        .map(|r| match r {
            Record::Answer { symptom, finding } => Ok(TranscriptEntry { symptom, finding }),
            Record::Open { .. } => Err(bad("open record after the first line".into())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let knowledge = KnowledgeBase::new(*document).map_err(|e| bad(e.to_string()))?;
    let state = coverdx::replay(Arc::new(knowledge), config, &transcript).map_err(|e| bad(e.to_string()))?;

    let file = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| ServiceError::io(path, e))?;
    if file.metadata().map_err(|e| ServiceError::io(path, e))?.len() != good_len {
        file.set_len(good_len).map_err(|e| ServiceError::io(path, e))?;
    }
    Ok(Recovered {
        id,
        kb_name: kb,
        state,
        journal: Journal {
            path: path.to_path_buf(),
            file,
        },
    })
}

/// Every `*.jsonl` log in the store directory, sorted by path.
pub fn logs_in(store: &Path) -> Result<Vec<PathBuf>, ServiceError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(store)
        .map_err(|e| ServiceError::io(store, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    Ok(paths)
}
