//! In-context memory bank: successful traces kept as examples, one JSON
//! record per line when backed by a file.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::ReasoningTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub query: String,
    pub trace: ReasoningTrace,
    pub answer: String,
    pub created_at: DateTime<Utc>,
}

impl MemoryEntry {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("entries serialize")
    }

    pub fn from_json(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("memory bank i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("memory bank line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// Lower-cased alphanumeric tokens.
pub fn tokens(text: &str) -> HashSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn overlap(a: &str, b: &str) -> usize {
    let ta = tokens(a);
    tokens(b).iter().filter(|t| ta.contains(*t)).count()
}

#[derive(Debug, Default)]
pub struct MemoryBank {
    entries: RwLock<Vec<MemoryEntry>>,
    file: Option<PathBuf>,
    append_lock: Mutex<()>,
}

impl MemoryBank {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads an existing record file (or starts empty) and appends to it.
    pub fn open(path: &Path) -> Result<Self, BankError> {
        let mut entries = Vec::new();
        if path.exists() {
            let reader = BufReader::new(std::fs::File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                entries.push(
                    MemoryEntry::from_json(&line).map_err(|message| BankError::Corrupt { line: n + 1, message })?,
                );
            }
        }
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(path.to_path_buf()),
            append_lock: Mutex::new(()),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("bank lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<MemoryEntry> {
        self.entries.read().expect("bank lock").clone()
    }

    pub fn store(&self, entry: MemoryEntry) -> Result<(), BankError> {
        let _guard = self.append_lock.lock().expect("bank append lock");
        if let Some(path) = &self.file {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", entry.to_json())?;
        }
        self.entries.write().expect("bank lock").push(entry);
        Ok(())
    }

    /// Top `k` entries by shared query tokens; ties go to the newer entry.
    /// Entries sharing no token with the query are never returned.
    pub fn retrieve(&self, query: &str, k: usize) -> Vec<MemoryEntry> {
        if k == 0 {
            return Vec::new();
        }
        let entries = self.entries.read().expect("bank lock");
        let q = tokens(query);
        let mut scored: Vec<(usize, usize)> = entries
            .iter()
            .enumerate()
            .map(|(pos, e)| (tokens(&e.query).intersection(&q).count(), pos))
            .filter(|(score, _)| *score > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
        scored
            .into_iter()
            .take(k)
            .map(|(_, pos)| entries[pos].clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{AblationMode, Terminal};

    fn entry(query: &str, answer: &str) -> MemoryEntry {
        let mut trace = ReasoningTrace::new(2, AblationMode::PeilSelf);
        trace.terminal = Some(Terminal::Final { answer: answer.into() });
        MemoryEntry {
            query: query.into(),
            trace,
            answer: answer.into(),
            created_at: DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
        }
    }

    #[test]
    fn empty_bank() {
        assert!(MemoryBank::in_memory().retrieve("anything", 2).is_empty());
    }

    #[test]
    fn overlap_ranking_and_ties() {
        let bank = MemoryBank::in_memory();
        bank.store(entry("how many zebras are there?", "3")).unwrap();
        bank.store(entry("what color is the bus?", "red")).unwrap();
        assert_eq!(bank.retrieve("how many giraffes", 1)[0].answer, "3");
        bank.store(entry("how many cars?", "2")).unwrap();
        let got = bank.retrieve("how many giraffes", 2);
        assert_eq!(got[0].answer, "2");
        assert_eq!(got[1].answer, "3");
        assert!(bank.retrieve("how many giraffes", 0).is_empty());
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let bank = MemoryBank::open(&path).unwrap();
        bank.store(entry("q one", "a")).unwrap();
        bank.store(entry("q two", "b")).unwrap();
        let again = MemoryBank::open(&path).unwrap();
        assert_eq!(again.entries(), bank.entries());
    }
}
