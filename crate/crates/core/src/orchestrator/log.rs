use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    SessionStart,
    UserEvent,
    HlInvoked,
    CommandIssued,
    Utterance,
    Chunk,
    SkillDone,
    SkillFailed,
    GapDetected,
    TrialEnd,
    EvalMark,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub time: f64,
    pub kind: LogKind,
    pub payload: Value,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
}

/// Append-only, totally ordered session record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(&mut self, time_us: u64, kind: LogKind, payload: Value) -> &LogRecord {
        let seq = self.records.len() as u64;
        self.records.push(LogRecord { seq, time: time_us as f64 / 1e6, kind, payload });
        self.records.last().expect("just pushed")
    }

    pub fn of_kind(&self, kind: LogKind) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log record serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 over the canonical JSON Lines form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn write(&self, path: &Path) -> Result<(), LogError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn from_jsonl(text: &str) -> Result<EventLog, LogError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_reader(r: impl BufRead) -> Result<EventLog, LogError> {
        let mut log = EventLog::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord =
                serde_json::from_str(&line).map_err(|e| LogError::Corrupt { line: i + 1, msg: e.to_string() })?;
            if rec.seq != log.records.len() as u64 {
                return Err(LogError::Corrupt { line: i + 1, msg: format!("expected seq {}", log.records.len()) });
            }
            if log.records.last().is_some_and(|p| p.time > rec.time) {
                return Err(LogError::Corrupt { line: i + 1, msg: "time goes backwards".into() });
            }
            log.records.push(rec);
        }
        Ok(log)
    }

    pub fn read(path: &Path) -> Result<EventLog, LogError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub command_id: u64,
    pub chunk_index: u64,
    pub time: f64,
    pub delta: f64,
    pub span: f64,
}

/// Chunk starts within one command further apart than a chunk's span.
pub fn detect_gaps(log: &EventLog) -> Vec<Gap> {
    let mut last: BTreeMap<u64, f64> = BTreeMap::new();
    let mut gaps = Vec::new();
    for r in log.of_kind(LogKind::Chunk) {
        let id = r.payload["command_id"].as_u64().unwrap_or(0);
        let span = r.payload["span"].as_f64().unwrap_or(0.0);
        if let Some(prev) = last.insert(id, r.time) {
            let delta = r.time - prev;
            if delta > span + 1e-9 {
                gaps.push(Gap {
                    command_id: id,
                    chunk_index: r.payload["index"].as_u64().unwrap_or(0),
                    time: r.time,
                    delta,
                    span,
                });
            }
        }
    }
    gaps
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_log_has_no_gaps() {
        assert!(detect_gaps(&EventLog::default()).is_empty());
    }

    #[test]
    fn gap_arithmetic() {
        let mut log = EventLog::default();
        for (t, i) in [(0u64, 0u64), (200_000, 1), (450_000, 2)] {
            log.push(t, LogKind::Chunk, json!({"command_id": 1, "index": i, "span": 0.2}));
        }
        log.push(500_000, LogKind::Chunk, json!({"command_id": 2, "index": 0, "span": 0.2}));
        let gaps = detect_gaps(&log);
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].chunk_index, 2);
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let mut log = EventLog::default();
        log.push(0, LogKind::UserEvent, json!({"a": 1}));
        log.push(1_370_000, LogKind::HlInvoked, json!({"b": [1, 2]}));
        let text = log.to_jsonl();
        let back = EventLog::from_jsonl(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.hash(), log.hash());
        assert_eq!(back.records[1].time, 1.37);
        let truncated = &text[..text.len() - 8];
        match EventLog::from_jsonl(truncated) {
            Err(LogError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
