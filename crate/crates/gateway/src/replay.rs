use std::path::Path;

use hilo_core::orchestrator::{EventLog, LogError};

use crate::protocol::Framer;

/// Frames a finished log the same way the live session did.
pub fn frames_for(log: &EventLog) -> Vec<String> {
    let mut framer = Framer::default();
    log.records.iter().flat_map(|r| framer.frames(r)).map(|m| m.to_text()).collect()
}

pub fn replay(log_path: &Path) -> Result<Vec<String>, LogError> {
    Ok(frames_for(&EventLog::read(log_path)?))
}
