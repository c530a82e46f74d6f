//! Session-log CSV ingestion.
//!
//! One row per request with header
//! `user_id,session_id,request_idx,timestamp_s,watch_time_s,interactions,return_gap_days`.
//! A user's sessions are contiguous and time-ordered; `request_idx` counts
//! from 0 within a session. `return_gap_days` is the session's returning time,
//! repeated on each of its rows, and may be empty when unknown.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::SessionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub user_id: u64,
    pub session_id: u64,
    pub request_idx: usize,
    pub timestamp_s: f64,
    pub watch_time_s: f64,
    pub interactions: u32,
    pub return_gap_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSession {
    pub user_id: u64,
    pub session_id: u64,
    pub start_s: f64,
    pub watch_time_s: Vec<f64>,
    pub interactions: Vec<u32>,
    pub return_gap_days: Option<f64>,
}

impl LoggedSession {
    pub fn len(&self) -> usize {
        self.watch_time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.watch_time_s.is_empty()
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedLog {
        line,
        reason: reason.into(),
    }
}

/// Groups validated rows into sessions. `first_line` is the line number of
/// the first row, used in error messages.
pub fn sessions_from_rows(rows: &[LogRow], first_line: usize) -> Result<Vec<LoggedSession>> {
    let mut out: Vec<LoggedSession> = Vec::new();
    let mut finished_users = BTreeSet::new();
    let mut last_time = f64::NEG_INFINITY;
    for (i, r) in rows.iter().enumerate() {
        let line = first_line + i;
        if !(r.timestamp_s.is_finite() && r.watch_time_s.is_finite() && r.watch_time_s >= 0.0) {
            return Err(malformed(line, "timestamp and watch time must be finite, watch time >= 0"));
        }
        if let Some(g) = r.return_gap_days {
            if !(g.is_finite() && g >= 0.0) {
                return Err(malformed(line, format!("return gap {g} must be finite and non-negative")));
            }
        }
        let same_session = out
            .last()
            .is_some_and(|s| s.user_id == r.user_id && s.session_id == r.session_id);
        if same_session {
            let s = out.last_mut().expect("checked");
            if r.request_idx != s.len() {
                return Err(malformed(line, format!("request_idx {} out of sequence", r.request_idx)));
            }
            if r.timestamp_s < last_time {
                return Err(malformed(line, "timestamps go backwards within a session"));
            }
            if r.return_gap_days != s.return_gap_days {
                return Err(malformed(line, "return gap differs between rows of one session"));
            }
            s.watch_time_s.push(r.watch_time_s);
            s.interactions.push(r.interactions);
        } else {
            if r.request_idx != 0 {
                return Err(malformed(line, "session does not start at request_idx 0"));
            }
            if let Some(prev) = out.last() {
                if prev.user_id == r.user_id {
                    if r.timestamp_s < last_time {
                        return Err(malformed(line, "sessions of a user are not time-ordered"));
                    }
                } else {
                    finished_users.insert(prev.user_id);
                }
            }
            if finished_users.contains(&r.user_id) {
                return Err(malformed(line, format!("sessions of user {} are not contiguous", r.user_id)));
            }
            if out.iter().rev().take_while(|s| s.user_id == r.user_id).any(|s| s.session_id == r.session_id) {
                return Err(malformed(line, format!("session {} is split", r.session_id)));
            }
            out.push(LoggedSession {
                user_id: r.user_id,
                session_id: r.session_id,
                start_s: r.timestamp_s,
                watch_time_s: vec![r.watch_time_s],
                interactions: vec![r.interactions],
                return_gap_days: r.return_gap_days,
            });
        }
        last_time = r.timestamp_s;
    }
    Ok(out)
}

pub fn read_session_log(path: &Path) -> Result<Vec<LoggedSession>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_session_log_from(file)
}

pub fn read_session_log_from<R: std::io::Read>(reader: R) -> Result<Vec<LoggedSession>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let expected = [
        "user_id",
        "session_id",
        "request_idx",
        "timestamp_s",
        "watch_time_s",
        "interactions",
        "return_gap_days",
    ];
    let header = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(malformed(1, format!("header must be {}", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<LogRow>().enumerate() {
        rows.push(rec.map_err(|e| malformed(i + 2, e.to_string()))?);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("session log"));
    }
    sessions_from_rows(&rows, 2)
}

/// Log rows of simulated sessions (as returned by an episode, in any order).
/// A user's first session starts at time 0; each later one starts
/// `returning_time` days after the previous start, with requests 30 s apart.
pub fn rows_from_sessions(sessions: &[SessionRecord]) -> Vec<LogRow> {
    let mut ordered: Vec<&SessionRecord> = sessions.iter().collect();
    ordered.sort_by_key(|s| (s.user_id, s.session_index));
    let mut rows = Vec::new();
    let mut user = None;
    let mut start = 0.0;
    let mut prev_gap = 0.0;
    for s in ordered {
        if user != Some(s.user_id) {
            user = Some(s.user_id);
            start = 0.0;
        } else {
            start += prev_gap * 86_400.0;
        }
        prev_gap = s.returning_time.unwrap_or(0.0);
        for (k, r) in s.requests.iter().enumerate() {
            rows.push(LogRow {
                user_id: s.user_id,
                session_id: s.session_index as u64,
                request_idx: k,
                timestamp_s: start + 30.0 * k as f64,
                watch_time_s: r.feedback.watch_time_s,
                interactions: r.feedback.interactions,
                return_gap_days: s.returning_time,
            });
        }
    }
    rows
}

pub fn write_session_log<W: std::io::Write>(writer: W, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<session log>", e))
}
