//! Append-only JSONL record store with periodic snapshots.
//!
//! Layout under the data directory:
//!
//! * `events.jsonl`: one event per line, never rewritten except to drop a
//!   torn final line on open.
//! * `snapshot.json`: full state plus the log offset it covers.
//! * `audit.jsonl`: one line per review decision.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use phish_core::pipeline::Analysis;
use phish_core::rules::Verdict;
use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("corrupt event log at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("no record {0}")]
    NotFound(String),
    #[error("record {0} already has a review")]
    AlreadyDecided(String),
    #[error("record {0} is not awaiting review")]
    NotQueued(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewDecision {
    ConfirmPhishing,
    MarkBenign,
}

impl ReviewDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewDecision::ConfirmPhishing => "confirm_phishing",
            ReviewDecision::MarkBenign => "mark_benign",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub decision: ReviewDecision,
    pub reviewer: String,
    pub decided_at: String,
}

/// One persisted analysis. Everything except `review` is immutable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub id: String,
    pub seq: u64,
    /// Redacted message identifier.
    pub message_id: String,
    /// Redacted subject line.
    pub subject: String,
    pub created_at: String,
    pub analysis: Analysis,
    #[serde(default)]
    pub review: Option<Review>,
}

impl AnalysisRecord {
    pub fn verdict(&self) -> Verdict {
        self.analysis.decision.verdict
    }

    pub fn is_queued(&self) -> bool {
        self.verdict() == Verdict::NeedsReview
    }

    pub fn is_pending(&self) -> bool {
        self.is_queued() && self.review.is_none()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Analyzed { record: Box<AnalysisRecord> },
    Reviewed { id: String, review: Review },
}

#[derive(Debug, Serialize, Deserialize)]
struct AuditLine<'a> {
    record_id: &'a str,
    decision: ReviewDecision,
    reviewer: &'a str,
    timestamp: &'a str,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Snapshot {
    offset: u64,
    next_seq: u64,
    records: Vec<AnalysisRecord>,
}

#[derive(Debug, Default)]
struct State {
    records: BTreeMap<String, AnalysisRecord>,
    next_seq: u64,
}

impl State {
    fn apply(&mut self, event: Event) -> Result<(), String> {
        match event {
            Event::Analyzed { record } => {
                self.next_seq = self.next_seq.max(record.seq + 1);
                if self.records.insert(record.id.clone(), *record).is_some() {
                    return Err("duplicate record id".into());
                }
            }
            Event::Reviewed { id, review } => {
                let rec = self.records.get_mut(&id).ok_or_else(|| format!("review for unknown record {id}"))?;
                if rec.review.is_some() {
                    return Err(format!("second review for {id}"));
                }
                rec.review = Some(review);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StoreOptions {
    /// Write a snapshot after this many appended events; 0 disables.
    pub snapshot_every: usize,
    pub fsync: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { snapshot_every: 500, fsync: true }
    }
}

struct Writer {
    log: File,
    audit: File,
    offset: u64,
    since_snapshot: usize,
}

pub struct Store {
    dir: PathBuf,
    opts: StoreOptions,
    state: RwLock<State>,
    writer: Mutex<Writer>,
}

pub fn now_rfc3339() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).expect("utc timestamps format")
}

impl Store {
    /// Opens or creates a store, replaying the snapshot and the log tail.
    pub fn open(dir: impl AsRef<Path>, opts: StoreOptions) -> Result<Store, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let snap_path = dir.join("snapshot.json");
        let snap: Snapshot = if snap_path.exists() { serde_json::from_slice(&fs::read(&snap_path)?)? } else { Snapshot::default() };
        let mut state = State { records: BTreeMap::new(), next_seq: snap.next_seq };
        for r in snap.records {
            state.records.insert(r.id.clone(), r);
        }

        let mut log = OpenOptions::new().create(true).read(true).append(true).open(dir.join("events.jsonl"))?;
        let len = log.metadata()?.len();
        if snap.offset > len {
            return Err(StoreError::Corrupt { offset: len, reason: "snapshot covers more than the log holds".into() });
        }
        log.seek(SeekFrom::Start(snap.offset))?;
        let mut tail = Vec::new();
        log.read_to_end(&mut tail)?;

        let mut offset = snap.offset;
        let mut rest = tail.as_slice();
        while !rest.is_empty() {
            let (line, complete) = match rest.iter().position(|&b| b == b'\n') {
                Some(i) => (&rest[..i], true),
                None => (rest, false),
            };
            let parsed = serde_json::from_slice::<Event>(line);
            match (parsed, complete) {
                (Ok(ev), _) => {
                    state.apply(ev).map_err(|reason| StoreError::Corrupt { offset, reason })?;
                    if !complete {
                        log.write_all(b"\n")?;
                    }
                }
                (Err(e), true) => return Err(StoreError::Corrupt { offset, reason: e.to_string() }),
                (Err(_), false) => {
                    tracing::warn!(offset, bytes = line.len(), "dropping torn final line of event log");
                    log.set_len(offset)?;
                    break;
                }
            }
            offset += line.len() as u64 + 1;
            rest = if complete { &rest[line.len() + 1..] } else { &[] };
        }
        let offset = log.metadata()?.len();
        let audit = OpenOptions::new().create(true).append(true).open(dir.join("audit.jsonl"))?;
        tracing::info!(records = state.records.len(), dir = %dir.display(), "store opened");
        Ok(Store {
            dir,
            opts,
            state: RwLock::new(state),
            writer: Mutex::new(Writer { log, audit, offset, since_snapshot: 0 }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn append(&self, w: &mut Writer, event: &Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        w.log.write_all(&line)?;
        if self.opts.fsync {
            w.log.sync_data()?;
        }
        w.offset += line.len() as u64;
        w.since_snapshot += 1;
        Ok(())
    }

    fn maybe_snapshot(&self, w: &mut Writer) -> Result<(), StoreError> {
        if self.opts.snapshot_every > 0 && w.since_snapshot >= self.opts.snapshot_every {
            self.write_snapshot(w)?;
        }
        Ok(())
    }

    fn write_snapshot(&self, w: &mut Writer) -> Result<(), StoreError> {
        let state = self.state.read().expect("store lock");
        let snap = Snapshot { offset: w.offset, next_seq: state.next_seq, records: state.records.values().cloned().collect() };
        drop(state);
        let tmp = self.dir.join("snapshot.json.tmp");
        fs::write(&tmp, serde_json::to_vec(&snap)?)?;
        fs::rename(&tmp, self.dir.join("snapshot.json"))?;
        w.since_snapshot = 0;
        Ok(())
    }

    /// Forces a snapshot of the current state.
    pub fn snapshot(&self) -> Result<(), StoreError> {
        let mut w = self.writer.lock().expect("store lock");
        self.write_snapshot(&mut w)
    }

    /// Persists a new record built from its assigned id, sequence number
    /// and creation time.
    pub fn insert(&self, build: impl FnOnce(String, u64, String) -> AnalysisRecord) -> Result<AnalysisRecord, StoreError> {
        let mut w = self.writer.lock().expect("store lock");
        let seq = self.state.read().expect("store lock").next_seq;
        let record = build(format!("r{seq:08}"), seq, now_rfc3339());
        self.append(&mut w, &Event::Analyzed { record: Box::new(record.clone()) })?;
        self.state.write().expect("store lock").apply(Event::Analyzed { record: Box::new(record.clone()) }).expect("fresh id");
        self.maybe_snapshot(&mut w)?;
        Ok(record)
    }

    /// Records a review exactly once for a pending record.
    pub fn decide(&self, id: &str, decision: ReviewDecision, reviewer: &str) -> Result<AnalysisRecord, StoreError> {
        let mut w = self.writer.lock().expect("store lock");
        {
            let state = self.state.read().expect("store lock");
            let rec = state.records.get(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
            if rec.review.is_some() {
                return Err(StoreError::AlreadyDecided(id.to_string()));
            }
            if !rec.is_queued() {
                return Err(StoreError::NotQueued(id.to_string()));
            }
        }
        let review = Review { decision, reviewer: reviewer.to_string(), decided_at: now_rfc3339() };
        self.append(&mut w, &Event::Reviewed { id: id.to_string(), review: review.clone() })?;
        let audit = AuditLine { record_id: id, decision, reviewer, timestamp: &review.decided_at };
        let mut line = serde_json::to_vec(&audit)?;
        line.push(b'\n');
        w.audit.write_all(&line)?;
        if self.opts.fsync {
            w.audit.sync_data()?;
        }
        let mut state = self.state.write().expect("store lock");
        state.apply(Event::Reviewed { id: id.to_string(), review }).expect("checked above");
        let updated = state.records[id].clone();
        drop(state);
        self.maybe_snapshot(&mut w)?;
        Ok(updated)
    }

    pub fn get(&self, id: &str) -> Option<AnalysisRecord> {
        self.state.read().expect("store lock").records.get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.state.read().expect("store lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records matching `keep`, ordered by creation time.
    pub fn list(&self, keep: impl Fn(&AnalysisRecord) -> bool) -> Vec<AnalysisRecord> {
        let state = self.state.read().expect("store lock");
        let mut out: Vec<AnalysisRecord> = state.records.values().filter(|r| keep(r)).cloned().collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.seq.cmp(&b.seq)));
        out
    }

    pub fn pending(&self) -> Vec<AnalysisRecord> {
        self.list(AnalysisRecord::is_pending)
    }
}
