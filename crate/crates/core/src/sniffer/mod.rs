//! Passive message tracing.
//!
//! A capture session is attached to a container; the container tees every
//! delivered application message into it, one record per receiver.
//! Platform management traffic is never recorded.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acl::{AclMessage, AgentId, Performative};

/// Larger contents keep only their digest.
pub const CONTENT_CAP: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub timestamp: u64,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub performative: Performative,
    pub conversation_id: String,
    pub ontology: String,
    pub content_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<Value>,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{} | {} -> {} : {} [{}] {}",
            self.seq, self.sender, self.receiver, self.performative, self.conversation_id, self.content_digest
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Text,
    JsonLines,
}

impl ExportFormat {
    pub fn suffix(self) -> &'static str {
        match self {
            ExportFormat::Text => ".trace.txt",
            ExportFormat::JsonLines => ".trace.jsonl",
        }
    }
}

#[derive(Debug, Error)]
pub enum SnifferError {
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("MalformedTrace: line {line}: {message}")]
    MalformedTrace { line: usize, message: String },
}

/// First 8 hex digits of the SHA-256 of the content's JSON text.
pub fn content_digest(content: &Value) -> String {
    let text = serde_json::to_vec(content).unwrap_or_default();
    hex::encode(&Sha256::digest(&text)[..4])
}

#[derive(Debug)]
pub struct CaptureSession {
    filter: Option<BTreeSet<AgentId>>,
    records: Mutex<Vec<TraceRecord>>,
}

impl CaptureSession {
    pub fn new(filter: Option<Vec<AgentId>>) -> Self {
        CaptureSession { filter: filter.map(|f| f.into_iter().collect()), records: Mutex::new(Vec::new()) }
    }

    fn wants(&self, sender: &AgentId, receiver: &AgentId) -> bool {
        match &self.filter {
            None => true,
            Some(f) => f.contains(sender) || f.contains(receiver),
        }
    }

    /// Appends one record for `receiver`. Sequence numbers are assigned
    /// under the lock, so they are gapless.
    pub fn record(&self, msg: &AclMessage, receiver: &AgentId) {
        if !self.wants(&msg.sender, receiver) {
            return;
        }
        let digest = content_digest(&msg.content);
        let size = serde_json::to_vec(&msg.content).map(|v| v.len()).unwrap_or(usize::MAX);
        let content = (size <= CONTENT_CAP).then(|| msg.content.clone());
        let mut records = self.records.lock();
        let seq = records.len() as u64 + 1;
        records.push(TraceRecord {
            seq,
            timestamp: msg.timestamp,
            sender: msg.sender.clone(),
            receiver: receiver.clone(),
            performative: msg.performative,
            conversation_id: msg.conversation_id.clone(),
            ontology: msg.ontology.clone(),
            content_digest: digest,
            content,
        });
    }

    pub fn len(&self) -> usize {
        self.records.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        self.records.lock().clone()
    }

    pub fn export(&self, format: ExportFormat) -> String {
        export_sequence_log(&self.records(), format)
    }

    /// Writes `<stem>.trace.txt` and `<stem>.trace.jsonl`; returns both paths.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, SnifferError> {
        std::fs::create_dir_all(dir)?;
        let records = self.records();
        let mut paths = Vec::new();
        for format in [ExportFormat::Text, ExportFormat::JsonLines] {
            let path = dir.join(format!("{stem}{}", format.suffix()));
            std::fs::write(&path, export_sequence_log(&records, format))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

pub fn export_sequence_log(records: &[TraceRecord], format: ExportFormat) -> String {
    let mut out = String::new();
    for r in records {
        match format {
            ExportFormat::Text => out.push_str(&r.to_line()),
            ExportFormat::JsonLines => out.push_str(&serde_json::to_string(r).expect("trace record serializes")),
        }
        out.push('\n');
    }
    out
}

pub fn parse_json_lines(document: &str) -> Result<Vec<TraceRecord>, SnifferError> {
    document
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SnifferError::MalformedTrace { line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// One conversation as seen in a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Conversation {
    pub conversation_id: String,
    pub initiator: AgentId,
    pub responder: AgentId,
    pub ontology: String,
    pub performatives: Vec<Performative>,
}

impl Conversation {
    pub fn opens_with(&self, performative: Performative) -> bool {
        self.performatives.first() == Some(&performative)
    }

    pub fn count(&self, performative: Performative) -> usize {
        self.performatives.iter().filter(|p| **p == performative).count()
    }
}

/// Groups records by conversation id, in order of first appearance. The
/// initiator is the sender of the first record.
pub fn conversations(records: &[TraceRecord]) -> Vec<Conversation> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Conversation> = BTreeMap::new();
    for r in records {
        let c = by_id.entry(r.conversation_id.clone()).or_insert_with(|| {
            order.push(r.conversation_id.clone());
            Conversation {
                conversation_id: r.conversation_id.clone(),
                initiator: r.sender.clone(),
                responder: r.receiver.clone(),
                ontology: r.ontology.clone(),
                performatives: Vec::new(),
            }
        });
        c.performatives.push(r.performative);
    }
    order.into_iter().filter_map(|id| by_id.remove(&id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acl::parse_aid;
    use serde_json::json;

    fn msg(perf: Performative, from: &str, to: &str) -> AclMessage {
        AclMessage::new(perf, parse_aid(from).unwrap())
            .to(parse_aid(to).unwrap())
            .conversation("sub-R1-1")
            .content(json!({"k": 1}))
    }

    #[test]
    fn empty_session_exports_nothing() {
        let s = CaptureSession::new(None);
        assert_eq!(s.export(ExportFormat::Text), "");
        assert_eq!(s.export(ExportFormat::JsonLines), "");
    }

    #[test]
    fn text_line_shape_and_round_trip() {
        let s = CaptureSession::new(None);
        let m = msg(Performative::Request, "R1@SCADA", "H1@SCADA");
        s.record(&m, &m.receivers[0]);
        s.record(&msg(Performative::Agree, "H1@SCADA", "R1@SCADA"), &parse_aid("R1@SCADA").unwrap());
        let text = s.export(ExportFormat::Text);
        let digest = content_digest(&json!({"k": 1}));
        assert_eq!(text.lines().next().unwrap(), format!("1 | R1@SCADA -> H1@SCADA : REQUEST [sub-R1-1] {digest}"));
        let back = parse_json_lines(&s.export(ExportFormat::JsonLines)).unwrap();
        assert_eq!(back, s.records());
    }

    #[test]
    fn filter_keeps_involved_agents() {
        let s = CaptureSession::new(Some(vec![parse_aid("H1@SCADA").unwrap(), parse_aid("R1@SCADA").unwrap()]));
        s.record(&msg(Performative::Inform, "X@SCADA", "Y@SCADA"), &parse_aid("Y@SCADA").unwrap());
        s.record(&msg(Performative::Inform, "H1@SCADA", "Y@SCADA"), &parse_aid("Y@SCADA").unwrap());
        assert_eq!(s.len(), 1);
        assert_eq!(s.records()[0].seq, 1);
    }

    #[test]
    fn large_content_keeps_digest_only() {
        let s = CaptureSession::new(None);
        let big = msg(Performative::Inform, "A@P", "B@P").content(json!({"blob": "x".repeat(5000)}));
        s.record(&big, &big.receivers[0]);
        let r = &s.records()[0];
        assert!(r.content.is_none());
        assert_eq!(r.content_digest.len(), 8);
    }

    #[test]
    fn digest_is_sha256_prefix() {
        // sha256("{}") = 44136fa3...
        assert_eq!(content_digest(&json!({})), "44136fa3");
    }
}
