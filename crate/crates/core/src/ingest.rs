//! JSONL tag-event ingestion and aggregation into [`FDTag`]s.
//!
//! Every event is one impression of `(label, uri)`; `clicked` marks a click.
//! Malformed lines are collected in a report instead of aborting the stream.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, compute_ctr, make_fd_tag, normalize_label, FDTag, FormalContext, ResourceRef};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable input: {0}")]
    UnreadableInput(#[from] std::io::Error),
}

/// One line of the input stream. Field names on the wire are
/// `label, uri, topic, desc, clicked, ts`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WireEvent", into = "WireEvent")]
pub struct TagEvent {
    label: String,
    resource_uri: String,
    topic: String,
    description: String,
    clicked: bool,
    timestamp: i64,
}

#[derive(Serialize, Deserialize)]
struct WireEvent {
    label: String,
    uri: String,
    topic: String,
    desc: String,
    clicked: bool,
    ts: i64,
}

impl TryFrom<WireEvent> for TagEvent {
    type Error = String;

    fn try_from(w: WireEvent) -> Result<Self, Self::Error> {
        TagEvent::new(&w.label, &w.uri, &w.topic, &w.desc, w.clicked, w.ts)
    }
}

impl From<TagEvent> for WireEvent {
    fn from(e: TagEvent) -> Self {
        WireEvent {
            label: e.label,
            uri: e.resource_uri,
            topic: e.topic,
            desc: e.description,
            clicked: e.clicked,
            ts: e.timestamp,
        }
    }
}

impl TagEvent {
    /// Validates and builds an event. The label must survive normalization and
    /// the uri must be absolute, so aggregation can never fail on it.
    pub fn new(
        label: &str,
        uri: &str,
        topic: &str,
        description: &str,
        clicked: bool,
        timestamp: i64,
    ) -> Result<Self, String> {
        if normalize_label(label).is_empty() {
            return Err("empty label".into());
        }
        if uri.trim().is_empty() {
            return Err("empty uri".into());
        }
        ResourceRef::parse(uri).map_err(|e| e.to_string())?;
        if timestamp < 0 {
            return Err(format!("negative timestamp {timestamp}"));
        }
        Ok(Self {
            label: label.to_string(),
            resource_uri: uri.trim().to_string(),
            topic: topic.to_string(),
            description: description.to_string(),
            clicked,
            timestamp,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn resource_uri(&self) -> &str {
        &self.resource_uri
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn clicked(&self) -> bool {
        self.clicked
    }

    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ParseOutcome {
    pub events: Vec<TagEvent>,
    pub rejected: Vec<Rejection>,
}

/// Parses a JSONL stream. Blank lines are skipped silently; anything else that
/// fails to decode is reported with its line number.
pub fn parse_events<R: BufRead>(mut input: R) -> Result<ParseOutcome, IngestError> {
    let mut out = ParseOutcome::default();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t.trim(),
            Err(e) => {
                out.rejected.push(Rejection { line: line_no, reason: format!("invalid utf-8: {e}") });
                continue;
            }
        };
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<TagEvent>(text) {
            Ok(ev) => out.events.push(ev),
            Err(e) => out.rejected.push(Rejection { line: line_no, reason: e.to_string() }),
        }
    }
    Ok(out)
}

/// Serializes events back to JSONL, one object per line.
pub fn serialize_events(events: &[TagEvent]) -> String {
    let mut s = String::new();
    for ev in events {
        s.push_str(&serde_json::to_string(ev).expect("tag events always serialize"));
        s.push('\n');
    }
    s
}

#[derive(Default)]
struct Accumulator {
    clicks: u64,
    impressions: u64,
    topics: BTreeSet<String>,
    descriptions: BTreeSet<String>,
    incidence: BTreeSet<(String, String)>,
}

/// Groups events by `(normalized label, uri)` and builds one tag per group,
/// ordered by that key.
pub fn aggregate(events: &[TagEvent], time_scale: f64) -> Vec<FDTag> {
    let mut groups: BTreeMap<(String, String), Accumulator> = BTreeMap::new();
    for ev in events {
        let key = (normalize_label(&ev.label), ev.resource_uri.clone());
        let acc = groups.entry(key).or_default();
        acc.impressions += 1;
        acc.clicks += u64::from(ev.clicked);
        acc.topics.insert(ev.topic.clone());
        acc.descriptions.insert(ev.description.clone());
        acc.incidence.insert((ev.topic.clone(), ev.description.clone()));
    }
    groups
        .into_iter()
        .map(|((label, uri), acc)| build_tag(&label, &uri, acc, time_scale).expect("validated events aggregate"))
        .collect()
}

fn build_tag(label: &str, uri: &str, acc: Accumulator, time_scale: f64) -> Result<FDTag, model::ModelError> {
    let context = FormalContext::new(acc.topics, acc.descriptions, acc.incidence)?;
    let exposition = compute_ctr(acc.clicks, acc.impressions)?;
    make_fd_tag(label, context, exposition, ResourceRef::parse(uri)?, time_scale)
}
