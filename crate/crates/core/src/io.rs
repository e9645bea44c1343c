//! Line-delimited JSON event logs and topic-level splits.
//!
//! A log is a sequence of JSON objects, one per line:
//!
//! ```text
//! {"schema": "opinion-hawkes/events", "version": 1}                      optional header
//! {"topic": "t1", "horizon": 3600.0, "origin": 1700000000.0}              optional topic metadata
//! {"id": "c1", "topic": "t1", "parent_id": null, "timestamp": "2024-05-01T12:00:00Z", "sentiment": "Calm"}
//! ```
//!
//! Event lines carry `id`, `topic`, `parent_id` (nullable), `timestamp`
//! (RFC 3339 string or epoch seconds), `sentiment` (class index or emotion
//! name) and optionally `level` and `orphan`. Other keys pass through
//! untouched. Levels are always recomputed from parent links; the topic's
//! root post is implicit, so comments without a parent are level 1.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hawkes::{CommentEvent, EventStream, Lattice};

pub const EVENT_LOG_SCHEMA: &str = "opinion-hawkes/events";
pub const EVENT_LOG_VERSION: u32 = 1;

/// Emotion classes in index order (class 1 first), with their short labels.
pub const SENTIMENT_LABELS: [(&str, &str); 11] = [
    ("Angry", "A"),
    ("Anxious", "An"),
    ("Sad", "S"),
    ("Frustrated", "F"),
    ("Consoling", "C"),
    ("Neutral", "N"),
    ("Calm", "Ca"),
    ("Optimistic", "O"),
    ("Happy", "H"),
    ("Excited", "Ex"),
    ("Elated", "El"),
];

/// Class index (1-based) for a numeric or named label.
pub fn parse_sentiment(value: &Value, sentiments: u32) -> std::result::Result<u32, String> {
    let class = match value {
        Value::Number(n) => n
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| format!("sentiment `{n}` is not a positive integer"))?,
        Value::String(s) => {
            if let Ok(v) = s.trim().parse::<u32>() {
                v
            } else {
                let pos = SENTIMENT_LABELS
                    .iter()
                    .position(|(name, short)| s.eq_ignore_ascii_case(name) || s.eq_ignore_ascii_case(short))
                    .ok_or_else(|| format!("unknown sentiment label `{s}`"))?;
                pos as u32 + 1
            }
        }
        other => return Err(format!("sentiment must be a number or label, got {other}")),
    };
    if class < 1 || class > sentiments {
        return Err(format!("sentiment class {class} is outside [1, {sentiments}]"));
    }
    Ok(class)
}

/// Epoch seconds from an RFC 3339 string or a number.
pub fn parse_timestamp(value: &Value) -> std::result::Result<f64, String> {
    let secs = match value {
        Value::Number(n) => n.as_f64().ok_or_else(|| format!("timestamp `{n}` is not representable"))?,
        Value::String(s) => match s.trim().parse::<f64>() {
            Ok(v) => v,
            Err(_) => {
                let dt = chrono::DateTime::parse_from_rfc3339(s.trim())
                    .map_err(|e| format!("timestamp `{s}`: {e}"))?;
                dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9
            }
        },
        other => return Err(format!("timestamp must be a string or number, got {other}")),
    };
    if !secs.is_finite() {
        return Err(format!("timestamp {secs} is not finite"));
    }
    Ok(secs)
}

#[derive(Debug, Deserialize)]
struct WireEvent {
    id: String,
    topic: String,
    #[serde(default)]
    parent_id: Option<String>,
    timestamp: Value,
    sentiment: Value,
    #[serde(default)]
    level: Option<u32>,
    #[serde(default)]
    orphan: bool,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize)]
struct WireEventOut<'a> {
    id: &'a str,
    topic: &'a str,
    parent_id: Option<&'a str>,
    timestamp: f64,
    sentiment: u32,
    level: u32,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    orphan: bool,
    #[serde(flatten)]
    extra: &'a BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
struct TopicMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<f64>,
}

struct Pending {
    line: usize,
    wire: WireEvent,
    wall: f64,
    sentiment: u32,
}

/// Reads and validates an event log. Returns one stream per topic, sorted by
/// topic id. An empty file yields an empty collection.
pub fn ingest(path: &Path, lattice: Lattice) -> Result<Vec<EventStream>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_str(&text, path, lattice)
}

/// [`ingest`] on in-memory text; `path` is only used in error messages.
pub fn ingest_str(text: &str, path: &Path, lattice: Lattice) -> Result<Vec<EventStream>> {
    let fail = |line: usize, message: String| Error::Ingest {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut metas: HashMap<String, (usize, TopicMeta)> = HashMap::new();
    let mut records: Vec<Pending> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| fail(line, format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| fail(line, "expected a JSON object".into()))?;
        if let Some(schema) = obj.get("schema") {
            if schema.as_str() != Some(EVENT_LOG_SCHEMA) {
                return Err(fail(line, format!("unsupported schema {schema}")));
            }
            let version = obj.get("version").and_then(Value::as_u64).unwrap_or(1);
            if version != u64::from(EVENT_LOG_VERSION) {
                return Err(fail(line, format!("unsupported schema version {version}")));
            }
            continue;
        }
        if !obj.contains_key("id") {
            let topic = obj
                .get("topic")
                .and_then(Value::as_str)
                .ok_or_else(|| fail(line, "record has neither `id` nor `topic`".into()))?
                .to_string();
            let horizon = obj.get("horizon").map(|v| v.as_f64().ok_or("horizon must be a number"));
            let origin = obj.get("origin").map(parse_timestamp);
            let meta = TopicMeta {
                horizon: horizon.transpose().map_err(|e| fail(line, e.into()))?,
                origin: origin.transpose().map_err(|e| fail(line, e))?,
            };
            if metas.insert(topic.clone(), (line, meta)).is_some() {
                return Err(fail(line, format!("duplicate metadata for topic `{topic}`")));
            }
            continue;
        }
        let wire: WireEvent = serde_json::from_value(value).map_err(|e| fail(line, e.to_string()))?;
        if let Some(first) = seen.insert(wire.id.clone(), line) {
            return Err(fail(line, format!("duplicate id `{}` (first seen on line {first})", wire.id)));
        }
        let wall = parse_timestamp(&wire.timestamp).map_err(|e| fail(line, e))?;
        let sentiment = parse_sentiment(&wire.sentiment, lattice.sentiments).map_err(|e| fail(line, e))?;
        records.push(Pending {
            line,
            wire,
            wall,
            sentiment,
        });
    }

    let by_id: HashMap<&str, usize> = records.iter().enumerate().map(|(k, r)| (r.wire.id.as_str(), k)).collect();
    // resolved parent index per record, None for level-1 comments
    let mut parent: Vec<Option<usize>> = Vec::with_capacity(records.len());
    let mut orphan = vec![false; records.len()];
    for (k, r) in records.iter().enumerate() {
        orphan[k] = r.wire.orphan;
        parent.push(match &r.wire.parent_id {
            None => None,
            Some(pid) => match by_id.get(pid.as_str()) {
                Some(&p) => {
                    if records[p].wire.topic != r.wire.topic {
                        return Err(Error::Structural(format!(
                            "`{}` (line {}) replies to `{pid}` from another topic",
                            r.wire.id, r.line
                        )));
                    }
                    Some(p)
                }
                None => {
                    log::warn!("`{}` (line {}): parent `{pid}` not found, treated as level 1", r.wire.id, r.line);
                    orphan[k] = true;
                    None
                }
            },
        });
    }

    let depth = depths(&records, &parent)?;
    let max_level = lattice.levels as usize;
    let mut events_by_topic: BTreeMap<String, Vec<(usize, CommentEvent)>> = BTreeMap::new();
    for (k, r) in records.iter().enumerate() {
        let mut level = depth[k];
        let mut p = parent[k];
        if level > max_level {
            // hang the comment under its ancestor one level above the cap
            while depth[p.expect("deep comment has a parent")] >= max_level {
                p = parent[p.expect("deep comment has a parent")];
            }
            log::warn!(
                "`{}` (line {}): depth {level} exceeds {max_level}, re-attached to `{}`",
                r.wire.id,
                r.line,
                records[p.expect("ancestor exists")].wire.id
            );
            level = max_level;
        }
        if let Some(given) = r.wire.level {
            if given as usize != level {
                log::warn!(
                    "`{}` (line {}): recorded level {given} differs from recomputed level {level}",
                    r.wire.id,
                    r.line
                );
            }
        }
        let mut e = CommentEvent::new(r.wire.id.clone(), r.wire.topic.clone(), level as u32, r.sentiment, 0.0);
        e.parent = p.map(|p| records[p].wire.id.clone());
        e.orphan = orphan[k];
        e.wall_clock = Some(r.wall);
        e.extra = r.wire.extra.clone();
        events_by_topic.entry(r.wire.topic.clone()).or_default().push((k, e));
    }
    for topic in metas.keys() {
        events_by_topic.entry(topic.clone()).or_default();
    }

    let mut streams = Vec::with_capacity(events_by_topic.len());
    for (topic, mut events) in events_by_topic {
        let (meta_line, meta) = metas.get(&topic).copied().unwrap_or((0, TopicMeta::default()));
        let origin = meta
            .origin
            .unwrap_or_else(|| events.iter().map(|(_, e)| e.wall_clock.expect("set above")).fold(f64::INFINITY, f64::min));
        for (k, e) in &mut events {
            e.time = e.wall_clock.expect("set above") - origin;
            if e.time < 0.0 {
                return Err(fail(records[*k].line, format!("timestamp precedes the topic origin {origin}")));
            }
        }
        let last = events.iter().map(|(_, e)| e.time).fold(0.0, f64::max);
        let horizon = match meta.horizon {
            Some(h) if h < last || !(h > 0.0) => {
                return Err(fail(
                    meta_line,
                    format!("horizon {h} of topic `{topic}` must be positive and cover the last event at {last}"),
                ))
            }
            Some(h) => h,
            None if last > 0.0 => last,
            None => 1.0,
        };
        for (k, e) in &events {
            if let Some(p) = parent[*k] {
                if !(records[p].wall < e.wall_clock.expect("set above")) {
                    return Err(Error::Structural(format!(
                        "`{}` (line {}) is not later than its parent `{}`",
                        e.id, records[*k].line, records[p].wire.id
                    )));
                }
            }
        }
        let stream = EventStream::new(topic, lattice, events.into_iter().map(|(_, e)| e).collect(), horizon)?;
        stream.validate_structure()?;
        streams.push(stream);
    }
    Ok(streams)
}

/// Depth of every record in its reply tree, root comments at depth 1.
fn depths(records: &[Pending], parent: &[Option<usize>]) -> Result<Vec<usize>> {
    let mut depth = vec![0usize; records.len()];
    for start in 0..records.len() {
        let mut path = Vec::new();
        let mut on_path = HashSet::new();
        let mut k = start;
        while depth[k] == 0 {
            if !on_path.insert(k) {
                let at = path.iter().position(|&p| p == k).expect("on path");
                let cycle: Vec<&str> = path[at..].iter().map(|&p: &usize| records[p].wire.id.as_str()).collect();
                return Err(Error::Structural(format!("reply cycle: {}", cycle.join(" -> "))));
            }
            path.push(k);
            match parent[k] {
                Some(p) => k = p,
                None => {
                    depth[k] = 1;
                    path.pop();
                    break;
                }
            }
        }
        let mut d = depth[k];
        while let Some(k) = path.pop() {
            d += 1;
            depth[k] = d;
        }
    }
    Ok(depth)
}

/// Writes streams in the format [`ingest`] reads. Reading the output back
/// reproduces the streams exactly.
pub fn write_events<W: Write>(streams: &[EventStream], mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<output>", e);
    let header = serde_json::json!({"schema": EVENT_LOG_SCHEMA, "version": EVENT_LOG_VERSION});
    writeln!(out, "{header}").map_err(io)?;
    for s in streams {
        let origin = s
            .events()
            .iter()
            .find_map(|e| e.wall_clock.map(|w| w - e.time))
            .unwrap_or(0.0);
        let mut meta = serde_json::to_value(TopicMeta {
            horizon: Some(s.horizon()),
            origin: Some(origin),
        })?;
        meta["topic"] = Value::String(s.topic().to_string());
        writeln!(out, "{meta}").map_err(io)?;
        for e in s.events() {
            let rec = WireEventOut {
                id: &e.id,
                topic: &e.topic,
                parent_id: e.parent.as_deref(),
                timestamp: e.wall_clock.unwrap_or(origin + e.time),
                sentiment: e.sentiment,
                level: e.level,
                orphan: e.orphan,
                extra: &e.extra,
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?).map_err(io)?;
        }
    }
    Ok(())
}

pub fn save_events(streams: &[EventStream], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_events(streams, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Disjoint train/validation/test topic lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Default split weights for train, validation and test.
pub const SPLIT_RATIOS: (usize, usize, usize) = (127, 16, 16);

/// Seeded split with validation and test sizes `max(1, round(n·16/159))`;
/// the remainder goes to training.
pub fn make_split(topics: &[String], seed: u64) -> Result<SplitManifest> {
    let n = topics.len();
    let mut sorted: Vec<String> = topics.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != n {
        return Err(Error::domain("topics", "topic ids must be unique"));
    }
    if n < 3 {
        return Err(Error::domain("topics", format!("{n} topics cannot fill three splits")));
    }
    let (a, b, c) = SPLIT_RATIOS;
    let share = |w: usize| ((n * w) as f64 / (a + b + c) as f64).round().max(1.0) as usize;
    let (n_val, n_test) = (share(b), share(c));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let mut val = sorted[..n_val].to_vec();
    let mut test = sorted[n_val..n_val + n_test].to_vec();
    let mut train = sorted[n_val + n_test..].to_vec();
    val.sort();
    test.sort();
    train.sort();
    Ok(SplitManifest { train, val, test })
}

impl SplitManifest {
    /// Checks the lists are disjoint and cover exactly `topics`.
    pub fn validate(&self, topics: &[String]) -> Result<()> {
        let mut all: Vec<&String> = self.train.iter().chain(&self.val).chain(&self.test).collect();
        all.sort();
        let before = all.len();
        all.dedup();
        if all.len() != before {
            return Err(Error::Config("split lists overlap".into()));
        }
        let mut expected: Vec<&String> = topics.iter().collect();
        expected.sort();
        if all != expected {
            return Err(Error::Config("split does not cover the corpus topics exactly".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
