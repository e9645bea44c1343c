use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::lattice::Lattice;
use crate::error::{Error, Result};

/// A single comment, observed or simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentEvent {
    pub id: String,
    pub topic: String,
    pub level: u32,
    /// Absent for level-1 comments, which hang off the topic's root post.
    pub parent: Option<String>,
    /// Seconds since the topic origin.
    pub time: f64,
    pub sentiment: u32,
    /// Set when the source log referenced a parent that does not exist.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub orphan: bool,
    /// Original absolute timestamp (epoch seconds), when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<f64>,
    /// Fields carried through from the source log untouched.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl CommentEvent {
    pub fn new(id: impl Into<String>, topic: impl Into<String>, level: u32, sentiment: u32, time: f64) -> Self {
        CommentEvent {
            id: id.into(),
            topic: topic.into(),
            level,
            parent: None,
            time,
            sentiment,
            orphan: false,
            wall_clock: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_parent(mut self, parent: impl Into<String>) -> Self {
        self.parent = Some(parent.into());
        self
    }
}

/// Time-ordered comments of one topic on the observation window `[0, horizon]`.
///
/// Sorting is stable, so simultaneous events keep their input order. The
/// per-dimension index lists are built once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    topic: String,
    lattice: Lattice,
    horizon: f64,
    events: Vec<CommentEvent>,
    dims: Vec<usize>,
    by_dim: Vec<Vec<usize>>,
    times_by_dim: Vec<Vec<f64>>,
}

impl EventStream {
    pub fn new(
        topic: impl Into<String>,
        lattice: Lattice,
        mut events: Vec<CommentEvent>,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain("horizon", format!("{horizon} must be finite and > 0")));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut dims = Vec::with_capacity(events.len());
        let mut by_dim = vec![Vec::new(); lattice.dims()];
        let mut times_by_dim = vec![Vec::new(); lattice.dims()];
        for (i, e) in events.iter().enumerate() {
            if !(e.time.is_finite() && e.time >= 0.0 && e.time <= horizon) {
                return Err(Error::domain(
                    "time",
                    format!("event `{}` at {} lies outside [0, {horizon}]", e.id, e.time),
                ));
            }
            let d = lattice.dim(e.level, e.sentiment)?.flat;
            dims.push(d);
            by_dim[d].push(i);
            times_by_dim[d].push(e.time);
        }
        Ok(EventStream {
            topic: topic.into(),
            lattice,
            horizon,
            events,
            dims,
            by_dim,
            times_by_dim,
        })
    }

    pub fn empty(topic: impl Into<String>, lattice: Lattice, horizon: f64) -> Result<Self> {
        Self::new(topic, lattice, Vec::new(), horizon)
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[CommentEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<CommentEvent> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Flat dimension of the `i`-th event.
    pub fn dim_of(&self, i: usize) -> usize {
        self.dims[i]
    }

    /// Sorted event times of one dimension.
    pub fn times_in(&self, flat: usize) -> &[f64] {
        &self.times_by_dim[flat]
    }

    /// Positions (into `events()`) of one dimension's events.
    pub fn indices_in(&self, flat: usize) -> &[usize] {
        &self.by_dim[flat]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.by_dim.iter().map(Vec::len).collect()
    }

    /// Events at or before `cut`, re-windowed to `[0, cut]`.
    pub fn prefix(&self, cut: f64) -> Result<EventStream> {
        let events = self.events.iter().filter(|e| e.time <= cut).cloned().collect();
        EventStream::new(self.topic.clone(), self.lattice, events, cut)
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<EventStream> {
        EventStream::new(self.topic.clone(), self.lattice, self.events.clone(), horizon)
    }

    /// Checks the comment-tree invariants: parent present iff level ≥ 2, the
    /// parent sits exactly one level up and strictly earlier in time.
    pub fn validate_structure(&self) -> Result<()> {
        let index: HashMap<&str, &CommentEvent> =
            self.events.iter().map(|e| (e.id.as_str(), e)).collect();
        if index.len() != self.events.len() {
            return Err(Error::Structural(format!(
                "duplicate event ids in topic `{}`",
                self.topic
            )));
        }
        for e in &self.events {
            match (&e.parent, e.level) {
                (None, 1) => {}
                (None, l) => {
                    return Err(Error::Structural(format!(
                        "event `{}` at level {l} has no parent",
                        e.id
                    )))
                }
                (Some(p), 1) => {
                    return Err(Error::Structural(format!(
                        "level-1 event `{}` names parent `{p}`",
                        e.id
                    )))
                }
                (Some(p), l) => {
                    let parent = index.get(p.as_str()).ok_or_else(|| {
                        Error::Structural(format!("event `{}` references missing parent `{p}`", e.id))
                    })?;
                    if parent.level + 1 != l {
                        return Err(Error::Structural(format!(
                            "event `{}` (level {l}) has parent `{p}` at level {}",
                            e.id, parent.level
                        )));
                    }
                    if parent.time >= e.time {
                        return Err(Error::Structural(format!(
                            "event `{}` at t = {} does not follow its parent `{p}` at t = {}",
                            e.id, e.time, parent.time
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
