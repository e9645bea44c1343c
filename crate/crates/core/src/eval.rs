//! Sentiment accuracy (SA), structural consistency (SCA) and the
//! data-proportion sweep.
//!
//! For a proportion `p` each topic is observed on `[0, p·T]`. The remainder
//! is predicted in three stages: a Monte-Carlo continuation of the fitted
//! process supplies the future comments (level and time), the network wires
//! them to parents, and the network's classifier labels them. Predicted
//! comments are aligned with true future comments before scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{classify, embed, predict_structure, predicted_labels, GnnParams};
use crate::graph::{build_graph, CascadeGraph, NodeOrigin};
use crate::hawkes::{CommentEvent, EventStream, HawkesParams};
use crate::io::SplitManifest;
use crate::simulation::continue_stream;

/// An exact ratio `hits / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
}

impl Ratio {
    /// The ratio as a real; 0 when nothing was scored.
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }

    fn add(self, o: Ratio) -> Ratio {
        Ratio {
            hits: self.hits + o.hits,
            total: self.total + o.total,
        }
    }
}

/// Fraction of nodes whose predicted class equals the true class. Both maps
/// must cover the same node ids.
pub fn sentiment_accuracy(predicted: &BTreeMap<String, u32>, truth: &BTreeMap<String, u32>) -> Result<Ratio> {
    if !predicted.keys().eq(truth.keys()) {
        return Err(Error::domain("predicted", "predicted and true labels cover different nodes"));
    }
    let hits = truth.iter().filter(|(id, c)| predicted[*id] == **c).count();
    Ok(Ratio {
        hits,
        total: truth.len(),
    })
}

/// Fraction of nodes of `truth` whose predicted child set equals the true
/// child set exactly (two empty sets agree). A node missing from the
/// prediction counts as a mismatch.
pub fn structural_consistency(predicted: &CascadeGraph, truth: &CascadeGraph) -> Ratio {
    let pred_children = predicted.children();
    let true_children = truth.children();
    let empty = BTreeSet::new();
    let hits = truth
        .nodes()
        .iter()
        .filter(|n| {
            predicted.node_index(&n.id).is_some()
                && pred_children.get(n.id.as_str()).unwrap_or(&empty)
                    == true_children.get(n.id.as_str()).unwrap_or(&empty)
        })
        .count();
    Ratio {
        hits,
        total: truth.nodes().len(),
    }
}

/// Greedy one-to-one alignment of predicted to true comments on the same
/// level, closest times first, pairs further apart than `tolerance` never
/// matched. Returns `(true index, predicted index)` pairs sorted by true index.
pub fn align(truth: &[CommentEvent], predicted: &[CommentEvent], tolerance: f64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, p) in predicted.iter().enumerate() {
            let gap = (t.time - p.time).abs();
            if t.level == p.level && gap <= tolerance {
                pairs.push((gap, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_p = vec![false; predicted.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_t[i] && !used_p[j] {
            used_t[i] = true;
            used_p[j] = true;
            out.push((i, j));
        }
    }
    out.sort();
    out
}

/// Half the median gap between consecutive comments of a topic.
pub fn matching_tolerance(stream: &EventStream) -> f64 {
    let mut gaps: Vec<f64> = stream.events().windows(2).map(|w| w[1].time - w[0].time).collect();
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    let median = if n % 2 == 1 {
        gaps[n / 2]
    } else {
        0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
    };
    0.5 * median
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Continuations drawn per topic; the one with the total count closest
    /// to the sample mean is scored.
    pub samples: usize,
    pub seed: u64,
    pub max_events: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 16,
            seed: 0,
            max_events: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub data_proportion: f64,
    pub sa: f64,
    pub sca: f64,
    /// Future comments scored for SA.
    pub nodes: Ratio,
    /// Nodes scored for SCA.
    pub parents: Ratio,
    pub topics_scored: usize,
    pub topics_skipped: usize,
    /// Set when no future comment was scored.
    pub empty: bool,
}

/// Scores of one topic at one proportion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopicScore {
    pub nodes: Ratio,
    pub parents: Ratio,
}

/// Predicts the part of `stream` after `p·T` and scores it. `None` when the
/// observed prefix is empty.
pub fn evaluate_topic(
    stream: &EventStream,
    proportion: f64,
    params: &HawkesParams,
    gnn: &GnnParams,
    config: &EvalConfig,
    stream_seed: u64,
) -> Result<Option<TopicScore>> {
    let horizon = stream.horizon();
    let cut = proportion * horizon;
    let observed = stream.prefix(cut)?;
    if observed.is_empty() {
        log::warn!("topic `{}`: nothing observed before t = {cut}, skipped", stream.topic());
        return Ok(None);
    }
    let truth = build_graph(stream, params, None)?;
    let future: Vec<CommentEvent> = stream.events().iter().filter(|e| e.time > cut).cloned().collect();

    let continuation = if cut < horizon {
        Some(sample_continuation(params, &observed, cut, horizon, config, stream_seed)?)
    } else {
        None
    };
    let predicted_events = continuation.as_ref().map_or(&[][..], |s| s.events());
    let matched = align(&future, predicted_events, matching_tolerance(stream));

    // matched predictions take the id of the comment they stand for
    let mut renamed = predicted_events.to_vec();
    let true_ids: BTreeSet<&str> = stream.events().iter().map(|e| e.id.as_str()).collect();
    for e in &mut renamed {
        e.id = format!("predicted:{}", e.id);
        if true_ids.contains(e.id.as_str()) {
            return Err(Error::Structural(format!("predicted id `{}` collides with a true comment", e.id)));
        }
    }
    for &(i, j) in &matched {
        renamed[j].id = future[i].id.clone();
    }
    let predicted_stream = EventStream::new(stream.topic().to_string(), stream.lattice(), renamed, horizon)?;
    let unlinked = build_graph(&observed, params, Some(&predicted_stream))?;

    let state = embed(&unlinked, gnn)?;
    let nodes = unlinked.nodes();
    let parents: Vec<usize> = (0..nodes.len()).collect();
    let children: Vec<usize> = (0..nodes.len())
        .filter(|&v| {
            let n = &nodes[v];
            n.origin == NodeOrigin::Predicted
                && n.level > 1
                && nodes.iter().any(|p| p.level + 1 == n.level && p.time < n.time)
        })
        .collect();
    let mut links: Vec<(String, String)> = observed
        .events()
        .iter()
        .filter_map(|e| e.parent.clone().map(|p| (p, e.id.clone())))
        .collect();
    for (c, p) in predict_structure(&children, &parents, &state, &unlinked, params, gnn)? {
        links.push((nodes[p].id.clone(), nodes[c].id.clone()));
    }
    let linked = unlinked.with_links(&links, params)?;
    let labels = predicted_labels(&classify(&embed(&linked, gnn)?, gnn));

    let true_labels: BTreeMap<String, u32> = future.iter().map(|e| (e.id.clone(), e.sentiment)).collect();
    let predicted_labels: BTreeMap<String, u32> = future
        .iter()
        .map(|e| {
            let label = linked.node_index(&e.id).map_or(0, |v| labels[v]);
            (e.id.clone(), label)
        })
        .collect();
    Ok(Some(TopicScore {
        nodes: sentiment_accuracy(&predicted_labels, &true_labels)?,
        parents: structural_consistency(&linked, &truth),
    }))
}

fn sample_continuation(
    params: &HawkesParams,
    observed: &EventStream,
    cut: f64,
    horizon: f64,
    config: &EvalConfig,
    stream_seed: u64,
) -> Result<EventStream> {
    if config.samples == 0 {
        return Err(Error::domain("samples", "must be >= 1"));
    }
    let mut runs = Vec::with_capacity(config.samples);
    for k in 0..config.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream_seed);
        rng.set_word_pos((k as u128) << 40);
        runs.push(continue_stream(params, observed, cut, horizon, config.max_events, &mut rng)?);
    }
    let mean = runs.iter().map(|r| r.len() as f64).sum::<f64>() / runs.len() as f64;
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        if (r.len() as f64 - mean).abs() < (runs[best].len() as f64 - mean).abs() {
            best = k;
        }
    }
    Ok(runs.swap_remove(best))
}

/// Scores the validation and test topics at every proportion. Topics are
/// processed in parallel and pooled in topic order.
pub fn run_proportion_sweep(
    corpus: &[EventStream],
    manifest: &SplitManifest,
    proportions: &[f64],
    params: &HawkesParams,
    gnn: &GnnParams,
    config: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    for &p in proportions {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::domain("proportions", format!("{p} is outside (0, 1]")));
        }
    }
    let by_topic: BTreeMap<&str, (usize, &EventStream)> =
        corpus.iter().enumerate().map(|(k, s)| (s.topic(), (k, s))).collect();
    let mut reports = Vec::new();
    for &p in proportions {
        for (split, topics) in [("val", &manifest.val), ("test", &manifest.test)] {
            let mut selected = Vec::with_capacity(topics.len());
            for t in topics {
                let entry = by_topic
                    .get(t.as_str())
                    .ok_or_else(|| Error::Config(format!("split names unknown topic `{t}`")))?;
                selected.push(*entry);
            }
            let scores: Vec<Option<TopicScore>> = selected
                .par_iter()
                .map(|(k, s)| evaluate_topic(s, p, params, gnn, config, *k as u64))
                .collect::<Result<_>>()?;
            let mut nodes = Ratio::default();
            let mut parents = Ratio::default();
            let mut scored = 0;
            for s in scores.iter().flatten() {
                nodes = nodes.add(s.nodes);
                parents = parents.add(s.parents);
                scored += 1;
            }
            reports.push(EvalReport {
                split: split.to_string(),
                data_proportion: p,
                sa: nodes.value(),
                sca: parents.value(),
                nodes,
                parents,
                topics_scored: scored,
                topics_skipped: scores.len() - scored,
                empty: nodes.total == 0,
            });
        }
    }
    Ok(reports)
}

/// Training pairs for the network: each topic cut at `cut · T`, comments
/// after the cut marked predicted and carrying their true reply links.
pub fn training_pairs(topics: &[EventStream], params: &HawkesParams, cut: f64) -> Result<Vec<(CascadeGraph, CascadeGraph)>> {
    if !(cut > 0.0 && cut < 1.0) {
        return Err(Error::domain("train_cut", format!("{cut} is outside (0, 1)")));
    }
    topics
        .iter()
        .map(|s| {
            let t = cut * s.horizon();
            let observed = s.prefix(t)?;
            let rest: Vec<CommentEvent> = s.events().iter().filter(|e| e.time > t).cloned().collect();
            let rest = EventStream::new(s.topic().to_string(), s.lattice(), rest, s.horizon())?;
            let g = build_graph(&observed, params, Some(&rest))?;
            Ok((g.clone(), g))
        })
        .collect()
}

/// One row per proportion: validation and test scores side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub data_proportion: f64,
    pub sa_val: f64,
    pub sa_test: f64,
    pub sca_val: f64,
    pub sca_test: f64,
}

pub fn grid(reports: &[EvalReport]) -> Vec<GridRow> {
    let mut rows: Vec<GridRow> = Vec::new();
    for r in reports {
        let row = match rows.iter_mut().find(|g| g.data_proportion == r.data_proportion) {
            Some(g) => g,
            None => {
                rows.push(GridRow {
                    data_proportion: r.data_proportion,
                    sa_val: f64::NAN,
                    sa_test: f64::NAN,
                    sca_val: f64::NAN,
                    sca_test: f64::NAN,
                });
                rows.last_mut().expect("just pushed")
            }
        };
        match r.split.as_str() {
            "val" => (row.sa_val, row.sca_val) = (r.sa, r.sca),
            "test" => (row.sa_test, row.sca_test) = (r.sa, r.sca),
            _ => {}
        }
    }
    rows
}

/// Text table with percentages, `SA (Val/Test %)` and `SCA (Val/Test %)`.
pub fn format_grid(reports: &[EvalReport]) -> String {
    let mut out = String::from("Data Proportion | SA (Val/Test %) | SCA (Val/Test %)\n");
    for g in grid(reports) {
        out.push_str(&format!(
            "{:.0}% | {:.2}/{:.2} | {:.2}/{:.2}\n",
            g.data_proportion * 100.0,
            g.sa_val * 100.0,
            g.sa_test * 100.0,
            g.sca_val * 100.0,
            g.sca_test * 100.0
        ));
    }
    out
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_grid_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in grid(reports) {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// `split,data_proportion,sa,sca,nodes_correct,nodes_scored,parents_consistent,parents_scored,topics_scored,topics_skipped,empty`
pub fn write_reports_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "split",
        "data_proportion",
        "sa",
        "sca",
        "nodes_correct",
        "nodes_scored",
        "parents_consistent",
        "parents_scored",
        "topics_scored",
        "topics_skipped",
        "empty",
    ])
    .map_err(csv_error)?;
    for r in reports {
        w.write_record([
            r.split.clone(),
            r.data_proportion.to_string(),
            r.sa.to_string(),
            r.sca.to_string(),
            r.nodes.hits.to_string(),
            r.nodes.total.to_string(),
            r.parents.hits.to_string(),
            r.parents.total.to_string(),
            r.topics_scored.to_string(),
            r.topics_skipped.to_string(),
            r.empty.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}
