//! Opinion propagation graph: one node per comment, one edge per reply link.
//!
//! Node features are the process intensity at the comment's own time and the
//! intensity-normalised sentiment distribution of its level, both computed
//! from strictly earlier comments. Edge features are the reply latency and
//! the excitation strength from the parent's cell onto the child's.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::{intensity_with, CommentEvent, EventStream, HawkesParams, History, Lattice};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOrigin {
    Observed,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub level: u32,
    /// Flat lattice cell used for the intensity feature and edge excitation.
    pub dim: usize,
    /// Annotated class, present on observed nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<u32>,
    pub time: f64,
    pub intensity: f64,
    pub q: Vec<f64>,
    pub origin: NodeOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub parent: usize,
    pub child: usize,
    pub dt: f64,
    pub excitation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeGraph {
    lattice: Lattice,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    index: HashMap<String, usize>,
}

/// `q_c = λ_(l,c)(t) / Σ_c' λ_(l,c')(t)` from strictly earlier comments.
pub fn node_sentiment_distribution(params: &HawkesParams, history: &EventStream, level: u32, t: f64) -> Result<Vec<f64>> {
    let lat = params.lattice();
    if level < 1 || level > lat.levels {
        return Err(Error::domain("level", format!("{level} is outside [1, {}]", lat.levels)));
    }
    let lambdas: Vec<f64> = lat
        .level_cells(level)
        .map(|w| intensity_with(params, history, w, t, History::StrictPast))
        .collect();
    normalise(lambdas, level, t)
}

fn normalise(lambdas: Vec<f64>, level: u32, time: f64) -> Result<Vec<f64>> {
    let total: f64 = lambdas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDistribution { level, time });
    }
    Ok(lambdas.into_iter().map(|l| l / total).collect())
}

/// `(Δt, α[child cell, parent cell])` for a reply link.
pub fn edge_features(parent: &GraphNode, child: &GraphNode, params: &HawkesParams) -> Result<(f64, f64)> {
    let dt = child.time - parent.time;
    if !(dt > 0.0) {
        return Err(Error::domain(
            "dt",
            format!("child `{}` does not follow parent `{}` (Δt = {dt})", child.id, parent.id),
        ));
    }
    Ok((dt, params.alpha()[[child.dim, parent.dim]]))
}

/// Builds the graph over `history` plus optional predicted comments.
///
/// Features of every node are evaluated against the union of both streams.
/// Predicted comments without a parent become unattached nodes that a
/// structure predictor can wire up later. A level whose intensities
/// are all zero gets the uniform distribution.
pub fn build_graph(history: &EventStream, params: &HawkesParams, predicted: Option<&EventStream>) -> Result<CascadeGraph> {
    let lat = params.lattice();
    let mut tagged: Vec<(&CommentEvent, NodeOrigin)> =
        history.events().iter().map(|e| (e, NodeOrigin::Observed)).collect();
    if let Some(p) = predicted {
        tagged.extend(p.events().iter().map(|e| (e, NodeOrigin::Predicted)));
    }
    let horizon = predicted.map_or(history.horizon(), |p| p.horizon().max(history.horizon()));
    let union = EventStream::new(
        history.topic().to_string(),
        lat,
        tagged.iter().map(|(e, _)| (*e).clone()).collect(),
        horizon,
    )?;

    let mut nodes = Vec::with_capacity(tagged.len());
    for (e, origin) in &tagged {
        let cell = lat.dim(e.level, e.sentiment)?;
        let lambdas: Vec<f64> = lat
            .level_cells(e.level)
            .map(|w| intensity_with(params, &union, w, e.time, History::StrictPast))
            .collect();
        let intensity = lambdas[cell.flat - lat.level_cells(e.level).start];
        let q = normalise(lambdas, e.level, e.time)
            .unwrap_or_else(|_| vec![1.0 / lat.sentiments as f64; lat.sentiments as usize]);
        nodes.push(GraphNode {
            id: e.id.clone(),
            level: e.level,
            dim: cell.flat,
            sentiment: (*origin == NodeOrigin::Observed).then_some(e.sentiment),
            time: e.time,
            intensity,
            q,
            origin: *origin,
        });
    }
    let links: Vec<(String, String)> = tagged
        .iter()
        .filter_map(|(e, _)| e.parent.clone().map(|p| (p, e.id.clone())))
        .collect();
    CascadeGraph::assemble(lat, nodes, &links, params)
}

impl CascadeGraph {
    fn assemble(lattice: Lattice, nodes: Vec<GraphNode>, links: &[(String, String)], params: &HawkesParams) -> Result<Self> {
        let index = Self::index_nodes(&nodes)?;
        let mut edges = Vec::with_capacity(links.len());
        for (p, c) in links {
            let (pi, ci) = Self::resolve(&index, p, c)?;
            let (dt, excitation) = edge_features(&nodes[pi], &nodes[ci], params)?;
            edges.push(GraphEdge {
                parent: pi,
                child: ci,
                dt,
                excitation,
            });
        }
        let g = CascadeGraph {
            lattice,
            nodes,
            edges,
            index,
        };
        g.validate()?;
        Ok(g)
    }

    fn index_nodes(nodes: &[GraphNode]) -> Result<HashMap<String, usize>> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Structural(format!("duplicate node id `{}`", n.id)));
            }
        }
        Ok(index)
    }

    fn resolve(index: &HashMap<String, usize>, parent: &str, child: &str) -> Result<(usize, usize)> {
        let pi = *index
            .get(parent)
            .ok_or_else(|| Error::Structural(format!("node `{child}` references missing parent `{parent}`")))?;
        let ci = *index
            .get(child)
            .ok_or_else(|| Error::Structural(format!("edge references missing child `{child}`")))?;
        Ok((pi, ci))
    }

    pub fn empty(lattice: Lattice) -> Self {
        CascadeGraph {
            lattice,
            nodes: Vec::new(),
            edges: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn parent_of(&self, child: usize) -> Option<usize> {
        self.edges.iter().find(|e| e.child == child).map(|e| e.parent)
    }

    /// Child id sets keyed by parent id.
    pub fn children(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in &self.edges {
            out.entry(self.nodes[e.parent].id.as_str())
                .or_default()
                .insert(self.nodes[e.child].id.as_str());
        }
        out
    }

    /// Edge features keyed by `(parent id, child id)`.
    pub fn edge_table(&self) -> BTreeMap<(&str, &str), (f64, f64)> {
        self.edges
            .iter()
            .map(|e| {
                (
                    (self.nodes[e.parent].id.as_str(), self.nodes[e.child].id.as_str()),
                    (e.dt, e.excitation),
                )
            })
            .collect()
    }

    /// Reply tree invariants: one parent per child, levels step by one, time
    /// moves forward by exactly Δt, sentiment distributions are normalised.
    /// Observed comments below level 1 must have a parent.
    pub fn validate(&self) -> Result<()> {
        let mut has_parent = vec![false; self.nodes.len()];
        for e in &self.edges {
            let (p, c) = (&self.nodes[e.parent], &self.nodes[e.child]);
            if std::mem::replace(&mut has_parent[e.child], true) {
                return Err(Error::Structural(format!("node `{}` has more than one parent", c.id)));
            }
            if c.level != p.level + 1 {
                return Err(Error::Structural(format!(
                    "edge `{}` -> `{}` does not step exactly one level",
                    p.id, c.id
                )));
            }
            if !(e.dt > 0.0) || c.time - p.time != e.dt {
                return Err(Error::Structural(format!(
                    "edge `{}` -> `{}` has inconsistent Δt {}",
                    p.id, c.id, e.dt
                )));
            }
        }
        for (n, parented) in self.nodes.iter().zip(&has_parent) {
            // predicted comments may still be waiting for a parent
            if n.level > 1 && !parented && n.origin == NodeOrigin::Observed {
                return Err(Error::Structural(format!(
                    "node `{}` at level {} has no parent",
                    n.id, n.level
                )));
            }
            if n.level == 1 && *parented {
                return Err(Error::Structural(format!("level-1 node `{}` has a parent", n.id)));
            }
            let s: f64 = n.q.iter().sum();
            if n.q.len() != self.lattice.sentiments as usize
                || n.q.iter().any(|x| !(*x >= 0.0))
                || (s - 1.0).abs() > 1e-9
            {
                return Err(Error::Structural(format!(
                    "node `{}` carries an invalid sentiment distribution",
                    n.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GraphDocument {
            schema_version: GRAPH_SCHEMA_VERSION,
            levels: self.lattice.levels,
            sentiments: self.lattice.sentiments,
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    parent: self.nodes[e.parent].id.clone(),
                    child: self.nodes[e.child].id.clone(),
                    dt: e.dt,
                    excitation: e.excitation,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphDocument = serde_json::from_str(text)?;
        if doc.schema_version != GRAPH_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported graph schema version {}",
                doc.schema_version
            )));
        }
        let lattice = Lattice::new(doc.levels, doc.sentiments)?;
        let index = Self::index_nodes(&doc.nodes)?;
        let mut edges = Vec::with_capacity(doc.edges.len());
        for r in &doc.edges {
            let (parent, child) = Self::resolve(&index, &r.parent, &r.child)?;
            edges.push(GraphEdge {
                parent,
                child,
                dt: r.dt,
                excitation: r.excitation,
            });
        }
        let g = CascadeGraph {
            lattice,
            nodes: doc.nodes,
            edges,
            index,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Copy with a different edge set; used when a predictor rewires the
    /// predicted comments.
    pub fn with_links(&self, links: &[(String, String)], params: &HawkesParams) -> Result<Self> {
        Self::assemble(self.lattice, self.nodes.clone(), links, params)
    }

    /// Copy restricted to the nodes accepted by `keep`; edges touching a
    /// dropped node are dropped too.
    pub fn retain_nodes(&self, keep: impl Fn(&GraphNode) -> bool) -> Result<Self> {
        let nodes: Vec<GraphNode> = self.nodes.iter().filter(|n| keep(n)).cloned().collect();
        let index = Self::index_nodes(&nodes)?;
        let edges = self
            .edges
            .iter()
            .filter_map(|e| {
                let p = index.get(&self.nodes[e.parent].id)?;
                let c = index.get(&self.nodes[e.child].id)?;
                Some(GraphEdge {
                    parent: *p,
                    child: *c,
                    ..e.clone()
                })
            })
            .collect();
        Ok(CascadeGraph {
            lattice: self.lattice,
            nodes,
            edges,
            index,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    parent: String,
    child: String,
    dt: f64,
    excitation: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphDocument {
    schema_version: u32,
    levels: u32,
    sentiments: u32,
    nodes: Vec<GraphNode>,
    edges: Vec<EdgeRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn lat() -> Lattice {
        Lattice::new(3, 3).unwrap()
    }

    fn params() -> HawkesParams {
        let d = lat().dims();
        HawkesParams::new(
            lat(),
            vec![0.2; d],
            Array2::from_shape_fn((d, d), |(i, j)| 0.01 * (1 + i + 2 * j) as f64),
            Array2::from_elem((d, d), 1.0),
        )
        .unwrap()
    }

    fn pair() -> EventStream {
        EventStream::new(
            "h",
            lat(),
            vec![
                CommentEvent::new("a", "h", 1, 2, 1.0),
                CommentEvent::new("b", "h", 2, 3, 2.5).with_parent("a"),
            ],
            3.0,
        )
        .unwrap()
    }

    #[test]
    fn two_events_one_edge() {
        let g = build_graph(&pair(), &params(), None).unwrap();
        assert_eq!(g.nodes().len(), 2);
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].dt, 1.5);
        let child = &g.nodes()[1];
        let parent = &g.nodes()[0];
        assert_eq!(g.edges()[0].excitation, params().alpha()[[child.dim, parent.dim]]);
    }

    #[test]
    fn empty_graph() {
        let s = EventStream::empty("h", lat(), 1.0).unwrap();
        let g = build_graph(&s, &params(), None).unwrap();
        assert!(g.nodes().is_empty() && g.edges().is_empty());
    }

    #[test]
    fn dangling_parent_is_structural() {
        let s = EventStream::new(
            "h",
            lat(),
            vec![CommentEvent::new("b", "h", 2, 3, 2.5).with_parent("zz")],
            3.0,
        )
        .unwrap();
        assert!(matches!(build_graph(&s, &params(), None), Err(Error::Structural(_))));
    }

    #[test]
    fn uniform_when_cells_equal() {
        let p = HawkesParams::uniform(lat(), 0.4, 0.1, 1.0).unwrap();
        let q = node_sentiment_distribution(&p, &pair(), 2, 2.0).unwrap();
        for v in q {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_when_single_cell_active() {
        let d = lat().dims();
        let mut mu = vec![0.0; d];
        mu[lat().dim(1, 2).unwrap().flat] = 0.7;
        let p = HawkesParams::new(lat(), mu, Array2::zeros((d, d)), Array2::from_elem((d, d), 1.0)).unwrap();
        let s = EventStream::empty("h", lat(), 1.0).unwrap();
        assert_eq!(node_sentiment_distribution(&p, &s, 1, 0.5).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            node_sentiment_distribution(&p, &s, 2, 0.5),
            Err(Error::DegenerateDistribution { .. })
        ));
    }

    #[test]
    fn edge_requires_positive_lag() {
        let g = build_graph(&pair(), &params(), None).unwrap();
        let (a, b) = (&g.nodes()[0], &g.nodes()[1]);
        assert!(edge_features(b, a, &params()).is_err());
        assert!(edge_features(a, a, &params()).is_err());
        let zero = HawkesParams::uniform(lat(), 0.1, 0.0, 1.0).unwrap();
        assert_eq!(edge_features(a, b, &zero).unwrap(), (1.5, 0.0));
    }

    #[test]
    fn json_round_trip() {
        let g = build_graph(&pair(), &params(), None).unwrap();
        let back = CascadeGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
