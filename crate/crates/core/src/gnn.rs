//! Message-passing network over a [`CascadeGraph`].
//!
//! ```text
//! h_v' = σ(W1 h_v + Σ_{u ∈ N(v)} s_uv · W2 h_u)       s_uv = excitation · exp(−Δt / τ)
//! P(·|v) = softmax(Wc h_v)
//! ```
//!
//! `N(v)` is the undirected reply neighbourhood (parent and children). The
//! two edge features collapse into the scalar gate `s_uv`. Gradients are
//! propagated by hand through the softmax, every round, and the gates.

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CascadeGraph, NodeOrigin};
use crate::hawkes::{HawkesParams, Lattice};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Floor applied to probabilities inside the sentiment log-loss.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear update, for tests.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn slope_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnConfig {
    /// Embedding width.
    pub d: usize,
    /// Message-passing rounds.
    pub steps: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Latency scale of the edge gate.
    pub tau: f64,
    pub seed: u64,
    pub activation: Activation,
    /// Allow a fixed random projection when `d` is below the feature width.
    pub project_features: bool,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            d: 16,
            steps: 2,
            lambda1: 1.0,
            lambda2: 0.1,
            tau: 1.0,
            seed: 0,
            activation: Activation::Tanh,
            project_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub config: GnnConfig,
    pub lattice: Lattice,
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub wc: Array2<f64>,
    /// Fixed `d × F` map from raw node features to width `d`, when `d < F`.
    pub projection: Option<Array2<f64>>,
}

/// Raw node feature width: intensity, sentiment distribution, one-hot level.
pub fn feature_width(lattice: Lattice) -> usize {
    1 + lattice.sentiments as usize + lattice.levels as usize
}

impl GnnParams {
    /// Seeded initialisation, weights uniform in `[−1/√d, 1/√d]`.
    pub fn init(lattice: Lattice, config: GnnConfig) -> Result<Self> {
        let d = config.d;
        if d == 0 {
            return Err(Error::Config("embedding width d must be >= 1".into()));
        }
        if config.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if !(config.lambda1 >= 0.0 && config.lambda2 >= 0.0) || config.lambda1 + config.lambda2 == 0.0 {
            return Err(Error::Config("lambda1 and lambda2 must be >= 0 and not both 0".into()));
        }
        if !(config.tau > 0.0) {
            return Err(Error::Config("tau must be > 0".into()));
        }
        let f = feature_width(lattice);
        if d < f && !config.project_features {
            return Err(Error::Config(format!(
                "embedding width {d} is below the feature width {f}; enable feature projection or raise d"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 1.0 / (d as f64).sqrt();
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
        };
        let w1 = draw(d, d);
        let w2 = draw(d, d);
        let wc = draw(lattice.sentiments as usize, d);
        let projection = (d < f).then(|| {
            let scale = 1.0 / (f as f64).sqrt();
            draw(d, f).mapv(|x| x / bound * scale)
        });
        Ok(GnnParams {
            config,
            lattice,
            w1,
            w2,
            wc,
            projection,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let rows = |m: &Array2<f64>| m.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
        let doc = CheckpointDocument {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            levels: self.lattice.levels,
            sentiments: self.lattice.sentiments,
            config: self.config.clone(),
            w1: rows(&self.w1),
            w2: rows(&self.w2),
            wc: rows(&self.wc),
            projection: self.projection.as_ref().map(rows),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDocument = serde_json::from_str(text)?;
        if doc.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint schema version {}",
                doc.schema_version
            )));
        }
        let lattice = Lattice::new(doc.levels, doc.sentiments)?;
        let d = doc.config.d;
        let f = feature_width(lattice);
        let matrix = |rows: Vec<Vec<f64>>, shape: (usize, usize)| -> Result<Array2<f64>> {
            if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
                return Err(Error::Format(format!("expected a {}x{} matrix", shape.0, shape.1)));
            }
            Ok(Array2::from_shape_vec(shape, rows.into_iter().flatten().collect()).expect("shape checked"))
        };
        Ok(GnnParams {
            w1: matrix(doc.w1, (d, d))?,
            w2: matrix(doc.w2, (d, d))?,
            wc: matrix(doc.wc, (lattice.sentiments as usize, d))?,
            projection: doc.projection.map(|p| matrix(p, (d, f))).transpose()?,
            config: doc.config,
            lattice,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDocument {
    schema_version: u32,
    levels: u32,
    sentiments: u32,
    config: GnnConfig,
    w1: Vec<Vec<f64>>,
    w2: Vec<Vec<f64>>,
    wc: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projection: Option<Vec<Vec<f64>>>,
}

/// Per-node embeddings after `round` message-passing rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddingState {
    pub h: Array2<f64>,
    pub round: usize,
}

/// Gated undirected adjacency lists.
fn neighbourhoods(graph: &CascadeGraph, tau: f64) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); graph.nodes().len()];
    for e in graph.edges() {
        let s = e.excitation * (-e.dt / tau).exp();
        adj[e.parent].push((e.child, s));
        adj[e.child].push((e.parent, s));
    }
    adj
}

/// `h_v^(0)`: `[λ, q_1..q_C, onehot(level)]`, zero-padded or projected to width `d`.
pub fn init_embeddings(graph: &CascadeGraph, gnn: &GnnParams) -> Result<NodeEmbeddingState> {
    let lat = gnn.lattice;
    let f = feature_width(lat);
    let c = lat.sentiments as usize;
    let n = graph.nodes().len();
    let mut raw = Array2::zeros((n, f));
    for (v, node) in graph.nodes().iter().enumerate() {
        if node.q.len() != c || node.level < 1 || node.level > lat.levels {
            return Err(Error::Config(format!(
                "node `{}` does not match the network's lattice",
                node.id
            )));
        }
        raw[[v, 0]] = node.intensity;
        for (k, q) in node.q.iter().enumerate() {
            raw[[v, 1 + k]] = *q;
        }
        raw[[v, 1 + c + node.level as usize - 1]] = 1.0;
    }
    let d = gnn.config.d;
    let h = match &gnn.projection {
        Some(p) => raw.dot(&p.t()),
        None if d >= f => {
            let mut h = Array2::zeros((n, d));
            h.slice_mut(ndarray::s![.., ..f]).assign(&raw);
            h
        }
        None => {
            return Err(Error::Config(format!(
                "embedding width {d} is below the feature width {f} and no projection is configured"
            )))
        }
    };
    Ok(NodeEmbeddingState { h, round: 0 })
}

fn check_finite(h: &Array2<f64>, graph: &CascadeGraph, stage: &'static str) -> Result<()> {
    for (v, row) in h.outer_iter().enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                node: graph.nodes()[v].id.clone(),
                stage,
            });
        }
    }
    Ok(())
}

/// `Σ_u s_uv h_u` for every node.
fn aggregate(h: &Array2<f64>, adj: &[Vec<(usize, f64)>]) -> Array2<f64> {
    let mut m = Array2::zeros(h.raw_dim());
    for (v, nbrs) in adj.iter().enumerate() {
        let mut row = m.row_mut(v);
        for &(u, s) in nbrs {
            if s != 0.0 {
                row.scaled_add(s, &h.row(u));
            }
        }
    }
    m
}

fn round_forward(h: &Array2<f64>, adj: &[Vec<(usize, f64)>], gnn: &GnnParams) -> (Array2<f64>, Array2<f64>) {
    let m = aggregate(h, adj);
    let z = h.dot(&gnn.w1.t()) + m.dot(&gnn.w2.t());
    let act = gnn.config.activation;
    (z.mapv(|x| act.apply(x)), m)
}

/// One round of the update rule.
pub fn message_pass(state: &NodeEmbeddingState, graph: &CascadeGraph, gnn: &GnnParams) -> Result<NodeEmbeddingState> {
    if state.round >= gnn.config.steps {
        return Err(Error::Config(format!(
            "round {} already reached the configured {} steps",
            state.round, gnn.config.steps
        )));
    }
    let adj = neighbourhoods(graph, gnn.config.tau);
    let (h, _) = round_forward(&state.h, &adj, gnn);
    check_finite(&h, graph, "message passing")?;
    Ok(NodeEmbeddingState {
        h,
        round: state.round + 1,
    })
}

/// Runs every round from the initial features.
pub fn embed(graph: &CascadeGraph, gnn: &GnnParams) -> Result<NodeEmbeddingState> {
    let mut state = init_embeddings(graph, gnn)?;
    while state.round < gnn.config.steps {
        state = message_pass(&state, graph, gnn)?;
    }
    Ok(state)
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    p
}

/// `P(c|v) = softmax(Wc h_v)`, one row per node.
pub fn classify(state: &NodeEmbeddingState, gnn: &GnnParams) -> Array2<f64> {
    softmax_rows(&state.h.dot(&gnn.wc.t()))
}

/// Argmax class (1-based) per row; ties go to the lowest class.
pub fn predicted_labels(probs: &Array2<f64>) -> Vec<u32> {
    probs
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            best as u32 + 1
        })
        .collect()
}

fn node_cross_entropy(q: &[f64], p: ArrayView1<f64>) -> f64 {
    q.iter()
        .zip(p.iter())
        .filter(|(q, _)| **q != 0.0)
        .map(|(q, p)| -q * p.max(LOG_FLOOR).ln())
        .sum()
}

/// `−Σ_{v predicted} Σ_c q_c(v) ln P(c|v)`, with probabilities floored at [`LOG_FLOOR`].
pub fn sentiment_loss(probs: &Array2<f64>, graph: &CascadeGraph) -> f64 {
    graph
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.origin == NodeOrigin::Predicted)
        .map(|(v, n)| node_cross_entropy(&n.q, probs.row(v)))
        .sum()
}

/// `Σ_v H(q(v))` over predicted nodes: the minimum of [`sentiment_loss`].
pub fn entropy_floor(graph: &CascadeGraph) -> f64 {
    graph
        .nodes()
        .iter()
        .filter(|n| n.origin == NodeOrigin::Predicted)
        .map(|n| n.q.iter().filter(|q| **q > 0.0).map(|q| -q * q.ln()).sum::<f64>())
        .sum()
}

/// L1 distance between edge features, edges matched by `(parent id, child id)`.
/// An edge present in only one graph contributes `|Δt| + |excitation|`.
pub fn struct_loss(predicted: &CascadeGraph, truth: &CascadeGraph) -> Result<f64> {
    if !predicted.nodes().is_empty()
        && !truth.nodes().is_empty()
        && !predicted.nodes().iter().any(|n| truth.node_index(&n.id).is_some())
    {
        return Err(Error::domain("graphs", "predicted and true graphs share no nodes"));
    }
    let p = predicted.edge_table();
    let t = truth.edge_table();
    let mut loss = 0.0;
    for (key, (dt, ex)) in &p {
        loss += match t.get(key) {
            Some((tdt, tex)) => (dt - tdt).abs() + (ex - tex).abs(),
            None => dt.abs() + ex.abs(),
        };
    }
    for (key, (dt, ex)) in &t {
        if !p.contains_key(key) {
            loss += dt.abs() + ex.abs();
        }
    }
    Ok(loss)
}

/// `λ1 · L_sentiment + λ2 · L_struct`.
pub fn total_loss(probs: &Array2<f64>, predicted: &CascadeGraph, truth: &CascadeGraph, gnn: &GnnParams) -> Result<f64> {
    let ls = sentiment_loss(probs, predicted);
    let lt = struct_loss(predicted, truth)?;
    Ok(gnn.config.lambda1 * ls + gnn.config.lambda2 * lt)
}

/// Gradients of the loss with respect to the three weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnGradient {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub wc: Array2<f64>,
}

impl GnnGradient {
    fn zeros_like(gnn: &GnnParams) -> Self {
        GnnGradient {
            w1: Array2::zeros(gnn.w1.raw_dim()),
            w2: Array2::zeros(gnn.w2.raw_dim()),
            wc: Array2::zeros(gnn.wc.raw_dim()),
        }
    }

    fn add_assign(&mut self, o: &GnnGradient) {
        self.w1 += &o.w1;
        self.w2 += &o.w2;
        self.wc += &o.wc;
    }

    pub fn norm(&self) -> f64 {
        (self.w1.iter().chain(&self.w2).chain(&self.wc).map(|x| x * x).sum::<f64>()).sqrt()
    }

    fn scale(&mut self, k: f64) {
        self.w1 *= k;
        self.w2 *= k;
        self.wc *= k;
    }
}

/// `L_sentiment` and the weight gradient of `λ1 · L_sentiment`, by reverse
/// mode through classification, every round and the gated aggregation.
pub fn sentiment_loss_and_gradient(graph: &CascadeGraph, gnn: &GnnParams) -> Result<(f64, GnnGradient)> {
    let act = gnn.config.activation;
    let adj = neighbourhoods(graph, gnn.config.tau);
    let mut hs = vec![init_embeddings(graph, gnn)?.h];
    let mut ms = Vec::with_capacity(gnn.config.steps);
    for _ in 0..gnn.config.steps {
        let (h, m) = round_forward(hs.last().expect("nonempty"), &adj, gnn);
        check_finite(&h, graph, "message passing")?;
        hs.push(h);
        ms.push(m);
    }
    let top = hs.last().expect("nonempty");
    let probs = softmax_rows(&top.dot(&gnn.wc.t()));
    let lambda1 = gnn.config.lambda1;
    let loss = sentiment_loss(&probs, graph);

    let mut d_logits = Array2::zeros(probs.raw_dim());
    for (v, node) in graph.nodes().iter().enumerate() {
        if node.origin != NodeOrigin::Predicted {
            continue;
        }
        let p = probs.row(v);
        let mut mass = 0.0;
        let mut row = d_logits.row_mut(v);
        for (k, &q) in node.q.iter().enumerate() {
            if q != 0.0 && p[k] >= LOG_FLOOR {
                mass += q;
                row[k] -= q;
            }
        }
        row.scaled_add(mass, &p);
        row *= lambda1;
    }

    let mut grad = GnnGradient::zeros_like(gnn);
    grad.wc = d_logits.t().dot(top);
    let mut d_h = d_logits.dot(&gnn.wc);
    for k in (0..gnn.config.steps).rev() {
        let out = &hs[k + 1];
        let mut d_z = d_h;
        ndarray::Zip::from(&mut d_z)
            .and(out)
            .for_each(|g, &y| *g *= act.slope_from_output(y));
        grad.w1 += &d_z.t().dot(&hs[k]);
        grad.w2 += &d_z.t().dot(&ms[k]);
        let through_w2 = d_z.dot(&gnn.w2);
        // the gated adjacency is symmetric, so its transpose is itself
        d_h = d_z.dot(&gnn.w1) + aggregate(&through_w2, &adj);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            max_steps: 200,
            clip_norm: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub sentiment: f64,
    pub structure: f64,
    pub total: f64,
}

/// Gradient descent on `L_total` summed over `(predicted, true)` graph pairs.
/// Each trace row holds the losses before that step's update.
pub fn train(pairs: &[(CascadeGraph, CascadeGraph)], mut gnn: GnnParams, config: &TrainConfig) -> Result<(GnnParams, Vec<TraceRow>)> {
    if pairs.is_empty() {
        return Err(Error::domain("pairs", "training set is empty"));
    }
    if !(config.learning_rate > 0.0 && config.clip_norm > 0.0) {
        return Err(Error::Config("learning_rate and clip_norm must be > 0".into()));
    }
    // the structure term depends on the graphs only, not on the weights
    let structure: f64 = pairs
        .iter()
        .map(|(p, t)| struct_loss(p, t))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    let mut trace: Vec<TraceRow> = Vec::with_capacity(config.max_steps);
    for step in 0..config.max_steps {
        let parts: Vec<(f64, GnnGradient)> = pairs
            .par_iter()
            .map(|(p, _)| sentiment_loss_and_gradient(p, &gnn))
            .collect::<Result<_>>()?;
        let mut grad = GnnGradient::zeros_like(&gnn);
        let mut sentiment = 0.0;
        for (l, g) in &parts {
            sentiment += l;
            grad.add_assign(g);
        }
        let total = gnn.config.lambda1 * sentiment + gnn.config.lambda2 * structure;
        let norm = grad.norm();
        if !(total.is_finite() && norm.is_finite()) {
            return Err(Error::TrainingDiverged {
                step,
                message: format!("loss {total}, gradient norm {norm}"),
                trace: trace.iter().map(|r| [r.sentiment, r.structure, r.total]).collect(),
            });
        }
        trace.push(TraceRow {
            step,
            sentiment,
            structure,
            total,
        });
        if norm > config.clip_norm {
            grad.scale(config.clip_norm / norm);
        }
        gnn.w1.scaled_add(-config.learning_rate, &grad.w1);
        gnn.w2.scaled_add(-config.learning_rate, &grad.w2);
        gnn.wc.scaled_add(-config.learning_rate, &grad.wc);
    }
    Ok((gnn, trace))
}

/// Picks a parent for each candidate child among admissible candidates
/// (one level up, strictly earlier) by the score
/// `⟨h_child, W2 h_parent⟩ · α[child, parent] · exp(−Δt/τ)`.
///
/// Ties go to the earliest parent, then to the lower node index.
pub fn predict_structure(
    children: &[usize],
    parents: &[usize],
    state: &NodeEmbeddingState,
    graph: &CascadeGraph,
    params: &HawkesParams,
    gnn: &GnnParams,
) -> Result<Vec<(usize, usize)>> {
    let nodes = graph.nodes();
    let mut ordered: Vec<usize> = parents.to_vec();
    ordered.sort_by(|a, b| nodes[*a].time.total_cmp(&nodes[*b].time).then(a.cmp(b)));
    let projected = state.h.dot(&gnn.w2.t());
    let mut out = Vec::with_capacity(children.len());
    for &c in children {
        let child = &nodes[c];
        let mut best: Option<(usize, f64)> = None;
        for &p in &ordered {
            let parent = &nodes[p];
            if parent.level + 1 != child.level || parent.time >= child.time {
                continue;
            }
            let gate = params.alpha()[[child.dim, parent.dim]] * (-(child.time - parent.time) / gnn.config.tau).exp();
            let score = state.h.row(c).dot(&projected.row(p)) * gate;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((p, score));
            }
        }
        match best {
            Some((p, _)) => out.push((c, p)),
            None => {
                return Err(Error::Structural(format!(
                    "node `{}` has no admissible parent",
                    child.id
                )))
            }
        }
    }
    Ok(out)
}

/// Sum of `P` rows is 1 by construction; exposed for diagnostics.
pub fn row_sums(probs: &Array2<f64>) -> Vec<f64> {
    probs.sum_axis(Axis(1)).to_vec()
}
