//! Dynamic graph attention network over the pooled graph.
//!
//! Supernodes attend over their neighbours (plus themselves) with logits
//! built from query/key projections, a temporal term on encoded time, the
//! neighbour's NFS score and the dot product of DeepWalk embeddings.
//! Reviewers are classified from their own features joined with the
//! representation of the supernodes they were pooled into.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{segment_softmax, softmax_rows, Sparse, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{TemporalBipartiteGraph, PRODUCT_TEMPORAL, REVIEWER_TEMPORAL};
use crate::linalg::{dot, Matrix};
use crate::pool::{PooledGraph, WindowSlice};

/// Model variants: the full network and the ablations it is compared with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    #[serde(rename = "full")]
    Full,
    /// NFS scores removed from features, importance and attention.
    #[serde(rename = "A")]
    NoNfs,
    /// One window, no time encoding, time-derived raw features zeroed.
    #[serde(rename = "B")]
    NoTemporal,
    /// Node type hidden and projections shared across types.
    #[serde(rename = "C")]
    TypeAgnostic,
    /// Affine head on the reviewer's own NFS score only.
    #[serde(rename = "D")]
    NfsOnly,
    /// Uniform mean over neighbours instead of learned attention.
    #[serde(rename = "no_attention")]
    NoAttention,
}

impl Variant {
    pub const ABLATIONS: [Variant; 6] = [
        Variant::Full,
        Variant::NoNfs,
        Variant::NoTemporal,
        Variant::TypeAgnostic,
        Variant::NfsOnly,
        Variant::NoAttention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoNfs => "A",
            Variant::NoTemporal => "B",
            Variant::TypeAgnostic => "C",
            Variant::NfsOnly => "D",
            Variant::NoAttention => "no_attention",
        }
    }

    pub fn uses_nfs(self) -> bool {
        self != Variant::NoNfs
    }

    pub fn uses_time(self) -> bool {
        !matches!(self, Variant::NoTemporal | Variant::NfsOnly)
    }

    pub fn typed(self) -> bool {
        self != Variant::TypeAgnostic
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "a" | "a_no_nfs" | "no_nfs" => Ok(Variant::NoNfs),
            "b" | "b_no_temporal" | "no_temporal" => Ok(Variant::NoTemporal),
            "c" | "c_type_agnostic" | "type_agnostic" => Ok(Variant::TypeAgnostic),
            "d" | "d_nfs_only" | "nfs_only" => Ok(Variant::NfsOnly),
            "no_attention" | "noatt" | "mean" => Ok(Variant::NoAttention),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

/// How time enters the attention logit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDifference {
    /// `W_t (e(t_v) − e(t_u))` on encoded times.
    #[default]
    Encoded,
    /// `W_t (t̃_v − t̃_u)` on rescaled scalar times.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepWalkConfig {
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub window: usize,
    pub negatives: usize,
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for DeepWalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 10,
            walks_per_node: 5,
            window: 2,
            negatives: 5,
            dim: 16,
            epochs: 5,
            lr: 0.025,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgaConfig {
    pub layers: usize,
    /// Per-head width and the width heads are mixed back to.
    pub hidden: usize,
    pub heads: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Validation loss must drop by more than this to count as progress.
    pub min_delta: f64,
    pub seed: u64,
    pub leaky_slope: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub time_dim: usize,
    pub time_difference: TimeDifference,
    pub variant: Variant,
    pub deepwalk: DeepWalkConfig,
}

impl Default for DgaConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 8,
            heads: 4,
            lr: 0.005,
            weight_decay: 5e-4,
            dropout: 0.3,
            patience: 200,
            max_epochs: 1000,
            min_delta: 0.0,
            seed: 72,
            leaky_slope: 0.2,
            gamma: 0.5,
            lambda: 0.2,
            time_dim: 8,
            time_difference: TimeDifference::Encoded,
            variant: Variant::Full,
            deepwalk: DeepWalkConfig::default(),
        }
    }
}

impl DgaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.time_dim == 0 {
            return bad("layers, hidden, heads and time_dim must be positive");
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 || self.min_delta < 0.0 {
            return bad("lr must be positive; weight_decay and min_delta non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.leaky_slope > 0.0) {
            return bad("leaky_slope must be positive");
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return bad("patience and max_epochs must be positive");
        }
        let dw = &self.deepwalk;
        if dw.walk_length == 0 || dw.walks_per_node == 0 || dw.dim == 0 || dw.epochs == 0 || !(dw.lr > 0.0) {
            return bad("deepwalk sizes and lr must be positive");
        }
        Ok(())
    }

    fn time_width(&self) -> usize {
        if self.variant.uses_time() {
            self.time_dim
        } else {
            0
        }
    }
}

// ---------------------------------------------------------------------------
// Time encoding

/// Log-spaced initial frequencies between 1 and 10^2.5 rad per span.
pub fn initial_frequencies(dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    (0..dim).map(|i| 10f64.powf(2.5 * i as f64 / (dim - 1) as f64)).collect()
}

/// `sin(ω_i t̃ + φ_i)` for a time already rescaled to the dataset span.
pub fn time_encode(t_tilde: f64, omega: &[f64], phi: &[f64]) -> Vec<f64> {
    omega.iter().zip(phi).map(|(w, p)| (w * t_tilde + p).sin()).collect()
}

/// Maps epoch seconds onto `[0, 1]` over `span`; a zero-length span maps to 0.
pub fn rescale_time(t: f64, span: (f64, f64)) -> f64 {
    let width = span.1 - span.0;
    if width <= 0.0 {
        0.0
    } else {
        (t - span.0) / width
    }
}

// ---------------------------------------------------------------------------
// DeepWalk

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Skip-gram embeddings from uniform random walks. Rows of nodes with no
/// neighbours keep their unit-norm random initialisation.
pub fn global_embed(n: usize, edges: &[(usize, usize)], cfg: &DeepWalkConfig, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = cfg.dim;
    let mut w_in = Matrix::zeros(n, dim);
    for r in 0..n {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        w_in.row_mut(r).iter_mut().zip(&v).for_each(|(o, x)| *o = x / norm);
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let mut walks: Vec<Vec<usize>> = Vec::with_capacity(n * cfg.walks_per_node);
    let mut starts: Vec<usize> = (0..n).filter(|&v| !adj[v].is_empty()).collect();
    for _ in 0..cfg.walks_per_node {
        starts.shuffle(&mut rng);
        for &s in &starts {
            let mut walk = vec![s];
            while walk.len() < cfg.walk_length {
                let cur = *walk.last().expect("non-empty walk");
                walk.push(adj[cur][rng.gen_range(0..adj[cur].len())]);
            }
            walks.push(walk);
        }
    }
    if walks.is_empty() {
        return w_in;
    }
    // Unigram^0.75 negative table.
    let mut counts = vec![0.0f64; n];
    walks.iter().flatten().for_each(|&v| counts[v] += 1.0);
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for c in &counts {
        acc += c.powf(0.75);
        cdf.push(acc);
    }
    let draw = |rng: &mut ChaCha8Rng| {
        let x = rng.gen::<f64>() * acc;
        cdf.partition_point(|&c| c <= x).min(n - 1)
    };
    let mut w_out = Matrix::zeros(n, dim);
    let total_steps = (cfg.epochs * walks.iter().map(Vec::len).sum::<usize>()).max(1) as f64;
    let mut step = 0usize;
    let mut grad_in = vec![0.0; dim];
    for _ in 0..cfg.epochs {
        for walk in &walks {
            for (i, &center) in walk.iter().enumerate() {
                let lr = cfg.lr * (1.0 - step as f64 / total_steps).max(1e-4);
                step += 1;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(walk.len());
                for j in lo..hi {
                    if j == i {
                        continue;
                    }
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    let mut targets = vec![(walk[j], 1.0)];
                    for _ in 0..cfg.negatives {
                        let neg = draw(&mut rng);
                        if neg != walk[j] {
                            targets.push((neg, 0.0));
                        }
                    }
                    for (t, label) in targets {
                        let score = sigmoid(dot(w_in.row(center), w_out.row(t)));
                        let g = lr * (label - score);
                        for k in 0..dim {
                            grad_in[k] += g * w_out.data[t * dim + k];
                            w_out.data[t * dim + k] += g * w_in.data[center * dim + k];
                        }
                    }
                    w_in.row_mut(center).iter_mut().zip(&grad_in).for_each(|(o, g)| *o += g);
                }
            }
        }
    }
    w_in
}

// ---------------------------------------------------------------------------
// Attention primitives

/// Pre-activation pieces of one attention logit, already projected.
pub struct LogitTerms<'a> {
    /// `W_q h_v`
    pub query: &'a [f64],
    /// `W_k h_u`
    pub key: &'a [f64],
    /// `W_t (e(t_v) − e(t_u))`; empty when time is unused.
    pub temporal: &'a [f64],
    /// `a`, laid out as `[a_q ‖ a_k ‖ a_t]`.
    pub a: &'a [f64],
    pub s_u: f64,
    pub z_v: &'a [f64],
    pub z_u: &'a [f64],
}

/// `LeakyReLU(aᵀ[q ‖ k ‖ t] + γ s_u + λ z_vᵀ z_u)`.
pub fn attention_logit(terms: &LogitTerms<'_>, gamma: f64, lambda: f64, slope: f64) -> f64 {
    let h = terms.query.len();
    let mut pre = dot(&terms.a[..h], terms.query) + dot(&terms.a[h..2 * h], terms.key);
    if !terms.temporal.is_empty() {
        pre += dot(&terms.a[2 * h..3 * h], terms.temporal);
    }
    pre += gamma * terms.s_u + lambda * dot(terms.z_v, terms.z_u);
    if pre > 0.0 {
        pre
    } else {
        slope * pre
    }
}

/// Softmax over one neighbourhood's logits.
pub fn attention_weights(logits: &[f64]) -> Vec<f64> {
    segment_softmax(logits, &vec![0; logits.len()])
}

// ---------------------------------------------------------------------------
// Inputs

/// Width of the static per-node feature block.
pub const STATIC_DIM: usize = 12;
const TYPE_COL: usize = 10;
const NFS_COL: usize = 11;

/// Unified static features per graph node: reviewer raw block, product raw
/// block, type indicator, NFS score. Columns a variant must not see are
/// zeroed here.
pub fn node_features(
    g: &TemporalBipartiteGraph,
    reviewer_raw: &Matrix,
    product_raw: &Matrix,
    s_norm: &[f64],
    variant: Variant,
) -> Matrix {
    let m = g.num_reviewers();
    let mut x = Matrix::zeros(g.num_nodes(), STATIC_DIM);
    for v in 0..g.num_nodes() {
        let row = x.row_mut(v);
        if v < m {
            row[..6].copy_from_slice(reviewer_raw.row(v));
            row[TYPE_COL] = 1.0;
            if !variant.uses_time() {
                REVIEWER_TEMPORAL.iter().for_each(|&c| row[c] = 0.0);
            }
        } else {
            row[6..10].copy_from_slice(product_raw.row(v - m));
            if !variant.uses_time() {
                PRODUCT_TEMPORAL.iter().for_each(|&c| row[6 + c] = 0.0);
            }
        }
        if !variant.typed() {
            row[TYPE_COL] = 0.0;
        }
        row[NFS_COL] = if variant.uses_nfs() { s_norm[v] } else { 0.0 };
    }
    x
}

/// Everything the network reads, in supernode index space.
#[derive(Clone, Debug)]
pub struct DgaInput {
    pub static_x: Matrix,
    /// Convex pooling weights: supernode × member entry.
    pub pool: Rc<Sparse>,
    /// Rescaled time of every member entry.
    pub member_time: Vec<f64>,
    pub node_time: Vec<f64>,
    /// Pooled share of reviewers in each supernode.
    pub rho: Vec<f64>,
    pub s_norm: Vec<f64>,
    /// Directed attention edges, self-loops included.
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
    pub z_dot: Vec<f64>,
    pub embeddings: Matrix,
    /// Readout row × supernode averaging weights.
    pub readout: Rc<Sparse>,
    pub own_x: Matrix,
    pub own_time: Vec<f64>,
    pub own_s: Vec<f64>,
    gather_src: Rc<Sparse>,
    gather_dst: Rc<Sparse>,
    uniform: Vec<f64>,
}

/// Raw material for [`DgaInput`]; edges are undirected and self-loops are
/// added automatically.
pub struct InputParts {
    pub static_x: Matrix,
    pub pool: Sparse,
    pub member_time: Vec<f64>,
    pub rho: Vec<f64>,
    pub s_norm: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
    pub embeddings: Matrix,
    pub readout: Sparse,
    pub own_x: Matrix,
    pub own_time: Vec<f64>,
    pub own_s: Vec<f64>,
}

impl DgaInput {
    pub fn new(p: InputParts) -> Result<Self> {
        let n = p.static_x.rows;
        let check = |expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, got })
            }
        };
        check(STATIC_DIM, p.static_x.cols)?;
        check(n, p.pool.rows)?;
        check(p.member_time.len(), p.pool.cols)?;
        check(n, p.rho.len())?;
        check(n, p.s_norm.len())?;
        check(n, p.embeddings.rows)?;
        check(n, p.readout.cols)?;
        check(p.readout.rows, p.own_x.rows)?;
        check(STATIC_DIM, p.own_x.cols)?;
        check(p.readout.rows, p.own_time.len())?;
        check(p.readout.rows, p.own_s.len())?;
        let mut pairs: Vec<(usize, usize)> = (0..n).map(|v| (v, v)).collect();
        for &(a, b) in &p.edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) outside {n} supernodes")));
            }
            if a != b {
                pairs.push((a, b));
                pairs.push((b, a));
            }
        }
        pairs.sort_unstable_by_key(|&(s, d)| (d, s));
        pairs.dedup();
        let src: Vec<usize> = pairs.iter().map(|e| e.0).collect();
        let dst: Vec<usize> = pairs.iter().map(|e| e.1).collect();
        let mut indeg = vec![0usize; n];
        dst.iter().for_each(|&d| indeg[d] += 1);
        let uniform = dst.iter().map(|&d| 1.0 / indeg[d] as f64).collect();
        let z_dot = pairs
            .iter()
            .map(|&(s, d)| dot(p.embeddings.row(s), p.embeddings.row(d)))
            .collect();
        let node_time = p.pool.matmul(&Matrix::from_vec(p.member_time.len(), 1, p.member_time.clone())).data;
        Ok(Self {
            gather_src: Rc::new(Sparse::selection(&src, n)),
            gather_dst: Rc::new(Sparse::selection(&dst, n)),
            uniform,
            static_x: p.static_x,
            pool: Rc::new(p.pool),
            member_time: p.member_time,
            node_time,
            rho: p.rho,
            s_norm: p.s_norm,
            src: Rc::new(src),
            dst: Rc::new(dst),
            z_dot,
            embeddings: p.embeddings,
            readout: Rc::new(p.readout),
            own_x: p.own_x,
            own_time: p.own_time,
            own_s: p.own_s,
        })
    }

    pub fn num_supernodes(&self) -> usize {
        self.static_x.rows
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn num_readout(&self) -> usize {
        self.own_x.rows
    }
}

/// Assembles the network input from a pooled graph. `node_x` rows are
/// [`node_features`]; `readout_nodes` are the reviewers to classify. A
/// reviewer's context is the mean over the supernodes holding it, else over
/// those holding its products, else empty.
pub fn build_input(
    g: &TemporalBipartiteGraph,
    slices: &[WindowSlice],
    pooled: &PooledGraph,
    node_x: &Matrix,
    s_norm: &[f64],
    readout_nodes: &[usize],
    cfg: &DgaConfig,
) -> Result<DgaInput> {
    let span = g
        .time_range()
        .map(|(a, b)| (a as f64, b as f64))
        .ok_or(Error::EmptyGraph { min_reviews: 0 })?;
    let by_window: HashMap<usize, &WindowSlice> = slices.iter().map(|s| (s.window, s)).collect();
    let m = g.num_reviewers();
    let n = pooled.num_supernodes();
    let mut triplets = Vec::new();
    let mut member_time = Vec::new();
    let mut static_x = Matrix::zeros(n, STATIC_DIM);
    let mut rho = vec![0.0; n];
    let mut pooled_s = vec![0.0; n];
    for (k, sn) in pooled.supernodes.iter().enumerate() {
        let slice = by_window
            .get(&sn.window)
            .ok_or_else(|| Error::InvalidArgument(format!("no slice for window {}", sn.window)))?;
        for (&v, w) in sn.members.iter().zip(sn.pool_weights()) {
            let pos = slice
                .nodes
                .binary_search(&v)
                .map_err(|_| Error::InvalidArgument(format!("node {v} not active in window {}", sn.window)))?;
            triplets.push((k, member_time.len(), w));
            member_time.push(rescale_time(slice.times[pos], span));
            static_x.row_mut(k).iter_mut().zip(node_x.row(v)).for_each(|(o, x)| *o += w * x);
            if v < m {
                rho[k] += w;
            }
            pooled_s[k] += w * s_norm[v];
        }
    }
    let pool = Sparse::from_triplets(n, member_time.len(), &triplets);
    let edges: Vec<(usize, usize)> = pooled.superedges.iter().map(|e| (e.a, e.b)).collect();
    let embeddings = global_embed(n, &edges, &cfg.deepwalk, cfg.seed);
    let membership = pooled.membership(g.num_nodes());
    let mut readout = Vec::new();
    let mut own_x = Matrix::zeros(readout_nodes.len(), STATIC_DIM);
    let mut own_time = Vec::with_capacity(readout_nodes.len());
    let mut own_s = Vec::with_capacity(readout_nodes.len());
    for (i, &r) in readout_nodes.iter().enumerate() {
        if r >= m {
            return Err(Error::InvalidArgument(format!("readout node {r} is not a reviewer")));
        }
        let mut holders = membership[r].clone();
        if holders.is_empty() {
            holders = g.neighbors(r).iter().flat_map(|&p| membership[p].iter().copied()).collect();
            holders.sort_unstable();
            holders.dedup();
        }
        let share = 1.0 / holders.len().max(1) as f64;
        readout.extend(holders.iter().map(|&h| (i, h, share)));
        own_x.row_mut(i).copy_from_slice(node_x.row(r));
        let times: Vec<f64> = g.incident_reviews(r).iter().map(|&k| g.reviews()[k].timestamp as f64).collect();
        own_time.push(rescale_time(crate::linalg::mean(&times), span));
        own_s.push(s_norm[r]);
    }
    let gamma_s = if cfg.variant.uses_nfs() { pooled_s } else { vec![0.0; n] };
    DgaInput::new(InputParts {
        static_x,
        pool,
        member_time,
        rho,
        s_norm: gamma_s,
        edges,
        embeddings,
        readout: Sparse::from_triplets(readout_nodes.len(), n, &readout),
        own_x,
        own_time,
        own_s,
    })
}

// ---------------------------------------------------------------------------
// Model

pub type Params = BTreeMap<String, Matrix>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgaModel {
    pub config: DgaConfig,
    pub params: Params,
    /// DeepWalk embeddings of the supernodes the model was trained on.
    pub embeddings: Option<Matrix>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect())
}

fn head_key(l: usize, h: usize, name: &str) -> String {
    format!("l{l}.h{h}.{name}")
}

impl DgaModel {
    /// Glorot-initialised model; the classifier starts at zero so the
    /// first prediction is uniform.
    pub fn new(config: DgaConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = Params::new();
        let v = config.variant;
        if v == Variant::NfsOnly {
            p.insert("nfs.w".into(), Matrix::zeros(1, 2));
            p.insert("nfs.b".into(), Matrix::zeros(1, 2));
            return Ok(Self {
                config,
                params: p,
                embeddings: None,
            });
        }
        let t = config.time_width();
        let hd = config.hidden;
        if t > 0 {
            p.insert("time.omega".into(), Matrix::from_vec(1, t, initial_frequencies(t)));
            p.insert("time.phi".into(), Matrix::zeros(1, t));
        }
        let mut din = STATIC_DIM + t;
        for l in 0..config.layers {
            for h in 0..config.heads {
                let mut put = |name: &str, r: usize, c: usize, rng: &mut ChaCha8Rng| {
                    p.insert(head_key(l, h, name), glorot(rng, r, c));
                };
                let kinds: &[&str] = if v.typed() { &["_r", "_p"] } else { &[""] };
                for kind in kinds {
                    put(&format!("wv{kind}"), din, hd, &mut rng);
                }
                if v != Variant::NoAttention {
                    put("wq", din, hd, &mut rng);
                    for kind in kinds {
                        put(&format!("wk{kind}"), din, hd, &mut rng);
                    }
                    put("aq", hd, 1, &mut rng);
                    put("ak", hd, 1, &mut rng);
                    if t > 0 {
                        let tin = match config.time_difference {
                            TimeDifference::Encoded => t,
                            TimeDifference::Raw => 1,
                        };
                        put("wt", tin, hd, &mut rng);
                        put("at", hd, 1, &mut rng);
                    }
                }
            }
            p.insert(format!("l{l}.mix"), glorot(&mut rng, config.heads * hd, hd));
            p.insert(format!("l{l}.mix_b"), Matrix::zeros(1, hd));
            din = hd;
        }
        p.insert("out.w_own".into(), Matrix::zeros(STATIC_DIM + t, 2));
        p.insert("out.w_ctx".into(), Matrix::zeros(hd, 2));
        p.insert("out.b".into(), Matrix::zeros(1, 2));
        Ok(Self {
            config,
            params: p,
            embeddings: None,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(|m| m.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(Matrix::is_finite)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.config.validate()?;
        if !m.is_finite() {
            return Err(Error::InvalidArgument("checkpoint holds non-finite parameters".into()));
        }
        Ok(m)
    }
}

/// A recorded forward pass.
pub struct Forward {
    pub tape: Tape,
    pub params: Vec<(String, Var)>,
    /// Readout row × {real, fake} scores.
    pub logits: Var,
    /// Attention weights per layer, per head, per edge.
    pub attention: Vec<Vec<Vec<f64>>>,
}

struct Pass<'a> {
    model: &'a DgaModel,
    input: &'a DgaInput,
    vars: HashMap<String, Var>,
    time_nodes: Option<Var>,
    edge_const: Matrix,
    rho: Rc<Vec<f64>>,
    rho_c: Rc<Vec<f64>>,
}

impl Pass<'_> {
    fn p(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("model is missing parameter `{name}`")))
    }

    /// `H W_r` scaled by ρ plus `H W_p` scaled by 1 − ρ, or `H W` if shared.
    fn typed_proj(&self, t: &mut Tape, h: Var, l: usize, head: usize, base: &str) -> Result<Var> {
        if self.model.config.variant.typed() {
            let wr = self.p(&head_key(l, head, &format!("{base}_r")))?;
            let wp = self.p(&head_key(l, head, &format!("{base}_p")))?;
            let a = t.matmul(h, wr);
            let a = t.scale_rows(a, self.rho.clone());
            let b = t.matmul(h, wp);
            let b = t.scale_rows(b, self.rho_c.clone());
            Ok(t.add(a, b))
        } else {
            let w = self.p(&head_key(l, head, base))?;
            Ok(t.matmul(h, w))
        }
    }

    fn layer(&self, t: &mut Tape, h: Var, l: usize, rng: &mut Option<&mut ChaCha8Rng>, attn: &mut Vec<Vec<f64>>) -> Result<Var> {
        let cfg = &self.model.config;
        let inp = self.input;
        let n = inp.num_supernodes();
        let mut outs = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let alpha = if cfg.variant == Variant::NoAttention {
                t.leaf(Matrix::from_vec(inp.num_edges(), 1, inp.uniform.clone()))
            } else {
                let wq = self.p(&head_key(l, head, "wq"))?;
                let q = t.matmul(h, wq);
                let sq = t.matmul(q, self.p(&head_key(l, head, "aq"))?);
                let k = self.typed_proj(t, h, l, head, "wk")?;
                let sk = t.matmul(k, self.p(&head_key(l, head, "ak"))?);
                let (dst_side, src_side) = match self.time_nodes {
                    Some(tn) => {
                        let tt = t.matmul(tn, self.p(&head_key(l, head, "wt"))?);
                        let st = t.matmul(tt, self.p(&head_key(l, head, "at"))?);
                        (t.add(sq, st), t.sub(sk, st))
                    }
                    None => (sq, sk),
                };
                let d = t.spmm(inp.gather_dst.clone(), dst_side);
                let s = t.spmm(inp.gather_src.clone(), src_side);
                let pre = t.add(d, s);
                let pre = t.add_const(pre, &self.edge_const);
                let act = t.leaky_relu(pre, cfg.leaky_slope);
                t.segment_softmax(act, inp.dst.clone())
            };
            attn.push(t.value(alpha).data.clone());
            let alpha = match rng.as_deref_mut() {
                Some(r) if cfg.dropout > 0.0 => {
                    let keep = 1.0 - cfg.dropout;
                    let mask: Vec<f64> = (0..inp.num_edges())
                        .map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    t.mask(alpha, Rc::new(mask))
                }
                _ => alpha,
            };
            let v = self.typed_proj(t, h, l, head, "wv")?;
            outs.push(t.edge_aggregate(alpha, v, inp.src.clone(), inp.dst.clone(), n));
        }
        let cat = if outs.len() == 1 { outs[0] } else { t.concat(&outs) };
        let mixed = t.matmul(cat, self.p(&format!("l{l}.mix"))?);
        let mixed = t.add_row(mixed, self.p(&format!("l{l}.mix_b"))?);
        Ok(if l + 1 < cfg.layers { t.elu(mixed) } else { mixed })
    }
}

fn time_block(t: &mut Tape, times: &[f64], omega: Var, phi: Var) -> Var {
    let tv = t.leaf(Matrix::from_vec(times.len(), 1, times.to_vec()));
    let arg = t.matmul(tv, omega);
    let arg = t.add_row(arg, phi);
    t.sin(arg)
}

/// Records a forward pass. `dropout` supplies the mask RNG in training mode.
pub fn forward(model: &DgaModel, input: &DgaInput, mut dropout: Option<&mut ChaCha8Rng>) -> Result<Forward> {
    let cfg = &model.config;
    let mut tape = Tape::new();
    let mut vars = HashMap::new();
    let mut params = Vec::with_capacity(model.params.len());
    for (name, value) in &model.params {
        let v = tape.leaf(value.clone());
        vars.insert(name.clone(), v);
        params.push((name.clone(), v));
    }
    let r = input.num_readout();
    if cfg.variant == Variant::NfsOnly {
        let s = tape.leaf(Matrix::from_vec(r, 1, input.own_s.clone()));
        let z = tape.matmul(s, vars["nfs.w"]);
        let logits = tape.add_row(z, vars["nfs.b"]);
        return Ok(Forward {
            tape,
            params,
            logits,
            attention: Vec::new(),
        });
    }
    let n = input.num_supernodes();
    let gamma = if cfg.variant.uses_nfs() { cfg.gamma } else { 0.0 };
    let edge_const = Matrix::from_vec(
        input.num_edges(),
        1,
        (0..input.num_edges())
            .map(|e| gamma * input.s_norm[input.src[e]] + cfg.lambda * input.z_dot[e])
            .collect(),
    );
    let x_static = tape.leaf(input.static_x.clone());
    let own_static = tape.leaf(input.own_x.clone());
    let (x0, own, time_nodes) = if cfg.variant.uses_time() {
        let (omega, phi) = (vars["time.omega"], vars["time.phi"]);
        let members = time_block(&mut tape, &input.member_time, omega, phi);
        let pooled = tape.spmm(input.pool.clone(), members);
        let own_te = time_block(&mut tape, &input.own_time, omega, phi);
        let x0 = tape.concat(&[x_static, pooled]);
        let own = tape.concat(&[own_static, own_te]);
        let tn = match cfg.time_difference {
            TimeDifference::Encoded => pooled,
            TimeDifference::Raw => tape.leaf(Matrix::from_vec(n, 1, input.node_time.clone())),
        };
        (x0, own, Some(tn))
    } else {
        (x_static, own_static, None)
    };
    let pass = Pass {
        model,
        input,
        vars,
        time_nodes,
        edge_const,
        rho_c: Rc::new(input.rho.iter().map(|p| 1.0 - p).collect()),
        rho: Rc::new(input.rho.clone()),
    };
    let mut h = x0;
    let mut attention = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let mut per_head = Vec::with_capacity(cfg.heads);
        h = pass.layer(&mut tape, h, l, &mut dropout, &mut per_head)?;
        attention.push(per_head);
    }
    let ctx = tape.spmm(input.readout.clone(), h);
    let a = tape.matmul(own, pass.p("out.w_own")?);
    let b = tape.matmul(ctx, pass.p("out.w_ctx")?);
    let logits = tape.add(a, b);
    let logits = tape.add_row(logits, pass.p("out.b")?);
    Ok(Forward {
        tape,
        params,
        logits,
        attention,
    })
}

/// One attention layer in evaluation mode on an explicit input `h`.
pub fn layer_forward(model: &DgaModel, input: &DgaInput, h: &Matrix, layer: usize) -> Result<Matrix> {
    let cfg = &model.config;
    if layer >= cfg.layers || cfg.variant == Variant::NfsOnly {
        return Err(Error::InvalidArgument(format!("model has no attention layer {layer}")));
    }
    let mut tape = Tape::new();
    let vars: HashMap<String, Var> = model.params.iter().map(|(k, v)| (k.clone(), tape.leaf(v.clone()))).collect();
    let time_nodes = if cfg.variant.uses_time() {
        Some(match cfg.time_difference {
            TimeDifference::Encoded => {
                let members = time_block(&mut tape, &input.member_time, vars["time.omega"], vars["time.phi"]);
                tape.spmm(input.pool.clone(), members)
            }
            TimeDifference::Raw => tape.leaf(Matrix::from_vec(input.num_supernodes(), 1, input.node_time.clone())),
        })
    } else {
        None
    };
    let gamma = if cfg.variant.uses_nfs() { cfg.gamma } else { 0.0 };
    let pass = Pass {
        model,
        input,
        vars,
        time_nodes,
        edge_const: Matrix::from_vec(
            input.num_edges(),
            1,
            (0..input.num_edges())
                .map(|e| gamma * input.s_norm[input.src[e]] + cfg.lambda * input.z_dot[e])
                .collect(),
        ),
        rho_c: Rc::new(input.rho.iter().map(|p| 1.0 - p).collect()),
        rho: Rc::new(input.rho.clone()),
    };
    let hv = tape.leaf(h.clone());
    let out = pass.layer(&mut tape, hv, layer, &mut None, &mut Vec::new())?;
    Ok(tape.value(out).clone())
}

/// Class probabilities per readout row (columns: real, fake).
pub fn predict_proba(model: &DgaModel, input: &DgaInput) -> Result<Matrix> {
    let f = forward(model, input, None)?;
    Ok(softmax_rows(f.tape.value(f.logits)))
}

/// Probability of the fake class per readout row.
pub fn predict_fake(model: &DgaModel, input: &DgaInput) -> Result<Vec<f64>> {
    Ok(predict_proba(model, input)?.column(1))
}

// ---------------------------------------------------------------------------
// Training

/// Inverse-frequency weights so both classes contribute equally.
pub fn class_weights(labels: &[u8], rows: &[usize]) -> Vec<f64> {
    let pos = rows.iter().filter(|&&r| labels[r] == 1).count() as f64;
    let neg = rows.len() as f64 - pos;
    let n = rows.len() as f64;
    rows.iter()
        .map(|&r| {
            let c = if labels[r] == 1 { pos } else { neg };
            n / (2.0 * c)
        })
        .collect()
}

fn loss_on(t: &mut Tape, logits: Var, labels: &[u8], rows: &[usize]) -> Var {
    let targets: Vec<usize> = rows.iter().map(|&r| labels[r] as usize).collect();
    t.softmax_xent(logits, Rc::new(rows.to_vec()), Rc::new(targets), Rc::new(class_weights(labels, rows)))
}

/// Class-balanced cross-entropy of the model in evaluation mode.
pub fn evaluate_loss(model: &DgaModel, input: &DgaInput, labels: &[u8], rows: &[usize]) -> Result<f64> {
    let mut f = forward(model, input, None)?;
    let l = loss_on(&mut f.tape, f.logits, labels, rows);
    Ok(f.tape.value(l).data[0])
}

/// Data-loss gradients (no weight decay) keyed by parameter name.
pub fn gradients(model: &DgaModel, input: &DgaInput, labels: &[u8], rows: &[usize], dropout: Option<&mut ChaCha8Rng>) -> Result<(f64, Params)> {
    let mut f = forward(model, input, dropout)?;
    let l = loss_on(&mut f.tape, f.logits, labels, rows);
    let loss = f.tape.value(l).data[0];
    let grads = f.tape.backward(l);
    let out = f
        .params
        .iter()
        .map(|(name, v)| {
            let shape = model.params[name].shape();
            (name.clone(), grads[v.index()].clone().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1)))
        })
        .collect();
    Ok((loss, out))
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Params,
    v: Params,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Params::new(),
            v: Params::new(),
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| Matrix::zeros(p.rows, p.cols));
            let v = self.v.entry(name.clone()).or_insert_with(|| Matrix::zeros(p.rows, p.cols));
            for k in 0..p.data.len() {
                let gk = g.data[k] + self.weight_decay * p.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                p.data[k] -= self.lr * (m.data[k] / c1) / ((v.data[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Row indices of the readout split into train, validation and test.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split with the given train and validation fractions; the
/// remainder is the test set.
pub fn stratified_split(labels: &[u8], train: f64, val: f64, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Split::default();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let a = (n * train).round() as usize;
        let b = ((n * (train + val)).round() as usize).max(a);
        out.train.extend_from_slice(&idx[..a.min(idx.len())]);
        out.val.extend_from_slice(&idx[a.min(idx.len())..b.min(idx.len())]);
        out.test.extend_from_slice(&idx[b.min(idx.len())..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: DgaModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

pub fn write_history_csv<W: std::io::Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for h in history {
        w.write_record([h.epoch.to_string(), h.train_loss.to_string(), h.val_loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Full-batch Adam on class-balanced cross-entropy over `split.train`, early
/// stopping on the validation loss. `labels` index readout rows.
pub fn train(mut model: DgaModel, input: &DgaInput, labels: &[u8], split: &Split) -> Result<TrainOutcome> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if labels.len() != input.num_readout() {
        return Err(Error::DimensionMismatch {
            expected: input.num_readout(),
            got: labels.len(),
        });
    }
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let val_rows = if split.val.is_empty() { &split.train } else { &split.val };
    model.embeddings = Some(input.embeddings.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let mut adam = Adam::new(cfg.lr, cfg.weight_decay);
    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut history = Vec::new();
    let mut stale = 0usize;
    let mut stopped_early = false;
    for epoch in 0..cfg.max_epochs {
        let (train_loss, grads) = gradients(&model, input, labels, &split.train, Some(&mut rng))?;
        let val_loss = evaluate_loss(&model, input, labels, val_rows)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            let loss = if train_loss.is_finite() { val_loss } else { train_loss };
            log::error!("training diverged at epoch {epoch} (loss {loss})");
            return Err(Error::Diverged { epoch, loss });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 - cfg.min_delta {
            best = (val_loss, epoch, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
        adam.step(&mut model.params, &grads);
    }
    log::info!(
        "{} trained {} epochs, best val loss {:.4} at epoch {}",
        cfg.variant,
        history.len(),
        best.0,
        best.1
    );
    model.params = best.2;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.1,
        stopped_early,
    })
}

/// Tensors whose gradient norm is below this are compared in absolute terms.
/// Central differences at ε = 1e-5 carry ~1e-11 of rounding noise per entry,
/// which would otherwise read as a 100 % error on a gradient that is zero.
pub const GRAD_NORM_FLOOR: f64 = 1e-5;

/// Largest per-tensor relative error `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖, floor)`
/// between analytic gradients and central differences of the data loss
/// (dropout off).
pub fn grad_check(model: &DgaModel, input: &DgaInput, labels: &[u8], rows: &[usize], eps: f64) -> Result<f64> {
    let (_, analytic) = gradients(model, input, labels, rows, None)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (name, value) in &model.params {
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for k in 0..value.data.len() {
            probe.params.get_mut(name).expect("same keys").data[k] = value.data[k] + eps;
            let plus = evaluate_loss(&probe, input, labels, rows)?;
            probe.params.get_mut(name).expect("same keys").data[k] = value.data[k] - eps;
            let minus = evaluate_loss(&probe, input, labels, rows)?;
            probe.params.get_mut(name).expect("same keys").data[k] = value.data[k];
            let num = (plus - minus) / (2.0 * eps);
            let ana = analytic[name].data[k];
            diff2 += (ana - num).powi(2);
            a2 += ana * ana;
            n2 += num * num;
        }
        let denom = a2.sqrt().max(n2.sqrt()).max(GRAD_NORM_FLOOR);
        if diff2 > 0.0 {
            let rel = diff2.sqrt() / denom;
            log::debug!("grad_check {name}: {rel:.3e}");
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Gives every parameter (classifier included) a random value so that no
/// gradient path is trivially zero.
pub fn randomize(model: &mut DgaModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in model.params.values_mut() {
        m.data.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
    }
}

/// Random pooled-graph-shaped input for tests and gradient checks.
pub fn toy_input(n: usize, readout: usize, seed: u64) -> Result<DgaInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let static_x = Matrix::from_vec(n, STATIC_DIM, (0..n * STATIC_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let members = 2 * n;
    let triplets: Vec<_> = (0..members).map(|i| (i % n, i, 0.5)).collect();
    let member_time = (0..members).map(|_| rng.gen::<f64>()).collect();
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((v, rng.gen_range(0..v)));
        if rng.gen_bool(0.5) {
            edges.push((v, rng.gen_range(0..n)));
        }
    }
    let embeddings = Matrix::from_vec(n, 4, (0..n * 4).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let mut read = Vec::new();
    for r in 0..readout {
        read.push((r, rng.gen_range(0..n), 0.5));
        read.push((r, rng.gen_range(0..n), 0.5));
    }
    DgaInput::new(InputParts {
        static_x,
        pool: Sparse::from_triplets(n, members, &triplets),
        member_time,
        rho: (0..n).map(|_| rng.gen::<f64>()).collect(),
        s_norm: (0..n).map(|_| rng.gen::<f64>()).collect(),
        edges,
        embeddings,
        readout: Sparse::from_triplets(readout, n, &read),
        own_x: Matrix::from_vec(readout, STATIC_DIM, (0..readout * STATIC_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        own_time: (0..readout).map(|_| rng.gen::<f64>()).collect(),
        own_s: (0..readout).map(|_| rng.gen::<f64>()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg(variant: Variant) -> DgaConfig {
        DgaConfig {
            variant,
            ..DgaConfig::default()
        }
    }

    fn balanced_labels(n: usize) -> Vec<u8> {
        (0..n).map(|i| (i % 2) as u8).collect()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ABLATIONS {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(serde_json::from_str::<Variant>(&json).unwrap(), v);
        }
        assert!("Z".parse::<Variant>().is_err());
    }

    #[test]
    fn time_encoding_examples() {
        let omega = initial_frequencies(8);
        assert!(time_encode(0.0, &omega, &[0.0; 8]).iter().all(|&x| x == 0.0));
        let max_w = omega.iter().copied().fold(0.0, f64::max);
        let mut t = 0.0;
        while t < 1.0 {
            let a = time_encode(t, &omega, &[0.3; 8]);
            let b = time_encode(t + 1e-4, &omega, &[0.3; 8]);
            for (x, y) in a.iter().zip(&b) {
                assert!(x.abs() <= 1.0);
                assert!((x - y).abs() <= max_w * 1e-4 + 1e-15);
            }
            t += 0.01;
        }
        assert_eq!(rescale_time(5.0, (5.0, 5.0)), 0.0);
        assert_eq!(rescale_time(7.5, (5.0, 10.0)), 0.5);
    }

    #[test]
    fn deepwalk_isolated_node_keeps_unit_init() {
        let edges = [(0, 1), (1, 2), (2, 0)];
        let z = global_embed(4, &edges, &DeepWalkConfig::default(), 3);
        let norm = z.row(3).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(z, global_embed(4, &edges, &DeepWalkConfig::default(), 3));
    }

    #[test]
    fn deepwalk_separates_bridged_cliques() {
        let mut edges = Vec::new();
        for base in [0, 6] {
            for a in 0..6 {
                for b in a + 1..6 {
                    edges.push((base + a, base + b));
                }
            }
        }
        edges.push((5, 6));
        let z = global_embed(12, &edges, &DeepWalkConfig::default(), 72);
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for a in 0..12 {
            for b in a + 1..12 {
                let c = crate::linalg::cosine(z.row(a), z.row(b));
                if (a < 6) == (b < 6) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        assert!(intra / ni as f64 > inter / nx as f64);
    }

    #[test]
    fn attention_logit_examples() {
        let q = [0.2, -0.4];
        let k = [0.5, 0.1];
        let a = [1.0, 2.0, -1.0, 0.5, 3.0, 3.0];
        let z = [0.0, 0.0];
        let base = LogitTerms {
            query: &q,
            key: &k,
            temporal: &[],
            a: &a,
            s_u: 0.7,
            z_v: &z,
            z_u: &z,
        };
        let gat = dot(&a[..2], &q) + dot(&a[2..4], &k);
        let expect = if gat > 0.0 { gat } else { 0.2 * gat };
        assert!((attention_logit(&base, 0.0, 0.0, 0.2) - expect).abs() < 1e-15);
        let zero_t = [0.0, 0.0];
        let with_t = LogitTerms { temporal: &zero_t, ..base };
        assert!((attention_logit(&with_t, 0.0, 0.0, 0.2) - expect).abs() < 1e-15);

        let q = [1.0, 1.0];
        let pos = LogitTerms { query: &q, ..base };
        let l0 = attention_logit(&pos, 0.5, 0.0, 0.2);
        let bumped = LogitTerms { s_u: 0.7 + 0.3, ..pos };
        assert!((attention_logit(&bumped, 0.5, 0.0, 0.2) - l0 - 0.5 * 0.3).abs() < 1e-12);

        let unit = [0.6, 0.8];
        let zq = [0.0, 0.0];
        let only_z = LogitTerms {
            query: &zq,
            key: &zq,
            s_u: 0.0,
            z_v: &unit,
            z_u: &unit,
            ..base
        };
        assert!((attention_logit(&only_z, 0.5, 0.2, 0.2) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn attention_weight_examples() {
        assert_eq!(attention_weights(&[3.7]), vec![1.0]);
        assert_eq!(attention_weights(&[1.5, 1.5]), vec![0.5, 0.5]);
        let w = attention_weights(&[0.0, 3f64.ln()]);
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn attention_normalizes_per_node_layer_and_head() {
        let input = toy_input(15, 8, 4).unwrap();
        let mut model = DgaModel::new(cfg(Variant::Full)).unwrap();
        randomize(&mut model, 9);
        let f = forward(&model, &input, None).unwrap();
        assert_eq!(f.attention.len(), 2);
        for layer in &f.attention {
            assert_eq!(layer.len(), 4);
            for head in layer {
                let mut sums = vec![0.0; input.num_supernodes()];
                for (e, a) in head.iter().enumerate() {
                    sums[input.dst[e]] += a;
                }
                assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn layer_reduces_to_identity() {
        let n = 5;
        let mut input = toy_input(n, 3, 1).unwrap();
        input = DgaInput::new(InputParts {
            static_x: input.static_x.clone(),
            pool: (*input.pool).clone(),
            member_time: input.member_time.clone(),
            rho: input.rho.clone(),
            s_norm: input.s_norm.clone(),
            edges: Vec::new(),
            embeddings: input.embeddings.clone(),
            readout: (*input.readout).clone(),
            own_x: input.own_x.clone(),
            own_time: input.own_time.clone(),
            own_s: input.own_s.clone(),
        })
        .unwrap();
        let width = STATIC_DIM + 8;
        let mut model = DgaModel::new(DgaConfig {
            layers: 1,
            heads: 1,
            hidden: width,
            ..DgaConfig::default()
        })
        .unwrap();
        for name in ["l0.h0.wv_r", "l0.h0.wv_p", "l0.mix"] {
            model.params.insert(name.into(), Matrix::identity(width));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = Matrix::from_vec(n, width, (0..n * width).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let out = layer_forward(&model, &input, &h, 0).unwrap();
        assert!(out.max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn forward_shapes_probabilities_and_determinism() {
        let input = toy_input(12, 7, 5).unwrap();
        let mut model = DgaModel::new(cfg(Variant::Full)).unwrap();
        randomize(&mut model, 1);
        let hidden = layer_forward(&model, &input, &Matrix::zeros(12, STATIC_DIM + 8), 0).unwrap();
        assert_eq!(hidden.shape(), (12, 8));
        let p = predict_proba(&model, &input).unwrap();
        assert_eq!(p.shape(), (7, 2));
        for r in 0..7 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(p, predict_proba(&model, &input).unwrap());
    }

    #[test]
    fn nfs_only_is_monotone_in_score() {
        let input = toy_input(10, 30, 6).unwrap();
        let mut model = DgaModel::new(cfg(Variant::NfsOnly)).unwrap();
        model.params.insert("nfs.w".into(), Matrix::from_rows(&[vec![-1.3, 2.1]]));
        model.params.insert("nfs.b".into(), Matrix::from_rows(&[vec![0.4, -0.2]]));
        let p = predict_fake(&model, &input).unwrap();
        let mut order: Vec<usize> = (0..30).collect();
        order.sort_by(|&a, &b| input.own_s[a].total_cmp(&input.own_s[b]));
        assert!(order.windows(2).all(|w| p[w[0]] <= p[w[1]]));
    }

    #[test]
    fn type_agnostic_differs_from_typed_model() {
        let input = toy_input(12, 10, 7).unwrap();
        let mut full = DgaModel::new(cfg(Variant::Full)).unwrap();
        randomize(&mut full, 3);
        let mut agnostic = DgaModel::new(cfg(Variant::TypeAgnostic)).unwrap();
        randomize(&mut agnostic, 3);
        let a = predict_fake(&full, &input).unwrap();
        let b = predict_fake(&agnostic, &input).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn no_temporal_ignores_event_times() {
        let input = toy_input(12, 10, 8).unwrap();
        let mut shifted = input.clone();
        shifted.member_time.iter_mut().for_each(|t| *t += 0.37);
        shifted.own_time.iter_mut().for_each(|t| *t += 0.37);
        let mut model = DgaModel::new(cfg(Variant::NoTemporal)).unwrap();
        randomize(&mut model, 2);
        assert_eq!(predict_fake(&model, &input).unwrap(), predict_fake(&model, &shifted).unwrap());
        let span = (1000.0, 5000.0);
        assert_eq!(rescale_time(2500.0, span), rescale_time(2500.0 + 86400.0, (span.0 + 86400.0, span.1 + 86400.0)));
    }

    #[test]
    fn first_epoch_loss_is_ln2() {
        let input = toy_input(20, 40, 9).unwrap();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let model = DgaModel::new(cfg(Variant::Full)).unwrap();
        let split = stratified_split(&labels, 0.6, 0.2, 1);
        let out = train(
            model,
            &input,
            &labels,
            &split,
        )
        .unwrap();
        assert!((out.history[0].train_loss - 2f64.ln()).abs() < 0.1);
    }

    #[test]
    fn separable_loss_decreases_over_first_epochs() {
        let n = 40;
        let mut input = toy_input(10, n, 10).unwrap();
        let labels = balanced_labels(n);
        input.own_s = labels.iter().map(|&y| if y == 1 { 0.8 } else { 0.2 }).collect();
        let model = DgaModel::new(DgaConfig {
            variant: Variant::NfsOnly,
            max_epochs: 10,
            ..DgaConfig::default()
        })
        .unwrap();
        let split = stratified_split(&labels, 0.6, 0.2, 1);
        let out = train(model, &input, &labels, &split).unwrap();
        assert_eq!(out.history.len(), 10);
        assert!(out.history.windows(2).all(|w| w[1].train_loss <= w[0].train_loss));
    }

    #[test]
    fn patience_stops_flat_validation() {
        let input = toy_input(10, 20, 11).unwrap();
        let labels = balanced_labels(20);
        let model = DgaModel::new(DgaConfig {
            variant: Variant::NfsOnly,
            patience: 5,
            min_delta: 10.0,
            ..DgaConfig::default()
        })
        .unwrap();
        let split = stratified_split(&labels, 0.6, 0.2, 1);
        let out = train(model, &input, &labels, &split).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.history.len(), 6);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn training_is_seed_deterministic_and_checkpoints_round_trip() {
        let input = toy_input(15, 20, 12).unwrap();
        let labels = balanced_labels(20);
        let split = stratified_split(&labels, 0.6, 0.2, 1);
        let c = DgaConfig {
            max_epochs: 15,
            ..DgaConfig::default()
        };
        let a = train(DgaModel::new(c.clone()).unwrap(), &input, &labels, &split).unwrap();
        let b = train(DgaModel::new(c).unwrap(), &input, &labels, &split).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        let back = DgaModel::from_json(&a.model.to_json().unwrap()).unwrap();
        assert_eq!(back, a.model);
        let mut buf = Vec::new();
        write_history_csv(&a.history, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 16);
    }

    #[test]
    fn nan_features_abort_training() {
        let mut input = toy_input(10, 10, 13).unwrap();
        input.own_x.data.iter_mut().step_by(STATIC_DIM).for_each(|x| *x = f64::NAN);
        let labels = balanced_labels(10);
        let split = stratified_split(&labels, 0.6, 0.2, 1);
        let err = train(DgaModel::new(DgaConfig::default()).unwrap(), &input, &labels, &split).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0, .. }));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let labels = balanced_labels(10);
        let rows: Vec<usize> = (0..10).collect();
        for seed in 0..2u64 {
            let input = toy_input(20, 10, seed).unwrap();
            for variant in Variant::ABLATIONS {
                let mut model = DgaModel::new(cfg(variant)).unwrap();
                randomize(&mut model, seed + 100);
                let err = grad_check(&model, &input, &labels, &rows, 1e-5).unwrap();
                let bound = if variant == Variant::NfsOnly { 1e-7 } else { 1e-4 };
                assert!(err < bound, "{variant} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn raw_time_difference_gradients_check() {
        let labels = balanced_labels(10);
        let rows: Vec<usize> = (0..10).collect();
        let input = toy_input(20, 10, 3).unwrap();
        let mut model = DgaModel::new(DgaConfig {
            time_difference: TimeDifference::Raw,
            ..DgaConfig::default()
        })
        .unwrap();
        randomize(&mut model, 5);
        assert!(grad_check(&model, &input, &labels, &rows, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn silenced_head_gets_exactly_zero_gradient() {
        let input = toy_input(12, 10, 14).unwrap();
        let labels = balanced_labels(10);
        let mut model = DgaModel::new(cfg(Variant::Full)).unwrap();
        randomize(&mut model, 4);
        let mix = model.params.get_mut("l1.mix").unwrap();
        for r in 0..8 {
            mix.row_mut(r).iter_mut().for_each(|x| *x = 0.0);
        }
        let (_, g) = gradients(&model, &input, &labels, &(0..10).collect::<Vec<_>>(), None).unwrap();
        for name in ["wq", "wk_r", "wk_p", "wv_r", "wv_p", "wt", "aq", "ak", "at"] {
            assert!(g[&format!("l1.h0.{name}")].data.iter().all(|&x| x == 0.0), "{name}");
        }
        assert!(g["l1.h1.wv_r"].data.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn stratified_split_partitions_rows() {
        let labels: Vec<u8> = (0..50).map(|i| u8::from(i < 10)).collect();
        let s = stratified_split(&labels, 0.6, 0.2, 3);
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(s.train.iter().filter(|&&i| labels[i] == 1).count(), 6);
        assert_eq!(s.test.iter().filter(|&&i| labels[i] == 1).count(), 2);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_rates() {
        assert!(serde_json::from_str::<DgaConfig>(r#"{"layers": 2, "bogus": 1}"#).is_err());
        let c: DgaConfig = serde_json::from_str(r#"{"variant": "B"}"#).unwrap();
        assert_eq!(c.variant, Variant::NoTemporal);
        assert!(DgaConfig { lr: 0.0, ..DgaConfig::default() }.validate().is_err());
        assert!(DgaConfig { dropout: 1.0, ..DgaConfig::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn attention_is_shift_invariant(logits in proptest::collection::vec(-20.0f64..20.0, 1..12), c in -50.0f64..50.0) {
            let shifted: Vec<f64> = logits.iter().map(|x| x + c).collect();
            let a = attention_weights(&logits);
            let b = attention_weights(&shifted);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
