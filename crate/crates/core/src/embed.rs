//! Hierarchical attention user embedding.
//!
//! For each meta-path the user's sampled neighborhood is projected into a
//! shared space per node type, weighted by node-level attention (one
//! attention vector per head), aggregated, and the heads concatenated. The
//! per-path embeddings are then fused with softmax path-level attention.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::{NodeRef, NodeType};
use crate::metapath::{MetaPath, PathCorpus};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor, TensorError};

/// Negative slope of the leaky-relu activation used in attention logits and
/// head aggregation.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedConfig {
    /// Final user embedding dimension `d`.
    pub dim: usize,
    /// Attention heads `L`; must divide `dim`.
    pub heads: usize,
    /// Input feature width of every node type.
    pub feature_dim: usize,
    /// Hidden width of the path-level attention layer.
    pub path_hidden: usize,
    /// Score each meta-path by averaging over every sampled walk instead of
    /// the single drawn walk.
    pub multi_instance: bool,
    /// Always use the first walk of each bag instead of drawing one.
    pub freeze_neighbors: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            heads: 8,
            feature_dim: 32,
            path_hidden: 32,
            multi_instance: false,
            freeze_neighbors: false,
        }
    }
}

impl EmbedConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Parameter handles of the embedding network.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedParams {
    pub features: [ParamId; 4],
    pub projections: [ParamId; 4],
    /// Per meta-path id, one attention vector (length `2 * head_dim`) per head.
    pub node_attention: Vec<(u8, Vec<ParamId>)>,
    pub path_w: ParamId,
    pub path_b: ParamId,
    pub path_q: ParamId,
    pub dim: usize,
    pub heads: usize,
}

pub(crate) fn feature_name(ty: NodeType) -> String {
    format!("embed.feat.{}", ty.name())
}

pub(crate) fn projection_name(ty: NodeType) -> String {
    format!("embed.proj.{}", ty.name())
}

fn attention_name(mp: u8, head: usize) -> String {
    format!("embed.attn.mp{mp}.h{head}")
}

fn normal_tensor<R: Rng + ?Sized>(shape: Shape, std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape, |_| dist.sample(rng))
}

impl EmbedParams {
    /// Registers freshly initialized embedding parameters. Feature tables
    /// are drawn from N(0, 0.1²).
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        counts: [usize; 4],
        metapaths: &[MetaPath],
        cfg: &EmbedConfig,
        rng: &mut R,
    ) -> Self {
        assert!(cfg.heads > 0 && cfg.dim.is_multiple_of(cfg.heads), "heads must divide dim");
        let f1 = cfg.head_dim();
        let fv = cfg.feature_dim;
        let features = NodeType::ALL.map(|ty| {
            let t = normal_tensor(Shape::Matrix(counts[ty.index()], fv), 0.1, rng);
            store.insert(feature_name(ty), t)
        });
        let projections = NodeType::ALL.map(|ty| {
            let t = normal_tensor(Shape::Matrix(f1, fv), 1.0 / (fv as f64).sqrt(), rng);
            store.insert(projection_name(ty), t)
        });
        let node_attention = metapaths
            .iter()
            .map(|mp| {
                let heads = (0..cfg.heads)
                    .map(|l| {
                        let t = normal_tensor(Shape::Vector(2 * f1), 0.1, rng);
                        store.insert(attention_name(mp.id, l), t)
                    })
                    .collect();
                (mp.id, heads)
            })
            .collect();
        let f2 = cfg.path_hidden;
        let w = normal_tensor(Shape::Matrix(f2, cfg.dim), 1.0 / (cfg.dim as f64).sqrt(), rng);
        let path_w = store.insert("embed.path.W", w);
        let path_b = store.insert("embed.path.b", Tensor::zeros(Shape::Vector(f2)));
        let q = normal_tensor(Shape::Vector(f2), 1.0 / (f2 as f64).sqrt(), rng);
        let path_q = store.insert("embed.path.q", q);
        Self {
            features,
            projections,
            node_attention,
            path_w,
            path_b,
            path_q,
            dim: cfg.dim,
            heads: cfg.heads,
        }
    }

    /// Recovers the handles from a store built by [`EmbedParams::init`].
    pub fn from_store(store: &ParamStore) -> Option<Self> {
        let features = NodeType::ALL.map(|ty| store.id(&feature_name(ty)));
        let projections = NodeType::ALL.map(|ty| store.id(&projection_name(ty)));
        let path_w = store.id("embed.path.W")?;
        let dim = match store.get(path_w).shape() {
            Shape::Matrix(_, d) => d,
            Shape::Vector(_) => return None,
        };
        let mut node_attention: Vec<(u8, Vec<ParamId>)> = Vec::new();
        for (id, name, _) in store.iter() {
            let Some(rest) = name.strip_prefix("embed.attn.mp") else { continue };
            let (mp, head) = rest.split_once(".h")?;
            let (mp, head): (u8, usize) = (mp.parse().ok()?, head.parse().ok()?);
            match node_attention.iter_mut().find(|(m, _)| *m == mp) {
                Some((_, hs)) if hs.len() == head => hs.push(id),
                None if head == 0 => node_attention.push((mp, vec![id])),
                _ => return None,
            }
        }
        let heads = node_attention.first()?.1.len();
        if heads == 0 || dim % heads != 0 || node_attention.iter().any(|(_, h)| h.len() != heads) {
            return None;
        }
        Some(Self {
            features: lift(features)?,
            projections: lift(projections)?,
            node_attention,
            path_w,
            path_b: store.id("embed.path.b")?,
            path_q: store.id("embed.path.q")?,
            dim,
            heads,
        })
    }

    pub fn metapath_ids(&self) -> Vec<u8> {
        self.node_attention.iter().map(|(m, _)| *m).collect()
    }

    fn attention(&self, mp_id: u8) -> &[ParamId] {
        &self
            .node_attention
            .iter()
            .find(|(m, _)| *m == mp_id)
            .unwrap_or_else(|| panic!("no attention parameters for meta-path {mp_id}"))
            .1
    }
}

fn lift(ids: [Option<ParamId>; 4]) -> Option<[ParamId; 4]> {
    Some([ids[0]?, ids[1]?, ids[2]?, ids[3]?])
}

/// Neighborhoods drawn for one user: per meta-path, one or more walks'
/// node sets. Entry 0 of each list is the walk used for aggregation; the
/// rest only contribute to multi-instance path scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhoods {
    pub user: NodeRef,
    pub per_path: Vec<(u8, Vec<Vec<NodeRef>>)>,
}

impl Neighborhoods {
    pub fn draw<R: Rng + ?Sized>(
        corpus: &PathCorpus,
        user: NodeRef,
        metapath_ids: &[u8],
        cfg: &EmbedConfig,
        rng: &mut R,
    ) -> Self {
        let per_path = metapath_ids
            .iter()
            .map(|&mp| {
                let chosen = corpus.neighbors(user, mp, rng, cfg.freeze_neighbors);
                let mut sets = vec![chosen];
                if cfg.multi_instance {
                    sets.extend(corpus.bag(user.index, mp).iter().map(|p| p.neighborhood(user)));
                }
                (mp, sets)
            })
            .collect();
        Self { user, per_path }
    }
}

/// Tape handles produced by one embedding forward pass.
#[derive(Debug, Clone)]
pub struct EmbeddingVars {
    pub user: Var,
    pub beta: Var,
    pub per_path: Vec<Var>,
}

/// Builds the embedding computation on a tape, memoizing node projections.
pub struct EmbedForward<'p, 't, 's> {
    params: &'p EmbedParams,
    tape: &'t mut Tape<'s>,
    projected: HashMap<NodeRef, Var>,
}

impl<'p, 't, 's> EmbedForward<'p, 't, 's> {
    pub fn new(params: &'p EmbedParams, tape: &'t mut Tape<'s>) -> Self {
        Self {
            params,
            tape,
            projected: HashMap::new(),
        }
    }

    /// `h'_n = M_type(n) · h_n`.
    pub fn project(&mut self, n: NodeRef) -> Result<Var, TensorError> {
        if let Some(&v) = self.projected.get(&n) {
            return Ok(v);
        }
        let table = self.tape.param(self.params.features[n.ty.index()]);
        let m = self.tape.param(self.params.projections[n.ty.index()]);
        let h = self.tape.gather_row(table, n.index as usize)?;
        let v = self.tape.matvec(m, h)?;
        self.projected.insert(n, v);
        Ok(v)
    }

    /// Attention weights of `center` over `nbrs` for one head.
    pub fn node_attention(&mut self, center: NodeRef, nbrs: &[NodeRef], attn: ParamId) -> Result<Var, TensorError> {
        let hi = self.project(center)?;
        let a = self.tape.param(attn);
        let mut logits = Vec::with_capacity(nbrs.len());
        for &j in nbrs {
            let hj = self.project(j)?;
            let pair = self.tape.concat(&[hi, hj])?;
            let s = self.tape.dot(a, pair)?;
            logits.push(self.tape.leaky_relu(s, LEAKY_SLOPE)?);
        }
        let logits = self.tape.concat(&logits)?;
        self.tape.softmax(logits)
    }

    /// Concatenation over heads of `σ(Σ_j α_ij h'_j)`.
    pub fn node_aggregate(&mut self, center: NodeRef, nbrs: &[NodeRef], mp_id: u8) -> Result<Var, TensorError> {
        let projected = nbrs
            .iter()
            .map(|&j| self.project(j))
            .collect::<Result<Vec<_>, _>>()?;
        let stacked = self.tape.stack_cols(&projected)?;
        let params = self.params;
        let mut heads = Vec::with_capacity(params.heads);
        for &attn in params.attention(mp_id) {
            let alpha = self.node_attention(center, nbrs, attn)?;
            let agg = self.tape.matvec(stacked, alpha)?;
            heads.push(self.tape.leaky_relu(agg, LEAKY_SLOPE)?);
        }
        self.tape.concat(&heads)
    }

    /// Path-level importance `qᵀ tanh(W u + b)` of one per-path embedding.
    pub fn path_score(&mut self, per_path: Var) -> Result<Var, TensorError> {
        let w = self.tape.param(self.params.path_w);
        let b = self.tape.param(self.params.path_b);
        let q = self.tape.param(self.params.path_q);
        let hidden = self.tape.matvec(w, per_path)?;
        let hidden = self.tape.add(hidden, b)?;
        let hidden = self.tape.tanh(hidden)?;
        self.tape.dot(q, hidden)
    }

    /// Softmax over path scores.
    pub fn path_attention(&mut self, per_path: &[Var]) -> Result<Var, TensorError> {
        let scores = per_path
            .iter()
            .map(|&u| self.path_score(u))
            .collect::<Result<Vec<_>, _>>()?;
        let scores = self.tape.concat(&scores)?;
        self.tape.softmax(scores)
    }

    /// Fused user embedding `u = Σ_k β_k u^Φk`.
    pub fn user_embedding(&mut self, hoods: &Neighborhoods) -> Result<EmbeddingVars, TensorError> {
        let mut per_path = Vec::with_capacity(hoods.per_path.len());
        let mut scores = Vec::with_capacity(hoods.per_path.len());
        for (mp, sets) in &hoods.per_path {
            let main = self.node_aggregate(hoods.user, &sets[0], *mp)?;
            let score = if sets.len() > 1 {
                // multi-instance: mean score over every sampled walk
                let mut acc = Vec::with_capacity(sets.len() - 1);
                for set in &sets[1..] {
                    let emb = self.node_aggregate(hoods.user, set, *mp)?;
                    acc.push(self.path_score(emb)?);
                }
                let acc = self.tape.concat(&acc)?;
                let total = self.tape.sum(acc)?;
                self.tape.scale_const(total, 1.0 / (sets.len() - 1) as f64)?
            } else {
                self.path_score(main)?
            };
            per_path.push(main);
            scores.push(score);
        }
        let scores = self.tape.concat(&scores)?;
        let beta = self.tape.softmax(scores)?;
        let stacked = self.tape.stack_cols(&per_path)?;
        let user = self.tape.matvec(stacked, beta)?;
        Ok(EmbeddingVars { user, beta, per_path })
    }
}

/// A computed user representation.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEmbedding {
    pub vector: Vec<f64>,
    /// Path-level attention weights, one per meta-path.
    pub beta: Vec<f64>,
}

pub fn project(store: &ParamStore, params: &EmbedParams, n: NodeRef) -> Result<Vec<f64>, TensorError> {
    let mut tape = Tape::new(store);
    let v = EmbedForward::new(params, &mut tape).project(n)?;
    Ok(tape.value(v).data().to_vec())
}

/// Node-level attention of `center` over `nbrs` for `head` of meta-path `mp_id`.
pub fn node_attention(
    store: &ParamStore,
    params: &EmbedParams,
    center: NodeRef,
    nbrs: &[NodeRef],
    mp_id: u8,
    head: usize,
) -> Result<Vec<f64>, TensorError> {
    let mut tape = Tape::new(store);
    let attn = params.attention(mp_id)[head];
    let v = EmbedForward::new(params, &mut tape).node_attention(center, nbrs, attn)?;
    Ok(tape.value(v).data().to_vec())
}

/// Path-level attention weights β for the given per-path embeddings.
pub fn path_attention(
    store: &ParamStore,
    params: &EmbedParams,
    embeddings: &[Vec<f64>],
) -> Result<Vec<f64>, TensorError> {
    let mut tape = Tape::new(store);
    let vars: Vec<Var> = embeddings
        .iter()
        .map(|e| tape.constant(Tensor::vector(e.clone())))
        .collect();
    let beta = EmbedForward::new(params, &mut tape).path_attention(&vars)?;
    Ok(tape.value(beta).data().to_vec())
}

/// Embeds `user`, drawing neighborhoods from `corpus` with `rng`.
pub fn user_embedding<R: Rng + ?Sized>(
    store: &ParamStore,
    params: &EmbedParams,
    corpus: &PathCorpus,
    user: NodeRef,
    cfg: &EmbedConfig,
    rng: &mut R,
) -> Result<UserEmbedding, TensorError> {
    let hoods = Neighborhoods::draw(corpus, user, &params.metapath_ids(), cfg, rng);
    embed_with(store, params, &hoods)
}

pub fn embed_with(
    store: &ParamStore,
    params: &EmbedParams,
    hoods: &Neighborhoods,
) -> Result<UserEmbedding, TensorError> {
    let mut tape = Tape::new(store);
    let vars = EmbedForward::new(params, &mut tape).user_embedding(hoods)?;
    Ok(UserEmbedding {
        vector: tape.value(vars.user).data().to_vec(),
        beta: tape.value(vars.beta).data().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{HinGraph, Relation};
    use crate::metapath::{builtin_metapaths, SamplerConfig};
    use crate::tape::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(dim: usize, heads: usize) -> EmbedConfig {
        EmbedConfig {
            dim,
            heads,
            feature_dim: 2,
            path_hidden: 3,
            ..EmbedConfig::default()
        }
    }

    fn setup(counts: [usize; 4], cfg: &EmbedConfig, mps: &[MetaPath]) -> (ParamStore, EmbedParams) {
        let mut store = ParamStore::new();
        let params = EmbedParams::init(&mut store, counts, mps, cfg, &mut ChaCha8Rng::seed_from_u64(1));
        (store, params)
    }

    fn set(store: &mut ParamStore, id: ParamId, data: Vec<f64>) {
        let shape = store.get(id).shape();
        *store.get_mut(id) = match shape {
            Shape::Vector(_) => Tensor::vector(data),
            Shape::Matrix(r, c) => Tensor::matrix(r, c, data).unwrap(),
        };
    }

    #[test]
    fn projection_examples() {
        let cfg = small_cfg(2, 1);
        let (mut store, p) = setup([1, 0, 0, 0], &cfg, &builtin_metapaths()[..1]);
        let u = NodeRef::user(0);
        let (feat, proj) = (p.features[0], p.projections[0]);
        set(&mut store, feat, vec![1.0, 2.0]);
        set(&mut store, proj, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(project(&store, &p, u).unwrap(), vec![1.0, 2.0]);
        set(&mut store, proj, vec![0.0; 4]);
        assert_eq!(project(&store, &p, u).unwrap(), vec![0.0, 0.0]);
        set(&mut store, feat, vec![2.0, 3.0]);
        set(&mut store, proj, vec![1.0, 1.0, 0.0, 1.0]);
        assert_eq!(project(&store, &p, u).unwrap(), vec![5.0, 3.0]);
    }

    #[test]
    fn node_attention_examples() {
        let cfg = small_cfg(2, 1);
        let mps = &builtin_metapaths()[..1];
        let (mut store, p) = setup([2, 0, 0, 1], &cfg, mps);
        let (u0, u1, k0) = (NodeRef::user(0), NodeRef::user(1), NodeRef::concept(0));
        let alpha = node_attention(&store, &p, u0, &[u0], 1, 0).unwrap();
        assert_eq!(alpha, vec![1.0]);

        let attn = p.node_attention[0].1[0];
        set(&mut store, attn, vec![0.0; 4]);
        let alpha = node_attention(&store, &p, u0, &[u0, u1, k0], 1, 0).unwrap();
        for a in alpha {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }

        // Hand-built logits 0 and ln 3: identity projections, features chosen
        // so a·[h'_i ‖ h'_j] is 0 for j = u0 and ln 3 for j = k0.
        set(&mut store, p.projections[0], vec![1.0, 0.0, 0.0, 1.0]);
        set(&mut store, p.projections[3], vec![1.0, 0.0, 0.0, 1.0]);
        set(&mut store, p.features[0], vec![0.0, 0.0, 9.0, 9.0]);
        set(&mut store, p.features[3], vec![3f64.ln(), 0.0]);
        set(&mut store, attn, vec![0.0, 0.0, 1.0, 0.0]);
        let alpha = node_attention(&store, &p, u0, &[u0, k0], 1, 0).unwrap();
        assert!((alpha[0] - 0.25).abs() < 1e-12 && (alpha[1] - 0.75).abs() < 1e-12, "{alpha:?}");
    }

    #[test]
    fn aggregate_shapes_and_self_only() {
        for (dim, heads) in [(4, 1), (64, 4), (64, 8), (12, 3)] {
            let cfg = small_cfg(dim, heads);
            let (store, p) = setup([1, 0, 0, 0], &cfg, &builtin_metapaths()[..1]);
            let mut tape = Tape::new(&store);
            let mut fwd = EmbedForward::new(&p, &mut tape);
            let u0 = NodeRef::user(0);
            let out = fwd.node_aggregate(u0, &[u0], 1).unwrap();
            let h = fwd.project(u0).unwrap();
            let h = tape.value(h).data().to_vec();
            let out = tape.value(out).data();
            assert_eq!(out.len(), dim);
            // α = [1]: every head is leaky_relu(h'_u)
            for (i, x) in out.iter().enumerate() {
                let expect = crate::tensor::leaky_relu(h[i % cfg.head_dim()], LEAKY_SLOPE);
                assert!((x - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn path_attention_examples() {
        let cfg = small_cfg(2, 1);
        let (mut store, p) = setup([1, 0, 0, 0], &cfg, &builtin_metapaths());
        let same = vec![vec![0.3, -0.2]; 4];
        for b in path_attention(&store, &p, &same).unwrap() {
            assert!((b - 0.25).abs() < 1e-15);
        }
        set(&mut store, p.path_q, vec![0.0; 3]);
        let varied = vec![vec![1.0, 0.0], vec![0.0, 5.0], vec![-2.0, 1.0], vec![0.1, 0.1]];
        for b in path_attention(&store, &p, &varied).unwrap() {
            assert!((b - 0.25).abs() < 1e-15);
        }
        // W = I on the first two hidden units, b = 0
        set(&mut store, p.path_w, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        // ln 3 lies outside tanh's range, so scale q by 2: w = 2·tanh(atanh(ln 3 / 2))
        let x = (3f64.ln() / 2.0).atanh();
        set(&mut store, p.path_q, vec![2.0, 0.0, 0.0]);
        let beta = path_attention(&store, &p, &[vec![0.0, 0.0], vec![x, 0.0]]).unwrap();
        assert!((beta[0] - 0.25).abs() < 1e-12 && (beta[1] - 0.75).abs() < 1e-12, "{beta:?}");
    }

    fn toy_graph() -> HinGraph {
        let mut g = HinGraph::with_counts([3, 2, 2, 3]);
        let u = NodeRef::user;
        let k = NodeRef::concept;
        let c = NodeRef::course;
        let v = NodeRef::video;
        for (a, b) in [(0, 0), (1, 0), (1, 1), (2, 1)] {
            g.add_edge(u(a), k(b), Relation::Click, Some(10)).unwrap();
        }
        for (a, b) in [(0, 0), (1, 0), (2, 1)] {
            g.add_edge(u(a), c(b), Relation::Learn, None).unwrap();
        }
        g.add_edge(c(0), v(0), Relation::Contains, None).unwrap();
        g.add_edge(c(1), v(1), Relation::Contains, None).unwrap();
        g.add_edge(c(0), k(0), Relation::Covers, None).unwrap();
        g.add_edge(c(1), k(1), Relation::Covers, None).unwrap();
        g.add_edge(v(0), k(2), Relation::Teaches, None).unwrap();
        g
    }

    #[test]
    fn single_path_embedding_equals_path_embedding() {
        let cfg = small_cfg(4, 2);
        let g = toy_graph();
        let mps = &builtin_metapaths()[..1];
        let (store, p) = setup(g.counts(), &cfg, mps);
        let corpus = PathCorpus::sample(&g, mps, SamplerConfig::default(), 3);
        let hoods = Neighborhoods::draw(&corpus, NodeRef::user(0), &[1], &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let mut tape = Tape::new(&store);
        let vars = EmbedForward::new(&p, &mut tape).user_embedding(&hoods).unwrap();
        assert_eq!(tape.value(vars.beta).data(), &[1.0]);
        assert_eq!(tape.value(vars.user).data(), tape.value(vars.per_path[0]).data());
    }

    #[test]
    fn equal_path_embeddings_fuse_to_themselves() {
        // Only the user's own features: every per-path embedding is identical.
        let cfg = small_cfg(4, 2);
        let (store, p) = setup([1, 0, 0, 0], &cfg, &builtin_metapaths());
        let corpus = PathCorpus::new();
        let e = user_embedding(&store, &p, &corpus, NodeRef::user(0), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut tape = Tape::new(&store);
        let mut fwd = EmbedForward::new(&p, &mut tape);
        let v = fwd.node_aggregate(NodeRef::user(0), &[NodeRef::user(0)], 1).unwrap();
        let v = tape.value(v).data();
        for (a, b) in e.vector.iter().zip(v) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((e.beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multi_instance_scores_average_all_walks() {
        let cfg = EmbedConfig { multi_instance: true, ..small_cfg(4, 2) };
        let g = toy_graph();
        let mps = builtin_metapaths();
        let (store, p) = setup(g.counts(), &cfg, &mps);
        let corpus = PathCorpus::sample(&g, &mps, SamplerConfig { walks: 3, max_len: None }, 3);
        let hoods = Neighborhoods::draw(&corpus, NodeRef::user(1), &p.metapath_ids(), &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        for (mp, sets) in &hoods.per_path {
            assert_eq!(sets.len(), 1 + corpus.bag(1, *mp).len());
        }
        let e = embed_with(&store, &p, &hoods).unwrap();
        assert_eq!(e.vector.len(), 4);
        assert!((e.beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn new_click_changes_embedding() {
        let cfg = small_cfg(4, 2);
        let mut g = toy_graph();
        let mps = &builtin_metapaths()[..1];
        let (store, p) = setup(g.counts(), &cfg, mps);
        let scfg = SamplerConfig { walks: 5, max_len: None };
        let before_corpus = PathCorpus::sample(&g, mps, scfg, 3);
        let u0 = NodeRef::user(0);
        let before = user_embedding(&store, &p, &before_corpus, u0, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        // U0 only reaches U1 via K0; clicking K1 opens U2.
        g.add_edge(u0, NodeRef::concept(1), Relation::Click, Some(20)).unwrap();
        g.remove_edge(u0, NodeRef::concept(0), Relation::Click).unwrap();
        let after_corpus = PathCorpus::sample(&g, mps, scfg, 3);
        assert!(after_corpus.bag(0, 1).iter().all(|w| w.nodes[1] == NodeRef::concept(1)));
        let after = user_embedding(&store, &p, &after_corpus, u0, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let delta: f64 = before.vector.iter().zip(&after.vector).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(delta.sqrt() > 0.0);
    }

    #[test]
    fn layout_recovered_from_store() {
        let cfg = small_cfg(6, 3);
        let (store, p) = setup([2, 1, 1, 2], &cfg, &builtin_metapaths()[1..3]);
        let back = EmbedParams::from_store(&store).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.metapath_ids(), vec![2, 3]);
    }

    #[test]
    fn half_squared_norm_gradcheck() {
        let cfg = EmbedConfig { feature_dim: 3, path_hidden: 4, ..small_cfg(4, 2) };
        let g = toy_graph();
        let mps = builtin_metapaths();
        let (mut store, p) = setup(g.counts(), &cfg, &mps);
        // Enlarge the features so gradients are well above finite-difference noise.
        for &f in &p.features {
            store.get_mut(f).data_mut().iter_mut().for_each(|x| *x *= 5.0);
        }
        let corpus = PathCorpus::sample(&g, &mps, SamplerConfig::default(), 3);
        let hoods = Neighborhoods::draw(&corpus, NodeRef::user(1), &p.metapath_ids(), &cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let r = grad_check::<TensorError, _>(&mut store, 1e-5, |t| {
            let vars = EmbedForward::new(&p, t).user_embedding(&hoods)?;
            let sq = t.mul(vars.user, vars.user)?;
            let s = t.sum(sq)?;
            t.scale_const(s, 0.5)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
