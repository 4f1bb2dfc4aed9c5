//! Meta-path templates and meta-path-constrained random walks.
//!
//! A meta-path is a sequence of node types starting and ending at a user;
//! consecutive types determine the relation to follow. Sampling performs
//! self-avoiding walks from a user, choosing uniformly among the unvisited
//! neighbors of the next required type at every hop.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::graph::{HinGraph, NodeRef, NodeType, Relation};
use crate::rng::{self, tags};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPath {
    pub id: u8,
    pub name: &'static str,
    pattern: Vec<NodeType>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetaPathError {
    #[error("meta-path must have at least 3 node types")]
    TooShort,
    #[error("meta-path must start and end with a user")]
    NotUserAnchored,
    #[error("no relation joins {0} and {1}")]
    NoRelation(NodeType, NodeType),
}

impl MetaPath {
    pub fn new(id: u8, name: &'static str, pattern: Vec<NodeType>) -> Result<Self, MetaPathError> {
        if pattern.len() < 3 {
            return Err(MetaPathError::TooShort);
        }
        if pattern[0] != NodeType::User || pattern[pattern.len() - 1] != NodeType::User {
            return Err(MetaPathError::NotUserAnchored);
        }
        for w in pattern.windows(2) {
            Relation::between(w[0], w[1]).ok_or(MetaPathError::NoRelation(w[0], w[1]))?;
        }
        Ok(Self { id, name, pattern })
    }

    pub fn pattern(&self) -> &[NodeType] {
        &self.pattern
    }

    pub fn relations(&self) -> Vec<Relation> {
        self.pattern
            .windows(2)
            .map(|w| Relation::between(w[0], w[1]).expect("validated at construction"))
            .collect()
    }

    /// Node-type sequence of a walk of at most `max_len` nodes: the pattern
    /// repeated end-to-start as many whole times as fit.
    pub fn walk_template(&self, max_len: usize) -> Vec<NodeType> {
        let mut out = self.pattern.clone();
        let step = self.pattern.len() - 1;
        while out.len() + step <= max_len {
            out.extend_from_slice(&self.pattern[1..]);
        }
        out
    }
}

/// MP1 U-K-U, MP2 U-K-U-K-U, MP3 U-C-K-C-U, MP4 U-C-V-C-U.
pub fn builtin_metapaths() -> Vec<MetaPath> {
    use NodeType::*;
    let defs: [(u8, &'static str, Vec<NodeType>); 4] = [
        (1, "U-K-U", vec![User, Concept, User]),
        (2, "U-K-U-K-U", vec![User, Concept, User, Concept, User]),
        (3, "U-C-K-C-U", vec![User, Course, Concept, Course, User]),
        (4, "U-C-V-C-U", vec![User, Course, Video, Course, User]),
    ];
    defs.into_iter()
        .map(|(id, name, p)| MetaPath::new(id, name, p).expect("builtin meta-paths are valid"))
        .collect()
}

pub fn builtin_metapath(id: u8) -> Option<MetaPath> {
    builtin_metapaths().into_iter().find(|m| m.id == id)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathInstance {
    pub nodes: Vec<NodeRef>,
}

impl PathInstance {
    /// Whether the instance follows `mp`'s template positionally and every
    /// hop is an edge of `g`.
    pub fn conforms(&self, g: &HinGraph, mp: &MetaPath) -> bool {
        let template = mp.walk_template(self.nodes.len());
        template.len() == self.nodes.len()
            && self.nodes.iter().zip(&template).all(|(n, t)| n.ty == *t)
            && self.nodes.windows(2).all(|w| {
                Relation::between(w[0].ty, w[1].ty).is_some_and(|k| g.has_edge(w[0], w[1], k))
            })
    }

    /// Distinct nodes of the instance in order of first appearance, with
    /// `center` first.
    pub fn neighborhood(&self, center: NodeRef) -> Vec<NodeRef> {
        let mut out = vec![center];
        for &n in &self.nodes {
            if !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    /// Walks kept per (user, meta-path).
    pub walks: usize,
    /// Maximum walk length in nodes; `None` means the pattern length.
    pub max_len: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            walks: 10,
            max_len: None,
        }
    }
}

/// Dead-end retries allowed per (user, meta-path), as a multiple of the
/// requested walk count.
pub const RETRY_FACTOR: usize = 10;

/// Samples up to `n` walks of `mp` from `user`. Walks that dead-end are
/// discarded and retried; sampling stops once `RETRY_FACTOR * n` walks have
/// failed. Duplicate walks are kept.
pub fn sample_instances<R: Rng + ?Sized>(
    g: &HinGraph,
    user: NodeRef,
    mp: &MetaPath,
    n: usize,
    max_len: usize,
    rng: &mut R,
) -> Vec<PathInstance> {
    debug_assert_eq!(user.ty, NodeType::User);
    let template = mp.walk_template(max_len.max(mp.pattern.len()));
    let mut out = Vec::with_capacity(n);
    let mut failures = 0;
    let mut candidates = Vec::new();
    while out.len() < n && failures < RETRY_FACTOR * n {
        match walk(g, user, &template, rng, &mut candidates) {
            Some(nodes) => out.push(PathInstance { nodes }),
            None => failures += 1,
        }
    }
    out
}

fn walk<R: Rng + ?Sized>(
    g: &HinGraph,
    start: NodeRef,
    template: &[NodeType],
    rng: &mut R,
    candidates: &mut Vec<u32>,
) -> Option<Vec<NodeRef>> {
    let mut nodes = Vec::with_capacity(template.len());
    nodes.push(start);
    for &next_ty in &template[1..] {
        let cur = *nodes.last().expect("non-empty");
        let k = Relation::between(cur.ty, next_ty).expect("template validated");
        candidates.clear();
        candidates.extend(
            g.neighbor_indices(cur, k)
                .filter(|&i| !nodes.contains(&NodeRef::new(next_ty, i))),
        );
        if candidates.is_empty() {
            return None;
        }
        let pick = candidates[rng.random_range(0..candidates.len())];
        nodes.push(NodeRef::new(next_ty, pick));
    }
    Some(nodes)
}

/// Per-(user, meta-path) bags of sampled walks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathCorpus {
    bags: BTreeMap<(u32, u8), Vec<PathInstance>>,
}

impl PathCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Samples every user in `g` under every meta-path. Each (user, path)
    /// pair draws from its own stream, so the result does not depend on
    /// visiting order.
    pub fn sample(g: &HinGraph, metapaths: &[MetaPath], cfg: SamplerConfig, seed: u64) -> Self {
        let mut corpus = Self::new();
        for u in 0..g.node_count(NodeType::User) as u32 {
            for mp in metapaths {
                let mut rng = rng::stream(seed, tags::CORPUS, corpus_stream(u, mp.id));
                let max_len = cfg.max_len.unwrap_or(mp.pattern.len());
                let bag = sample_instances(g, NodeRef::user(u), mp, cfg.walks, max_len, &mut rng);
                corpus.bags.insert((u, mp.id), bag);
            }
        }
        corpus
    }

    pub fn insert(&mut self, user: u32, mp_id: u8, bag: Vec<PathInstance>) {
        self.bags.insert((user, mp_id), bag);
    }

    pub fn bag(&self, user: u32, mp_id: u8) -> &[PathInstance] {
        self.bags.get(&(user, mp_id)).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, user: u32, mp_id: u8) -> bool {
        self.bags.contains_key(&(user, mp_id))
    }

    pub fn len(&self) -> usize {
        self.bags.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u8, &PathInstance)> {
        self.bags
            .iter()
            .flat_map(|(&(u, m), bag)| bag.iter().map(move |p| (u, m, p)))
    }

    /// Meta-path neighborhood of `user`: the distinct nodes of one walk
    /// drawn at random from its bag, self first. With `freeze`, the first
    /// walk is used instead of a random one. Falls back to `[user]`.
    pub fn neighbors<R: Rng + ?Sized>(
        &self,
        user: NodeRef,
        mp_id: u8,
        rng: &mut R,
        freeze: bool,
    ) -> Vec<NodeRef> {
        let bag = self.bag(user.index, mp_id);
        if bag.is_empty() {
            return vec![user];
        }
        let pick = if freeze { 0 } else { rng.random_range(0..bag.len()) };
        bag[pick].neighborhood(user)
    }

    /// `user_id<TAB>mp_id<TAB>node,node,...`, one line per walk.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (u, m, p) in self.iter() {
            let nodes: Vec<String> = p.nodes.iter().map(NodeRef::to_string).collect();
            writeln!(out, "{u}\t{m}\t{}", nodes.join(",")).expect("writing to String");
        }
        out
    }

    /// Parses [`PathCorpus::to_text`] output. Each walk must start at its
    /// key user and follow the template of a builtin meta-path.
    pub fn from_text(text: &str) -> Result<Self, CorpusParseError> {
        let metapaths = builtin_metapaths();
        let mut corpus = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| CorpusParseError { line: line_no, msg };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(u), Some(m), Some(nodes), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(err("expected 3 tab-separated fields".into()));
            };
            let u: u32 = u.parse().map_err(|_| err(format!("bad user id {u:?}")))?;
            let m: u8 = m.parse().map_err(|_| err(format!("bad meta-path id {m:?}")))?;
            let mp = metapaths
                .iter()
                .find(|p| p.id == m)
                .ok_or_else(|| err(format!("unknown meta-path {m}")))?;
            let nodes = nodes
                .split(',')
                .map(parse_node)
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| err("bad node list".into()))?;
            if nodes.first() != Some(&NodeRef::user(u)) {
                return Err(err("walk does not start at its user".into()));
            }
            let template = mp.walk_template(nodes.len());
            if template.len() != nodes.len() || nodes.iter().zip(&template).any(|(n, t)| n.ty != *t) {
                return Err(err(format!("walk does not follow {}", mp.name)));
            }
            corpus.bags.entry((u, m)).or_default().push(PathInstance { nodes });
        }
        Ok(corpus)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("corpus line {line}: {msg}")]
pub struct CorpusParseError {
    pub line: usize,
    pub msg: String,
}

fn parse_node(s: &str) -> Option<NodeRef> {
    let mut chars = s.chars();
    let ty = NodeType::from_tag(chars.next()?)?;
    let idx = chars.as_str();
    if idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(NodeRef::new(ty, idx.parse().ok()?))
}

pub(crate) fn corpus_stream(user: u32, mp_id: u8) -> u64 {
    ((user as u64) << 8) | mp_id as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn builtin_set() {
        let mps = builtin_metapaths();
        assert_eq!(mps.len(), 4);
        assert_eq!(mps.iter().map(|m| m.id).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        use NodeType::*;
        assert_eq!(mps[0].pattern(), &[User, Concept, User]);
        assert_eq!(mps[1].pattern(), &[User, Concept, User, Concept, User]);
        assert_eq!(mps[2].pattern(), &[User, Course, Concept, Course, User]);
        use Relation::*;
        assert_eq!(mps[3].relations(), vec![Learn, Contains, Contains, Learn]);
        assert_eq!(mps[2].relations(), vec![Learn, Covers, Covers, Learn]);
    }

    #[test]
    fn invalid_patterns() {
        use NodeType::*;
        assert_eq!(MetaPath::new(9, "x", vec![User, Concept]), Err(MetaPathError::TooShort));
        assert_eq!(
            MetaPath::new(9, "x", vec![Concept, User, Concept]),
            Err(MetaPathError::NotUserAnchored)
        );
        assert_eq!(
            MetaPath::new(9, "x", vec![User, User, User]),
            Err(MetaPathError::NoRelation(User, User))
        );
    }

    #[test]
    fn walk_template_extension() {
        let mp1 = builtin_metapath(1).unwrap();
        assert_eq!(mp1.walk_template(3).len(), 3);
        assert_eq!(mp1.walk_template(4).len(), 3);
        assert_eq!(mp1.walk_template(5).len(), 5);
        let mp2 = builtin_metapath(2).unwrap();
        assert_eq!(mp2.walk_template(8).len(), 5);
        assert_eq!(mp2.walk_template(9).len(), 9);
    }

    fn line_graph() -> HinGraph {
        // U0 - K0 - U1
        let mut g = HinGraph::with_counts([2, 0, 0, 1]);
        g.add_edge(NodeRef::user(0), NodeRef::concept(0), Relation::Click, Some(1)).unwrap();
        g.add_edge(NodeRef::user(1), NodeRef::concept(0), Relation::Click, Some(1)).unwrap();
        g
    }

    #[test]
    fn unique_walk_is_repeated() {
        let g = line_graph();
        let mp1 = builtin_metapath(1).unwrap();
        let walks = sample_instances(&g, NodeRef::user(0), &mp1, 5, 3, &mut rng(1));
        assert_eq!(walks.len(), 5);
        for w in &walks {
            assert_eq!(w.nodes, vec![NodeRef::user(0), NodeRef::concept(0), NodeRef::user(1)]);
            assert!(w.conforms(&g, &mp1));
        }
    }

    #[test]
    fn isolated_user_has_no_walks() {
        let mut g = line_graph();
        let lonely = g.add_node(NodeType::User);
        for mp in builtin_metapaths() {
            assert!(sample_instances(&g, lonely, &mp, 10, 5, &mut rng(3)).is_empty());
        }
    }

    #[test]
    fn dead_ends_exhaust_retry_budget() {
        // U0 - K0 with no second user: MP1 always dead-ends.
        let mut g = HinGraph::with_counts([1, 0, 0, 1]);
        g.add_edge(NodeRef::user(0), NodeRef::concept(0), Relation::Click, Some(0)).unwrap();
        let mp1 = builtin_metapath(1).unwrap();
        assert!(sample_instances(&g, NodeRef::user(0), &mp1, 4, 3, &mut rng(0)).is_empty());
    }

    #[test]
    fn first_hop_is_uniform() {
        // U0 -{K0,K1}- U1
        let mut g = HinGraph::with_counts([2, 0, 0, 2]);
        for k in 0..2 {
            for u in 0..2 {
                g.add_edge(NodeRef::user(u), NodeRef::concept(k), Relation::Click, Some(0)).unwrap();
            }
        }
        let mp1 = builtin_metapath(1).unwrap();
        let n = 100;
        let walks = sample_instances(&g, NodeRef::user(0), &mp1, n, 3, &mut rng(11));
        assert_eq!(walks.len(), n);
        let via_k0 = walks.iter().filter(|w| w.nodes[1] == NodeRef::concept(0)).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((via_k0 - 50.0).abs() <= 3.0 * sigma, "{via_k0}");
    }

    #[test]
    fn neighbors_of_single_and_empty_bags() {
        let g = line_graph();
        let mps = builtin_metapaths();
        let corpus = PathCorpus::sample(&g, &mps, SamplerConfig { walks: 1, max_len: None }, 5);
        let u0 = NodeRef::user(0);
        assert_eq!(
            corpus.neighbors(u0, 1, &mut rng(0), false),
            vec![u0, NodeRef::concept(0), NodeRef::user(1)]
        );
        // MP3 needs courses, so the bag is empty.
        assert!(corpus.bag(0, 3).is_empty());
        assert_eq!(corpus.neighbors(u0, 3, &mut rng(0), false), vec![u0]);
    }

    #[test]
    fn neighbor_choice_is_seed_reproducible() {
        let mut corpus = PathCorpus::new();
        let u0 = NodeRef::user(0);
        corpus.insert(
            0,
            1,
            (1..=3)
                .map(|i| PathInstance { nodes: vec![u0, NodeRef::concept(i), NodeRef::user(i)] })
                .collect(),
        );
        let run = |seed| {
            let mut r = rng(seed);
            (0..10).map(|_| corpus.neighbors(u0, 1, &mut r, false)).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        let frozen: Vec<_> = (0..5).map(|_| corpus.neighbors(u0, 1, &mut rng(1), true)).collect();
        assert!(frozen.iter().all(|n| n[1] == NodeRef::concept(1)));
    }

    #[test]
    fn text_roundtrip_and_errors() {
        let g = line_graph();
        let corpus = PathCorpus::sample(&g, &builtin_metapaths(), SamplerConfig::default(), 5);
        let text = corpus.to_text();
        assert!(text.starts_with("0\t1\tu0,k0,u1\n"));
        let parsed = PathCorpus::from_text(&text).unwrap();
        // empty bags have no lines
        assert_eq!(parsed.iter().collect::<Vec<_>>(), corpus.iter().collect::<Vec<_>>());

        let e = PathCorpus::from_text("0\t1\tu0,k0\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(PathCorpus::from_text("# c\n\n0\t1\tu1,k0,u0\n").is_err());
        assert!(PathCorpus::from_text("0\t7\tu0,k0,u1\n").is_err());
        assert!(PathCorpus::from_text("0\t1\tu0,x0,u1\n").is_err());
        assert!(PathCorpus::from_text("0\t1\tu0,k+0,u1\n").is_err());
        assert!(PathCorpus::from_text("0\t1\n").is_err());
    }
}
