//! Typed heterogeneous graph of users, courses, videos and concepts.

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeType {
    User,
    Course,
    Video,
    Concept,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::User,
        NodeType::Course,
        NodeType::Video,
        NodeType::Concept,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// One-letter tag used in compact node encodings (`u3`, `k12`, ...).
    pub fn tag(self) -> char {
        match self {
            NodeType::User => 'u',
            NodeType::Course => 'c',
            NodeType::Video => 'v',
            NodeType::Concept => 'k',
        }
    }

    pub fn from_tag(c: char) -> Option<Self> {
        NodeType::ALL.into_iter().find(|t| t.tag() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeType::User => "user",
            NodeType::Course => "course",
            NodeType::Video => "video",
            NodeType::Concept => "concept",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        NodeType::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub ty: NodeType,
    pub index: u32,
}

impl NodeRef {
    pub const fn new(ty: NodeType, index: u32) -> Self {
        Self { ty, index }
    }

    pub const fn user(index: u32) -> Self {
        Self::new(NodeType::User, index)
    }

    pub const fn course(index: u32) -> Self {
        Self::new(NodeType::Course, index)
    }

    pub const fn video(index: u32) -> Self {
        Self::new(NodeType::Video, index)
    }

    pub const fn concept(index: u32) -> Self {
        Self::new(NodeType::Concept, index)
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.ty.tag(), self.index)
    }
}

/// Edge kinds. Each connects exactly one unordered pair of node types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Learn,
    Watch,
    Click,
    Contains,
    Covers,
    Teaches,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::Learn,
        Relation::Watch,
        Relation::Click,
        Relation::Contains,
        Relation::Covers,
        Relation::Teaches,
    ];

    /// Canonical (source, target) endpoint types.
    pub fn endpoints(self) -> (NodeType, NodeType) {
        use NodeType::*;
        match self {
            Relation::Learn => (User, Course),
            Relation::Watch => (User, Video),
            Relation::Click => (User, Concept),
            Relation::Contains => (Course, Video),
            Relation::Covers => (Course, Concept),
            Relation::Teaches => (Video, Concept),
        }
    }

    /// The relation joining two node types, in either order.
    pub fn between(a: NodeType, b: NodeType) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| {
            let (s, t) = r.endpoints();
            (s, t) == (a, b) || (s, t) == (b, a)
        })
    }

    pub fn accepts(self, a: NodeType, b: NodeType) -> bool {
        Relation::between(a, b) == Some(self)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Learn => "learn",
            Relation::Watch => "watch",
            Relation::Click => "click",
            Relation::Contains => "contains",
            Relation::Covers => "covers",
            Relation::Teaches => "teaches",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Relation::ALL.into_iter().find(|r| r.name() == s)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("relation {relation} cannot join {a} and {b}")]
    SchemaViolation {
        relation: Relation,
        a: NodeType,
        b: NodeType,
    },
    #[error("node {0} does not exist")]
    UnknownNode(NodeRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Neighbor {
    index: u32,
    ts: Option<i64>,
}

type Adjacency = [Vec<Neighbor>; 6];

/// An undirected edge in canonical orientation (source type first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub relation: Relation,
    pub src: NodeRef,
    pub dst: NodeRef,
    pub ts: Option<i64>,
}

/// Heterogeneous graph with per-relation sorted adjacency. Every edge is
/// stored under both endpoints.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HinGraph {
    adj: [Vec<Adjacency>; 4],
    edge_count: usize,
}

impl HinGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph with the given per-type node counts (user, course, video,
    /// concept) and no edges.
    pub fn with_counts(counts: [usize; 4]) -> Self {
        let mut g = Self::new();
        for (ty, n) in NodeType::ALL.into_iter().zip(counts) {
            g.adj[ty.index()] = (0..n).map(|_| Adjacency::default()).collect();
        }
        g
    }

    pub fn add_node(&mut self, ty: NodeType) -> NodeRef {
        let slot = &mut self.adj[ty.index()];
        slot.push(Adjacency::default());
        NodeRef::new(ty, (slot.len() - 1) as u32)
    }

    pub fn node_count(&self, ty: NodeType) -> usize {
        self.adj[ty.index()].len()
    }

    pub fn counts(&self) -> [usize; 4] {
        NodeType::ALL.map(|t| self.node_count(t))
    }

    pub fn total_nodes(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, n: NodeRef) -> bool {
        (n.index as usize) < self.node_count(n.ty)
    }

    fn check(&self, a: NodeRef, b: NodeRef, k: Relation) -> Result<(), GraphError> {
        if !k.accepts(a.ty, b.ty) {
            return Err(GraphError::SchemaViolation {
                relation: k,
                a: a.ty,
                b: b.ty,
            });
        }
        for n in [a, b] {
            if !self.contains(n) {
                return Err(GraphError::UnknownNode(n));
            }
        }
        Ok(())
    }

    fn list(&self, n: NodeRef, k: Relation) -> &[Neighbor] {
        self.adj[n.ty.index()]
            .get(n.index as usize)
            .map_or(&[][..], |a| &a[k.index()])
    }

    fn list_mut(&mut self, n: NodeRef, k: Relation) -> &mut Vec<Neighbor> {
        &mut self.adj[n.ty.index()][n.index as usize][k.index()]
    }

    /// Inserts the undirected edge `a -k- b`. Returns `false` without
    /// touching the graph if it already exists.
    pub fn add_edge(
        &mut self,
        a: NodeRef,
        b: NodeRef,
        k: Relation,
        ts: Option<i64>,
    ) -> Result<bool, GraphError> {
        self.check(a, b, k)?;
        let pos = match self.list(a, k).binary_search_by_key(&b.index, |n| n.index) {
            Ok(_) => return Ok(false),
            Err(pos) => pos,
        };
        self.list_mut(a, k).insert(pos, Neighbor { index: b.index, ts });
        let back = self.list(b, k);
        let pos = back
            .binary_search_by_key(&a.index, |n| n.index)
            .expect_err("adjacency is symmetric");
        self.list_mut(b, k).insert(pos, Neighbor { index: a.index, ts });
        self.edge_count += 1;
        Ok(true)
    }

    /// Removes `a -k- b` if present.
    pub fn remove_edge(&mut self, a: NodeRef, b: NodeRef, k: Relation) -> Result<bool, GraphError> {
        self.check(a, b, k)?;
        let Ok(pos) = self.list(a, k).binary_search_by_key(&b.index, |n| n.index) else {
            return Ok(false);
        };
        self.list_mut(a, k).remove(pos);
        let pos = self
            .list(b, k)
            .binary_search_by_key(&a.index, |n| n.index)
            .expect("adjacency is symmetric");
        self.list_mut(b, k).remove(pos);
        self.edge_count -= 1;
        Ok(true)
    }

    pub fn has_edge(&self, a: NodeRef, b: NodeRef, k: Relation) -> bool {
        k.accepts(a.ty, b.ty)
            && self
                .list(a, k)
                .binary_search_by_key(&b.index, |n| n.index)
                .is_ok()
    }

    /// Sorted neighbors of `n` under `k`. Empty when `k` does not touch
    /// `n`'s type.
    pub fn neighbors(&self, n: NodeRef, k: Relation) -> Vec<NodeRef> {
        self.neighbor_indices(n, k)
            .map(|i| NodeRef::new(other_end(k, n.ty), i))
            .collect()
    }

    /// Sorted neighbor indices of `n` under `k`; the neighbor type is the
    /// opposite endpoint of `k`.
    pub fn neighbor_indices(&self, n: NodeRef, k: Relation) -> impl ExactSizeIterator<Item = u32> + '_ {
        self.list(n, k).iter().map(|nb| nb.index)
    }

    pub fn degree(&self, n: NodeRef, k: Relation) -> usize {
        self.list(n, k).len()
    }

    /// All edges in canonical orientation, sorted.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.edge_count);
        for k in Relation::ALL {
            let (src_ty, dst_ty) = k.endpoints();
            for (i, adj) in self.adj[src_ty.index()].iter().enumerate() {
                for nb in &adj[k.index()] {
                    out.push(Edge {
                        relation: k,
                        src: NodeRef::new(src_ty, i as u32),
                        dst: NodeRef::new(dst_ty, nb.index),
                        ts: nb.ts,
                    });
                }
            }
        }
        out.sort();
        out
    }

    /// Deterministic 64-bit digest over node counts and the sorted edge
    /// list; independent of insertion order.
    pub fn snapshot_digest(&self) -> u64 {
        let mut h = Sha256::new();
        for n in self.counts() {
            h.update((n as u64).to_le_bytes());
        }
        for e in self.edges() {
            h.update([e.relation.index() as u8]);
            h.update(e.src.index.to_le_bytes());
            h.update(e.dst.index.to_le_bytes());
            match e.ts {
                Some(t) => {
                    h.update([1]);
                    h.update(t.to_le_bytes());
                }
                None => h.update([0]),
            }
        }
        let bytes = h.finalize();
        u64::from_le_bytes(bytes[..8].try_into().expect("sha256 is 32 bytes"))
    }
}

fn other_end(k: Relation, ty: NodeType) -> NodeType {
    let (s, t) = k.endpoints();
    if ty == s {
        t
    } else {
        s
    }
}
