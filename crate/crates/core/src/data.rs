//! Flat-file datasets, temporal splitting and training targets.
//!
//! `nodes.tsv` holds `external_id<TAB>type` lines and `edges.tsv` holds
//! `src<TAB>relation<TAB>dst<TAB>timestamp?` lines; the timestamp is
//! required for clicks. Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::env::GroundTruth;
use crate::graph::{GraphError, HinGraph, NodeRef, NodeType, Relation};

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{file}:{line}: {msg}")]
    Parse { file: &'static str, line: usize, msg: String },
    #[error("{EDGES_FILE}:{line}: {relation} cannot join {src} and {dst}")]
    Schema { line: usize, relation: &'static str, src: &'static str, dst: &'static str },
    #[error("{NODES_FILE}:{line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Click {
    pub user: u32,
    pub concept: u32,
    pub ts: i64,
}

/// Bijection between external string ids and typed nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    names: [Vec<String>; 4],
    lookup: HashMap<String, NodeRef>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `id` as the next node of type `ty`. Returns `None` if the
    /// id is taken.
    pub fn insert(&mut self, id: &str, ty: NodeType) -> Option<NodeRef> {
        if self.lookup.contains_key(id) {
            return None;
        }
        let names = &mut self.names[ty.index()];
        let n = NodeRef::new(ty, names.len() as u32);
        names.push(id.to_owned());
        self.lookup.insert(id.to_owned(), n);
        Some(n)
    }

    pub fn get(&self, id: &str) -> Option<NodeRef> {
        self.lookup.get(id).copied()
    }

    pub fn name(&self, n: NodeRef) -> &str {
        &self.names[n.ty.index()][n.index as usize]
    }

    pub fn counts(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|i| self.names[i].len())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub graph: HinGraph,
    /// Every click event in file order, duplicates included.
    pub clicks: Vec<Click>,
    pub ids: IdMap,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

impl Dataset {
    pub fn from_tsv(nodes: &str, edges: &str) -> Result<Self, DataError> {
        let mut ds = Self::default();
        ds.read_nodes(nodes)?;
        ds.read_edges(edges)?;
        Ok(ds)
    }

    fn read_nodes(&mut self, text: &str) -> Result<(), DataError> {
        for (line, fields) in content_lines(text) {
            let err = |msg: String| DataError::Parse { file: NODES_FILE, line, msg };
            let [id, ty] = fields[..] else {
                return Err(err(format!("expected 2 fields, found {}", fields.len())));
            };
            if id.is_empty() {
                return Err(err("empty id".into()));
            }
            let ty = NodeType::from_name(ty).ok_or_else(|| err(format!("unknown node type {ty:?}")))?;
            if self.ids.insert(id, ty).is_none() {
                return Err(DataError::DuplicateId { line, id: id.to_owned() });
            }
            self.graph.add_node(ty);
        }
        Ok(())
    }

    fn read_edges(&mut self, text: &str) -> Result<(), DataError> {
        for (line, fields) in content_lines(text) {
            let err = |msg: String| DataError::Parse { file: EDGES_FILE, line, msg };
            let (src, rel, dst, ts) = match fields[..] {
                [s, r, d] => (s, r, d, None),
                [s, r, d, t] => (s, r, d, Some(t)),
                _ => return Err(err(format!("expected 3 or 4 fields, found {}", fields.len()))),
            };
            let node = |id: &str| self.ids.get(id).ok_or_else(|| err(format!("unknown node {id:?}")));
            let (a, b) = (node(src)?, node(dst)?);
            let relation = Relation::from_name(rel).ok_or_else(|| err(format!("unknown relation {rel:?}")))?;
            let ts = match ts {
                Some(t) => Some(t.trim().parse::<i64>().map_err(|e| err(format!("bad timestamp {t:?}: {e}")))?),
                None => None,
            };
            if relation == Relation::Click && ts.is_none() {
                return Err(err("click edge needs a timestamp".into()));
            }
            match self.graph.add_edge(a, b, relation, ts) {
                Ok(_) => {}
                Err(GraphError::SchemaViolation { .. }) => {
                    return Err(DataError::Schema {
                        line,
                        relation: relation.name(),
                        src: a.ty.name(),
                        dst: b.ty.name(),
                    })
                }
                Err(e) => return Err(err(e.to_string())),
            }
            if relation == Relation::Click {
                let (u, k) = if a.ty == NodeType::User { (a, b) } else { (b, a) };
                self.clicks.push(Click {
                    user: u.index,
                    concept: k.index,
                    ts: ts.expect("checked above"),
                });
            }
        }
        Ok(())
    }

    /// `(nodes.tsv, edges.tsv)` contents. Non-click edges come first in
    /// canonical order, then the click log in its own order.
    pub fn to_tsv(&self) -> (String, String) {
        let mut nodes = String::new();
        for ty in NodeType::ALL {
            for i in 0..self.graph.node_count(ty) {
                let _ = writeln!(nodes, "{}\t{}", self.ids.name(NodeRef::new(ty, i as u32)), ty.name());
            }
        }
        let mut edges = String::new();
        for e in self.graph.edges().into_iter().filter(|e| e.relation != Relation::Click) {
            let _ = write!(edges, "{}\t{}\t{}", self.ids.name(e.src), e.relation.name(), self.ids.name(e.dst));
            match e.ts {
                Some(t) => {
                    let _ = writeln!(edges, "\t{t}");
                }
                None => edges.push('\n'),
            }
        }
        for c in &self.clicks {
            let _ = writeln!(
                edges,
                "{}\tclick\t{}\t{}",
                self.ids.name(NodeRef::user(c.user)),
                self.ids.name(NodeRef::concept(c.concept)),
                c.ts
            );
        }
        (nodes, edges)
    }

    pub fn load(nodes_path: &Path, edges_path: &Path) -> Result<Self, DataError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| DataError::Io { path: p.to_owned(), source })
        };
        Self::from_tsv(&read(nodes_path)?, &read(edges_path)?)
    }

    pub fn load_dir(dir: &Path) -> Result<Self, DataError> {
        Self::load(&dir.join(NODES_FILE), &dir.join(EDGES_FILE))
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), DataError> {
        let io = |path: PathBuf| move |source| DataError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_owned()))?;
        let (nodes, edges) = self.to_tsv();
        std::fs::write(dir.join(NODES_FILE), nodes).map_err(io(dir.join(NODES_FILE)))?;
        std::fs::write(dir.join(EDGES_FILE), edges).map_err(io(dir.join(EDGES_FILE)))?;
        Ok(())
    }

    /// Distinct clicked concepts per user over the whole click log.
    pub fn clicked_by_user(&self) -> BTreeMap<u32, BTreeSet<u32>> {
        let mut out: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for c in &self.clicks {
            out.entry(c.user).or_default().insert(c.concept);
        }
        out
    }

    /// Click events per concept.
    pub fn concept_popularity(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.graph.node_count(NodeType::Concept)];
        for c in &self.clicks {
            out[c.concept as usize] += 1.0;
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitReport {
    pub cutoff: i64,
    pub train_clicks: usize,
    pub test_clicks: usize,
    /// Repeated (user, concept) test clicks collapsed into one.
    pub duplicates: usize,
    /// Test positives whose user or concept has no training click.
    pub dropped_cold: usize,
    /// Test positives the user already clicked during training.
    pub dropped_seen: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    /// `(user, concept)` test positives ordered by first test click.
    pub test: Vec<(u32, u32)>,
    pub report: SplitReport,
}

/// The 80th-percentile click timestamp, or `None` without clicks.
pub fn default_cutoff(clicks: &[Click]) -> Option<i64> {
    let mut ts: Vec<i64> = clicks.iter().map(|c| c.ts).collect();
    if ts.is_empty() {
        return None;
    }
    ts.sort_unstable();
    Some(ts[(ts.len() - 1) * 4 / 5])
}

/// Clicks at or before `cutoff` stay in the training graph; later ones
/// become test positives.
pub fn temporal_split(ds: &Dataset, cutoff: i64) -> Split {
    let mut graph = ds.graph.clone();
    for c in &ds.clicks {
        graph
            .remove_edge(NodeRef::user(c.user), NodeRef::concept(c.concept), Relation::Click)
            .expect("click edges are schema-valid");
    }
    let (train_clicks, mut later): (Vec<Click>, Vec<Click>) = ds.clicks.iter().partition(|c| c.ts <= cutoff);
    for c in &train_clicks {
        graph
            .add_edge(NodeRef::user(c.user), NodeRef::concept(c.concept), Relation::Click, Some(c.ts))
            .expect("click edges are schema-valid");
    }
    let seen_users: BTreeSet<u32> = train_clicks.iter().map(|c| c.user).collect();
    let seen_concepts: BTreeSet<u32> = train_clicks.iter().map(|c| c.concept).collect();
    let mut report = SplitReport {
        cutoff,
        train_clicks: train_clicks.len(),
        test_clicks: later.len(),
        ..SplitReport::default()
    };
    later.sort_by_key(|c| (c.ts, c.user, c.concept));
    let mut emitted = BTreeSet::new();
    let mut test = Vec::new();
    for c in later {
        if !emitted.insert((c.user, c.concept)) {
            report.duplicates += 1;
            continue;
        }
        if !seen_users.contains(&c.user) || !seen_concepts.contains(&c.concept) {
            report.dropped_cold += 1;
        } else if graph.has_edge(NodeRef::user(c.user), NodeRef::concept(c.concept), Relation::Click) {
            report.dropped_seen += 1;
        } else {
            test.push((c.user, c.concept));
        }
    }
    report.positives = test.len();
    Split {
        train: Dataset {
            graph,
            clicks: train_clicks,
            ids: ds.ids.clone(),
        },
        test,
        report,
    }
}

/// Training targets drawn from the training period itself: for each user,
/// the last `fraction` of their distinct concepts by first click time (at
/// least one, never all) is held out. Returns the graph without those
/// clicks and the held-out concepts.
pub fn holdout_targets(train: &Dataset, fraction: f64) -> (HinGraph, GroundTruth) {
    let mut first: BTreeMap<(u32, u32), i64> = BTreeMap::new();
    for c in &train.clicks {
        let e = first.entry((c.user, c.concept)).or_insert(c.ts);
        *e = (*e).min(c.ts);
    }
    let mut per_user: BTreeMap<u32, Vec<(i64, u32)>> = BTreeMap::new();
    for (&(u, k), &ts) in &first {
        per_user.entry(u).or_default().push((ts, k));
    }
    let mut graph = train.graph.clone();
    let mut truth = GroundTruth::new();
    for (u, mut seq) in per_user {
        let n = seq.len();
        if n < 2 {
            continue;
        }
        seq.sort_unstable();
        let h = ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1);
        for &(_, k) in &seq[n - h..] {
            graph
                .remove_edge(NodeRef::user(u), NodeRef::concept(k), Relation::Click)
                .expect("click edges are schema-valid");
            truth.insert(u, k);
        }
    }
    (graph, truth)
}
