//! Synthetic MOOC graphs with planted concept clusters.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;

use crate::data::{Click, DataError, Dataset, IdMap};
use crate::graph::{HinGraph, NodeRef, NodeType, Relation};
use crate::rng::{self, tags};

/// Click timestamps are uniform on `[TS_START, TS_START + TS_SPAN)`.
pub const TS_START: i64 = 1_550_000_000;
pub const TS_SPAN: i64 = 62_500_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub concepts: usize,
    pub courses: usize,
    pub videos: usize,
    pub clusters: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Click events per user, drawn with replacement.
    pub clicks: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 200,
            concepts: 50,
            courses: 20,
            videos: 60,
            clusters: 5,
            p_in: 0.9,
            p_out: 0.02,
            clicks: 20,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::ConfigInvalid(m.to_owned()));
        if self.clusters == 0 {
            return bad("clusters must be positive");
        }
        if [self.users, self.concepts, self.courses, self.videos].iter().any(|&n| n < self.clusters) {
            return bad("users, concepts, courses and videos must each be at least clusters");
        }
        if !(0.0..=1.0).contains(&self.p_out) || !(0.0..=1.0).contains(&self.p_in) {
            return bad("p_in and p_out must lie in [0, 1]");
        }
        if self.p_in <= self.p_out {
            return bad("p_in must exceed p_out");
        }
        if self.clicks == 0 {
            return bad("clicks must be positive");
        }
        Ok(())
    }

    pub fn user_cluster(&self, u: usize) -> usize {
        u % self.clusters
    }

    pub fn concept_cluster(&self, k: usize) -> usize {
        k % self.clusters
    }
}

/// Builds a dataset where every user prefers the concepts of its own
/// cluster. Each course covers concepts of one cluster; each video belongs
/// to one course, is reused by a second course of the same cluster when
/// there is one, and teaches some of its first course's concepts. Users
/// learn courses of their cluster, so course and video meta-paths connect
/// users within a cluster.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset, DataError> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, tags::SYNTH, 0);
    let counts = [cfg.users, cfg.courses, cfg.videos, cfg.concepts];
    let mut graph = HinGraph::with_counts(counts);
    let mut ids = IdMap::new();
    for ty in NodeType::ALL {
        for i in 0..counts[ty.index()] {
            ids.insert(&format!("{}{i}", ty.tag()), ty);
        }
    }
    let by_cluster = |n: usize| -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); cfg.clusters];
        for i in 0..n {
            out[i % cfg.clusters].push(i);
        }
        out
    };
    let concept_groups = by_cluster(cfg.concepts);
    let course_groups = by_cluster(cfg.courses);
    let mut edge = |a: NodeRef, b: NodeRef, k: Relation, ts: Option<i64>| {
        graph.add_edge(a, b, k, ts).expect("generator respects the schema");
    };

    let mut covered = Vec::with_capacity(cfg.courses);
    for c in 0..cfg.courses {
        let pool = &concept_groups[c % cfg.clusters];
        let m = pool.len().div_ceil(2).max(1);
        let mut picks: Vec<usize> = index::sample(&mut rng, pool.len(), m).into_iter().map(|j| pool[j]).collect();
        picks.sort_unstable();
        for &k in &picks {
            edge(NodeRef::course(c as u32), NodeRef::concept(k as u32), Relation::Covers, None);
        }
        covered.push(picks);
    }
    let mut course_videos = vec![Vec::new(); cfg.courses];
    for v in 0..cfg.videos {
        let c = v % cfg.courses;
        course_videos[c].push(v);
        edge(NodeRef::course(c as u32), NodeRef::video(v as u32), Relation::Contains, None);
        let siblings: Vec<usize> = course_groups[c % cfg.clusters].iter().copied().filter(|&o| o != c).collect();
        if !siblings.is_empty() {
            let o = siblings[rng.random_range(0..siblings.len())];
            edge(NodeRef::course(o as u32), NodeRef::video(v as u32), Relation::Contains, None);
        }
        let pool = &covered[c];
        let m = rng.random_range(1..=pool.len().min(2));
        for j in index::sample(&mut rng, pool.len(), m) {
            edge(NodeRef::video(v as u32), NodeRef::concept(pool[j] as u32), Relation::Teaches, None);
        }
    }

    let mut clicks = Vec::with_capacity(cfg.users * cfg.clicks);
    for u in 0..cfg.users {
        let cluster = cfg.user_cluster(u);
        let pool = &course_groups[cluster];
        let m = rng.random_range(1..=pool.len().min(2));
        for j in index::sample(&mut rng, pool.len(), m) {
            let c = pool[j];
            edge(NodeRef::user(u as u32), NodeRef::course(c as u32), Relation::Learn, None);
            let vids = &course_videos[c];
            if !vids.is_empty() {
                let v = vids[rng.random_range(0..vids.len())];
                edge(NodeRef::user(u as u32), NodeRef::video(v as u32), Relation::Watch, None);
            }
        }
        let weights: Vec<f64> = (0..cfg.concepts)
            .map(|k| if cfg.concept_cluster(k) == cluster { cfg.p_in } else { cfg.p_out })
            .collect();
        let dist = WeightedIndex::new(&weights).expect("own cluster has positive weight");
        for _ in 0..cfg.clicks {
            clicks.push(Click {
                user: u as u32,
                concept: dist.sample(&mut rng) as u32,
                ts: rng.random_range(TS_START..TS_START + TS_SPAN),
            });
        }
    }
    clicks.sort_unstable_by_key(|c| (c.ts, c.user, c.concept));
    for c in &clicks {
        edge(NodeRef::user(c.user), NodeRef::concept(c.concept), Relation::Click, Some(c.ts));
    }
    Ok(Dataset { graph, clicks, ids })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid() {
        let bad = [
            SynthConfig { p_in: 0.1, p_out: 0.2, ..SynthConfig::default() },
            SynthConfig { clusters: 0, ..SynthConfig::default() },
            SynthConfig { courses: 3, ..SynthConfig::default() },
            SynthConfig { clicks: 0, ..SynthConfig::default() },
            SynthConfig { p_in: 1.5, ..SynthConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(generate_synthetic(&cfg), Err(DataError::ConfigInvalid(_))), "{cfg:?}");
        }
    }

    #[test]
    fn deterministic_files() {
        let a = generate_synthetic(&SynthConfig::default()).unwrap();
        let b = generate_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        let c = generate_synthetic(&SynthConfig { seed: 8, ..SynthConfig::default() }).unwrap();
        assert_ne!(a.to_tsv(), c.to_tsv());
    }

    #[test]
    fn shape_and_roundtrip() {
        let cfg = SynthConfig::default();
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.graph.counts(), [200, 20, 60, 50]);
        assert_eq!(ds.clicks.len(), 200 * 20);
        let (n, e) = ds.to_tsv();
        let back = Dataset::from_tsv(&n, &e).unwrap();
        assert_eq!(back.graph.snapshot_digest(), ds.graph.snapshot_digest());
        for c in 0..cfg.courses as u32 {
            let ks = ds.graph.neighbors(NodeRef::course(c), Relation::Covers);
            assert!(ks.iter().all(|k| k.index as usize % cfg.clusters == c as usize % cfg.clusters));
        }
        for u in 0..cfg.users as u32 {
            let cs = ds.graph.neighbors(NodeRef::user(u), Relation::Learn);
            assert!(!cs.is_empty());
            assert!(cs.iter().all(|c| c.index as usize % cfg.clusters == u as usize % cfg.clusters));
        }
    }

    #[test]
    fn in_cluster_share_matches_mixture() {
        let cfg = SynthConfig { users: 300, clicks: 30, seed: 3, ..SynthConfig::default() };
        let ds = generate_synthetic(&cfg).unwrap();
        let mut expected = 0.0;
        let mut var = 0.0;
        for u in 0..cfg.users {
            let own = (0..cfg.concepts).filter(|k| k % cfg.clusters == u % cfg.clusters).count() as f64;
            let p = cfg.p_in * own / (cfg.p_in * own + cfg.p_out * (cfg.concepts as f64 - own));
            expected += p * cfg.clicks as f64;
            var += p * (1.0 - p) * cfg.clicks as f64;
        }
        let hits = ds
            .clicks
            .iter()
            .filter(|c| c.user as usize % cfg.clusters == c.concept as usize % cfg.clusters)
            .count() as f64;
        assert!((hits - expected).abs() <= 3.0 * var.sqrt(), "{hits} vs {expected} ± {}", var.sqrt());
    }

    #[test]
    fn single_cluster_clicks_are_all_in_cluster() {
        let cfg = SynthConfig { clusters: 1, users: 10, concepts: 6, courses: 2, videos: 3, p_out: 0.0, ..SynthConfig::default() };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.clicks.len(), 10 * 20);
    }
}
