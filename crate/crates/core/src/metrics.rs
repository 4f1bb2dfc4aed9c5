//! Ranking evaluation with sampled negatives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index;
use rand::Rng;

use crate::embed::{EmbedConfig, Neighborhoods};
use crate::graph::NodeRef;
use crate::metapath::PathCorpus;
use crate::model::Model;
use crate::rng::{self, tags};
use crate::tensor::TensorError;

pub const CUTOFFS: [usize; 3] = [5, 10, 20];
pub const DEFAULT_NEGATIVES: usize = 99;

/// One positive ranked against sampled negatives. `candidates[0]` is the
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedTrial {
    pub user: u32,
    pub candidates: Vec<u32>,
    pub scores: Vec<f64>,
    /// 1-based rank of the positive.
    pub rank: usize,
}

impl RankedTrial {
    /// Ranks by descending score, ties to the lower concept index.
    pub fn new(user: u32, candidates: Vec<u32>, scores: Vec<f64>) -> Self {
        assert_eq!(candidates.len(), scores.len());
        assert!(!candidates.is_empty());
        let (p, sp) = (candidates[0], scores[0]);
        let ahead = candidates[1..]
            .iter()
            .zip(&scores[1..])
            .filter(|&(&c, &s)| s > sp || (s == sp && c < p))
            .count();
        Self {
            user,
            candidates,
            scores,
            rank: ahead + 1,
        }
    }

    pub fn negatives(&self) -> usize {
        self.candidates.len() - 1
    }

    /// `(#negatives below + 0.5·#ties) / #negatives`.
    pub fn auc(&self) -> f64 {
        let sp = self.scores[0];
        let credit: f64 = self.scores[1..]
            .iter()
            .map(|&s| if s < sp { 1.0 } else if s == sp { 0.5 } else { 0.0 })
            .sum();
        credit / self.negatives() as f64
    }
}

fn mean(trials: &[RankedTrial], f: impl Fn(&RankedTrial) -> f64) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    trials.iter().map(f).sum::<f64>() / trials.len() as f64
}

pub fn hit_ratio(trials: &[RankedTrial], k: usize) -> f64 {
    mean(trials, |t| if t.rank <= k { 1.0 } else { 0.0 })
}

pub fn ndcg(trials: &[RankedTrial], k: usize) -> f64 {
    mean(trials, |t| if t.rank <= k { 1.0 / (1.0 + t.rank as f64).log2() } else { 0.0 })
}

pub fn mrr(trials: &[RankedTrial]) -> f64 {
    mean(trials, |t| 1.0 / t.rank as f64)
}

pub fn auc(trials: &[RankedTrial]) -> f64 {
    mean(trials, RankedTrial::auc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub hr: [f64; 3],
    pub ndcg: [f64; 3],
    pub mrr: f64,
    pub auc: f64,
    pub trials: usize,
}

impl EvalReport {
    pub fn from_trials(trials: &[RankedTrial]) -> Self {
        Self {
            hr: CUTOFFS.map(|k| hit_ratio(trials, k)),
            ndcg: CUTOFFS.map(|k| ndcg(trials, k)),
            mrr: mrr(trials),
            auc: auc(trials),
            trials: trials.len(),
        }
    }

    pub fn values(&self) -> [f64; 8] {
        [
            self.hr[0], self.hr[1], self.hr[2], self.ndcg[0], self.ndcg[1], self.ndcg[2], self.mrr, self.auc,
        ]
    }

    pub fn tsv_header() -> &'static str {
        "HR@5\tHR@10\tHR@20\tNDCG@5\tNDCG@10\tNDCG@20\tMRR\tAUC"
    }

    /// Percentages with two decimals, tab-separated.
    pub fn to_tsv(&self) -> String {
        self.values().iter().map(|v| format!("{:.2}", 100.0 * v)).collect::<Vec<_>>().join("\t")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trials   {}", self.trials)?;
        for (i, k) in CUTOFFS.iter().enumerate() {
            writeln!(f, "HR@{k:<5} {:.4}", self.hr[i])?;
        }
        for (i, k) in CUTOFFS.iter().enumerate() {
            writeln!(f, "NDCG@{k:<3} {:.4}", self.ndcg[i])?;
        }
        writeln!(f, "MRR      {:.4}", self.mrr)?;
        write!(f, "AUC      {:.4}", self.auc)
    }
}

/// Scores candidate concepts for a user; higher is better.
pub trait Scorer {
    fn score(&mut self, user: u32, candidates: &[u32]) -> Result<Vec<f64>, TensorError>;
}

/// Greedy policy logits on a user embedding drawn from `corpus`.
pub struct ModelScorer<'a> {
    model: &'a Model,
    corpus: &'a PathCorpus,
    cfg: EmbedConfig,
    rng: rng::Rng,
    cache: BTreeMap<u32, Vec<f64>>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a Model, corpus: &'a PathCorpus, cfg: &EmbedConfig, seed: u64) -> Self {
        Self {
            model,
            corpus,
            cfg: *cfg,
            rng: rng::stream(seed, tags::EVAL, u64::MAX),
            cache: BTreeMap::new(),
        }
    }

    /// Logits over every concept for `user`. Each user is embedded once.
    pub fn logits(&mut self, user: u32) -> Result<&[f64], TensorError> {
        if !self.cache.contains_key(&user) {
            let ids = self.model.embed.metapath_ids();
            let hoods = Neighborhoods::draw(self.corpus, NodeRef::user(user), &ids, &self.cfg, &mut self.rng);
            let e = self.model.embed_user(&hoods)?;
            self.cache.insert(user, self.model.logits(&e.vector)?);
        }
        Ok(&self.cache[&user])
    }
}

impl Scorer for ModelScorer<'_> {
    fn score(&mut self, user: u32, candidates: &[u32]) -> Result<Vec<f64>, TensorError> {
        let logits = self.logits(user)?;
        Ok(candidates.iter().map(|&c| logits[c as usize]).collect())
    }
}

/// Independent uniform scores.
pub struct RandomScorer(pub rng::Rng);

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        Self(rng::stream(seed, tags::EVAL, u64::MAX - 1))
    }
}

impl Scorer for RandomScorer {
    fn score(&mut self, _: u32, candidates: &[u32]) -> Result<Vec<f64>, TensorError> {
        Ok(candidates.iter().map(|_| self.0.random::<f64>()).collect())
    }
}

/// Training click counts per concept.
pub struct PopularityScorer(pub Vec<f64>);

impl Scorer for PopularityScorer {
    fn score(&mut self, _: u32, candidates: &[u32]) -> Result<Vec<f64>, TensorError> {
        Ok(candidates.iter().map(|&c| self.0[c as usize]).collect())
    }
}

/// Runs one trial per `(user, positive)` in `positives`. Negatives are drawn
/// without replacement from the concepts `clicked` never lists for the user,
/// at most `n_neg` of them, from a stream fixed by `seed` and the trial index
/// so every scorer sees the same candidates.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &mut S,
    positives: &[(u32, u32)],
    clicked: &BTreeMap<u32, BTreeSet<u32>>,
    concepts: usize,
    n_neg: usize,
    seed: u64,
) -> Result<(EvalReport, Vec<RankedTrial>), TensorError> {
    let empty = BTreeSet::new();
    let mut trials = Vec::with_capacity(positives.len());
    for (i, &(user, pos)) in positives.iter().enumerate() {
        let seen = clicked.get(&user).unwrap_or(&empty);
        let pool: Vec<u32> = (0..concepts as u32)
            .filter(|c| *c != pos && !seen.contains(c))
            .collect();
        if pool.is_empty() {
            continue;
        }
        let mut rng = rng::stream(seed, tags::EVAL, i as u64);
        let take = n_neg.min(pool.len());
        let mut candidates = Vec::with_capacity(take + 1);
        candidates.push(pos);
        candidates.extend(index::sample(&mut rng, pool.len(), take).into_iter().map(|j| pool[j]));
        let scores = scorer.score(user, &candidates)?;
        trials.push(RankedTrial::new(user, candidates, scores));
    }
    Ok((EvalReport::from_trials(&trials), trials))
}
