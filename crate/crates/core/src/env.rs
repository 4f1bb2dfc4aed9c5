//! Replayed-click environment and episode rollouts.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::embed::{EmbedConfig, Neighborhoods};
use crate::graph::{GraphError, HinGraph, NodeRef, NodeType, Relation};
use crate::metapath::{sample_instances, MetaPath, PathCorpus, SamplerConfig};
use crate::model::Model;
use crate::policy::{action_distribution, select_action, ActionSet, PolicyError};
use crate::tensor::TensorError;

pub const REWARD_HIT: f64 = 1.0;
pub const REWARD_MISS: f64 = -1.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Per-user concepts that count as correct recommendations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    targets: BTreeMap<u32, BTreeSet<u32>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: u32, concept: u32) -> bool {
        self.targets.entry(user).or_default().insert(concept)
    }

    pub fn contains(&self, user: u32, concept: u32) -> bool {
        self.targets.get(&user).is_some_and(|s| s.contains(&concept))
    }

    pub fn targets(&self, user: u32) -> impl Iterator<Item = u32> + '_ {
        self.targets.get(&user).into_iter().flatten().copied()
    }

    /// Users with at least one target, ascending.
    pub fn users(&self) -> Vec<u32> {
        self.targets.iter().filter(|(_, s)| !s.is_empty()).map(|(&u, _)| u).collect()
    }

    pub fn pairs(&self) -> Vec<(u32, u32)> {
        self.targets
            .iter()
            .flat_map(|(&u, s)| s.iter().map(move |&c| (u, c)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.targets.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub mutated: bool,
}

/// A graph under episode-local mutation. Click edges added by correct steps
/// are removed again on [`Environment::rollback`] or drop.
#[derive(Debug)]
pub struct Environment<'g> {
    graph: &'g mut HinGraph,
    truth: &'g GroundTruth,
    added: Vec<(NodeRef, NodeRef)>,
}

impl<'g> Environment<'g> {
    pub fn new(graph: &'g mut HinGraph, truth: &'g GroundTruth) -> Self {
        Self {
            graph,
            truth,
            added: Vec::new(),
        }
    }

    pub fn graph(&self) -> &HinGraph {
        self.graph
    }

    pub fn added(&self) -> usize {
        self.added.len()
    }

    /// Recommends `action` to `user`. A hit wires the click into the graph.
    pub fn step(&mut self, user: u32, action: usize) -> Result<StepOutcome, EnvError> {
        let (u, k) = (NodeRef::user(user), NodeRef::concept(action as u32));
        if !self.truth.contains(user, action as u32) {
            return Ok(StepOutcome {
                reward: REWARD_MISS,
                mutated: false,
            });
        }
        let mutated = self.graph.add_edge(u, k, Relation::Click, None)?;
        if mutated {
            self.added.push((u, k));
        }
        Ok(StepOutcome {
            reward: REWARD_HIT,
            mutated,
        })
    }

    pub fn rollback(&mut self) {
        for (u, k) in self.added.drain(..).rev() {
            self.graph
                .remove_edge(u, k, Relation::Click)
                .expect("edge was inserted under the same schema");
        }
    }
}

impl Drop for Environment<'_> {
    fn drop(&mut self) {
        self.rollback();
    }
}

/// Concepts offered at the start of an episode. With `mask_clicked`, those
/// the user already clicked in `g` are withheld.
pub fn initial_actions(g: &HinGraph, user: u32, mask_clicked: bool) -> ActionSet {
    let n = g.node_count(NodeType::Concept);
    if !mask_clicked {
        return ActionSet::full(n);
    }
    let clicked: BTreeSet<u32> = g.neighbor_indices(NodeRef::user(user), Relation::Click).collect();
    ActionSet::from_available(n, (0..n).filter(|&c| !clicked.contains(&(c as u32))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub epsilon: f64,
    pub mask_clicked: bool,
    pub sampler: SamplerConfig,
    pub embed: EmbedConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    /// Neighborhoods behind the embedding the action was chosen from.
    pub hoods: Neighborhoods,
    pub embedding: Vec<f64>,
    /// Concepts that were still available when the action was chosen.
    pub available: ActionSet,
    pub action: usize,
    pub log_prob: f64,
    pub explored: bool,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub user: u32,
    pub horizon: usize,
    pub steps: Vec<EpisodeStep>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// Plays one episode for `user` against `g`, then restores `g`.
///
/// The user's walks start from `corpus`; after each correct step they are
/// resampled from the mutated graph and the embedding is recomputed.
/// `metapaths` must cover the model's meta-path ids.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<R: Rng + ?Sized>(
    model: &Model,
    g: &mut HinGraph,
    truth: &GroundTruth,
    corpus: &PathCorpus,
    metapaths: &[MetaPath],
    user: u32,
    cfg: &RolloutConfig,
    rng: &mut R,
) -> Result<Episode, EnvError> {
    let mp_ids = model.embed.metapath_ids();
    let paths: Vec<&MetaPath> = mp_ids
        .iter()
        .map(|id| metapaths.iter().find(|m| m.id == *id).expect("meta-path for every model path"))
        .collect();
    let mut actions = initial_actions(g, user, cfg.mask_clicked);
    let mut local = PathCorpus::new();
    for &id in &mp_ids {
        local.insert(user, id, corpus.bag(user, id).to_vec());
    }

    let u = NodeRef::user(user);
    let mut env = Environment::new(g, truth);
    let mut episode = Episode {
        user,
        horizon: cfg.horizon,
        steps: Vec::new(),
    };
    let mut hoods = Neighborhoods::draw(&local, u, &mp_ids, &cfg.embed, rng);
    let mut embedding = model.embed_user(&hoods)?.vector;
    while episode.len() < cfg.horizon && !actions.is_empty() {
        let logits = model.logits(&embedding)?;
        let dist = action_distribution(&logits, &actions)?;
        let sel = select_action(&dist, &actions, cfg.epsilon, rng)?;
        let outcome = env.step(user, sel.concept)?;
        let available = actions.clone();
        actions.remove(sel.concept)?;
        episode.steps.push(EpisodeStep {
            hoods: hoods.clone(),
            embedding: embedding.clone(),
            available,
            action: sel.concept,
            log_prob: sel.log_prob,
            explored: sel.explored,
            reward: outcome.reward,
        });
        if outcome.reward < 0.0 {
            break;
        }
        if episode.len() < cfg.horizon && !actions.is_empty() {
            for mp in &paths {
                let max_len = cfg.sampler.max_len.unwrap_or(mp.pattern().len());
                let bag = sample_instances(env.graph(), u, mp, cfg.sampler.walks, max_len, rng);
                local.insert(user, mp.id, bag);
            }
            hoods = Neighborhoods::draw(&local, u, &mp_ids, &cfg.embed, rng);
            embedding = model.embed_user(&hoods)?.vector;
        }
    }
    env.rollback();
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (HinGraph, GroundTruth) {
        let mut g = HinGraph::with_counts([2, 0, 0, 4]);
        g.add_edge(NodeRef::user(0), NodeRef::concept(0), Relation::Click, Some(1)).unwrap();
        g.add_edge(NodeRef::user(1), NodeRef::concept(0), Relation::Click, Some(2)).unwrap();
        let mut gt = GroundTruth::new();
        gt.insert(0, 1);
        gt.insert(0, 2);
        (g, gt)
    }

    #[test]
    fn correct_step_adds_one_click() {
        let (mut g, gt) = toy();
        let before = g.edge_count();
        let mut env = Environment::new(&mut g, &gt);
        let out = env.step(0, 1).unwrap();
        assert_eq!(out, StepOutcome { reward: 1.0, mutated: true });
        assert_eq!(env.graph().edge_count(), before + 1);
        assert!(env.graph().has_edge(NodeRef::user(0), NodeRef::concept(1), Relation::Click));
    }

    #[test]
    fn incorrect_step_keeps_digest() {
        let (mut g, gt) = toy();
        let digest = g.snapshot_digest();
        let mut env = Environment::new(&mut g, &gt);
        assert_eq!(env.step(0, 3).unwrap(), StepOutcome { reward: -1.0, mutated: false });
        assert_eq!(env.graph().snapshot_digest(), digest);
    }

    #[test]
    fn two_hits_then_rollback() {
        let (mut g, gt) = toy();
        let digest = g.snapshot_digest();
        {
            let mut env = Environment::new(&mut g, &gt);
            env.step(0, 1).unwrap();
            env.step(0, 2).unwrap();
            assert_eq!(env.added(), 2);
            let gr = env.graph();
            assert!(gr.has_edge(NodeRef::user(0), NodeRef::concept(1), Relation::Click));
            assert!(gr.has_edge(NodeRef::user(0), NodeRef::concept(2), Relation::Click));
        }
        assert_eq!(g.snapshot_digest(), digest);
    }

    #[test]
    fn masking_withholds_clicked() {
        let (g, _) = toy();
        assert_eq!(initial_actions(&g, 0, true).indices(), vec![1, 2, 3]);
        assert_eq!(initial_actions(&g, 0, false).len(), 4);
    }

    #[test]
    fn truth_queries() {
        let (_, gt) = toy();
        assert_eq!(gt.users(), vec![0]);
        assert_eq!(gt.pairs(), vec![(0, 1), (0, 2)]);
        assert_eq!(gt.targets(1).count(), 0);
        assert_eq!(gt.len(), 2);
    }
}
