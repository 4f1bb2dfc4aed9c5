//! Cross-entropy pretraining and REINFORCE fine-tuning.

use rand::Rng;

use crate::embed::{EmbedConfig, EmbedForward, EmbedParams, Neighborhoods};
use crate::env::{run_episode, EnvError, Episode, GroundTruth, RolloutConfig};
use crate::graph::{HinGraph, NodeRef};
use crate::metapath::{MetaPath, PathCorpus, SamplerConfig};
use crate::model::Model;
use crate::optim::Adam;
use crate::policy::PolicyParams;
use crate::rng::{self, tags};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub embed: EmbedConfig,
    pub sampler: SamplerConfig,
    /// RL episodes.
    pub episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub lr_pretrain: f64,
    pub lr_rl: f64,
    pub batch: usize,
    pub pretrain_episodes: usize,
    /// Meta-path ids to embed with.
    pub metapaths: Vec<u8>,
    pub tie_concepts: bool,
    pub baseline: bool,
    pub mask_clicked: bool,
    /// Share of each user's distinct training concepts held out as targets.
    pub holdout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            embed: EmbedConfig::default(),
            sampler: SamplerConfig::default(),
            episodes: 10_000,
            horizon: 20,
            gamma: 0.9,
            epsilon: 0.18,
            lambda: 0.08,
            lr_pretrain: 1e-3,
            lr_rl: 1e-4,
            batch: 8,
            pretrain_episodes: 10_000,
            metapaths: vec![1, 2, 3, 4],
            tie_concepts: false,
            baseline: false,
            mask_clicked: true,
            holdout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn rollout(&self) -> RolloutConfig {
        RolloutConfig {
            horizon: self.horizon,
            epsilon: self.epsilon,
            mask_clicked: self.mask_clicked,
            sampler: self.sampler,
            embed: self.embed,
        }
    }
}

/// `R_t = Σ_{k≥t} γ^{k-t} r_k`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// `Σ π ln π` over the support of `dist`: zero for a deterministic policy,
/// `-ln m` for a uniform one over `m` actions.
pub fn neg_entropy(dist: &[f64]) -> f64 {
    dist.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum()
}

/// Builds `𝒥 = Σ_t log π(c_t|u_t)·A_t − λ·Σ_t Σ_c π ln π` on `tape`, where
/// `A_t` are the supplied per-step weights (returns, optionally minus a
/// baseline) and the inner sum runs over the concepts available at `t`.
pub fn episode_objective(
    tape: &mut Tape<'_>,
    embed: &EmbedParams,
    policy: &PolicyParams,
    episode: &Episode,
    weights: &[f64],
    lambda: f64,
) -> Result<Var, TensorError> {
    assert_eq!(weights.len(), episode.len(), "one weight per step");
    let mut fwd = EmbedForward::new(embed, tape);
    let mut terms = Vec::with_capacity(episode.len());
    let mut users = Vec::with_capacity(episode.len());
    for step in &episode.steps {
        users.push(fwd.user_embedding(&step.hoods)?.user);
    }
    drop(fwd);
    for (step, (&u, &w)) in episode.steps.iter().zip(users.iter().zip(weights)) {
        let logits = policy.logits(tape, embed, u)?;
        let avail = step.available.indices();
        let pos = avail.binary_search(&step.action).expect("action was available");
        let sub = tape.gather(logits, &avail)?;
        let lsm = tape.log_softmax(sub)?;
        let logp = tape.select(lsm, pos)?;
        let mut term = tape.scale_const(logp, w)?;
        if lambda != 0.0 {
            let p = tape.exp(lsm)?;
            let plogp = tape.mul(p, lsm)?;
            let ne = tape.sum(plogp)?;
            let reg = tape.scale_const(ne, -lambda)?;
            term = tape.add(term, reg)?;
        }
        terms.push(term);
    }
    let stacked = tape.concat(&terms)?;
    tape.sum(stacked)
}

/// Objective value and its gradient (ascent direction) for one episode.
pub fn objective_and_gradients(
    model: &Model,
    episode: &Episode,
    gamma: f64,
    lambda: f64,
    baseline: f64,
) -> Result<(f64, Gradients), TensorError> {
    let weights: Vec<f64> = discounted_returns(&episode.rewards(), gamma)
        .into_iter()
        .map(|r| r - baseline)
        .collect();
    let mut tape = Tape::new(&model.store);
    let j = episode_objective(&mut tape, &model.embed, &model.policy, episode, &weights, lambda)?;
    Ok((tape.scalar(j), tape.backward(j)?))
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("no training targets")]
    NoTargets,
}

/// Mean cross-entropy of the policy over the full concept set against the
/// target concept of each `(user, concept)` pair.
pub fn cross_entropy<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    model: &Model,
    corpus: &PathCorpus,
    pairs: &[(u32, u32)],
    cfg: &EmbedConfig,
    rng: &mut R,
) -> Result<Var, TensorError> {
    let mp_ids = model.embed.metapath_ids();
    let mut fwd = EmbedForward::new(&model.embed, tape);
    let mut users = Vec::with_capacity(pairs.len());
    for &(u, _) in pairs {
        let hoods = Neighborhoods::draw(corpus, NodeRef::user(u), &mp_ids, cfg, rng);
        users.push(fwd.user_embedding(&hoods)?.user);
    }
    drop(fwd);
    let mut terms = Vec::with_capacity(pairs.len());
    for (&(_, c), u) in pairs.iter().zip(users) {
        let logits = model.policy.logits(tape, &model.embed, u)?;
        let lsm = tape.log_softmax(logits)?;
        terms.push(tape.select(lsm, c as usize)?);
    }
    let stacked = tape.concat(&terms)?;
    let total = tape.sum(stacked)?;
    tape.scale_const(total, -1.0 / pairs.len() as f64)
}

/// Supervised pretraining: each episode is one minibatch of `cfg.batch`
/// target pairs drawn with replacement. Returns the per-episode loss.
pub fn pretrain(
    model: &mut Model,
    corpus: &PathCorpus,
    truth: &GroundTruth,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(usize, f64),
) -> Result<Vec<f64>, TrainError> {
    let pairs = truth.pairs();
    if cfg.pretrain_episodes == 0 {
        return Ok(Vec::new());
    }
    if pairs.is_empty() {
        return Err(TrainError::NoTargets);
    }
    let mut rng = rng::stream(cfg.seed, tags::PRETRAIN, 0);
    let mut adam = Adam::new(&model.store, cfg.lr_pretrain);
    let mut losses = Vec::with_capacity(cfg.pretrain_episodes);
    for e in 0..cfg.pretrain_episodes {
        let batch: Vec<(u32, u32)> = (0..cfg.batch.max(1))
            .map(|_| pairs[rng.random_range(0..pairs.len())])
            .collect();
        let (loss, grads) = {
            let mut tape = Tape::new(&model.store);
            let l = cross_entropy(&mut tape, model, corpus, &batch, &cfg.embed, &mut rng)?;
            (tape.scalar(l), tape.backward(l)?)
        };
        adam.descend(&mut model.store, &grads);
        losses.push(loss);
        observer(e, loss);
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub user: u32,
    pub length: usize,
    pub total_reward: f64,
    pub objective: f64,
}

/// REINFORCE with entropy bonus. Every episode replays from `g` as given:
/// edges added during an episode are rolled back before the next one.
pub fn train_rl(
    model: &mut Model,
    g: &mut HinGraph,
    truth: &GroundTruth,
    corpus: &PathCorpus,
    metapaths: &[MetaPath],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpisodeLog),
) -> Result<Vec<EpisodeLog>, TrainError> {
    let users = truth.users();
    if cfg.episodes == 0 {
        return Ok(Vec::new());
    }
    if users.is_empty() {
        return Err(TrainError::NoTargets);
    }
    let rollout = cfg.rollout();
    let mut rng = rng::stream(cfg.seed, tags::TRAIN_RL, 0);
    let mut adam = Adam::new(&model.store, cfg.lr_rl);
    let mut baseline = 0.0;
    let mut logs = Vec::with_capacity(cfg.episodes);
    for e in 0..cfg.episodes {
        let user = users[rng.random_range(0..users.len())];
        let episode = run_episode(model, g, truth, corpus, metapaths, user, &rollout, &mut rng)?;
        let b = if cfg.baseline { baseline } else { 0.0 };
        let (objective, grads) = objective_and_gradients(model, &episode, cfg.gamma, cfg.lambda, b)?;
        adam.ascend(&mut model.store, &grads);
        if cfg.baseline {
            let returns = discounted_returns(&episode.rewards(), cfg.gamma);
            let mean = returns.iter().sum::<f64>() / returns.len() as f64;
            baseline = 0.9 * baseline + 0.1 * mean;
        }
        let log = EpisodeLog {
            episode: e,
            user,
            length: episode.len(),
            total_reward: episode.total_reward(),
            objective,
        };
        observer(&log);
        logs.push(log);
    }
    Ok(logs)
}
