//! End-to-end helpers: split, train and evaluate a dataset.

use crate::config::RunConfig;
use crate::data::{default_cutoff, holdout_targets, temporal_split, Dataset, Split};
use crate::env::GroundTruth;
use crate::graph::HinGraph;
use crate::metapath::{builtin_metapath, MetaPath, PathCorpus};
use crate::metrics::{evaluate, EvalReport, ModelScorer, Scorer};
use crate::model::Model;
use crate::trainer::{pretrain, train_rl, EpisodeLog, TrainError};

/// A dataset split for training and evaluation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub full: Dataset,
    pub split: Split,
    /// Training graph without the held-out training targets.
    pub context: HinGraph,
    pub truth: GroundTruth,
    pub context_corpus: PathCorpus,
    /// Walks over the whole training graph, used for evaluation.
    pub eval_corpus: PathCorpus,
    pub metapaths: Vec<MetaPath>,
}

impl Prepared {
    pub fn new(full: Dataset, cfg: &RunConfig) -> Self {
        let t = &cfg.train;
        let cutoff = cfg.cutoff.or_else(|| default_cutoff(&full.clicks)).unwrap_or(i64::MAX);
        let split = temporal_split(&full, cutoff);
        let (context, truth) = holdout_targets(&split.train, t.holdout);
        let metapaths: Vec<MetaPath> = t
            .metapaths
            .iter()
            .map(|&id| builtin_metapath(id).expect("validated meta-path id"))
            .collect();
        let context_corpus = PathCorpus::sample(&context, &metapaths, t.sampler, t.seed);
        let eval_corpus = PathCorpus::sample(&split.train.graph, &metapaths, t.sampler, t.seed);
        Self {
            full,
            split,
            context,
            truth,
            context_corpus,
            eval_corpus,
            metapaths,
        }
    }

    pub fn init_model(&self, cfg: &RunConfig) -> Model {
        let t = &cfg.train;
        Model::init(self.full.graph.counts(), &self.metapaths, &t.embed, t.tie_concepts, t.seed)
    }

    pub fn pretrain(&self, model: &mut Model, cfg: &RunConfig, observer: &mut dyn FnMut(usize, f64)) -> Result<Vec<f64>, TrainError> {
        pretrain(model, &self.context_corpus, &self.truth, &cfg.train, observer)
    }

    pub fn train_rl(
        &self,
        model: &mut Model,
        cfg: &RunConfig,
        observer: &mut dyn FnMut(&EpisodeLog),
    ) -> Result<Vec<EpisodeLog>, TrainError> {
        let mut g = self.context.clone();
        train_rl(model, &mut g, &self.truth, &self.context_corpus, &self.metapaths, &cfg.train, observer)
    }

    /// Ranks every test positive with `scorer`.
    pub fn evaluate_with<S: Scorer + ?Sized>(&self, scorer: &mut S, cfg: &RunConfig) -> Result<EvalReport, TrainError> {
        let clicked = self.full.clicked_by_user();
        let concepts = self.full.graph.counts()[3];
        let (report, _) = evaluate(scorer, &self.split.test, &clicked, concepts, cfg.negatives, cfg.train.seed)?;
        Ok(report)
    }

    pub fn evaluate(&self, model: &Model, cfg: &RunConfig) -> Result<EvalReport, TrainError> {
        let mut scorer = ModelScorer::new(model, &self.eval_corpus, &cfg.train.embed, cfg.train.seed);
        self.evaluate_with(&mut scorer, cfg)
    }
}
