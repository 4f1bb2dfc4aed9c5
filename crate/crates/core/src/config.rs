//! `key = value` configuration files.

use std::collections::BTreeSet;
use std::str::FromStr;

use crate::data::DataError;
use crate::metapath::builtin_metapath;
use crate::synth::SynthConfig;
use crate::trainer::TrainConfig;

const FILE: &str = "config";

/// One `key = value` assignment with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits `text` into assignments. `#` starts a comment; keys may appear
/// once.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, DataError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: String| DataError::Parse { file: FILE, line, msg };
        let (key, value) = body.split_once('=').ok_or_else(|| err(format!("expected key = value, found {body:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(err("empty key".into()));
        }
        if !seen.insert(key.to_owned()) {
            return Err(err(format!("key {key:?} given twice")));
        }
        out.push(Entry {
            line,
            key: key.to_owned(),
            value: value.to_owned(),
        });
    }
    Ok(out)
}

impl Entry {
    fn parse<T: FromStr>(&self) -> Result<T, DataError>
    where
        T::Err: std::fmt::Display,
    {
        self.value.parse().map_err(|e| DataError::Parse {
            file: FILE,
            line: self.line,
            msg: format!("{}: bad value {:?}: {e}", self.key, self.value),
        })
    }

    fn unknown(&self) -> DataError {
        DataError::Parse {
            file: FILE,
            line: self.line,
            msg: format!("unknown key {:?}", self.key),
        }
    }
}

/// Training run settings plus evaluation options.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Split timestamp; defaults to the 80th-percentile click time.
    pub cutoff: Option<i64>,
    pub negatives: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            cutoff: None,
            negatives: crate::metrics::DEFAULT_NEGATIVES,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut cfg = Self::default();
        let t = &mut cfg.train;
        for e in parse_entries(text)? {
            match e.key.as_str() {
                "seed" => t.seed = e.parse()?,
                "d" => t.embed.dim = e.parse()?,
                "L" => t.embed.heads = e.parse()?,
                "feature_dim" => t.embed.feature_dim = e.parse()?,
                "path_hidden" => t.embed.path_hidden = e.parse()?,
                "multi_instance" => t.embed.multi_instance = e.parse()?,
                "freeze_neighbors" => t.embed.freeze_neighbors = e.parse()?,
                "N" => t.sampler.walks = e.parse()?,
                "l" => t.sampler.max_len = Some(e.parse()?),
                "E" => t.episodes = e.parse()?,
                "T" => t.horizon = e.parse()?,
                "gamma" => t.gamma = e.parse()?,
                "epsilon" => t.epsilon = e.parse()?,
                "lambda" => t.lambda = e.parse()?,
                "lr_pretrain" => t.lr_pretrain = e.parse()?,
                "lr_rl" => t.lr_rl = e.parse()?,
                "batch" => t.batch = e.parse()?,
                "pretrain_episodes" => t.pretrain_episodes = e.parse()?,
                "metapaths" => {
                    t.metapaths = e
                        .value
                        .split(',')
                        .map(|s| Entry { value: s.trim().to_owned(), ..e.clone() }.parse())
                        .collect::<Result<_, _>>()?
                }
                "tie_concepts" => t.tie_concepts = e.parse()?,
                "baseline" => t.baseline = e.parse()?,
                "mask_clicked" => t.mask_clicked = e.parse()?,
                "holdout" => t.holdout = e.parse()?,
                "cutoff" => cfg.cutoff = Some(e.parse()?),
                "negatives" => cfg.negatives = e.parse()?,
                _ => return Err(e.unknown()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let t = &self.train;
        let bad = |m: &str| Err(DataError::ConfigInvalid(m.to_owned()));
        if t.embed.dim == 0 || t.embed.heads == 0 || !t.embed.dim.is_multiple_of(t.embed.heads) {
            return bad("d must be a positive multiple of L");
        }
        if t.embed.feature_dim == 0 || t.embed.path_hidden == 0 {
            return bad("feature_dim and path_hidden must be positive");
        }
        if t.sampler.walks == 0 || t.sampler.max_len == Some(0) {
            return bad("N and l must be positive");
        }
        if !(0.0..=1.0).contains(&t.gamma) || !(0.0..=1.0).contains(&t.epsilon) {
            return bad("gamma and epsilon must lie in [0, 1]");
        }
        let rates_ok = t.lambda >= 0.0 && t.lr_pretrain > 0.0 && t.lr_rl > 0.0;
        if !rates_ok {
            return bad("lambda must be non-negative and learning rates positive");
        }
        if t.batch == 0 || t.horizon == 0 || self.negatives == 0 {
            return bad("batch, T and negatives must be positive");
        }
        if !(0.0..1.0).contains(&t.holdout) {
            return bad("holdout must lie in [0, 1)");
        }
        let ids: BTreeSet<u8> = t.metapaths.iter().copied().collect();
        if ids.is_empty() || ids.len() != t.metapaths.len() || ids.iter().any(|&i| builtin_metapath(i).is_none()) {
            return bad("metapaths must list distinct ids from 1 to 4");
        }
        Ok(())
    }
}

pub fn parse_synth_config(text: &str) -> Result<SynthConfig, DataError> {
    let mut cfg = SynthConfig::default();
    for e in parse_entries(text)? {
        match e.key.as_str() {
            "users" => cfg.users = e.parse()?,
            "concepts" => cfg.concepts = e.parse()?,
            "courses" => cfg.courses = e.parse()?,
            "videos" => cfg.videos = e.parse()?,
            "clusters" => cfg.clusters = e.parse()?,
            "p_in" => cfg.p_in = e.parse()?,
            "p_out" => cfg.p_out = e.parse()?,
            "clicks" => cfg.clicks = e.parse()?,
            "seed" => cfg.seed = e.parse()?,
            _ => return Err(e.unknown()),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
