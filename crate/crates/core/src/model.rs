//! The learnable model: embedding network plus policy head in one store.

use crate::embed::{self, EmbedConfig, EmbedParams, Neighborhoods, UserEmbedding};
use crate::metapath::MetaPath;
use crate::params::{BlobError, ParamStore};
use crate::rng::{self, tags};
use crate::policy::PolicyParams;
use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub store: ParamStore,
    pub embed: EmbedParams,
    pub policy: PolicyParams,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CheckpointError {
    #[error(transparent)]
    Blob(#[from] BlobError),
    #[error("checkpoint is missing model tensors")]
    Layout,
}

impl Model {
    /// Fresh parameters for a graph with the given per-type node counts.
    pub fn init(counts: [usize; 4], metapaths: &[MetaPath], cfg: &EmbedConfig, tie_concepts: bool, seed: u64) -> Self {
        let mut rng = rng::stream(seed, tags::INIT, 0);
        let mut store = ParamStore::new();
        let embed = EmbedParams::init(&mut store, counts, metapaths, cfg, &mut rng);
        let policy = PolicyParams::init(&mut store, counts[3], cfg.dim, tie_concepts, &mut rng);
        Self { store, embed, policy }
    }

    pub fn to_blob(&self) -> Vec<u8> {
        self.store.to_blob()
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let store = ParamStore::from_blob(bytes)?;
        let embed = EmbedParams::from_store(&store).ok_or(CheckpointError::Layout)?;
        let policy = PolicyParams::from_store(&store).ok_or(CheckpointError::Layout)?;
        Ok(Self { store, embed, policy })
    }

    pub fn concepts(&self) -> usize {
        self.policy.concepts
    }

    pub fn embed_user(&self, hoods: &Neighborhoods) -> Result<UserEmbedding, TensorError> {
        embed::embed_with(&self.store, &self.embed, hoods)
    }

    pub fn logits(&self, user: &[f64]) -> Result<Vec<f64>, TensorError> {
        self.policy.score_all(&self.store, &self.embed, user)
    }
}
