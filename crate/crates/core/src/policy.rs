//! Concept recommendation policy: linear scoring of a user embedding against
//! a concept table, softmax over the still-available concepts, and
//! ε-greedy selection.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::embed::EmbedParams;
use crate::graph::{NodeRef, NodeType};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{self, Shape, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no available actions")]
    EmptyActionSet,
    #[error("concept {0} is not available")]
    ActionNotAvailable(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// How concept scores are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConceptScoring {
    /// A dedicated `K × d` table.
    Table(ParamId),
    /// The concept's projected HIN feature `M_concept h_c`, tiled across
    /// heads to width `d`.
    Tied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyParams {
    pub scoring: ConceptScoring,
    pub bias: ParamId,
    pub concepts: usize,
}

impl PolicyParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        concepts: usize,
        dim: usize,
        tied: bool,
        rng: &mut R,
    ) -> Self {
        let scoring = if tied {
            ConceptScoring::Tied
        } else {
            let dist = Normal::new(0.0, 0.1).expect("positive std");
            let t = Tensor::from_fn(Shape::Matrix(concepts, dim), |_| dist.sample(rng));
            ConceptScoring::Table(store.insert("policy.concepts", t))
        };
        let bias = store.insert("policy.bias", Tensor::zeros(Shape::Vector(concepts)));
        Self {
            scoring,
            bias,
            concepts,
        }
    }

    pub fn from_store(store: &ParamStore) -> Option<Self> {
        let bias = store.id("policy.bias")?;
        let concepts = store.get(bias).len();
        let scoring = match store.id("policy.concepts") {
            Some(id) => ConceptScoring::Table(id),
            None => ConceptScoring::Tied,
        };
        Some(Self {
            scoring,
            bias,
            concepts,
        })
    }

    /// Logits `z_c` for every concept, on the tape.
    pub fn logits(&self, tape: &mut Tape<'_>, embed: &EmbedParams, user: Var) -> Result<Var, TensorError> {
        let bias = tape.param(self.bias);
        let raw = match self.scoring {
            ConceptScoring::Table(id) => {
                let table = tape.param(id);
                tape.matvec(table, user)?
            }
            ConceptScoring::Tied => {
                let table = tape.param(embed.features[NodeType::Concept.index()]);
                let proj = tape.param(embed.projections[NodeType::Concept.index()]);
                let mut scores = Vec::with_capacity(self.concepts);
                for c in 0..self.concepts {
                    let h = tape.gather_row(table, c)?;
                    let h = tape.matvec(proj, h)?;
                    let tiled = tape.concat(&vec![h; embed.heads])?;
                    scores.push(tape.dot(tiled, user)?);
                }
                tape.concat(&scores)?
            }
        };
        tape.add(raw, bias)
    }

    /// Logits evaluated off-tape.
    pub fn score_all(&self, store: &ParamStore, embed: &EmbedParams, user: &[f64]) -> Result<Vec<f64>, TensorError> {
        let mut tape = Tape::new(store);
        let u = tape.constant(Tensor::vector(user.to_vec()));
        let z = self.logits(&mut tape, embed, u)?;
        Ok(tape.value(z).data().to_vec())
    }
}

/// Concepts still recommendable in the current episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    mask: Vec<bool>,
    available: usize,
}

impl ActionSet {
    pub fn full(concepts: usize) -> Self {
        Self {
            mask: vec![true; concepts],
            available: concepts,
        }
    }

    pub fn from_available(concepts: usize, available: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = vec![false; concepts];
        for c in available {
            mask[c] = true;
        }
        let available = mask.iter().filter(|&&m| m).count();
        Self { mask, available }
    }

    pub fn len(&self) -> usize {
        self.available
    }

    pub fn is_empty(&self) -> bool {
        self.available == 0
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, c: usize) -> bool {
        self.mask.get(c).copied().unwrap_or(false)
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&c| self.mask[c]).collect()
    }

    /// The set without `c`.
    pub fn shrink(&self, c: usize) -> Result<ActionSet, PolicyError> {
        let mut next = self.clone();
        next.remove(c)?;
        Ok(next)
    }

    pub fn remove(&mut self, c: usize) -> Result<(), PolicyError> {
        if !self.contains(c) {
            return Err(PolicyError::ActionNotAvailable(c));
        }
        self.mask[c] = false;
        self.available -= 1;
        Ok(())
    }
}

/// `π(c | u)` over all concepts; masked concepts get exactly zero.
pub fn action_distribution(logits: &[f64], actions: &ActionSet) -> Result<Vec<f64>, PolicyError> {
    if actions.is_empty() {
        return Err(PolicyError::EmptyActionSet);
    }
    let idx = actions.indices();
    let sub: Vec<f64> = idx.iter().map(|&c| logits[c]).collect();
    let mut dist = vec![0.0; logits.len()];
    for (c, p) in idx.into_iter().zip(tensor::softmax(&sub)) {
        dist[c] = p;
    }
    Ok(dist)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub concept: usize,
    pub log_prob: f64,
    pub explored: bool,
}

/// ε-greedy: with probability `epsilon` a uniform available concept,
/// otherwise the most probable one (lowest index on ties). The returned
/// log-probability is `ln dist[chosen]` on either branch.
pub fn select_action<R: Rng + ?Sized>(
    dist: &[f64],
    actions: &ActionSet,
    epsilon: f64,
    rng: &mut R,
) -> Result<Selection, PolicyError> {
    if actions.is_empty() {
        return Err(PolicyError::EmptyActionSet);
    }
    let explored = epsilon > 0.0 && rng.random::<f64>() < epsilon;
    let concept = if explored {
        let idx = actions.indices();
        idx[rng.random_range(0..idx.len())]
    } else {
        argmax_available(dist, actions)
    };
    Ok(Selection {
        concept,
        log_prob: dist[concept].ln(),
        explored,
    })
}

fn argmax_available(values: &[f64], actions: &ActionSet) -> usize {
    let mut best: Option<usize> = None;
    for c in actions.indices() {
        if best.is_none_or(|b| values[c] > values[b]) {
            best = Some(c);
        }
    }
    best.expect("non-empty action set")
}

/// Greedy top-`k` concepts by logit among `actions`, ties to the lower index.
pub fn top_k(logits: &[f64], actions: &ActionSet, k: usize) -> Vec<(usize, f64)> {
    let mut idx = actions.indices();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|c| (c, logits[c])).collect()
}

pub fn concept_ref(c: usize) -> NodeRef {
    NodeRef::concept(c as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_available_action_is_certain() {
        let a = ActionSet::from_available(4, [2]);
        let d = action_distribution(&[5.0, -1.0, 0.3, 9.0], &a).unwrap();
        assert_eq!(d, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_logits_are_uniform_over_available() {
        let a = ActionSet::from_available(6, [0, 2, 3, 5]);
        let d = action_distribution(&[0.0; 6], &a).unwrap();
        for (c, p) in d.iter().enumerate() {
            let expect = if a.contains(c) { 0.25 } else { 0.0 };
            assert!((p - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_pair() {
        let a = ActionSet::full(2);
        let d = action_distribution(&[0.0, 3f64.ln()], &a).unwrap();
        assert!((d[0] - 0.25).abs() < 1e-15 && (d[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn empty_set_errors() {
        let a = ActionSet::from_available(3, []);
        assert_eq!(action_distribution(&[0.0; 3], &a), Err(PolicyError::EmptyActionSet));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            select_action(&[0.0; 3], &a, 0.5, &mut rng),
            Err(PolicyError::EmptyActionSet)
        );
    }

    #[test]
    fn greedy_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = ActionSet::full(4);
        let d = action_distribution(&[0.1, 2.0, 2.0, -1.0], &a).unwrap();
        for _ in 0..20 {
            let s = select_action(&d, &a, 0.0, &mut rng).unwrap();
            assert_eq!(s.concept, 1);
            assert!(!s.explored);
            assert!((s.log_prob - d[1].ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = ActionSet::from_available(7, [0, 2, 4, 6]);
        let d = action_distribution(&[3.0, 0.0, 1.0, 0.0, -2.0, 0.0, 0.5], &a).unwrap();
        let n = 10_000;
        let mut counts = [0usize; 7];
        for _ in 0..n {
            let s = select_action(&d, &a, 1.0, &mut rng).unwrap();
            counts[s.concept] += 1;
            assert!((s.log_prob - d[s.concept].ln()).abs() < 1e-15);
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in [0, 2, 4, 6] {
            assert!((counts[c] as f64 - n as f64 / 4.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
        assert_eq!(counts[1] + counts[3] + counts[5], 0);
    }

    #[test]
    fn shrink_examples() {
        let a = ActionSet::from_available(6, [1, 2, 3]);
        let b = a.shrink(2).unwrap();
        assert_eq!(b.indices(), vec![1, 3]);
        assert_eq!(b.len(), 2);
        assert_eq!(a.shrink(5), Err(PolicyError::ActionNotAvailable(5)));
        let last = ActionSet::from_available(6, [4]).shrink(4).unwrap();
        assert!(last.is_empty());
        assert_eq!(action_distribution(&[0.0; 6], &last), Err(PolicyError::EmptyActionSet));
        assert_eq!(a.shrink(17), Err(PolicyError::ActionNotAvailable(17)));
    }

    #[test]
    fn top_k_orders_and_breaks_ties() {
        let a = ActionSet::from_available(5, [0, 1, 2, 4]);
        let t = top_k(&[1.0, 3.0, 1.0, 9.0, 2.0], &a, 3);
        assert_eq!(t.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 4, 0]);
    }

    proptest::proptest! {
        #[test]
        fn masked_probabilities_and_shift_invariance(
            logits in proptest::collection::vec(-30.0f64..30.0, 2..40),
            mask_bits in proptest::collection::vec(proptest::bool::ANY, 40),
            shift in -100.0f64..100.0,
        ) {
            let k = logits.len();
            let avail: Vec<usize> = (0..k).filter(|&c| mask_bits[c]).collect();
            proptest::prop_assume!(!avail.is_empty());
            let a = ActionSet::from_available(k, avail);
            let d = action_distribution(&logits, &a).unwrap();
            for (c, &p) in d.iter().enumerate() {
                if !a.contains(c) { proptest::prop_assert_eq!(p, 0.0); }
            }
            proptest::prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let d2 = action_distribution(&shifted, &a).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            proptest::prop_assert_eq!(
                select_action(&d, &a, 0.0, &mut rng).unwrap().concept,
                select_action(&d2, &a, 0.0, &mut rng).unwrap().concept
            );
        }
    }
}
