//! Weighted heuristic distance between states.
//!
//! `D = α_s·d_s + α_r·d_r + α_ℓ·d_ℓ + α_t·d_t` where `d_r` is the L1 distance
//! over resource counts, `d_ℓ` the Hamming distance over predicates, `d_t` the
//! absolute completion difference and `d_s` the cosine distance between
//! embeddings of the canonical structure text. The distance only ranks and
//! screens candidates; acceptance never depends on it.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goal::GoalSpec;
use crate::state::{serialize_structure, Structure, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbeddingError {
    #[error("embedding unavailable: {0}")]
    EmbeddingUnavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceWeights {
    pub alpha_r: f64,
    pub alpha_s: f64,
    pub alpha_l: f64,
    pub alpha_t: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        Self { alpha_r: 1.0, alpha_s: 2.0, alpha_l: 1.5, alpha_t: 0.001 }
    }
}

impl DistanceWeights {
    pub fn uniform(w: f64) -> Self {
        Self { alpha_r: w, alpha_s: w, alpha_l: w, alpha_t: w }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            alpha_r: self.alpha_r * c,
            alpha_s: self.alpha_s * c,
            alpha_l: self.alpha_l * c,
            alpha_t: self.alpha_t * c,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.alpha_r, self.alpha_s, self.alpha_l, self.alpha_t]
            .iter()
            .all(|a| a.is_finite() && *a >= 0.0)
    }
}

/// Maps canonical structure text to a real vector.
pub trait EmbeddingProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError>;
}

/// Deterministic bag-of-tokens embedding: each whitespace token is hashed into
/// one of `dim` buckets, counts are summed and the vector is L2-normalised.
#[derive(Debug, Clone, Copy)]
pub struct HashedBagEmbedding {
    dim: usize,
}

impl HashedBagEmbedding {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashedBagEmbedding {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl EmbeddingProvider for HashedBagEmbedding {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut v = vec![0.0; self.dim];
        for token in text.split_whitespace() {
            let bucket = (crate::digest64(token.as_bytes()) % self.dim as u64) as usize;
            v[bucket] += 1.0;
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Unweighted component distances.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Components {
    pub resources: f64,
    pub structure: f64,
    pub logical: f64,
    pub temporal: f64,
}

impl Components {
    pub fn weighted(&self, w: &DistanceWeights) -> f64 {
        w.alpha_s * self.structure
            + w.alpha_r * self.resources
            + w.alpha_l * self.logical
            + w.alpha_t * self.temporal
    }
}

/// Cosine distance `1 − cos(a, b)`; two zero vectors are at distance 0, a
/// zero vector and a non-zero one at distance 1.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    match (na > 0.0, nb > 0.0) {
        (false, false) => 0.0,
        (true, true) => (1.0 - dot / (na * nb)).clamp(0.0, 2.0),
        _ => 1.0,
    }
}

pub fn structure_distance(
    a: &Structure,
    b: &Structure,
    embed: &dyn EmbeddingProvider,
) -> Result<f64, EmbeddingError> {
    let (ta, tb) = (serialize_structure(a), serialize_structure(b));
    if ta == tb {
        return Ok(0.0);
    }
    Ok(cosine_distance(&embed.embed(&ta)?, &embed.embed(&tb)?))
}

pub fn components(
    a: &WorldState,
    b: &WorldState,
    embed: &dyn EmbeddingProvider,
) -> Result<Components, EmbeddingError> {
    let resource_keys: BTreeSet<&String> = a.resources.keys().chain(b.resources.keys()).collect();
    let resources = resource_keys
        .into_iter()
        .map(|k| a.resource(k).abs_diff(b.resource(k)) as f64)
        .sum();
    let predicate_keys: BTreeSet<&String> = a.predicates.keys().chain(b.predicates.keys()).collect();
    let logical = predicate_keys
        .into_iter()
        .filter(|k| a.predicate(k) != b.predicate(k))
        .count() as f64;
    let temporal = a.time.completion.abs_diff(b.time.completion) as f64;
    let structure = structure_distance(&a.structure, &b.structure, embed)?;
    Ok(Components { resources, structure, logical, temporal })
}

/// Symmetric weighted distance over the union of keys of both states.
pub fn distance(
    a: &WorldState,
    b: &WorldState,
    w: &DistanceWeights,
    embed: &dyn EmbeddingProvider,
) -> Result<f64, EmbeddingError> {
    Ok(components(a, b, embed)?.weighted(w))
}

/// Restricts `state` to the keys named by `target`; time becomes the
/// completion to compare against the target deadline.
pub fn project_onto(state: &WorldState, target: &WorldState) -> WorldState {
    let mut p = WorldState::new();
    for k in target.resources.keys() {
        p.resources.insert(k.clone(), state.resource(k));
    }
    for k in target.predicates.keys() {
        p.predicates.insert(k.clone(), state.predicate(k));
    }
    for k in target.structure.keys() {
        if let Some(v) = state.structure.get(k) {
            p.structure.insert(k.clone(), v.clone());
        }
    }
    p.time = state.time;
    p
}

/// Components between `state` and the goal, measured on the goal's keys only;
/// `d_t = |completion − deadline|`.
pub fn goal_components(
    state: &WorldState,
    goal: &GoalSpec,
    embed: &dyn EmbeddingProvider,
) -> Result<Components, EmbeddingError> {
    let projected = project_onto(state, goal.target());
    components(&projected, goal.target(), embed)
}

pub fn goal_distance(
    state: &WorldState,
    goal: &GoalSpec,
    w: &DistanceWeights,
    embed: &dyn EmbeddingProvider,
) -> Result<f64, EmbeddingError> {
    Ok(goal_components(state, goal, embed)?.weighted(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_distance_is_zero() {
        let w = WorldState::new()
            .with_resource("saw", 1)
            .with_structure("leg_shape", "rectangular")
            .with_predicate("ok", true)
            .with_time(10, 20);
        let e = HashedBagEmbedding::default();
        assert_eq!(distance(&w, &w, &DistanceWeights::default(), &e).unwrap(), 0.0);
    }

    #[test]
    fn single_predicate_flip() {
        let a = WorldState::new().with_predicate("p", true);
        let b = WorldState::new().with_predicate("p", false);
        let e = HashedBagEmbedding::default();
        let d = distance(&a, &b, &DistanceWeights::uniform(1.0), &e).unwrap();
        assert_eq!(d, 1.0);
        let d = distance(&a, &b, &DistanceWeights::default(), &e).unwrap();
        assert_eq!(d, 1.5);
    }

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine_distance(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 0.0]), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn embedding_is_normalised() {
        let v = HashedBagEmbedding::default().embed("a=1 b=2 c=3").unwrap();
        let n: f64 = v.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn goal_projection_ignores_surplus() {
        let goal = GoalSpec::new(WorldState::new().with_resource("toy_car", 1).with_time(0, 7200));
        let w = WorldState::new()
            .with_resource("toy_car", 1)
            .with_resource("saw", 1)
            .with_predicate("workspace_clear", true)
            .with_time(6900, 7200);
        let c = goal_components(&w, &goal, &HashedBagEmbedding::default()).unwrap();
        assert_eq!(c.resources, 0.0);
        assert_eq!(c.logical, 0.0);
        assert_eq!(c.structure, 0.0);
        assert_eq!(c.temporal, 300.0);
    }
}
