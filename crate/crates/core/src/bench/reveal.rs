//! Reveals `k` of the `m` latent preconditions of an instance.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::PlanningInstance;
use crate::oracle::Verdict;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RevealError {
    #[error("k = {k} is outside 0..={m}")]
    KOutOfRange { k: usize, m: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealVariant {
    pub instance_id: String,
    pub k: usize,
    pub seed: u64,
    /// Revealed propositions, in instance order.
    pub revealed: Vec<String>,
    pub hidden: Vec<String>,
}

impl RevealVariant {
    pub fn hidden_count(&self) -> usize {
        self.hidden.len()
    }
}

/// Uniform `k`-subset of the latent preconditions drawn from a ChaCha8
/// stream seeded with `seed`.
pub fn k_reveal(inst: &PlanningInstance, k: usize, seed: u64) -> Result<RevealVariant, RevealError> {
    let m = inst.latent_count();
    if k > m {
        return Err(RevealError::KOutOfRange { k, m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, m, k).into_vec();
    picked.sort_unstable();
    let mut revealed = Vec::with_capacity(k);
    let mut hidden = Vec::with_capacity(m - k);
    for (i, e) in inst.latent_preconditions.entries.iter().enumerate() {
        if picked.binary_search(&i).is_ok() {
            revealed.push(e.p.clone());
        } else {
            hidden.push(e.p.clone());
        }
    }
    Ok(RevealVariant { instance_id: inst.id.clone(), k, seed, revealed, hidden })
}

/// The instance as the planner sees it under `variant`: each revealed
/// proposition with an Affirm or Refute verdict becomes a predicate in the
/// initial state, and every revealed answer is appended to the prompt.
pub fn apply_reveal(inst: &PlanningInstance, variant: &RevealVariant) -> PlanningInstance {
    let mut out = inst.clone();
    let mut prompt = inst.minimal_prompt.clone();
    for p in &variant.revealed {
        let Some(e) = inst.latent_preconditions.get(p) else { continue };
        match e.verdict {
            Verdict::Affirm => {
                out.initial.predicates.insert(p.clone(), true);
            }
            Verdict::Refute => {
                out.initial.predicates.insert(p.clone(), false);
            }
            Verdict::Unknown => {}
        }
        let fact = match e.verdict {
            Verdict::Affirm => format!("{p}: yes."),
            Verdict::Refute => format!("{p}: no."),
            Verdict::Unknown => format!("{p}: unknown."),
        };
        if !prompt.is_empty() {
            prompt.push(' ');
        }
        prompt.push_str(&fact);
        if !e.answer.is_empty() {
            prompt.push(' ');
            prompt.push_str(&e.answer);
        }
    }
    out.minimal_prompt = prompt;
    out
}
