//! ROUGE-n recall and BLEU over the shared tokenisation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("reference text has no tokens")]
    EmptyReference,
}

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut out = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Matches of `cand` n-grams against `reference`, each clipped to the
/// reference count.
fn clipped_matches(cand: &BTreeMap<&[String], usize>, reference: &BTreeMap<&[String], usize>) -> usize {
    cand.iter()
        .map(|(g, c)| (*c).min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Clipped n-gram matches over reference n-grams. A reference shorter than
/// `n` scores 1.0 against an identical candidate and 0.0 otherwise.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let c = tokenize(candidate);
    let rg = ngrams(&r, n);
    let total: usize = rg.values().sum();
    if total == 0 {
        return Ok(if c == r { 1.0 } else { 0.0 });
    }
    Ok(clipped_matches(&ngrams(&c, n), &rg) as f64 / total as f64)
}

/// Sentence BLEU with uniform weights up to order `min(4, |c|, |r|)`,
/// brevity penalty `exp(1 − r/c)` when `c ≤ r`, no smoothing.
pub fn bleu(candidate: &str, reference: &str) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let c = tokenize(candidate);
    if c.is_empty() {
        return Ok(0.0);
    }
    let order = 4.min(c.len()).min(r.len());
    let mut log_sum = 0.0;
    for n in 1..=order {
        let cg = ngrams(&c, n);
        let total: usize = cg.values().sum();
        let m = clipped_matches(&cg, &ngrams(&r, n));
        if m == 0 {
            return Ok(0.0);
        }
        log_sum += libm::log(m as f64 / total as f64);
    }
    let precision = libm::exp(log_sum / order as f64);
    let (cl, rl) = (c.len() as f64, r.len() as f64);
    let bp = if cl > rl { 1.0 } else { libm::exp(1.0 - rl / cl) };
    Ok(bp * precision)
}

/// Plan steps joined into one text for the overlap metrics.
pub fn plan_text(steps: &[String]) -> String {
    let parts: Vec<&str> = steps.iter().map(String::as_str).collect();
    parts.join(". ")
}
