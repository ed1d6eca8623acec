//! Search constants and their validation.

use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::DistanceWeights;
use crate::hypothesis::{score_from_distance, ScoreParams};
use crate::refine::RefinementBudget;
use crate::verifier::ScreenThresholds;

/// Largest tolerated gap between a supplied `theta_min` and
/// `exp(−delta_accept / τ)`; covers two-decimal rounding.
pub const COUPLING_TOLERANCE: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("theta_min {theta} does not match exp(-delta_accept/tau) = {expected}")]
    Coupling { theta: String, expected: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where hypothesis scores come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    /// Recompute `exp(−D/τ)` at the state the hypothesis is considered.
    #[default]
    Computed,
    /// Keep a proposer-supplied score when it is positive.
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SearchConfigRepr", into = "SearchConfigRepr")]
pub struct SearchConfig {
    pub weights: DistanceWeights,
    pub score: ScoreParams,
    /// K: maximum hypotheses per proposal.
    pub k_branch: usize,
    pub t_bridge: u32,
    /// R: maximum recursion depth when refining bridges.
    pub bridge_depth: u32,
    /// Hypotheses with more unknowns are discarded before refinement.
    pub u_max: usize,
    /// Expansion budget.
    pub t_max: u64,
    theta_min: f64,
    delta_accept: f64,
    pub screen: ScreenThresholds,
    /// Defer verification of meets that fail the distance screen.
    pub screening: bool,
    /// Edges whose score falls below this are pruned (0 disables).
    pub prune_floor: f64,
    pub score_source: ScoreSource,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let score = ScoreParams::default();
        let delta_accept = 3.5;
        Self {
            weights: DistanceWeights::default(),
            score,
            k_branch: 5,
            t_bridge: 3,
            bridge_depth: 2,
            u_max: 2,
            t_max: 500,
            theta_min: score_from_distance(delta_accept, score.tau),
            delta_accept,
            screen: ScreenThresholds::default(),
            screening: true,
            prune_floor: 0.0,
            score_source: ScoreSource::Computed,
        }
    }
}

impl SearchConfig {
    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    pub fn delta_accept(&self) -> f64 {
        self.delta_accept
    }

    /// Sets δ_accept and derives θ_min from it.
    pub fn with_delta_accept(mut self, delta: f64) -> Self {
        self.delta_accept = delta;
        self.theta_min = score_from_distance(delta, self.score.tau);
        self
    }

    /// Sets θ_min and derives δ_accept = −τ·ln θ_min.
    pub fn with_theta_min(mut self, theta: f64) -> Self {
        self.theta_min = theta;
        self.delta_accept = -self.score.tau * libm::log(theta);
        self
    }

    pub fn budget(&self) -> RefinementBudget {
        RefinementBudget::new(self.t_bridge)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !self.weights.is_valid() {
            return invalid("distance weights must be finite and non-negative");
        }
        if !self.score.is_valid() {
            return invalid("tau must be positive and epsilon in [0, 1)");
        }
        if self.k_branch == 0 || self.bridge_depth == 0 || self.t_max == 0 {
            return invalid("k_branch, bridge_depth and t_max must be positive");
        }
        if !(self.theta_min > 0.0 && self.theta_min <= 1.0) {
            return invalid("theta_min must lie in (0, 1]");
        }
        if !(self.delta_accept.is_finite() && self.delta_accept >= 0.0) {
            return invalid("delta_accept must be non-negative");
        }
        if !self.screen.is_valid() {
            return invalid("screen thresholds must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.prune_floor) {
            return invalid("prune_floor must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct SearchConfigRepr {
    weights: DistanceWeights,
    score: ScoreParams,
    k_branch: usize,
    t_bridge: u32,
    bridge_depth: u32,
    u_max: usize,
    t_max: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_accept: Option<f64>,
    screen: ScreenThresholds,
    screening: bool,
    prune_floor: f64,
    score_source: ScoreSource,
}

impl Default for SearchConfigRepr {
    fn default() -> Self {
        let mut r: Self = SearchConfig::default().into();
        r.theta_min = None;
        r.delta_accept = None;
        r
    }
}

impl From<SearchConfig> for SearchConfigRepr {
    fn from(c: SearchConfig) -> Self {
        Self {
            weights: c.weights,
            score: c.score,
            k_branch: c.k_branch,
            t_bridge: c.t_bridge,
            bridge_depth: c.bridge_depth,
            u_max: c.u_max,
            t_max: c.t_max,
            theta_min: Some(c.theta_min),
            delta_accept: Some(c.delta_accept),
            screen: c.screen,
            screening: c.screening,
            prune_floor: c.prune_floor,
            score_source: c.score_source,
        }
    }
}

impl TryFrom<SearchConfigRepr> for SearchConfig {
    type Error = ConfigError;

    fn try_from(r: SearchConfigRepr) -> Result<Self, Self::Error> {
        let base = SearchConfig {
            weights: r.weights,
            score: r.score,
            k_branch: r.k_branch,
            t_bridge: r.t_bridge,
            bridge_depth: r.bridge_depth,
            u_max: r.u_max,
            t_max: r.t_max,
            screen: r.screen,
            screening: r.screening,
            prune_floor: r.prune_floor,
            score_source: r.score_source,
            ..SearchConfig::default()
        };
        let cfg = match (r.theta_min, r.delta_accept) {
            (Some(theta), Some(delta)) => {
                let expected = score_from_distance(delta, base.score.tau);
                if (theta - expected).abs() > COUPLING_TOLERANCE {
                    return Err(ConfigError::Coupling {
                        theta: format!("{theta}"),
                        expected: format!("{expected:.6}"),
                    });
                }
                let mut c = base.with_delta_accept(delta);
                c.theta_min = theta;
                c
            }
            (Some(theta), None) => base.with_theta_min(theta),
            (None, Some(delta)) => base.with_delta_accept(delta),
            (None, None) => base.with_delta_accept(3.5),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
