//! k-reveal protocol, plan metrics and sweep aggregation.

pub mod metrics;
pub mod reveal;
pub mod sweep;
pub mod violation;
