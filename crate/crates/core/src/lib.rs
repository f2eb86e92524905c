//! Causal analysis and propensity-score-weighted training for spurious
//! correlation experiments.

pub mod bounds;
pub mod config;
pub mod datasets;
pub mod experiment;
pub mod graph;
pub mod learner;
pub mod propensity;
pub mod report;
pub mod scm;
pub mod seeds;
pub mod spectral;
