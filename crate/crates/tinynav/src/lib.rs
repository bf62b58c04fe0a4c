//! tinynav: a desk-scale laboratory for topological image-goal navigation.
//!
//! The crate hosts the full pipeline: a procedural 2D world with a panoramic
//! scanline renderer, a privileged shortest-path oracle, triplet dataset
//! persistence, a small reverse-mode autodiff kernel, a transformer waypoint
//! policy with binocular goal conditioning, behavior-cloning and DAgger
//! training loops, a topological navigation stack with Bayesian-filtered
//! subgoal selection, and an experiment harness with SR/SPL metrics.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod learner;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod topo;
pub mod world;
