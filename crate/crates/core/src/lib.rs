//! Fair rebalancing for evolving, biased data streams.
//!
//! The crate processes a stream one instance at a time under the
//! test-then-train protocol. Concept and fairness drift are watched by two
//! adaptive-window detectors, and whenever the recent window is either
//! class-imbalanced or unfair, fair synthetic minority samples are generated by
//! clustering the window, filtering boundary samples by silhouette, and
//! interpolating within clusters. A separate evaluator ([`fbu`]) places
//! mitigation techniques on a fairness/performance trade-off plane against a
//! pseudo-model baseline.
//!
//! Module map:
//!
//! - [`stream`]: instances, subgroups, windows, synthetic and CSV sources
//! - [`metrics`]: imbalance ratio, cumulative parity and opportunity gaps,
//!   balanced accuracy, recall
//! - [`adwin`]: adaptive windowing drift detector with warning/change levels
//! - [`learners`]: Gaussian naive Bayes and Hoeffding tree
//! - [`sampling`]: clustering, silhouette filter, cluster quotas, synthesis
//! - [`pipeline`]: the rebalancing loop
//! - [`fbu`]: trade-off baseline, regions and area scores
//! - [`harness`]: experiment runner, studies and output files

pub mod adwin;
pub mod error;
pub mod fbu;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod pipeline;
pub mod sampling;
pub mod stream;

pub use error::ConfigError;
pub use stream::{Group, Instance, Label, Subgroup};
