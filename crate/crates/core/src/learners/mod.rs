//! Online classifiers usable as the pipeline learner.
//!
//! Both learners follow test-then-train: [`OnlineLearner::predict`] never
//! mutates state and [`OnlineLearner::train`] folds in one labelled instance.
//! The first call to `train` fixes the feature dimension.

mod hoeffding;
mod moments;
mod naive_bayes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::Label;

pub use hoeffding::{HoeffdingConfig, HoeffdingTree, LeafPrediction};
pub use moments::RunningMoments;
pub use naive_bayes::GaussianNB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LearnerError {
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Set when the learner has not been trained yet and returned the default
    /// (unfavorable) class.
    pub cold_start: bool,
}

impl Prediction {
    pub(crate) const COLD: Prediction = Prediction {
        label: Label::Unfavorable,
        cold_start: true,
    };

    pub(crate) fn warm(label: Label) -> Self {
        Self {
            label,
            cold_start: false,
        }
    }
}

pub trait OnlineLearner: Send {
    fn predict(&self, features: &[f64]) -> Result<Prediction, LearnerError>;

    fn train(&mut self, features: &[f64], label: Label) -> Result<(), LearnerError>;

    /// Feature dimension, once fixed by the first training call.
    fn n_features(&self) -> Option<usize>;
}

pub(crate) fn check_dim(expected: Option<usize>, features: &[f64]) -> Result<(), LearnerError> {
    match expected {
        Some(d) if d != features.len() => Err(LearnerError::DimensionMismatch {
            expected: d,
            found: features.len(),
        }),
        _ => Ok(()),
    }
}

/// Learner choice and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerConfig {
    NaiveBayes,
    HoeffdingTree(HoeffdingConfig),
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig::HoeffdingTree(HoeffdingConfig::default())
    }
}

impl LearnerConfig {
    pub fn build(&self) -> Box<dyn OnlineLearner> {
        match self {
            LearnerConfig::NaiveBayes => Box::new(GaussianNB::new()),
            LearnerConfig::HoeffdingTree(cfg) => Box::new(HoeffdingTree::new(cfg.clone())),
        }
    }
}
