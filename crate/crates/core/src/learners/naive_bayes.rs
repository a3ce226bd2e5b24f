use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_dim, LearnerError, OnlineLearner, Prediction, RunningMoments};
use crate::stream::Label;

const VARIANCE_FLOOR: f64 = 1e-9;

/// Incremental Gaussian naive Bayes.
///
/// Class-conditional feature variances use the population (`n`) denominator,
/// floored at `1e-9`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GaussianNB {
    class_counts: [u64; 2],
    moments: [Vec<RunningMoments>; 2],
    dim: Option<usize>,
}

impl GaussianNB {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn class_count(&self, label: Label) -> u64 {
        self.class_counts[label.index()]
    }

    pub fn feature_mean(&self, label: Label, feature: usize) -> Option<f64> {
        self.moments[label.index()].get(feature).map(|m| m.mean())
    }

    pub fn feature_variance(&self, label: Label, feature: usize) -> Option<f64> {
        self.moments[label.index()]
            .get(feature)
            .map(|m| m.population_variance())
    }

    /// Unnormalized log posterior, `None` for a class never seen.
    pub fn log_joint(&self, features: &[f64], label: Label) -> Option<f64> {
        let c = label.index();
        if self.class_counts[c] == 0 {
            return None;
        }
        let total: u64 = self.class_counts.iter().sum();
        let prior = (self.class_counts[c] as f64 / total as f64).ln();
        let ll: f64 = features
            .iter()
            .zip(&self.moments[c])
            .map(|(&x, m)| {
                let var = m.population_variance().max(VARIANCE_FLOOR);
                let d = x - m.mean();
                -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
            })
            .sum();
        Some(prior + ll)
    }
}

impl OnlineLearner for GaussianNB {
    fn predict(&self, features: &[f64]) -> Result<Prediction, LearnerError> {
        check_dim(self.dim, features)?;
        if self.dim.is_none() {
            return Ok(Prediction::COLD);
        }
        let fav = self.log_joint(features, Label::Favorable);
        let unf = self.log_joint(features, Label::Unfavorable);
        let label = match (fav, unf) {
            (Some(f), Some(u)) if f > u => Label::Favorable,
            (Some(_), None) => Label::Favorable,
            _ => Label::Unfavorable,
        };
        Ok(Prediction::warm(label))
    }

    fn train(&mut self, features: &[f64], label: Label) -> Result<(), LearnerError> {
        check_dim(self.dim, features)?;
        if self.dim.is_none() {
            self.dim = Some(features.len());
            for m in &mut self.moments {
                *m = vec![RunningMoments::default(); features.len()];
            }
        }
        let c = label.index();
        self.class_counts[c] += 1;
        for (m, &x) in self.moments[c].iter_mut().zip(features) {
            m.push(x);
        }
        Ok(())
    }

    fn n_features(&self) -> Option<usize> {
        self.dim
    }
}
