//! Fair synthetic minority generation over the current window.
//!
//! A [`SamplingPlan`] clusters a standardized snapshot of the window, picks the
//! number of clusters by mean silhouette and drops the worst-fitting fifth of
//! samples. Given flags marking which retained samples belong to the subgroup
//! being topped up, [`cluster_weights`] spreads the requested count over the
//! clusters in proportion to where those samples live, and [`fair_generate`]
//! interpolates between a template and one of its nearest same-cluster
//! neighbors.

mod generate;
mod kmeans;
mod quota;
mod silhouette;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::RunningMoments;
use crate::stream::{SlidingWindow, Subgroup};

pub use generate::{fair_generate, interpolate, OneTimeLedger};
pub use kmeans::{cluster, default_k_max, kmeans, Clustering, KMeansParams};
pub use quota::{cluster_weights, largest_remainder, ClusterWeights};
pub use silhouette::{filter_lowest, silhouette, SilhouetteReport, FILTER_FRACTION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("insufficient data for clustering: {available} samples, need {needed}")]
    InsufficientData { available: usize, needed: usize },
    #[error("silhouette undefined for k = {k}")]
    SilhouetteUndefined { k: usize },
    #[error("no eligible minority samples to synthesize from")]
    CannotSynthesize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub k_min: usize,
    /// Further capped at a tenth of the window length.
    pub k_max: usize,
    /// Neighbors considered for interpolation.
    pub k_nn: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Windows longer than this choose `k` on a subsample of this size.
    pub selection_cap: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 8,
            k_nn: 5,
            max_iter: 100,
            tol: 1e-6,
            selection_cap: 2000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), crate::ConfigError> {
        use crate::ConfigError;
        if self.k_min < 2 {
            return Err(ConfigError::new("sampler.k_min", "must be at least 2"));
        }
        if self.k_max < self.k_min {
            return Err(ConfigError::new("sampler.k_max", "must be at least k_min"));
        }
        if self.k_nn == 0 {
            return Err(ConfigError::new("sampler.k_nn", "must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(ConfigError::new("sampler.tol", "must be non-negative"));
        }
        Ok(())
    }

    fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Running per-feature z-score over every arrival seen so far.
#[derive(Debug, Clone, Default)]
pub struct Standardizer {
    moments: Vec<RunningMoments>,
}

impl Standardizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, features: &[f64]) {
        if self.moments.is_empty() {
            self.moments = vec![RunningMoments::default(); features.len()];
        }
        for (m, &x) in self.moments.iter_mut().zip(features) {
            m.push(x);
        }
    }

    /// Standardized copy of `features`; constant features map to 0.
    pub fn scale(&self, features: &[f64]) -> Vec<f64> {
        if self.moments.is_empty() {
            return features.to_vec();
        }
        features
            .iter()
            .zip(&self.moments)
            .map(|(&x, m)| {
                let sd = m.population_variance().sqrt();
                if sd > 0.0 {
                    (x - m.mean()) / sd
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Clustering and silhouette filter of one window snapshot.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    pub seqs: Vec<u64>,
    pub subgroups: Vec<Subgroup>,
    /// Standardized features the geometry was computed on.
    pub scaled: Vec<Vec<f64>>,
    pub clustering: Clustering,
    pub report: SilhouetteReport,
}

impl SamplingPlan {
    pub fn build<R: Rng>(
        window: &SlidingWindow,
        standardizer: &Standardizer,
        cfg: &SamplerConfig,
        rng: &mut R,
    ) -> Result<Self, SamplingError> {
        let seqs = window.samples().iter().map(|s| s.seq).collect();
        let subgroups = window.labels().iter().copied().collect();
        let scaled: Vec<Vec<f64>> = window
            .samples()
            .iter()
            .map(|s| standardizer.scale(&s.features))
            .collect();
        let n = scaled.len();
        let k_max = cfg.k_max.min(default_k_max(n)).max(cfg.k_min);
        let (clustering, distances) = kmeans::select_clustering(
            &scaled,
            cfg.k_min,
            k_max,
            cfg.kmeans_params(),
            cfg.selection_cap,
            rng,
        )?;
        let report = if clustering.degenerate {
            SilhouetteReport::keep_all(n)
        } else {
            match distances {
                Some(d) => silhouette::silhouette_from_matrix(&d, &clustering),
                None => silhouette(&scaled, &clustering)?,
            }
        };
        Ok(Self {
            seqs,
            subgroups,
            scaled,
            clustering,
            report,
        })
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    /// Flags retained samples that are still in `window` and whose subgroup
    /// satisfies `target`.
    pub fn minority_flags(&self, window: &SlidingWindow, target: impl Fn(Subgroup) -> bool) -> Vec<bool> {
        let front = window.front_seq();
        self.seqs
            .iter()
            .zip(&self.subgroups)
            .zip(&self.report.retained)
            .map(|((&seq, &sg), &kept)| kept && front.is_some_and(|f| seq >= f) && target(sg))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{Group, Instance, Label};

    #[test]
    fn standardizer_centers_and_scales() {
        let mut s = Standardizer::new();
        s.observe(&[0.0, 5.0]);
        s.observe(&[2.0, 5.0]);
        assert_eq!(s.scale(&[2.0, 7.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn plan_flags_follow_window_front() {
        let mut window = SlidingWindow::new();
        let mut standardizer = Standardizer::new();
        for i in 0..40u64 {
            let x = vec![(i % 4) as f64 * 10.0, (i % 3) as f64];
            standardizer.observe(&x);
            let label = if i % 2 == 0 { Label::Favorable } else { Label::Unfavorable };
            window.push(Instance::new(x, Group::Unprivileged, label, i));
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let plan = SamplingPlan::build(&window, &standardizer, &SamplerConfig::default(), &mut rng).unwrap();
        assert_eq!(plan.len(), 40);
        assert_eq!(plan.report.dropped(), 8);
        window.pop_front();
        let flags = plan.minority_flags(&window, |sg| sg.label().is_favorable());
        assert!(!flags[0]);
        assert!(flags.iter().skip(1).step_by(2).all(|f| !f));
    }
}
