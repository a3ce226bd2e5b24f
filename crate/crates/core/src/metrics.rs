//! Incremental fairness and performance metrics.
//!
//! The cumulative parity gap (CSPD) and cumulative opportunity gap (CEOD) are
//! blended recursions:
//!
//! ```text
//! gap_t   = rate_privileged(1..t) - rate_unprivileged(1..t)
//! value_t = (1 - λ) * gap_t + λ * value_{t-1}
//! ```
//!
//! where the rates are cumulative over every prediction so far. For CSPD the
//! rate is the share of favorable predictions in the group; for CEOD it is the
//! true positive rate among the group's favorable-label instances. Positive
//! values mean the privileged group is favored.
//!
//! Until both groups have been observed (for CEOD: both groups have at least
//! one favorable-label instance) the value stays at 0 and is flagged as
//! warm-up; the recursion starts at the first step where both rates exist.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::{Group, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("imbalance ratio undefined: both class counts are zero")]
    EmptyCounts,
    #[error("{metric} undefined: no {missing} instances have been scored")]
    Undefined {
        metric: &'static str,
        missing: &'static str,
    },
    #[error("decay factor must lie in [0, 1]")]
    InvalidDecay,
}

/// Minority share of a two-class population: `minority / (minority + majority)`.
///
/// The smaller of the two counts is taken as the minority, so the result is
/// always in `[0, 0.5]`.
pub fn imbalance_ratio(minority: u64, majority: u64) -> Result<f64, MetricError> {
    let total = minority + majority;
    if total == 0 {
        return Err(MetricError::EmptyCounts);
    }
    Ok(minority.min(majority) as f64 / total as f64)
}

/// A fairness value with its warm-up flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessValue {
    pub value: f64,
    pub warmup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessSnapshot {
    pub cspd: FairnessValue,
    pub ceod: FairnessValue,
}

impl FairnessSnapshot {
    pub fn warmup(&self) -> bool {
        self.cspd.warmup || self.ceod.warmup
    }
}

/// Running state for the decayed cumulative fairness gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessAccumulator {
    lambda: f64,
    members: [u64; 2],
    favorable_predictions: [u64; 2],
    positives: [u64; 2],
    true_positives: [u64; 2],
    cspd: FairnessValue,
    ceod: FairnessValue,
}

const WARMUP: FairnessValue = FairnessValue {
    value: 0.0,
    warmup: true,
};

impl FairnessAccumulator {
    pub fn new(lambda: f64) -> Result<Self, MetricError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(MetricError::InvalidDecay);
        }
        Ok(Self {
            lambda,
            members: [0; 2],
            favorable_predictions: [0; 2],
            positives: [0; 2],
            true_positives: [0; 2],
            cspd: WARMUP,
            ceod: WARMUP,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn blend(&self, gap: f64, previous: f64) -> f64 {
        (1.0 - self.lambda) * gap + self.lambda * previous
    }

    /// Folds one prediction into the parity gap and returns the new CSPD.
    pub fn update_cspd(&mut self, group: Group, predicted_favorable: bool) -> FairnessValue {
        let g = group.index();
        self.members[g] += 1;
        if predicted_favorable {
            self.favorable_predictions[g] += 1;
        }
        if let Some(gap) = gap(&self.favorable_predictions, &self.members) {
            self.cspd = FairnessValue {
                value: self.blend(gap, self.cspd.value),
                warmup: false,
            };
        }
        self.cspd
    }

    /// Folds one prediction into the opportunity gap and returns the new CEOD.
    /// Only favorable-label instances move the true positive rates, but the
    /// recursion advances on every call once both rates exist.
    pub fn update_ceod(
        &mut self,
        group: Group,
        truly_favorable: bool,
        predicted_favorable: bool,
    ) -> FairnessValue {
        let g = group.index();
        if truly_favorable {
            self.positives[g] += 1;
            if predicted_favorable {
                self.true_positives[g] += 1;
            }
        }
        if let Some(gap) = gap(&self.true_positives, &self.positives) {
            self.ceod = FairnessValue {
                value: self.blend(gap, self.ceod.value),
                warmup: false,
            };
        }
        self.ceod
    }

    pub fn update(&mut self, group: Group, truth: Label, prediction: Label) -> FairnessSnapshot {
        let cspd = self.update_cspd(group, prediction.is_favorable());
        let ceod = self.update_ceod(group, truth.is_favorable(), prediction.is_favorable());
        FairnessSnapshot { cspd, ceod }
    }

    pub fn cspd(&self) -> FairnessValue {
        self.cspd
    }

    pub fn ceod(&self) -> FairnessValue {
        self.ceod
    }

    pub fn snapshot(&self) -> FairnessSnapshot {
        FairnessSnapshot {
            cspd: self.cspd,
            ceod: self.ceod,
        }
    }
}

fn gap(hits: &[u64; 2], totals: &[u64; 2]) -> Option<f64> {
    if totals.iter().any(|&t| t == 0) {
        return None;
    }
    let rate = |g: Group| hits[g.index()] as f64 / totals[g.index()] as f64;
    Some(rate(Group::Privileged) - rate(Group::Unprivileged))
}

/// Confusion counts with the favorable label as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionAccumulator {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, truth: Label, prediction: Label) {
        match (truth, prediction) {
            (Label::Favorable, Label::Favorable) => self.tp += 1,
            (Label::Favorable, Label::Unfavorable) => self.fn_ += 1,
            (Label::Unfavorable, Label::Favorable) => self.fp += 1,
            (Label::Unfavorable, Label::Unfavorable) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn recall(&self) -> Result<f64, MetricError> {
        let pos = self.tp + self.fn_;
        if pos == 0 {
            return Err(MetricError::Undefined {
                metric: "recall",
                missing: "favorable",
            });
        }
        Ok(self.tp as f64 / pos as f64)
    }

    pub fn specificity(&self) -> Result<f64, MetricError> {
        let neg = self.tn + self.fp;
        if neg == 0 {
            return Err(MetricError::Undefined {
                metric: "specificity",
                missing: "unfavorable",
            });
        }
        Ok(self.tn as f64 / neg as f64)
    }

    /// Mean of true positive and true negative rates.
    pub fn balanced_accuracy(&self) -> Result<f64, MetricError> {
        let undefined = |missing| MetricError::Undefined {
            metric: "balanced accuracy",
            missing,
        };
        let tpr = self.recall().map_err(|_| undefined("favorable"))?;
        let tnr = self.specificity().map_err(|_| undefined("unfavorable"))?;
        Ok((tpr + tnr) / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn imbalance_ratio_hand_cases() {
        assert!(close(imbalance_ratio(3, 7).unwrap(), 0.3));
        assert!(close(imbalance_ratio(5, 5).unwrap(), 0.5));
        assert_eq!(imbalance_ratio(0, 10).unwrap(), 0.0);
        assert_eq!(imbalance_ratio(0, 0), Err(MetricError::EmptyCounts));
    }

    /// Feeds predictions that produce the requested cumulative rates after
    /// 10 members per group.
    fn fill(acc: &mut FairnessAccumulator, priv_fav: u64, unpriv_fav: u64) -> FairnessValue {
        let mut last = WARMUP;
        for i in 0..10 {
            acc.update_cspd(Group::Privileged, i < priv_fav);
            last = acc.update_cspd(Group::Unprivileged, i < unpriv_fav);
        }
        last
    }

    #[test]
    fn cspd_without_decay_is_rate_gap() {
        let mut acc = FairnessAccumulator::new(0.0).unwrap();
        let v = fill(&mut acc, 8, 6);
        assert!(close(v.value, 0.2));
        assert!(!v.warmup);
    }

    #[test]
    fn cspd_blends_previous_value() {
        let mut acc = FairnessAccumulator::new(0.5).unwrap();
        acc.cspd = FairnessValue {
            value: 0.1,
            warmup: false,
        };
        // cumulative rates 0.6 (priv) and 0.4 (unpriv) after the next update
        acc.members = [5, 4];
        acc.favorable_predictions = [3, 2];
        let v = acc.update_cspd(Group::Unprivileged, false);
        assert!(close(v.value, 0.15), "{}", v.value);
    }

    #[test]
    fn equal_rates_give_zero() {
        let mut acc = FairnessAccumulator::new(0.0).unwrap();
        assert_eq!(fill(&mut acc, 5, 5).value, 0.0);
        // rates stay equal at every step, so memory holds nothing either
        for lambda in [0.3, 0.9] {
            let mut acc = FairnessAccumulator::new(lambda).unwrap();
            let v = fill(&mut acc, 10, 10);
            assert_eq!(v.value, 0.0);
        }
    }

    #[test]
    fn warmup_until_both_groups_seen() {
        let mut acc = FairnessAccumulator::new(0.5).unwrap();
        let v = acc.update_cspd(Group::Privileged, true);
        assert!(v.warmup);
        assert_eq!(v.value, 0.0);
        let v = acc.update_cspd(Group::Unprivileged, false);
        assert!(!v.warmup);
        assert!(close(v.value, 0.5));
    }

    #[test]
    fn ceod_without_decay_is_tpr_gap() {
        let mut acc = FairnessAccumulator::new(0.0).unwrap();
        let mut v = WARMUP;
        for i in 0..10 {
            acc.update_ceod(Group::Privileged, true, i < 9);
            v = acc.update_ceod(Group::Unprivileged, true, i < 7);
        }
        assert!(close(v.value, 0.2));
    }

    #[test]
    fn ceod_zero_when_all_correct() {
        let mut acc = FairnessAccumulator::new(0.4).unwrap();
        for i in 0..20 {
            let g = if i % 3 == 0 { Group::Unprivileged } else { Group::Privileged };
            let truth = if i % 2 == 0 { Label::Favorable } else { Label::Unfavorable };
            acc.update(g, truth, truth);
        }
        assert_eq!(acc.ceod().value, 0.0);
    }

    #[test]
    fn ceod_full_decay_keeps_history() {
        let mut acc = FairnessAccumulator::new(1.0).unwrap();
        acc.ceod = FairnessValue {
            value: 0.05,
            warmup: false,
        };
        acc.positives = [3, 3];
        acc.true_positives = [3, 0];
        let v = acc.update_ceod(Group::Privileged, true, false);
        assert_eq!(v.value, 0.05);
    }

    #[test]
    fn invalid_decay_rejected() {
        assert!(FairnessAccumulator::new(1.5).is_err());
        assert!(FairnessAccumulator::new(-0.1).is_err());
    }

    #[test]
    fn balanced_accuracy_cases() {
        let c = ConfusionAccumulator {
            tp: 8,
            fn_: 2,
            tn: 6,
            fp: 4,
        };
        assert!(close(c.balanced_accuracy().unwrap(), 0.7));
        let perfect = ConfusionAccumulator {
            tp: 3,
            fn_: 0,
            tn: 5,
            fp: 0,
        };
        assert_eq!(perfect.balanced_accuracy().unwrap(), 1.0);
        let all_fav = ConfusionAccumulator {
            tp: 4,
            fn_: 0,
            tn: 0,
            fp: 6,
        };
        assert_eq!(all_fav.balanced_accuracy().unwrap(), 0.5);
        assert!(ConfusionAccumulator::new().balanced_accuracy().is_err());
    }

    #[test]
    fn recall_cases() {
        let mut c = ConfusionAccumulator {
            tp: 4,
            fn_: 1,
            ..Default::default()
        };
        assert!(close(c.recall().unwrap(), 0.8));
        c.fn_ = 0;
        assert_eq!(c.recall().unwrap(), 1.0);
        c.tp = 0;
        c.fn_ = 3;
        assert_eq!(c.recall().unwrap(), 0.0);
        assert!(ConfusionAccumulator::new().recall().is_err());
    }
}
