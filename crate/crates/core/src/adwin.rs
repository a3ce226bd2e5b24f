//! Adaptive windowing change detector with warning and change levels.
//!
//! The window is stored as an exponential histogram: tier `i` holds buckets
//! summarizing `2^i` consecutive values, at most `max_buckets` per tier. Each
//! bucket keeps its count, sum and within-bucket sum of squared deviations, so
//! counts and sums are exact and the variance is recombined losslessly.
//!
//! Every `clock` insertions the detector tests each bucket boundary as a cut
//! point. With `n0`, `n1` the sizes and `μ0`, `μ1` the means of the older and
//! newer sub-windows, `σ²` the window variance and
//!
//! ```text
//! level(n, δ) = ln(2 · ln(n) / δ)
//! ε(δ)        = sqrt(2 · m · σ² · level(n, δ)) + 2/3 · m · level(n, δ),   m = 1/n0 + 1/n1
//! ```
//!
//! a cut with `|μ0 - μ1| > ε(δ)` is a change: the oldest buckets are dropped
//! until no cut remains. A cut exceeding only `ε(10·δ)` is a warning. Since the
//! warning level uses the larger confidence parameter its threshold is
//! strictly lower, so a gradual drift crosses it first.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AdwinError {
    #[error("level error needs n >= 2, got {0}")]
    WindowTooShort(u64),
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("window is empty")]
    Empty,
}

/// `ln(2 · ln(n) / δ)`.
pub fn level_error(n: u64, delta: f64) -> Result<f64, AdwinError> {
    if n < 2 {
        return Err(AdwinError::WindowTooShort(n));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AdwinError::InvalidDelta(delta));
    }
    Ok(level_unchecked(n as f64, delta))
}

fn level_unchecked(n: f64, delta: f64) -> f64 {
    (2.0 * n.ln() / delta).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdwinConfig {
    /// Change-level confidence.
    pub delta: f64,
    /// The warning level uses `delta * warning_factor`.
    pub warning_factor: f64,
    /// Buckets per tier before two are merged.
    pub max_buckets: usize,
    /// Cut points are tested every `clock` insertions.
    pub clock: u64,
    /// Both sub-windows must hold at least this many values to be compared.
    pub min_sub_window: u64,
}

impl Default for AdwinConfig {
    fn default() -> Self {
        Self {
            delta: 0.002,
            warning_factor: 10.0,
            max_buckets: 5,
            clock: 32,
            min_sub_window: 5,
        }
    }
}

impl AdwinConfig {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "kebab-case")]
pub enum DriftSignal {
    None,
    /// `collected` counts the values gathered since the warning episode began.
    Warning { collected: u64 },
    Change { window_before: u64, window_after: u64 },
}

impl DriftSignal {
    pub fn is_change(&self) -> bool {
        matches!(self, DriftSignal::Change { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bucket {
    count: u64,
    sum: f64,
    /// Sum of squared deviations from the bucket mean.
    m2: f64,
}

impl Bucket {
    fn merge(a: Bucket, b: Bucket) -> Bucket {
        let n = a.count + b.count;
        let d = a.sum / a.count as f64 - b.sum / b.count as f64;
        Bucket {
            count: n,
            sum: a.sum + b.sum,
            m2: a.m2 + b.m2 + (a.count * b.count) as f64 * d * d / n as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveWindow {
    cfg: AdwinConfig,
    /// `tiers[i]` holds buckets of `2^i` values, oldest at the front.
    tiers: Vec<VecDeque<Bucket>>,
    width: u64,
    total: f64,
    m2: f64,
    ticks: u64,
    warning_collected: Option<u64>,
}

impl AdaptiveWindow {
    pub fn new(cfg: AdwinConfig) -> Result<Self, AdwinError> {
        if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
            return Err(AdwinError::InvalidDelta(cfg.delta));
        }
        Ok(Self {
            cfg: AdwinConfig {
                max_buckets: cfg.max_buckets.max(2),
                clock: cfg.clock.max(1),
                min_sub_window: cfg.min_sub_window.max(1),
                ..cfg
            },
            tiers: Vec::new(),
            width: 0,
            total: 0.0,
            m2: 0.0,
            ticks: 0,
            warning_collected: None,
        })
    }

    pub fn with_delta(delta: f64) -> Result<Self, AdwinError> {
        Self::new(AdwinConfig::with_delta(delta))
    }

    pub fn config(&self) -> &AdwinConfig {
        &self.cfg
    }

    pub fn len(&self) -> u64 {
        self.width
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0
    }

    pub fn window_mean(&self) -> Result<f64, AdwinError> {
        if self.width == 0 {
            return Err(AdwinError::Empty);
        }
        Ok(self.total / self.width as f64)
    }

    /// Population variance of the retained values.
    pub fn variance(&self) -> f64 {
        if self.width == 0 {
            0.0
        } else {
            self.m2 / self.width as f64
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.tiers.iter().map(VecDeque::len).sum()
    }

    /// Length of the new-concept window collected since a warning began.
    pub fn warning_collected(&self) -> Option<u64> {
        self.warning_collected
    }

    pub fn insert(&mut self, value: f64) -> DriftSignal {
        debug_assert!(value.is_finite());
        self.width += 1;
        if self.width > 1 {
            let prev_mean = self.total / (self.width - 1) as f64;
            let d = value - prev_mean;
            self.m2 += (self.width - 1) as f64 * d * d / self.width as f64;
        }
        self.total += value;
        if self.tiers.is_empty() {
            self.tiers.push(VecDeque::new());
        }
        self.tiers[0].push_back(Bucket {
            count: 1,
            sum: value,
            m2: 0.0,
        });
        self.compress();
        if let Some(c) = self.warning_collected.as_mut() {
            *c += 1;
        }

        self.ticks += 1;
        if self.ticks % self.cfg.clock != 0 {
            return DriftSignal::None;
        }

        let before = self.width;
        let mut changed = false;
        while self.find_cut(self.cfg.delta) {
            changed = true;
            self.drop_oldest();
        }
        if changed {
            self.warning_collected = None;
            return DriftSignal::Change {
                window_before: before,
                window_after: self.width,
            };
        }
        if self.find_cut(self.cfg.delta * self.cfg.warning_factor) {
            let collected = *self.warning_collected.get_or_insert(0);
            DriftSignal::Warning { collected }
        } else {
            self.warning_collected = None;
            DriftSignal::None
        }
    }

    fn compress(&mut self) {
        let mut tier = 0;
        while tier < self.tiers.len() {
            if self.tiers[tier].len() <= self.cfg.max_buckets {
                break;
            }
            let a = self.tiers[tier].pop_front().expect("tier overflow");
            let b = self.tiers[tier].pop_front().expect("tier overflow");
            if tier + 1 == self.tiers.len() {
                self.tiers.push(VecDeque::new());
            }
            self.tiers[tier + 1].push_back(Bucket::merge(a, b));
            tier += 1;
        }
    }

    /// Buckets from oldest to newest.
    fn buckets(&self) -> impl Iterator<Item = &Bucket> {
        self.tiers.iter().rev().flat_map(|t| t.iter())
    }

    fn find_cut(&self, delta: f64) -> bool {
        let n = self.width;
        let min = self.cfg.min_sub_window;
        if n < 2 * min || n < 2 {
            return false;
        }
        let level = level_unchecked(n as f64, delta).max(0.0);
        let var = self.variance();
        let mut n0 = 0u64;
        let mut s0 = 0.0;
        for b in self.buckets() {
            n0 += b.count;
            s0 += b.sum;
            let n1 = n - n0;
            if n1 < min {
                break;
            }
            if n0 < min {
                continue;
            }
            let s1 = self.total - s0;
            let diff = (s0 / n0 as f64 - s1 / n1 as f64).abs();
            let m = 1.0 / n0 as f64 + 1.0 / n1 as f64;
            let eps = (2.0 * m * var * level).sqrt() + 2.0 / 3.0 * m * level;
            if diff > eps {
                return true;
            }
        }
        false
    }

    fn drop_oldest(&mut self) {
        let Some(tier) = self.tiers.iter().rposition(|t| !t.is_empty()) else {
            return;
        };
        let b = self.tiers[tier].pop_front().expect("non-empty tier");
        let rest = self.width - b.count;
        let rest_total = self.total - b.sum;
        if rest == 0 {
            self.m2 = 0.0;
        } else {
            let d = b.sum / b.count as f64 - rest_total / rest as f64;
            let combined = b.m2 + (b.count * rest) as f64 * d * d / (b.count + rest) as f64;
            self.m2 = (self.m2 - combined).max(0.0);
        }
        self.width = rest;
        self.total = rest_total;
        while self.tiers.last().is_some_and(VecDeque::is_empty) {
            self.tiers.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn level_error_values() {
        // direct arithmetic: ln(2 * ln(100) / 0.002) and ln(2 * ln(100) / 0.02)
        let oracle = |n: f64, d: f64| (2.0 * n.ln() / d).ln();
        let change = level_error(100, 0.002).unwrap();
        assert!((change - oracle(100.0, 0.002)).abs() < 1e-12);
        assert!((change - 8.435).abs() < 1e-3);
        let warn = level_error(100, 0.02).unwrap();
        assert!((warn - 6.133).abs() < 1e-3);
        assert!(warn < change);
        // n = e, δ → 1 gives ln 2
        assert!((level_unchecked(std::f64::consts::E, 1.0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn level_error_rejects_bad_parameters() {
        assert_eq!(level_error(1, 0.1), Err(AdwinError::WindowTooShort(1)));
        assert!(level_error(10, 0.0).is_err());
        assert!(level_error(10, 1.0).is_err());
    }

    #[test]
    fn window_mean_cases() {
        let mut w = AdaptiveWindow::with_delta(0.002).unwrap();
        assert_eq!(w.window_mean(), Err(AdwinError::Empty));
        for _ in 0..4 {
            w.insert(1.0);
        }
        assert_eq!(w.window_mean().unwrap(), 1.0);

        let mut w = AdaptiveWindow::with_delta(0.002).unwrap();
        w.insert(0.0);
        w.insert(1.0);
        assert_eq!(w.window_mean().unwrap(), 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut w = AdaptiveWindow::with_delta(0.002).unwrap();
        let mut sum = 0.0;
        for _ in 0..1000 {
            let x = if rng.random_bool(0.3) { 1.0 } else { 0.0 };
            sum += x;
            w.insert(x);
        }
        // direct average of the inserted values
        let direct = sum / 1000.0;
        assert!((direct - 0.3).abs() < 0.05);
        if w.len() == 1000 {
            assert!((w.window_mean().unwrap() - direct).abs() < 1e-12);
        }
        assert!((w.window_mean().unwrap() - 0.3).abs() < 0.05);
    }

    #[test]
    fn constant_stream_never_signals() {
        let mut w = AdaptiveWindow::with_delta(0.002).unwrap();
        for _ in 0..10_000 {
            assert_eq!(w.insert(0.0), DriftSignal::None);
        }
        assert_eq!(w.len(), 10_000);
    }

    #[test]
    fn bucket_tiers_are_bounded() {
        let mut w = AdaptiveWindow::with_delta(0.002).unwrap();
        for i in 0..5000 {
            w.insert((i % 2) as f64);
            assert!(w.tiers.iter().all(|t| t.len() <= 5));
            assert_eq!(w.buckets().map(|b| b.count).sum::<u64>(), w.len());
        }
    }

    #[test]
    fn abrupt_shift_is_detected_and_window_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut w = AdaptiveWindow::with_delta(0.002).unwrap();
        let mut change = None;
        for t in 0..2000 {
            let p = if t < 1000 { 0.9 } else { 0.1 };
            let x = if rng.random_bool(p) { 1.0 } else { 0.0 };
            if let DriftSignal::Change {
                window_before,
                window_after,
            } = w.insert(x)
            {
                assert!(window_after < window_before);
                if change.is_none() {
                    change = Some(t);
                }
            }
        }
        let t = change.expect("no change detected");
        assert!((1000..1300).contains(&t), "detected at {t}");
    }

    #[test]
    fn warning_precedes_change_on_gradual_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = AdaptiveWindow::with_delta(0.002).unwrap();
        let mut first_warning = None;
        let mut first_change = None;
        for t in 0..6000u64 {
            let p = if t < 2000 { 0.2 } else { (0.2 + (t - 2000) as f64 / 4000.0).min(0.8) };
            let x = if rng.random_bool(p) { 1.0 } else { 0.0 };
            match w.insert(x) {
                DriftSignal::Warning { .. } if first_warning.is_none() => first_warning = Some(t),
                DriftSignal::Change { .. } if first_change.is_none() => first_change = Some(t),
                _ => {}
            }
        }
        let (wt, ct) = (first_warning.unwrap(), first_change.unwrap());
        assert!(wt < ct, "warning {wt} change {ct}");
    }
}
