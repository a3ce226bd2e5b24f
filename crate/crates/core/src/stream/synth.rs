use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Group, Instance, Label};
use crate::error::ConfigError;

/// Probability of a favorable label as a function of the arrival index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ImbalanceSchedule {
    Fixed {
        favorable: f64,
    },
    /// Linear ramp from `from` at `start_seq` to `to` at `end_seq`, constant
    /// outside the ramp.
    Linear {
        from: f64,
        to: f64,
        start_seq: u64,
        end_seq: u64,
    },
    /// Alternates between `low` and `high` every `period` instances, so the
    /// favorable class swaps between minority and majority.
    Fluctuating {
        low: f64,
        high: f64,
        period: u64,
    },
    /// Step function: each `(seq, p)` point holds until the next one.
    Piecewise {
        points: Vec<(u64, f64)>,
    },
}

impl ImbalanceSchedule {
    pub fn favorable_probability(&self, seq: u64) -> f64 {
        match *self {
            ImbalanceSchedule::Fixed { favorable } => favorable,
            ImbalanceSchedule::Linear {
                from,
                to,
                start_seq,
                end_seq,
            } => {
                if end_seq <= start_seq {
                    if seq < start_seq {
                        from
                    } else {
                        to
                    }
                } else if seq <= start_seq {
                    from
                } else if seq >= end_seq {
                    to
                } else {
                    let t = (seq - start_seq) as f64 / (end_seq - start_seq) as f64;
                    from + t * (to - from)
                }
            }
            ImbalanceSchedule::Fluctuating { low, high, period } => {
                if (seq / period.max(1)) % 2 == 0 {
                    low
                } else {
                    high
                }
            }
            ImbalanceSchedule::Piecewise { ref points } => points
                .iter()
                .take_while(|(s, _)| *s <= seq)
                .last()
                .or(points.first())
                .map(|&(_, p)| p)
                .unwrap_or(0.5),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let probs: Vec<f64> = match self {
            ImbalanceSchedule::Fixed { favorable } => vec![*favorable],
            ImbalanceSchedule::Linear { from, to, .. } => vec![*from, *to],
            ImbalanceSchedule::Fluctuating { low, high, period } => {
                if *period == 0 {
                    return Err(ConfigError::new("imbalance.period", "must be positive"));
                }
                vec![*low, *high]
            }
            ImbalanceSchedule::Piecewise { points } => {
                if points.is_empty() {
                    return Err(ConfigError::new("imbalance.points", "must not be empty"));
                }
                if points.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(ConfigError::new(
                        "imbalance.points",
                        "seq values must strictly increase",
                    ));
                }
                points.iter().map(|p| p.1).collect()
            }
        };
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ConfigError::new("imbalance", "probabilities must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `P(privileged | label)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupBias {
    pub privileged_given_favorable: f64,
    pub privileged_given_unfavorable: f64,
}

impl SubgroupBias {
    /// Table giving an overall `privileged_share` of the population and a
    /// favorable rate `ratio` times higher for privileged members, at the given
    /// favorable-class probability.
    pub fn with_rate_ratio(privileged_share: f64, ratio: f64, favorable: f64) -> Self {
        // P(F|P) = ratio * P(F|U), with P(P) = s:
        //   a*pi/s = ratio * (1-a)*pi/(1-s)  =>  a = ratio*s / (ratio*s + 1 - s)
        let s = privileged_share;
        let a = ratio * s / (ratio * s + 1.0 - s);
        let b = ((s - a * favorable) / (1.0 - favorable)).clamp(0.0, 1.0);
        Self {
            privileged_given_favorable: a,
            privileged_given_unfavorable: b,
        }
    }

    pub fn privileged_probability(&self, label: Label) -> f64 {
        match label {
            Label::Favorable => self.privileged_given_favorable,
            Label::Unfavorable => self.privileged_given_unfavorable,
        }
    }
}

/// Replacement class means taking effect at `seq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub seq: u64,
    pub favorable_mean: Vec<f64>,
    pub unfavorable_mean: Vec<f64>,
}

/// Gaussian class-conditional stream generator settings.
///
/// Each feature is drawn from its own Gaussian given the label. Unprivileged
/// instances are additionally offset by `group_shift`, which gives the
/// sensitive attribute a footprint in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub n_features: usize,
    pub n_instances: u64,
    pub favorable_mean: Vec<f64>,
    pub unfavorable_mean: Vec<f64>,
    pub favorable_stddev: Vec<f64>,
    pub unfavorable_stddev: Vec<f64>,
    pub group_shift: Vec<f64>,
    pub drift: Vec<DriftPoint>,
    pub imbalance: ImbalanceSchedule,
    pub bias: SubgroupBias,
    pub seed: u64,
}

const CANONICAL_FEATURES: usize = 20;
const CANONICAL_FAVORABLE: f64 = 0.25;
/// Seq of the mean shift in [`StreamConfig::canonical`].
pub const CANONICAL_DRIFT_SEQ: u64 = 25_000;
const INFORMATIVE: usize = 10;
const CLASS_OFFSET: f64 = 0.35;
const GROUP_SHIFT: f64 = 1.5;
const DRIFT_SHIFT: f64 = 2.0;

impl Default for StreamConfig {
    fn default() -> Self {
        Self::canonical(0)
    }
}

impl StreamConfig {
    /// The desk-scale biased stream: 20 features, 50k instances, a 25%
    /// favorable class, a 70/30 privileged split with favorable labels twice
    /// as likely for privileged members, and one mean shift at seq 25k.
    pub fn canonical(seed: u64) -> Self {
        Self::canonical_with_drift(seed, DRIFT_SHIFT)
    }

    /// Canonical stream whose drift moves the informative class means by
    /// `shift` standard deviations.
    pub fn canonical_with_drift(seed: u64, shift: f64) -> Self {
        let d = CANONICAL_FEATURES;
        let fav: Vec<f64> = (0..d)
            .map(|j| if j < INFORMATIVE { CLASS_OFFSET } else { 0.0 })
            .collect();
        let unf: Vec<f64> = fav.iter().map(|m| -m).collect();
        let drift_shift = shift;
        let shift = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .map(|(j, m)| if j < INFORMATIVE { m + drift_shift } else { *m })
                .collect()
        };
        let group_shift = (0..d)
            .map(|j| {
                if (INFORMATIVE..INFORMATIVE + 5).contains(&j) {
                    GROUP_SHIFT
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            n_features: d,
            n_instances: 50_000,
            drift: vec![DriftPoint {
                seq: CANONICAL_DRIFT_SEQ,
                favorable_mean: shift(&fav),
                unfavorable_mean: shift(&unf),
            }],
            favorable_mean: fav,
            unfavorable_mean: unf,
            favorable_stddev: vec![1.0; d],
            unfavorable_stddev: vec![1.0; d],
            group_shift,
            imbalance: ImbalanceSchedule::Fixed {
                favorable: CANONICAL_FAVORABLE,
            },
            bias: SubgroupBias::with_rate_ratio(0.7, 2.0, CANONICAL_FAVORABLE),
            seed,
        }
    }

    /// Same stream without the mean shift.
    pub fn stationary(seed: u64) -> Self {
        Self {
            drift: Vec::new(),
            ..Self::canonical(seed)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.n_features;
        if d == 0 {
            return Err(ConfigError::new("n_features", "must be positive"));
        }
        let vectors = [
            ("favorable_mean", &self.favorable_mean),
            ("unfavorable_mean", &self.unfavorable_mean),
            ("favorable_stddev", &self.favorable_stddev),
            ("unfavorable_stddev", &self.unfavorable_stddev),
            ("group_shift", &self.group_shift),
        ];
        for (key, v) in vectors {
            if v.len() != d {
                return Err(ConfigError::new(
                    key,
                    format!("expected {d} entries, found {}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::new(key, "entries must be finite"));
            }
        }
        if self
            .favorable_stddev
            .iter()
            .chain(&self.unfavorable_stddev)
            .any(|&s| s < 0.0)
        {
            return Err(ConfigError::new("stddev", "must be non-negative"));
        }
        if self.drift.windows(2).any(|w| w[0].seq >= w[1].seq) {
            return Err(ConfigError::new("drift", "seq values must strictly increase"));
        }
        for p in &self.drift {
            if p.favorable_mean.len() != d || p.unfavorable_mean.len() != d {
                return Err(ConfigError::new(
                    "drift",
                    format!("mean vectors must have {d} entries"),
                ));
            }
        }
        self.imbalance.validate()?;
        let b = self.bias;
        if !(0.0..=1.0).contains(&b.privileged_given_favorable)
            || !(0.0..=1.0).contains(&b.privileged_given_unfavorable)
        {
            return Err(ConfigError::new("bias", "probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Class mean active at `seq`.
    pub fn mean_at(&self, label: Label, seq: u64) -> &[f64] {
        let active = self.drift.iter().take_while(|p| p.seq <= seq).last();
        match (active, label) {
            (Some(p), Label::Favorable) => &p.favorable_mean,
            (Some(p), Label::Unfavorable) => &p.unfavorable_mean,
            (None, Label::Favorable) => &self.favorable_mean,
            (None, Label::Unfavorable) => &self.unfavorable_mean,
        }
    }

    pub fn stddev(&self, label: Label) -> &[f64] {
        match label {
            Label::Favorable => &self.favorable_stddev,
            Label::Unfavorable => &self.unfavorable_stddev,
        }
    }

    pub fn stream(&self) -> Result<SyntheticStream, ConfigError> {
        SyntheticStream::new(self.clone())
    }
}

/// Seeded iterator over synthetic instances.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    cfg: StreamConfig,
    rng: ChaCha8Rng,
    seq: u64,
}

impl SyntheticStream {
    pub fn new(cfg: StreamConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self { cfg, rng, seq: 0 })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    /// Draws the next instance regardless of `n_instances`.
    pub fn synth_next(&mut self) -> Instance {
        let seq = self.seq;
        let p = self.cfg.imbalance.favorable_probability(seq);
        let label = if self.rng.random_bool(p) {
            Label::Favorable
        } else {
            Label::Unfavorable
        };
        let sensitive = if self
            .rng
            .random_bool(self.cfg.bias.privileged_probability(label))
        {
            Group::Privileged
        } else {
            Group::Unprivileged
        };
        let mean = self.cfg.mean_at(label, seq);
        let sd = self.cfg.stddev(label);
        let features = (0..self.cfg.n_features)
            .map(|j| {
                let z: f64 = self.rng.sample(StandardNormal);
                let shift = if sensitive == Group::Unprivileged {
                    self.cfg.group_shift[j]
                } else {
                    0.0
                };
                mean[j] + shift + sd[j] * z
            })
            .collect();
        self.seq += 1;
        Instance::new(features, sensitive, label, seq)
    }
}

impl Iterator for SyntheticStream {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        if self.seq >= self.cfg.n_instances {
            return None;
        }
        Some(self.synth_next())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> StreamConfig {
        StreamConfig {
            n_features: 2,
            n_instances: 10_000,
            favorable_mean: vec![1.0, -1.0],
            unfavorable_mean: vec![-1.0, 1.0],
            favorable_stddev: vec![1.0, 1.0],
            unfavorable_stddev: vec![1.0, 1.0],
            group_shift: vec![0.0, 0.0],
            drift: vec![],
            imbalance: ImbalanceSchedule::Fixed { favorable: 0.3 },
            bias: SubgroupBias {
                privileged_given_favorable: 0.8,
                privileged_given_unfavorable: 0.6,
            },
            seed,
        }
    }

    #[test]
    fn degenerate_schedule_gives_all_favorable() {
        let mut cfg = small(1);
        cfg.imbalance = ImbalanceSchedule::Fixed { favorable: 1.0 };
        assert!(cfg.stream().unwrap().take(500).all(|i| i.label == Label::Favorable));
    }

    #[test]
    fn zero_variance_emits_class_mean() {
        let mut cfg = small(2);
        cfg.favorable_stddev = vec![0.0, 0.0];
        cfg.unfavorable_stddev = vec![0.0, 0.0];
        for inst in cfg.stream().unwrap().take(200) {
            assert_eq!(inst.features, cfg.mean_at(inst.label, inst.seq));
        }
    }

    #[test]
    fn drift_shifts_feature_means_by_three_sigma() {
        let mut cfg = small(3);
        cfg.imbalance = ImbalanceSchedule::Fixed { favorable: 1.0 };
        cfg.drift = vec![DriftPoint {
            seq: 5000,
            favorable_mean: vec![4.0, -1.0],
            unfavorable_mean: vec![2.0, 1.0],
        }];
        let (mut pre, mut post) = ((0.0, 0usize), (0.0, 0usize));
        for inst in cfg.stream().unwrap() {
            let slot = if inst.seq < 5000 { &mut pre } else { &mut post };
            slot.0 += inst.features[0];
            slot.1 += 1;
        }
        let diff = post.0 / post.1 as f64 - pre.0 / pre.1 as f64;
        // sample-mean oracle: two means of 5000 unit-variance draws
        assert!((diff - 3.0).abs() < 0.1, "diff {diff}");
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<_> = small(9).stream().unwrap().take(300).collect();
        let b: Vec<_> = small(9).stream().unwrap().take(300).collect();
        assert_eq!(a, b);
        let c: Vec<_> = small(10).stream().unwrap().take(300).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn imbalance_within_three_standard_errors() {
        let cfg = small(4);
        let n = cfg.n_instances as f64;
        let fav = cfg
            .stream()
            .unwrap()
            .filter(|i| i.label == Label::Favorable)
            .count() as f64;
        let se = (0.3 * 0.7 / n).sqrt();
        assert!((fav / n - 0.3).abs() < 3.0 * se);
    }

    #[test]
    fn canonical_bias_table_doubles_privileged_rate() {
        let b = SubgroupBias::with_rate_ratio(0.7, 2.0, 0.25);
        let pi = 0.25;
        let priv_share = b.privileged_given_favorable * pi + b.privileged_given_unfavorable * (1.0 - pi);
        assert!((priv_share - 0.7).abs() < 1e-12);
        let fav_priv = b.privileged_given_favorable * pi / 0.7;
        let fav_unpriv = (1.0 - b.privileged_given_favorable) * pi / 0.3;
        assert!((fav_priv / fav_unpriv - 2.0).abs() < 1e-12);
    }

    #[test]
    fn schedules() {
        let lin = ImbalanceSchedule::Linear {
            from: 0.1,
            to: 0.5,
            start_seq: 100,
            end_seq: 200,
        };
        assert_eq!(lin.favorable_probability(0), 0.1);
        assert!((lin.favorable_probability(150) - 0.3).abs() < 1e-12);
        assert_eq!(lin.favorable_probability(500), 0.5);
        let fl = ImbalanceSchedule::Fluctuating {
            low: 0.2,
            high: 0.8,
            period: 10,
        };
        assert_eq!(fl.favorable_probability(5), 0.2);
        assert_eq!(fl.favorable_probability(15), 0.8);
        let pw = ImbalanceSchedule::Piecewise {
            points: vec![(0, 0.3), (50, 0.6)],
        };
        assert_eq!(pw.favorable_probability(49), 0.3);
        assert_eq!(pw.favorable_probability(50), 0.6);
    }

    #[test]
    fn rejects_non_increasing_drift() {
        let mut cfg = small(0);
        let p = DriftPoint {
            seq: 10,
            favorable_mean: vec![0.0, 0.0],
            unfavorable_mean: vec![0.0, 0.0],
        };
        cfg.drift = vec![p.clone(), p];
        assert!(cfg.validate().is_err());
    }
}
