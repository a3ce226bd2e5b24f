//! The rebalancing loop.
//!
//! Each arrival is scored, used for training, appended to the window and fed to
//! two drift detectors, one watching the prediction error and one watching a
//! signed per-instance parity indicator. A change signal from either shrinks
//! the window. Once the window is long enough, synthetic samples are added
//! round by round until the class balance ratio and the data-level fairness
//! ratio over window plus synthetics reach their targets.

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adwin::{AdaptiveWindow, AdwinConfig, DriftSignal};
use crate::error::ConfigError;
use crate::learners::{LearnerConfig, OnlineLearner, Prediction};
use crate::metrics::{imbalance_ratio, ConfusionAccumulator, FairnessAccumulator, FairnessSnapshot};
use crate::sampling::{
    cluster_weights, fair_generate, OneTimeLedger, SamplerConfig, SamplingError, SamplingPlan, Standardizer,
};
use crate::stream::{subgroup_of, Group, Instance, Label, SlidingWindow, Subgroup, SubgroupCounters};

/// Slack used when comparing ratios against their targets.
pub const RATIO_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technique {
    #[serde(rename = "fs2")]
    Fs2,
    /// Same loop with the fairness target ignored; synthesizes the minority
    /// class from all of its samples.
    #[serde(rename = "class-only-rebalance")]
    ClassOnly,
    #[serde(rename = "no-rebalance")]
    NoRebalance,
}

impl Technique {
    pub const ALL: [Technique; 3] = [Technique::Fs2, Technique::ClassOnly, Technique::NoRebalance];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Fs2 => "fs2",
            Technique::ClassOnly => "class-only-rebalance",
            Technique::NoRebalance => "no-rebalance",
        }
    }
}

impl std::fmt::Display for Technique {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Technique {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Technique::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| ConfigError::new("technique", format!("unknown technique `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fs2Config {
    /// Window length required before any rebalancing.
    pub min_size: usize,
    /// Target class balance ratio, in (0, 0.5].
    pub balance_target: f64,
    /// Target fairness ratio, in (0, 1].
    pub fairness_target: f64,
    /// Decay of the cumulative fairness metrics.
    pub decay: f64,
    /// Confidence of both drift detectors.
    pub drift_delta: f64,
    /// Oldest samples are evicted beyond this length.
    pub max_window: usize,
    /// Rebalancing rounds allowed per arrival.
    pub max_rounds: usize,
    pub learner: LearnerConfig,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for Fs2Config {
    fn default() -> Self {
        Self {
            min_size: 500,
            balance_target: 0.4,
            fairness_target: 0.9,
            decay: 0.5,
            drift_delta: 0.002,
            max_window: 1000,
            max_rounds: 10,
            learner: LearnerConfig::default(),
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

impl Fs2Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_size < 2 {
            return Err(ConfigError::new("fs2.min_size", "must be at least 2"));
        }
        if !(self.balance_target > 0.0 && self.balance_target <= 0.5) {
            return Err(ConfigError::new("fs2.balance_target", "must lie in (0, 0.5]"));
        }
        if !(self.fairness_target > 0.0 && self.fairness_target <= 1.0) {
            return Err(ConfigError::new("fs2.fairness_target", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(ConfigError::new("fs2.decay", "must lie in [0, 1]"));
        }
        if !(self.drift_delta > 0.0 && self.drift_delta < 1.0) {
            return Err(ConfigError::new("fs2.drift_delta", "must lie in (0, 1)"));
        }
        if self.max_window < 2 {
            return Err(ConfigError::new("fs2.max_window", "must be at least 2"));
        }
        if self.max_rounds == 0 {
            return Err(ConfigError::new("fs2.max_rounds", "must be positive"));
        }
        self.sampler.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detector {
    Error,
    Fairness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftLevel {
    Warning,
    Change,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub seq: u64,
    pub detector: Detector,
    pub level: DriftLevel,
    /// Sample window length before and after the reaction.
    pub window_len_before: usize,
    pub window_len_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RebalanceStatus {
    /// Both targets hold (possibly without any round).
    Completed,
    /// The round ceiling was hit first.
    Ceiling,
    /// No eligible templates.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub seq: u64,
    pub sensitive: Group,
    pub truth: Label,
    pub prediction: Prediction,
    pub fairness: FairnessSnapshot,
    pub balanced_accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub drift: Vec<DriftEvent>,
    /// Synthetic samples generated this step, per subgroup.
    pub synthesized: [u64; 4],
    pub rounds: usize,
    /// `None` when the window was too short to consider rebalancing.
    pub rebalance: Option<RebalanceStatus>,
    pub balance_ratio: f64,
    pub fairness_ratio: f64,
}

impl StepOutcome {
    pub fn synthesized_total(&self) -> u64 {
        self.synthesized.iter().sum()
    }
}

/// Class balance ratio over observed plus synthesized counts.
pub fn balance_ratio(counters: &SubgroupCounters) -> f64 {
    balance_of(&totals(counters))
}

/// `1 - |favorable rate (privileged) - favorable rate (unprivileged)|` over
/// observed plus synthesized counts; 0 when a group is absent.
pub fn fairness_ratio(counters: &SubgroupCounters) -> f64 {
    gap_of(&totals(counters)).map_or(0.0, |g| 1.0 - g.abs())
}

fn totals(counters: &SubgroupCounters) -> [u64; 4] {
    let mut t = [0; 4];
    for sg in Subgroup::ALL {
        t[sg.index()] = counters.total(sg);
    }
    t
}

fn balance_of(t: &[u64; 4]) -> f64 {
    let fav = t[Subgroup::PrivilegedFavorable.index()] + t[Subgroup::UnprivilegedFavorable.index()];
    let unf = t[Subgroup::PrivilegedUnfavorable.index()] + t[Subgroup::UnprivilegedUnfavorable.index()];
    imbalance_ratio(fav, unf).unwrap_or(0.0)
}

fn rate_of(t: &[u64; 4], group: Group) -> Option<f64> {
    let fav = t[subgroup_of(group, Label::Favorable).index()];
    let all = fav + t[subgroup_of(group, Label::Unfavorable).index()];
    (all > 0).then(|| fav as f64 / all as f64)
}

/// Favorable rate of the unprivileged group minus that of the privileged one.
fn gap_of(t: &[u64; 4]) -> Option<f64> {
    Some(rate_of(t, Group::Unprivileged)? - rate_of(t, Group::Privileged)?)
}

fn fairness_of(t: &[u64; 4]) -> f64 {
    gap_of(t).map_or(0.0, |g| 1.0 - g.abs())
}

fn with_added(t: &[u64; 4], cell: Subgroup, n: u64) -> [u64; 4] {
    let mut out = *t;
    out[cell.index()] += n;
    out
}

/// Smallest `n` in `lo..=hi` with `pred(n)`, for `pred` monotone false→true.
fn first_true(lo: u64, hi: u64, pred: impl Fn(u64) -> bool) -> Option<u64> {
    if !pred(hi) {
        return None;
    }
    let (mut lo, mut hi) = (lo, hi);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo)
}

/// Which samples to synthesize next and how many.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deficit {
    /// Targeted cells; class-only rebalancing targets both cells of a class.
    pub cells: DeficitCells,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeficitCells {
    Cell(Subgroup),
    Class(Label),
}

impl DeficitCells {
    pub fn contains(self, sg: Subgroup) -> bool {
        match self {
            DeficitCells::Cell(c) => c == sg,
            DeficitCells::Class(l) => sg.label() == l,
        }
    }
}

fn minority_class(t: &[u64; 4]) -> Label {
    let fav = t[0] + t[2];
    let unf = t[1] + t[3];
    if fav <= unf {
        Label::Favorable
    } else {
        Label::Unfavorable
    }
}

/// Smallest count of `label` samples that lifts the balance ratio to `target`.
fn balance_count(t: &[u64; 4], label: Label, target: f64, cap: u64) -> u64 {
    let cell = subgroup_of(Group::Privileged, label);
    first_true(0, cap, |n| balance_of(&with_added(t, cell, n)) + RATIO_EPS >= target).unwrap_or(cap)
}

/// Picks the cell (and count) for one round of fair rebalancing.
///
/// With the classes out of balance, the minority class is topped up in the
/// group whose favorable rate is on the wrong side: the lower-rate group when
/// the minority is favorable, the higher-rate group otherwise. The count either
/// closes the fairness gap (when that is the larger relative shortfall) or
/// closes the class gap without pushing the rate gap beyond the fairness band
/// on the other side. With only the fairness target missed, the cell whose
/// single addition shrinks the gap most is used, preferring one that keeps
/// the classes balanced. At least one sample and at most `cap` are requested.
pub fn select_deficit_subgroup(counters: &SubgroupCounters, p1: f64, f1: f64, cap: u64) -> Deficit {
    select_from_totals(&totals(counters), p1, f1, cap.max(1))
}

fn select_from_totals(t: &[u64; 4], p1: f64, f1: f64, cap: u64) -> Deficit {
    let band = 1.0 - f1;
    let bal = balance_of(t);
    let fair = fairness_of(t);
    let bal_short = ((p1 - bal) / p1).max(0.0);
    let fair_short = ((f1 - fair) / f1).max(0.0);
    let rate = |g| rate_of(t, g).unwrap_or(0.0);
    let fair_count = |cell: Subgroup| -> Option<u64> {
        first_true(0, cap, |n| {
            let g = gap_of(&with_added(t, cell, n));
            // moving towards the band from the side the cell pushes away from
            match (cell.group(), cell.label()) {
                (Group::Unprivileged, Label::Favorable) | (Group::Privileged, Label::Unfavorable) => {
                    g.is_some_and(|g| g + RATIO_EPS >= -band)
                }
                _ => g.is_some_and(|g| g - RATIO_EPS <= band),
            }
        })
        .filter(|&n| fairness_of(&with_added(t, cell, n)) + RATIO_EPS >= f1)
    };

    if bal + RATIO_EPS < p1 {
        let label = minority_class(t);
        let (pr, ur) = (rate(Group::Privileged), rate(Group::Unprivileged));
        let group = match label {
            Label::Favorable if pr < ur => Group::Privileged,
            Label::Favorable => Group::Unprivileged,
            Label::Unfavorable if ur > pr => Group::Unprivileged,
            Label::Unfavorable => Group::Privileged,
        };
        let cell = subgroup_of(group, label);
        let n_bal = balance_count(t, label, p1, cap);
        let n_fair = (fair_short > 0.0).then(|| fair_count(cell)).flatten();
        let count = match n_fair {
            Some(n) if fair_short > bal_short => n,
            _ => {
                // largest addition that keeps the gap inside the band on the far side
                let overshoots = |n: u64| {
                    let g = gap_of(&with_added(t, cell, n)).unwrap_or(0.0);
                    match (group, label) {
                        (Group::Unprivileged, Label::Favorable) | (Group::Privileged, Label::Unfavorable) => {
                            g - RATIO_EPS > band
                        }
                        _ => g + RATIO_EPS < -band,
                    }
                };
                let keep = first_true(0, cap, overshoots).map_or(cap, |n| n.saturating_sub(1));
                n_bal.min(keep)
            }
        };
        return Deficit {
            cells: DeficitCells::Cell(cell),
            count: count.clamp(1, cap),
        };
    }

    // only the fairness target is missed
    let (pr, ur) = (rate(Group::Privileged), rate(Group::Unprivileged));
    let (low, high) = if ur <= pr {
        (Group::Unprivileged, Group::Privileged)
    } else {
        (Group::Privileged, Group::Unprivileged)
    };
    let candidates = [subgroup_of(low, Label::Favorable), subgroup_of(high, Label::Unfavorable)];
    let step_gap = |cell| gap_of(&with_added(t, cell, 1)).map_or(f64::INFINITY, f64::abs);
    let mut best: Option<(bool, f64, Subgroup, u64)> = None;
    for cell in candidates {
        let n = fair_count(cell).unwrap_or(cap);
        let keeps_balance = balance_of(&with_added(t, cell, n)) + RATIO_EPS >= p1;
        let key = (keeps_balance, step_gap(cell));
        let better = match best {
            None => true,
            Some((kb, sg, _, _)) => (key.0 && !kb) || (key.0 == kb && key.1 < sg),
        };
        if better {
            best = Some((key.0, key.1, cell, n));
        }
    }
    let (_, _, cell, n) = best.expect("two candidates");
    Deficit {
        cells: DeficitCells::Cell(cell),
        count: n.clamp(1, cap),
    }
}

/// Class-only variant: the whole minority class, enough to reach `p1`.
fn select_class_deficit(counters: &SubgroupCounters, p1: f64, cap: u64) -> Deficit {
    let t = totals(counters);
    let label = minority_class(&t);
    Deficit {
        cells: DeficitCells::Class(label),
        count: balance_count(&t, label, p1, cap.max(1)).clamp(1, cap.max(1)),
    }
}

/// Full state of one run.
pub struct Pipeline {
    cfg: Fs2Config,
    technique: Technique,
    learner: Box<dyn OnlineLearner>,
    window: SlidingWindow,
    counters: SubgroupCounters,
    error_detector: AdaptiveWindow,
    fairness_detector: AdaptiveWindow,
    fairness: FairnessAccumulator,
    confusion: ConfusionAccumulator,
    standardizer: Standardizer,
    plan: Option<SamplingPlan>,
    plan_age: usize,
    ledger: OneTimeLedger,
    rng: ChaCha8Rng,
    seen: u64,
}

impl Pipeline {
    pub fn new(cfg: Fs2Config, technique: Technique) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let detector = || {
            AdaptiveWindow::new(AdwinConfig::with_delta(cfg.drift_delta))
                .map_err(|e| ConfigError::new("fs2.drift_delta", e.to_string()))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            technique,
            learner: cfg.learner.build(),
            window: SlidingWindow::new(),
            counters: SubgroupCounters::new(),
            error_detector: detector()?,
            fairness_detector: detector()?,
            fairness: FairnessAccumulator::new(cfg.decay)
                .map_err(|e| ConfigError::new("fs2.decay", e.to_string()))?,
            confusion: ConfusionAccumulator::new(),
            standardizer: Standardizer::new(),
            plan: None,
            plan_age: 0,
            ledger: OneTimeLedger::new(),
            rng,
            seen: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &Fs2Config {
        &self.cfg
    }

    pub fn technique(&self) -> Technique {
        self.technique
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    pub fn counters(&self) -> &SubgroupCounters {
        &self.counters
    }

    pub fn learner(&self) -> &dyn OnlineLearner {
        self.learner.as_ref()
    }

    pub fn fairness(&self) -> FairnessSnapshot {
        self.fairness.snapshot()
    }

    pub fn confusion(&self) -> &ConfusionAccumulator {
        &self.confusion
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Brute-force check that the counters describe the window exactly:
    /// observed counts match a recount, and synthesized counts match the
    /// generated mass of the live slots.
    pub fn counters_consistent(&self) -> bool {
        if self.window.recount() != self.counters.observed {
            return false;
        }
        let mut synth = [0u64; 4];
        for (seq, n) in self.counters.generated() {
            match self.window.position_of(seq) {
                Some(i) => synth[self.window.labels()[i].index()] += n,
                None => return false,
            }
        }
        synth == self.counters.synthesized
    }

    pub fn step(&mut self, instance: Instance) -> StepOutcome {
        let seq = instance.seq;
        let (sensitive, truth) = (instance.sensitive, instance.label);

        let prediction = self.learner.predict(&instance.features).unwrap_or_else(|e| {
            warn!("seq {seq}: {e}; predicting the default class");
            Prediction {
                label: Label::Unfavorable,
                cold_start: true,
            }
        });
        let fairness = self.fairness.update(sensitive, truth, prediction.label);
        self.confusion.record(truth, prediction.label);

        if let Err(e) = self.learner.train(&instance.features, truth) {
            warn!("seq {seq}: {e}; not trained");
        }
        self.standardizer.observe(&instance.features);
        self.counters.observe(instance.subgroup());
        self.window.push(instance);
        self.seen += 1;
        self.plan_age += 1;
        while self.window.len() > self.cfg.max_window {
            self.evict_front();
        }

        let mut drift = Vec::new();
        let error = if prediction.label == truth { 0.0 } else { 1.0 };
        let contribution = match (sensitive, prediction.label) {
            (Group::Privileged, Label::Favorable) => 1.0,
            (Group::Unprivileged, Label::Favorable) => -1.0,
            _ => 0.0,
        };
        let signals = [
            (Detector::Error, self.error_detector.insert(error)),
            (Detector::Fairness, self.fairness_detector.insert(0.5 + 0.5 * contribution)),
        ];
        for (detector, signal) in signals {
            match signal {
                DriftSignal::None => {}
                DriftSignal::Warning { collected } => {
                    if collected == 0 {
                        let len = self.window.len();
                        drift.push(DriftEvent {
                            seq,
                            detector,
                            level: DriftLevel::Warning,
                            window_len_before: len,
                            window_len_after: len,
                        });
                    }
                }
                DriftSignal::Change { window_after, .. } => {
                    let before = self.window.len();
                    let keep = (window_after as usize).min(before);
                    while self.window.len() > keep {
                        self.evict_front();
                    }
                    if keep < before {
                        self.plan = None;
                    }
                    debug!("seq {seq}: {detector:?} change, window {before} -> {keep}");
                    drift.push(DriftEvent {
                        seq,
                        detector,
                        level: DriftLevel::Change,
                        window_len_before: before,
                        window_len_after: keep,
                    });
                }
            }
        }

        let mut synthesized = [0u64; 4];
        let mut rounds = 0;
        let rebalance = (self.technique != Technique::NoRebalance && self.window.len() >= self.cfg.min_size)
            .then(|| self.rebalance(&mut synthesized, &mut rounds));

        StepOutcome {
            seq,
            sensitive,
            truth,
            prediction,
            fairness,
            balanced_accuracy: self.confusion.balanced_accuracy().ok(),
            recall: self.confusion.recall().ok(),
            drift,
            synthesized,
            rounds,
            rebalance,
            balance_ratio: balance_ratio(&self.counters),
            fairness_ratio: fairness_ratio(&self.counters),
        }
    }

    fn evict_front(&mut self) {
        if let Some((inst, sg)) = self.window.pop_front() {
            self.counters.evict(inst.seq, sg);
        }
    }

    fn targets_met(&self) -> bool {
        let bal_ok = balance_ratio(&self.counters) + RATIO_EPS >= self.cfg.balance_target;
        match self.technique {
            Technique::ClassOnly => bal_ok,
            _ => bal_ok && fairness_ratio(&self.counters) + RATIO_EPS >= self.cfg.fairness_target,
        }
    }

    fn plan_is_stale(&self) -> bool {
        let refresh = (self.window.len() / 10).max(50);
        self.plan.is_none() || self.plan_age >= refresh
    }

    fn rebuild_plan(&mut self) -> Result<(), SamplingError> {
        self.plan = None;
        let plan = SamplingPlan::build(&self.window, &self.standardizer, &self.cfg.sampler, &mut self.rng)?;
        self.plan = Some(plan);
        self.plan_age = 0;
        Ok(())
    }

    fn rebalance(&mut self, synthesized: &mut [u64; 4], rounds: &mut usize) -> RebalanceStatus {
        self.ledger.clear();
        let cap = self.window.len() as u64;
        while !self.targets_met() {
            if *rounds >= self.cfg.max_rounds {
                warn!("seq {}: rebalancing stopped after {} rounds", self.seen, rounds);
                return RebalanceStatus::Ceiling;
            }
            *rounds += 1;
            let deficit = match self.technique {
                Technique::ClassOnly => select_class_deficit(&self.counters, self.cfg.balance_target, cap),
                _ => select_deficit_subgroup(
                    &self.counters,
                    self.cfg.balance_target,
                    self.cfg.fairness_target,
                    cap,
                ),
            };
            match self.synthesize(deficit) {
                Ok(batch) => {
                    for s in batch {
                        synthesized[s.subgroup().index()] += 1;
                        if let Err(e) = self.learner.train(&s.features, s.label) {
                            warn!("synthetic sample not trained: {e}");
                        }
                    }
                }
                Err(e) => {
                    warn!("seq {}: rebalancing round aborted: {e}", self.seen);
                    return RebalanceStatus::Aborted;
                }
            }
        }
        RebalanceStatus::Completed
    }

    fn synthesize(&mut self, deficit: Deficit) -> Result<Vec<Instance>, SamplingError> {
        let mut fresh = false;
        if self.plan_is_stale() {
            self.rebuild_plan()?;
            fresh = true;
        }
        loop {
            let plan = self.plan.as_ref().expect("plan built");
            let flags = plan.minority_flags(&self.window, |sg| deficit.cells.contains(sg));
            let attempt = cluster_weights(&plan.clustering.assignment, plan.clustering.k, &flags, deficit.count)
                .and_then(|quota| {
                    fair_generate(
                        &self.window,
                        plan,
                        &flags,
                        &quota,
                        self.cfg.sampler.k_nn,
                        &mut self.ledger,
                        &mut self.counters,
                        &mut self.rng,
                    )
                });
            match attempt {
                Err(SamplingError::CannotSynthesize) if !fresh => {
                    self.rebuild_plan()?;
                    fresh = true;
                }
                other => return other,
            }
        }
    }
}
