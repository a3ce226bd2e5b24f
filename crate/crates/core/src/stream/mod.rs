//! Stream records, subgroup bookkeeping and stream sources.
//!
//! Every instance carries a binary sensitive attribute and a binary label, so
//! the stream partitions into four subgroups. The sliding window and the
//! subgroup counters defined here are shared by the rebalancing pipeline, the
//! sampler and the harness.

mod csv_source;
mod synth;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use csv_source::{load_csv, CsvError, CsvSchema, CsvStream};
pub use synth::{DriftPoint, CANONICAL_DRIFT_SEQ, ImbalanceSchedule, StreamConfig, SubgroupBias, SyntheticStream};

/// Sensitive group membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    Privileged,
    Unprivileged,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Privileged, Group::Unprivileged];

    pub fn index(self) -> usize {
        match self {
            Group::Privileged => 0,
            Group::Unprivileged => 1,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Privileged => Group::Unprivileged,
            Group::Unprivileged => Group::Privileged,
        }
    }
}

/// Binary class label. Favorable is encoded as `+1`, unfavorable as `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Favorable,
    Unfavorable,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Favorable, Label::Unfavorable];

    pub fn index(self) -> usize {
        match self {
            Label::Favorable => 0,
            Label::Unfavorable => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Favorable
        } else {
            Label::Unfavorable
        }
    }

    pub fn signed(self) -> i8 {
        match self {
            Label::Favorable => 1,
            Label::Unfavorable => -1,
        }
    }

    pub fn is_favorable(self) -> bool {
        self == Label::Favorable
    }

    pub fn other(self) -> Label {
        match self {
            Label::Favorable => Label::Unfavorable,
            Label::Unfavorable => Label::Favorable,
        }
    }
}

/// One of the four (group, label) cells. The discriminant order matches the
/// counter indices `C0..C3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subgroup {
    PrivilegedFavorable = 0,
    PrivilegedUnfavorable = 1,
    UnprivilegedFavorable = 2,
    UnprivilegedUnfavorable = 3,
}

impl Subgroup {
    pub const ALL: [Subgroup; 4] = [
        Subgroup::PrivilegedFavorable,
        Subgroup::PrivilegedUnfavorable,
        Subgroup::UnprivilegedFavorable,
        Subgroup::UnprivilegedUnfavorable,
    ];

    pub fn new(group: Group, label: Label) -> Subgroup {
        subgroup_of(group, label)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn group(self) -> Group {
        match self {
            Subgroup::PrivilegedFavorable | Subgroup::PrivilegedUnfavorable => Group::Privileged,
            _ => Group::Unprivileged,
        }
    }

    pub fn label(self) -> Label {
        match self {
            Subgroup::PrivilegedFavorable | Subgroup::UnprivilegedFavorable => Label::Favorable,
            _ => Label::Unfavorable,
        }
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Subgroup::PrivilegedFavorable => "privileged-favorable",
            Subgroup::PrivilegedUnfavorable => "privileged-unfavorable",
            Subgroup::UnprivilegedFavorable => "unprivileged-favorable",
            Subgroup::UnprivilegedUnfavorable => "unprivileged-unfavorable",
        };
        f.write_str(s)
    }
}

/// Maps a (group, label) pair to its subgroup tag.
pub fn subgroup_of(group: Group, label: Label) -> Subgroup {
    match (group, label) {
        (Group::Privileged, Label::Favorable) => Subgroup::PrivilegedFavorable,
        (Group::Privileged, Label::Unfavorable) => Subgroup::PrivilegedUnfavorable,
        (Group::Unprivileged, Label::Favorable) => Subgroup::UnprivilegedFavorable,
        (Group::Unprivileged, Label::Unfavorable) => Subgroup::UnprivilegedUnfavorable,
    }
}

/// A single stream record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub sensitive: Group,
    pub label: Label,
    /// Arrival index.
    pub seq: u64,
}

impl Instance {
    pub fn new(features: Vec<f64>, sensitive: Group, label: Label, seq: u64) -> Self {
        debug_assert!(!features.is_empty());
        debug_assert!(features.iter().all(|x| x.is_finite()));
        Self {
            features,
            sensitive,
            label,
            seq,
        }
    }

    pub fn subgroup(&self) -> Subgroup {
        subgroup_of(self.sensitive, self.label)
    }
}

/// Per-subgroup tallies for the current window plus the synthetic instances
/// derived from it.
///
/// `generated` records, per live window slot (keyed by the slot's `seq`), how
/// many synthetic instances used that slot as a template. When a slot leaves
/// the window its generated mass is deducted from `synthesized`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SubgroupCounters {
    pub observed: [u64; 4],
    pub synthesized: [u64; 4],
    generated: BTreeMap<u64, u64>,
}

impl SubgroupCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, subgroup: Subgroup) {
        self.observed[subgroup.index()] += 1;
    }

    /// Removes a window slot, deducting its observation and any synthetic mass
    /// it generated.
    pub fn evict(&mut self, seq: u64, subgroup: Subgroup) {
        let i = subgroup.index();
        self.observed[i] -= 1;
        if let Some(n) = self.generated.remove(&seq) {
            self.synthesized[i] -= n;
        }
    }

    /// Records one synthetic instance built from the window slot `template_seq`.
    pub fn record_synthetic(&mut self, template_seq: u64, subgroup: Subgroup) {
        self.synthesized[subgroup.index()] += 1;
        *self.generated.entry(template_seq).or_insert(0) += 1;
    }

    pub fn generated_by(&self, seq: u64) -> u64 {
        self.generated.get(&seq).copied().unwrap_or(0)
    }

    pub fn generated(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.generated.iter().map(|(&k, &v)| (k, v))
    }

    /// Observed plus synthesized count for a subgroup.
    pub fn total(&self, subgroup: Subgroup) -> u64 {
        let i = subgroup.index();
        self.observed[i] + self.synthesized[i]
    }

    pub fn observed_len(&self) -> u64 {
        self.observed.iter().sum()
    }

    pub fn class_total(&self, label: Label) -> u64 {
        Group::ALL
            .iter()
            .map(|&g| self.total(subgroup_of(g, label)))
            .sum()
    }

    pub fn group_total(&self, group: Group) -> u64 {
        Label::ALL
            .iter()
            .map(|&l| self.total(subgroup_of(group, l)))
            .sum()
    }
}

/// The window of recent samples and their subgroup tags, kept index-aligned.
#[derive(Debug, Clone, Default)]
pub struct SlidingWindow {
    samples: VecDeque<Instance>,
    labels: VecDeque<Subgroup>,
}

impl SlidingWindow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, instance: Instance) {
        self.labels.push_back(instance.subgroup());
        self.samples.push_back(instance);
    }

    pub fn pop_front(&mut self) -> Option<(Instance, Subgroup)> {
        let s = self.samples.pop_front()?;
        let l = self.labels.pop_front().expect("window labels out of sync");
        Some((s, l))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &VecDeque<Instance> {
        &self.samples
    }

    pub fn labels(&self) -> &VecDeque<Subgroup> {
        &self.labels
    }

    pub fn get(&self, i: usize) -> Option<&Instance> {
        self.samples.get(i)
    }

    /// Sequence number of the oldest retained sample.
    pub fn front_seq(&self) -> Option<u64> {
        self.samples.front().map(|s| s.seq)
    }

    /// Position of the sample with the given `seq`, if still retained.
    pub fn position_of(&self, seq: u64) -> Option<usize> {
        let front = self.front_seq()?;
        if seq < front {
            return None;
        }
        // seq is strictly increasing, so a binary search is exact.
        self.samples
            .binary_search_by_key(&seq, |s| s.seq)
            .ok()
    }

    /// Brute-force subgroup recount of the retained samples.
    pub fn recount(&self) -> [u64; 4] {
        let mut c = [0u64; 4];
        for sg in &self.labels {
            c[sg.index()] += 1;
        }
        c
    }
}
