use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{check_dim, LearnerError, OnlineLearner, Prediction, RunningMoments};
use crate::stream::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafPrediction {
    MajorityClass,
    NaiveBayes,
    /// Per leaf, whichever of majority class and naive Bayes has been more
    /// accurate on the instances routed there.
    NaiveBayesAdaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoeffdingConfig {
    /// Instances a leaf must accumulate between split attempts.
    pub grace_period: u64,
    /// `δ` of the Hoeffding bound.
    pub split_confidence: f64,
    /// Split anyway once the bound falls below this.
    pub tie_threshold: f64,
    /// Candidate thresholds per numeric feature.
    pub n_thresholds: usize,
    pub leaf_prediction: LeafPrediction,
    pub max_depth: Option<usize>,
}

impl Default for HoeffdingConfig {
    fn default() -> Self {
        Self {
            grace_period: 200,
            split_confidence: 1e-7,
            tie_threshold: 0.05,
            n_thresholds: 10,
            leaf_prediction: LeafPrediction::NaiveBayesAdaptive,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone)]
struct Leaf {
    /// Instances routed here since the leaf was created.
    counts: [u64; 2],
    /// Class distribution inherited from the parent's split estimate; only
    /// used for prediction.
    prior: [f64; 2],
    observers: Vec<[RunningMoments; 2]>,
    last_eval: u64,
    depth: usize,
    mc_correct: u64,
    nb_correct: u64,
}

impl Leaf {
    fn new(prior: [f64; 2], dim: usize, depth: usize) -> Self {
        Self {
            counts: [0; 2],
            prior,
            observers: vec![[RunningMoments::default(); 2]; dim],
            last_eval: 0,
            depth,
            mc_correct: 0,
            nb_correct: 0,
        }
    }

    fn seen(&self) -> u64 {
        self.counts[0] + self.counts[1]
    }

    fn majority(&self) -> Label {
        let w = |c: usize| self.counts[c] as f64 + self.prior[c];
        if w(0) > w(1) {
            Label::Favorable
        } else {
            Label::Unfavorable
        }
    }

    fn naive_bayes(&self, x: &[f64]) -> Label {
        let total = self.seen();
        if total == 0 || self.counts.contains(&0) {
            return self.majority();
        }
        let score = |c: usize| {
            let mut s = (self.counts[c] as f64 / total as f64).ln();
            for (obs, &v) in self.observers.iter().zip(x) {
                let m = &obs[c];
                let var = m.sample_variance().max(1e-9);
                let d = v - m.mean();
                s += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var);
            }
            s
        };
        if score(0) > score(1) {
            Label::Favorable
        } else {
            Label::Unfavorable
        }
    }

    fn predict(&self, x: &[f64], mode: LeafPrediction) -> Label {
        match mode {
            LeafPrediction::MajorityClass => self.majority(),
            LeafPrediction::NaiveBayes => self.naive_bayes(x),
            LeafPrediction::NaiveBayesAdaptive => {
                if self.nb_correct > self.mc_correct {
                    self.naive_bayes(x)
                } else {
                    self.majority()
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

struct Candidate {
    feature: usize,
    threshold: f64,
    merit: f64,
    left: [f64; 2],
    right: [f64; 2],
}

/// Very fast decision tree over numeric features.
///
/// Leaves keep per-class Gaussian estimators for every feature. After each
/// grace period an impure leaf scores candidate thresholds by information
/// gain, estimating the class mass on either side from the Gaussian CDFs, and
/// splits when the best candidate beats the runner-up by more than the
/// Hoeffding bound `sqrt(ln(1/δ) / 2n)` (the gain range is one bit), or the
/// bound has shrunk below the tie threshold.
#[derive(Debug, Clone)]
pub struct HoeffdingTree {
    cfg: HoeffdingConfig,
    nodes: Vec<Node>,
    dim: Option<usize>,
    splits: usize,
}

impl HoeffdingTree {
    pub fn new(cfg: HoeffdingConfig) -> Self {
        Self {
            cfg,
            nodes: Vec::new(),
            dim: None,
            splits: 0,
        }
    }

    pub fn config(&self) -> &HoeffdingConfig {
        &self.cfg
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_splits(&self) -> usize {
        self.splits
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }

    /// Index of the leaf an instance routes to.
    pub fn leaf_index(&self, x: &[f64]) -> Option<usize> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return Some(i),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Instances counted at the leaf with the given index.
    pub fn leaf_count(&self, index: usize) -> Option<u64> {
        match self.nodes.get(index)? {
            Node::Leaf(l) => Some(l.seen()),
            Node::Split { .. } => None,
        }
    }

    fn leaf_mut(&mut self, index: usize) -> &mut Leaf {
        match &mut self.nodes[index] {
            Node::Leaf(l) => l,
            Node::Split { .. } => unreachable!("index is not a leaf"),
        }
    }

    fn attempt_split(&mut self, index: usize) {
        let n_thresholds = self.cfg.n_thresholds.max(1);
        let dim = self.dim.unwrap_or(0);
        let cfg = self.cfg.clone();
        let leaf = self.leaf_mut(index);
        let n = leaf.seen();
        leaf.last_eval = n;
        let counts = [leaf.counts[0] as f64, leaf.counts[1] as f64];
        let parent_entropy = entropy(&counts);

        let mut best_per_feature: Vec<Candidate> = Vec::new();
        for (feature, obs) in leaf.observers.iter().enumerate() {
            let seen: Vec<&RunningMoments> = obs.iter().filter(|m| m.count() > 0).collect();
            let lo = seen.iter().map(|m| m.min()).fold(f64::INFINITY, f64::min);
            let hi = seen.iter().map(|m| m.max()).fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                continue;
            }
            let mut best: Option<Candidate> = None;
            for k in 1..=n_thresholds {
                let threshold = lo + (hi - lo) * k as f64 / (n_thresholds + 1) as f64;
                let mut left = [0.0; 2];
                let mut right = [0.0; 2];
                for c in 0..2 {
                    let share = mass_below(&obs[c], threshold);
                    left[c] = counts[c] * share;
                    right[c] = counts[c] - left[c];
                }
                let (wl, wr) = (left[0] + left[1], right[0] + right[1]);
                let total = wl + wr;
                let merit =
                    parent_entropy - (wl / total) * entropy(&left) - (wr / total) * entropy(&right);
                if best.as_ref().is_none_or(|b| merit > b.merit) {
                    best = Some(Candidate {
                        feature,
                        threshold,
                        merit,
                        left,
                        right,
                    });
                }
            }
            best_per_feature.extend(best);
        }
        best_per_feature.sort_by(|a, b| b.merit.total_cmp(&a.merit).then(a.feature.cmp(&b.feature)));

        let Some(best) = best_per_feature.first() else {
            return;
        };
        // the null split (no split) competes with merit 0
        let second = best_per_feature.get(1).map_or(0.0, |c| c.merit.max(0.0));
        let bound = ((1.0 / cfg.split_confidence).ln() / (2.0 * n as f64)).sqrt();
        let depth_ok = cfg.max_depth.is_none_or(|d| leaf.depth < d);
        if best.merit > 0.0
            && depth_ok
            && (best.merit - second > bound || bound < cfg.tie_threshold)
        {
            let depth = leaf.depth + 1;
            let (feature, threshold, lp, rp) = (best.feature, best.threshold, best.left, best.right);
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf(Leaf::new(lp, dim, depth)));
            self.nodes.push(Node::Leaf(Leaf::new(rp, dim, depth)));
            self.nodes[index] = Node::Split {
                feature,
                threshold,
                left,
                right: left + 1,
            };
            self.splits += 1;
        }
    }
}

/// Estimated share of a class's values at or below `t`, from its Gaussian fit.
fn mass_below(m: &RunningMoments, t: f64) -> f64 {
    if m.count() == 0 {
        return 0.0;
    }
    let sd = m.sample_variance().sqrt();
    if sd <= 0.0 {
        return if m.mean() <= t { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-(t - m.mean()) / (sd * std::f64::consts::SQRT_2))
}

fn entropy(dist: &[f64; 2]) -> f64 {
    let total = dist[0] + dist[1];
    if total <= 0.0 {
        return 0.0;
    }
    dist.iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            -p * p.log2()
        })
        .sum()
}

impl OnlineLearner for HoeffdingTree {
    fn predict(&self, features: &[f64]) -> Result<Prediction, LearnerError> {
        check_dim(self.dim, features)?;
        let Some(i) = self.leaf_index(features) else {
            return Ok(Prediction::COLD);
        };
        match &self.nodes[i] {
            Node::Leaf(l) => Ok(Prediction::warm(
                l.predict(features, self.cfg.leaf_prediction),
            )),
            Node::Split { .. } => unreachable!(),
        }
    }

    fn train(&mut self, features: &[f64], label: Label) -> Result<(), LearnerError> {
        check_dim(self.dim, features)?;
        if self.dim.is_none() {
            self.dim = Some(features.len());
            self.nodes.push(Node::Leaf(Leaf::new([0.0; 2], features.len(), 0)));
        }
        let index = self.leaf_index(features).expect("tree has a root");
        let grace = self.cfg.grace_period.max(1);
        let adaptive = self.cfg.leaf_prediction == LeafPrediction::NaiveBayesAdaptive;
        let leaf = self.leaf_mut(index);
        if adaptive {
            if leaf.majority() == label {
                leaf.mc_correct += 1;
            }
            if leaf.naive_bayes(features) == label {
                leaf.nb_correct += 1;
            }
        }
        let c = label.index();
        leaf.counts[c] += 1;
        for (obs, &x) in leaf.observers.iter_mut().zip(features) {
            obs[c].push(x);
        }
        let pure = leaf.counts.contains(&0);
        if !pure && leaf.seen() - leaf.last_eval >= grace {
            self.attempt_split(index);
        }
        Ok(())
    }

    fn n_features(&self) -> Option<usize> {
        self.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn threshold_instance(rng: &mut ChaCha8Rng) -> ([f64; 3], Label) {
        let x: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let y = if x[0] > 0.0 {
            Label::Favorable
        } else {
            Label::Unfavorable
        };
        (x, y)
    }

    #[test]
    fn untrained_tree_is_cold() {
        let t = HoeffdingTree::new(HoeffdingConfig::default());
        assert!(t.predict(&[0.0]).unwrap().cold_start);
    }

    #[test]
    fn learns_threshold_concept() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut tree = HoeffdingTree::new(HoeffdingConfig::default());
        for _ in 0..10_000 {
            let (x, y) = threshold_instance(&mut rng);
            tree.train(&x, y).unwrap();
        }
        let mut correct = 0;
        for _ in 0..1000 {
            let (x, y) = threshold_instance(&mut rng);
            if tree.predict(&x).unwrap().label == y {
                correct += 1;
            }
        }
        assert!(correct >= 950, "accuracy {correct}/1000");
        assert!(tree.n_splits() >= 1);
    }

    #[test]
    fn no_split_before_grace_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tree = HoeffdingTree::new(HoeffdingConfig::default());
        for _ in 0..199 {
            let (x, y) = threshold_instance(&mut rng);
            tree.train(&x, y).unwrap();
            assert_eq!(tree.n_splits(), 0);
        }
    }

    #[test]
    fn constant_label_never_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tree = HoeffdingTree::new(HoeffdingConfig::default());
        for _ in 0..20_000 {
            let (x, _) = threshold_instance(&mut rng);
            tree.train(&x, Label::Favorable).unwrap();
        }
        assert_eq!(tree.n_splits(), 0);
        assert_eq!(tree.n_nodes(), 1);
    }

    #[test]
    fn leaf_counts_match_routed_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tree = HoeffdingTree::new(HoeffdingConfig::default());
        let mut routed = std::collections::HashMap::<usize, u64>::new();
        let mut splits = 0;
        for _ in 0..5000 {
            let (x, y) = threshold_instance(&mut rng);
            let leaf = tree.leaf_index(&x).unwrap_or(0);
            tree.train(&x, y).unwrap();
            if tree.n_splits() != splits {
                // the leaf that just split is gone; its children start empty
                splits = tree.n_splits();
                routed.remove(&leaf);
                continue;
            }
            *routed.entry(leaf).or_default() += 1;
        }
        for (leaf, n) in routed {
            assert_eq!(tree.leaf_count(leaf), Some(n));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut tree = HoeffdingTree::new(HoeffdingConfig::default());
        tree.train(&[1.0, 2.0], Label::Favorable).unwrap();
        assert!(tree.predict(&[1.0]).is_err());
        assert!(tree.train(&[1.0], Label::Favorable).is_err());
    }
}
