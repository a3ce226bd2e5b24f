use std::collections::HashSet;

use rand::Rng;

use super::quota::{largest_remainder, ClusterWeights};
use super::{sq_dist, SamplingError, SamplingPlan};
use crate::stream::{Instance, SlidingWindow, SubgroupCounters};

/// Templates already used during the current rebalancing phase.
#[derive(Debug, Clone, Default)]
pub struct OneTimeLedger {
    used: HashSet<u64>,
}

impl OneTimeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.used.clear();
    }

    pub fn is_used(&self, seq: u64) -> bool {
        self.used.contains(&seq)
    }

    pub fn len(&self) -> usize {
        self.used.len()
    }

    pub fn is_empty(&self) -> bool {
        self.used.is_empty()
    }
}

/// Generates `quota.total_quota()` synthetic instances.
///
/// For each cluster, templates are drawn from its flagged samples, unused ones
/// first; a template is reused only once every member has served. The partner
/// is one of the template's `k_nn` nearest flagged samples in the same cluster
/// (lower plan index on distance ties), and the result is
/// `template + gap * (partner - template)` with `gap ~ U[0, 1)`, carrying the
/// template's group, label and seq. Each emitted sample is credited to its
/// template in `counters`.
///
/// Quota assigned to a cluster without flagged samples is redistributed over
/// the remaining clusters.
#[allow(clippy::too_many_arguments)]
pub fn fair_generate<R: Rng>(
    window: &SlidingWindow,
    plan: &SamplingPlan,
    minority: &[bool],
    quota: &ClusterWeights,
    k_nn: usize,
    ledger: &mut OneTimeLedger,
    counters: &mut SubgroupCounters,
    rng: &mut R,
) -> Result<Vec<Instance>, SamplingError> {
    let k = plan.clustering.k;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, (&c, &m)) in plan.clustering.assignment.iter().zip(minority).enumerate() {
        if m && window.position_of(plan.seqs[i]).is_some() {
            members[c].push(i);
        }
    }

    let mut quotas = quota.quotas.clone();
    let stranded: u64 = (0..k).filter(|&c| members[c].is_empty()).map(|c| quotas[c]).sum();
    if stranded > 0 {
        let sizes: Vec<u64> = members.iter().map(|m| m.len() as u64).collect();
        if sizes.iter().all(|&s| s == 0) {
            return Err(SamplingError::CannotSynthesize);
        }
        let extra = largest_remainder(&sizes, stranded);
        for c in 0..k {
            quotas[c] = if members[c].is_empty() { 0 } else { quotas[c] + extra[c] };
        }
    }

    let mut out = Vec::with_capacity(quotas.iter().sum::<u64>() as usize);
    for (c, &g) in quotas.iter().enumerate() {
        let pool = &members[c];
        for _ in 0..g {
            let fresh: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&i| !ledger.is_used(plan.seqs[i]))
                .collect();
            let template = if fresh.is_empty() {
                pool[rng.random_range(0..pool.len())]
            } else {
                fresh[rng.random_range(0..fresh.len())]
            };
            ledger.used.insert(plan.seqs[template]);

            let partner = pick_neighbor(plan, pool, template, k_nn, rng);
            let base = window
                .get(window.position_of(plan.seqs[template]).expect("live template"))
                .expect("position in range");
            let other = window
                .get(window.position_of(plan.seqs[partner]).expect("live neighbor"))
                .expect("position in range");
            let gap: f64 = rng.random();
            let features = interpolate(&base.features, &other.features, gap);
            let synthetic = Instance::new(features, base.sensitive, base.label, base.seq);
            counters.record_synthetic(base.seq, synthetic.subgroup());
            out.push(synthetic);
        }
    }
    Ok(out)
}

/// Point at fraction `gap` along the segment from `from` to `to`.
pub fn interpolate(from: &[f64], to: &[f64], gap: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(&a, &b)| a + gap * (b - a)).collect()
}

fn pick_neighbor<R: Rng>(plan: &SamplingPlan, pool: &[usize], template: usize, k_nn: usize, rng: &mut R) -> usize {
    let origin = &plan.scaled[template];
    let mut near: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&i| i != template)
        .map(|&i| (sq_dist(origin, &plan.scaled[i]), i))
        .collect();
    if near.is_empty() {
        return template;
    }
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(k_nn.max(1));
    near[rng.random_range(0..near.len())].1
}
