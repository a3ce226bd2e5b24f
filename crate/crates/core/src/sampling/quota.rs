use super::SamplingError;

/// Per-cluster minority counts, their weights and synthesis quotas.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterWeights {
    pub minority_counts: Vec<u64>,
    pub minority_total: u64,
    pub weights: Vec<f64>,
    pub quotas: Vec<u64>,
}

impl ClusterWeights {
    pub fn total_quota(&self) -> u64 {
        self.quotas.iter().sum()
    }
}

/// Splits `total` proportionally to integer `counts`: floors first, then the
/// leftover units go to the largest remainders, lower index first on ties.
pub fn largest_remainder(counts: &[u64], total: u64) -> Vec<u64> {
    let denom: u64 = counts.iter().sum();
    if denom == 0 {
        return vec![0; counts.len()];
    }
    let mut shares: Vec<u64> = Vec::with_capacity(counts.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(counts.len());
    for (i, &c) in counts.iter().enumerate() {
        let scaled = total as u128 * c as u128;
        shares.push((scaled / denom as u128) as u64);
        remainders.push((scaled % denom as u128, i));
    }
    let leftover = total - shares.iter().sum::<u64>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover as usize) {
        shares[i] += 1;
    }
    shares
}

/// Weights each cluster by its share of the flagged minority samples and
/// splits `n_num` synthetic samples accordingly.
pub fn cluster_weights(
    assignment: &[usize],
    k: usize,
    minority: &[bool],
    n_num: u64,
) -> Result<ClusterWeights, SamplingError> {
    assert_eq!(assignment.len(), minority.len());
    let mut minority_counts = vec![0u64; k];
    for (&c, &m) in assignment.iter().zip(minority) {
        if m {
            minority_counts[c] += 1;
        }
    }
    let minority_total: u64 = minority_counts.iter().sum();
    if minority_total == 0 {
        return Err(SamplingError::CannotSynthesize);
    }
    let weights = minority_counts
        .iter()
        .map(|&c| c as f64 / minority_total as f64)
        .collect();
    let quotas = largest_remainder(&minority_counts, n_num);
    Ok(ClusterWeights {
        minority_counts,
        minority_total,
        weights,
        quotas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights_for(counts: &[u64], n: u64) -> ClusterWeights {
        let mut assignment = Vec::new();
        for (c, &m) in counts.iter().enumerate() {
            assignment.extend(std::iter::repeat_n(c, m as usize));
        }
        let flags = vec![true; assignment.len()];
        cluster_weights(&assignment, counts.len(), &flags, n).unwrap()
    }

    #[test]
    fn exact_division() {
        let w = weights_for(&[6, 3, 1], 10);
        assert_eq!(w.quotas, vec![6, 3, 1]);
        for (a, b) in w.weights.iter().zip([0.6, 0.3, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let w = weights_for(&[1, 1], 3);
        assert_eq!(w.quotas, vec![2, 1]);
        assert_eq!(w.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn single_cluster_takes_all() {
        let w = weights_for(&[4], 7);
        assert_eq!(w.weights, vec![1.0]);
        assert_eq!(w.quotas, vec![7]);
    }

    #[test]
    fn empty_cluster_gets_nothing() {
        let w = cluster_weights(&[0, 1, 1, 2], 3, &[false, true, true, false], 5).unwrap();
        assert_eq!(w.quotas, vec![0, 5, 0]);
    }

    #[test]
    fn no_minority_cannot_synthesize() {
        assert!(matches!(
            cluster_weights(&[0, 1], 2, &[false, false], 3),
            Err(SamplingError::CannotSynthesize)
        ));
    }

    #[test]
    fn small_quota_favors_largest_cluster() {
        assert_eq!(largest_remainder(&[70, 20, 10], 1), vec![1, 0, 0]);
        assert_eq!(largest_remainder(&[70, 20, 10], 2), vec![2, 0, 0]);
        assert_eq!(largest_remainder(&[70, 20, 10], 3), vec![2, 1, 0]);
    }
}
