use super::kmeans::Clustering;
use super::{sq_dist, SamplingError};

/// Share of lowest-scoring samples removed by [`silhouette`].
pub const FILTER_FRACTION: f64 = 0.2;

/// Per-sample silhouette scores and the samples kept after filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteReport {
    pub scores: Vec<f64>,
    pub retained: Vec<bool>,
}

impl SilhouetteReport {
    /// Report that keeps every sample, used when clustering was skipped.
    pub fn keep_all(n: usize) -> Self {
        Self {
            scores: vec![0.0; n],
            retained: vec![true; n],
        }
    }

    pub fn dropped(&self) -> usize {
        self.retained.iter().filter(|r| !**r).count()
    }
}

/// Condensed symmetric matrix of Euclidean distances.
pub(crate) struct PairDistances {
    n: usize,
    values: Vec<f64>,
}

impl PairDistances {
    pub(crate) fn new(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let mut values = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                values.push(sq_dist(&points[i], &points[j]).sqrt());
            }
        }
        Self { n, values }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // row i starts after the rows above it, each of length n - 1 - r
        self.values[i * (2 * self.n - i - 1) / 2 + (j - i - 1)]
    }
}

fn score(sums: &[f64], sizes: &[usize], own: usize) -> f64 {
    if sizes[own] <= 1 {
        return 0.0;
    }
    let a = sums[own] / (sizes[own] - 1) as f64;
    let b = (0..sizes.len())
        .filter(|&c| c != own && sizes[c] > 0)
        .map(|c| sums[c] / sizes[c] as f64)
        .fold(f64::INFINITY, f64::min);
    let m = a.max(b);
    if !b.is_finite() || m <= 0.0 {
        0.0
    } else {
        (b - a) / m
    }
}

fn scores_with(n: usize, assignment: &[usize], k: usize, dist: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut sizes = vec![0; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    let mut sums = vec![0.0; k];
    (0..n)
        .map(|i| {
            sums.iter_mut().for_each(|s| *s = 0.0);
            for j in 0..n {
                if j != i {
                    sums[assignment[j]] += dist(i, j);
                }
            }
            score(&sums, &sizes, assignment[i])
        })
        .collect()
}

pub(crate) fn scores_from_matrix(d: &PairDistances, assignment: &[usize], k: usize) -> Vec<f64> {
    scores_with(d.n, assignment, k, |i, j| d.get(i, j))
}

pub(crate) fn mean_silhouette(scores: &[f64]) -> f64 {
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Indices kept after removing the `⌊fraction·n⌋` lowest scores; among equal
/// scores the lower index is removed first.
pub fn filter_lowest(scores: &[f64], fraction: f64) -> Vec<bool> {
    let n = scores.len();
    let drop = (fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut retained = vec![true; n];
    for &i in &order[..drop] {
        retained[i] = false;
    }
    retained
}

/// Silhouette `(b - a) / max(a, b)` of every point, where `a` is the mean
/// distance to the rest of its own cluster and `b` the smallest mean distance
/// to another cluster. Points in singleton clusters score 0. The lowest
/// fifth is then filtered out.
pub fn silhouette(points: &[Vec<f64>], clustering: &Clustering) -> Result<SilhouetteReport, SamplingError> {
    if clustering.k < 2 {
        return Err(SamplingError::SilhouetteUndefined { k: clustering.k });
    }
    let scores = scores_with(points.len(), &clustering.assignment, clustering.k, |i, j| {
        sq_dist(&points[i], &points[j]).sqrt()
    });
    let retained = filter_lowest(&scores, FILTER_FRACTION);
    Ok(SilhouetteReport { scores, retained })
}

pub(crate) fn silhouette_from_matrix(d: &PairDistances, clustering: &Clustering) -> SilhouetteReport {
    let scores = scores_from_matrix(d, &clustering.assignment, clustering.k);
    let retained = filter_lowest(&scores, FILTER_FRACTION);
    SilhouetteReport { scores, retained }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clustering(assignment: Vec<usize>, k: usize) -> Clustering {
        Clustering {
            k,
            assignment,
            centroids: Vec::new(),
            degenerate: false,
        }
    }

    #[test]
    fn formula_substitution() {
        // a = 1 (own cluster partner at distance 1), b = 3 (other cluster 3 away)
        let pts = vec![vec![0.0], vec![1.0], vec![3.0], vec![4.0]];
        let c = clustering(vec![0, 0, 1, 1], 2);
        let s = silhouette(&pts, &c).unwrap();
        // point 0: a = 1, b = (3 + 4) / 2 = 3.5
        assert!((s.scores[0] - 2.5 / 3.5).abs() < 1e-12);
        let sums = [1.0, 3.0];
        assert!((score(&sums, &[2, 1], 0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn equidistant_point_scores_zero() {
        let pts = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let c = clustering(vec![0, 0, 1], 2);
        let s = silhouette(&pts, &c).unwrap();
        assert_eq!(s.scores[1], 0.0);
        // singleton cluster member
        assert_eq!(s.scores[2], 0.0);
    }

    #[test]
    fn filter_drops_a_fifth() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let c = clustering(vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1], 2);
        let s = silhouette(&pts, &c).unwrap();
        assert_eq!(s.dropped(), 2);
        // the two points next to the boundary are the worst
        assert!(!s.retained[4] && !s.retained[5]);
    }

    #[test]
    fn ties_drop_lower_index_first() {
        let retained = filter_lowest(&[0.5, 0.1, 0.1, 0.1, 0.9], 0.4);
        assert_eq!(retained, vec![true, false, false, true, true]);
    }

    #[test]
    fn single_cluster_is_undefined() {
        let c = clustering(vec![0, 0], 1);
        assert!(silhouette(&[vec![0.0], vec![1.0]], &c).is_err());
    }

    #[test]
    fn matrix_agrees_with_direct() {
        let pts: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64])
            .collect();
        let c = clustering((0..15).map(|i| i % 3).collect(), 3);
        let direct = silhouette(&pts, &c).unwrap();
        let via = silhouette_from_matrix(&PairDistances::new(&pts), &c);
        for (a, b) in direct.scores.iter().zip(&via.scores) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
