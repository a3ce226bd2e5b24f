use rand::seq::index::sample;
use rand::Rng;

use super::silhouette::{mean_silhouette, scores_from_matrix, PairDistances};
use super::{sq_dist, SamplingError};

/// Partition of a set of points into `k` clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    /// Cluster id for every input point.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Set when every point is identical and the `k = 1` fallback was used.
    pub degenerate: bool,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    fn single(points: &[Vec<f64>]) -> Self {
        Self {
            k: 1,
            assignment: vec![0; points.len()],
            centroids: vec![points[0].clone()],
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centroids<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// An emptied cluster is re-seeded with the point farthest from its current
/// centroid, so every cluster of the result is non-empty when the input holds
/// at least `k` distinct points.
pub fn kmeans<R: Rng>(points: &[Vec<f64>], k: usize, params: KMeansParams, rng: &mut R) -> Clustering {
    assert!(k >= 1 && points.len() >= k, "need at least k points");
    let dim = points[0].len();
    let mut centroids = seed_centroids(points, k, rng);
    let mut assignment = vec![0; points.len()];
    for _ in 0..params.max_iter.max(1) {
        let mut far = (0, -1.0);
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            assignment[i] = c;
            if d > far.1 {
                far = (i, d);
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let updated = if counts[c] == 0 {
                points[far.0].clone()
            } else {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            };
            shift = shift.max(sq_dist(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        if shift <= params.tol {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignment[i] = nearest(p, &centroids).0;
    }
    Clustering {
        k,
        assignment,
        centroids,
        degenerate: false,
    }
}

/// Upper end of the default k search range for `n` points.
pub fn default_k_max(n: usize) -> usize {
    (n / 10).min(8)
}

/// Clusters `points` with the `k` in `k_min..=k_max` whose clustering has the
/// highest mean silhouette (ties go to the smaller `k`).
///
/// When `selection_cap` is smaller than the number of points, candidate `k`
/// values are compared on a seeded subsample of that size and only the winner
/// is refit on every point.
pub fn cluster<R: Rng>(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    params: KMeansParams,
    selection_cap: usize,
    rng: &mut R,
) -> Result<Clustering, SamplingError> {
    select_clustering(points, k_min, k_max, params, selection_cap, rng).map(|(c, _)| c)
}

/// [`cluster`], also handing back the pairwise distances of all points when
/// they were computed for the selection.
pub(crate) fn select_clustering<R: Rng>(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    params: KMeansParams,
    selection_cap: usize,
    rng: &mut R,
) -> Result<(Clustering, Option<PairDistances>), SamplingError> {
    let k_min = k_min.max(2);
    let n = points.len();
    if n < 2 * k_min {
        return Err(SamplingError::InsufficientData {
            available: n,
            needed: 2 * k_min,
        });
    }
    if points.iter().all(|p| p == &points[0]) {
        return Ok((Clustering::single(points), None));
    }
    let k_max = k_max.max(k_min);

    let subset: Option<Vec<usize>> = (selection_cap >= 2 * k_min && n > selection_cap).then(|| {
        let mut idx = sample(rng, n, selection_cap).into_vec();
        idx.sort_unstable();
        idx
    });
    let selection_points: Vec<Vec<f64>> = match &subset {
        Some(idx) => idx.iter().map(|&i| points[i].clone()).collect(),
        None => points.to_vec(),
    };
    let distances = PairDistances::new(&selection_points);
    let distinct = count_distinct(&selection_points, k_max);

    let mut best: Option<(f64, Clustering)> = None;
    for k in k_min..=k_max.min(distinct) {
        let c = kmeans(&selection_points, k, params, rng);
        if c.sizes().contains(&0) {
            continue;
        }
        let score = mean_silhouette(&scores_from_matrix(&distances, &c.assignment, k));
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, c));
        }
    }
    let Some((_, chosen)) = best else {
        return Ok((Clustering::single(points), None));
    };
    match subset {
        None => Ok((chosen, Some(distances))),
        Some(_) => Ok((kmeans(points, chosen.k, params, rng), None)),
    }
}

/// Number of distinct points, counting no further than `limit`.
fn count_distinct(points: &[Vec<f64>], limit: usize) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !seen.contains(&p) {
            seen.push(p);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}
