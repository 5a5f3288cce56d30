//! One-dimensional k-means (Lloyd iterations with k-means++ seeding).
//!
//! In one dimension every cluster is a contiguous run of the sorted samples, so the
//! assignment step reduces to locating the midpoints between consecutive centroids.
//! A sample exactly on a midpoint belongs to the lower centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::codebook::Codebook;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub codebook: Codebook,
    pub wcss: f64,
    /// WCSS after every assignment step, first entry is the seeding.
    pub wcss_history: Vec<f64>,
    /// Cluster sizes, aligned with the codebook.
    pub sizes: Vec<usize>,
}

/// Clusters `samples` into `k` centroids, deterministically for a fixed seed.
///
/// When `k` exceeds the number of distinct values the surplus centroids duplicate
/// existing ones and stay empty.
pub fn kmeans(samples: &[f64], k: usize, seed: u64) -> Result<KMeansResult> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("k-means needs at least one sample".into()));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k-means needs k >= 1".into()));
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite sample {v}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(kmeans_sorted(&sorted, k, seed))
}

/// Same as [`kmeans`] but the caller guarantees `sorted` is ascending, finite and non-empty.
pub(crate) fn kmeans_sorted(sorted: &[f64], k: usize, seed: u64) -> KMeansResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(sorted, k, &mut rng);
    centroids.sort_by(f64::total_cmp);

    let mut bounds = boundaries(sorted, &centroids);
    let mut history = vec![wcss_of(sorted, &centroids, &bounds)];
    for _ in 0..MAX_ITERATIONS {
        // Update step: each non-empty cluster moves to its mean.
        let mut next = centroids.clone();
        let mut empty = Vec::new();
        for (c, range) in bounds.windows(2).enumerate() {
            let (lo, hi) = (range[0], range[1]);
            if hi > lo {
                next[c] = mean(&sorted[lo..hi]);
            } else {
                empty.push(c);
            }
        }
        // Empty clusters are re-seeded from the sample farthest from its centroid.
        for c in empty {
            if let Some(v) = farthest_sample(sorted, &next, &bounds) {
                next[c] = v;
            }
        }
        next.sort_by(f64::total_cmp);
        let next_bounds = boundaries(sorted, &next);
        let converged = next_bounds == bounds && next == centroids;
        centroids = next;
        bounds = next_bounds;
        history.push(wcss_of(sorted, &centroids, &bounds));
        if converged {
            break;
        }
    }
    let sizes = bounds.windows(2).map(|r| r[1] - r[0]).collect();
    KMeansResult {
        wcss: *history.last().unwrap(),
        codebook: Codebook::from_sorted(centroids),
        wcss_history: history,
        sizes,
    }
}

fn seed_plus_plus(sorted: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = sorted.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(sorted[rng.gen_range(0..n)]);
    let mut dist: Vec<f64> = sorted.iter().map(|&x| (x - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` a hair below `target`; fall back to the last
            // sample with positive weight.
            pick.or_else(|| dist.iter().rposition(|&d| d > 0.0)).unwrap()
        } else {
            // Every sample already coincides with a centroid.
            0
        };
        let c = sorted[chosen];
        centroids.push(c);
        for (d, &x) in dist.iter_mut().zip(sorted) {
            *d = d.min((x - c).powi(2));
        }
    }
    centroids
}

/// `bounds[c]..bounds[c + 1]` is the index range of cluster `c` in the sorted samples.
fn boundaries(sorted: &[f64], centroids: &[f64]) -> Vec<usize> {
    let k = centroids.len();
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for c in 0..k - 1 {
        let a = centroids[c];
        // Duplicates of `a` stay empty; the split is against the next distinct centroid.
        let Some(&b) = centroids[c + 1..].iter().find(|&&b| b > a) else {
            bounds.push(sorted.len());
            continue;
        };
        // Samples at distance-tie go to the lower centroid, so cluster c ends after the
        // last sample with |x - a| <= |x - b|.
        let end = sorted.partition_point(|&x| (x - a).abs() <= (x - b).abs());
        bounds.push(end.max(*bounds.last().unwrap()));
    }
    bounds.push(sorted.len());
    bounds
}

fn wcss_of(sorted: &[f64], centroids: &[f64], bounds: &[usize]) -> f64 {
    bounds
        .windows(2)
        .zip(centroids)
        .map(|(r, &c)| sorted[r[0]..r[1]].iter().map(|&x| (x - c) * (x - c)).sum::<f64>())
        .sum()
}

fn farthest_sample(sorted: &[f64], centroids: &[f64], bounds: &[usize]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (r, &c) in bounds.windows(2).zip(centroids) {
        // Within a contiguous cluster the farthest point is one of its ends.
        for &x in sorted[r[0]..r[1]].first().into_iter().chain(sorted[r[0]..r[1]].last()) {
            let d = (x - c).abs();
            if d > 0.0 && best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, x));
            }
        }
    }
    best.map(|(_, x)| x)
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
