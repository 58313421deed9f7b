//! k-means on the rows of a matrix, plus silhouette scoring.

use crate::matrix::DenseMatrix;
use crate::rng::RngStream;
use crate::scalar::Real;

use super::EvalError;

const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub labels: Vec<usize>,
    pub centroids: DenseMatrix<T>,
    /// Sum of squared distances of rows to their centroid.
    pub inertia: T,
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Best of `restarts` Lloyd runs seeded by k-means++.
pub fn kmeans<T: Real>(
    data: &DenseMatrix<T>,
    clusters: usize,
    restarts: usize,
    rng: &mut RngStream,
) -> Result<KMeansResult<T>, EvalError> {
    let n = data.rows();
    if clusters == 0 || clusters > n {
        return Err(EvalError::InvalidArgument(format!(
            "cannot form {clusters} clusters from {n} rows"
        )));
    }
    let mut best: Option<KMeansResult<T>> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(data, clusters, rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_seed<T: Real>(
    data: &DenseMatrix<T>,
    clusters: usize,
    rng: &mut RngStream,
) -> DenseMatrix<T> {
    let n = data.rows();
    let mut centers = vec![rng.index(n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), data.row(centers[0])).to_f64_lossy())
        .collect();
    while centers.len() < clusters {
        let next = if d2.iter().sum::<f64>() > 0.0 {
            rng.categorical(&d2).unwrap_or_else(|_| rng.index(n))
        } else {
            rng.index(n)
        };
        centers.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), data.row(next)).to_f64_lossy());
        }
    }
    data.select_rows(&centers)
}

fn lloyd<T: Real>(data: &DenseMatrix<T>, clusters: usize, rng: &mut RngStream) -> KMeansResult<T> {
    let (n, d) = data.shape();
    let mut centroids = plus_plus_seed(data, clusters, rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for i in 0..n {
            let nearest = (0..clusters)
                .map(|c| (c, sq_dist(data.row(i), centroids.row(c))))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(c, _)| c)
                .unwrap_or(0);
            if labels[i] != nearest {
                labels[i] = nearest;
                changed = true;
            }
        }
        let mut sums = DenseMatrix::<T>::zeros(clusters, d);
        let mut counts = vec![0usize; clusters];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, &v) in sums.row_mut(labels[i]).iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
        for c in 0..clusters {
            if counts[c] == 0 {
                // Reseed an empty cluster at the row farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(data.row(a), centroids.row(labels[a]));
                        let db = sq_dist(data.row(b), centroids.row(labels[b]));
                        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .unwrap_or(0);
                centroids.row_mut(c).copy_from_slice(data.row(far));
                labels[far] = c;
                changed = true;
            } else {
                let inv = T::one() / T::from_count(counts[c]);
                for (m, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *m = s * inv;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(data.row(i), centroids.row(labels[i])))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

/// Mean silhouette coefficient of `labels` under Euclidean distance.
///
/// Returns 0 when fewer than two clusters are populated. Rows in singleton
/// clusters contribute 0.
pub fn silhouette<T: Real>(data: &DenseMatrix<T>, labels: &[usize]) -> Result<f64, EvalError> {
    let n = data.rows();
    if labels.len() != n {
        return Err(EvalError::InvalidArgument(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    let clusters = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        if sizes[labels[i]] <= 1 {
            continue;
        }
        let mut dist_sum = vec![0.0f64; clusters];
        for j in 0..n {
            if i != j {
                dist_sum[labels[j]] += sq_dist(data.row(i), data.row(j)).to_f64_lossy().sqrt();
            }
        }
        let a = dist_sum[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..clusters)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| dist_sum[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
