//! Lloyd's k-means with k-means++ seeding, used to build VLAD dictionaries.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MAX_ITERATIONS: usize = 300;

/// A set of points of equal dimension, stored row-major.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!("{} values do not split into points of dim {dim}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("points contain non-finite values".into()));
        }
        Ok(Points { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Number of pairwise-distinct points.
    pub fn distinct_count(&self) -> usize {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let cmp = |a: &usize, b: &usize| -> Ordering {
            self.row(*a)
                .iter()
                .zip(self.row(*b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        };
        idx.sort_unstable_by(cmp);
        1 + idx.windows(2).filter(|w| cmp(&w[0], &w[1]).is_ne()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub dim: usize,
    /// `k` centroids, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Inertia after the seeding assignment and after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().expect("history is never empty")
    }
}

pub fn squared_distance(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &c)| {
            let d = x as f64 - c;
            d * d
        })
        .sum()
}

/// Index of the nearest centroid (lowest index on ties) and its squared distance.
pub fn nearest(point: &[f32], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Sum of squared distances of each point to its nearest centroid.
pub fn inertia(points: Points<'_>, centroids: &[f64]) -> f64 {
    (0..points.len()).map(|i| nearest(points.row(i), centroids, points.dim()).1).sum()
}

fn plus_plus_seeds(points: Points<'_>, k: usize, r: &mut rng::Rng) -> Vec<f64> {
    let n = points.len();
    let dim = points.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = r.gen_range(0..n);
    centroids.extend(points.row(first).iter().map(|&v| v as f64));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(points.row(i), &centroids[..dim])).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let target = r.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        // k <= distinct points guarantees some positive weight remains.
        let pick = pick.expect("a point away from every seed exists");
        centroids.extend(points.row(pick).iter().map(|&v| v as f64));
        let new = &centroids[c * dim..];
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), new));
        }
    }
    centroids
}

/// Clusters `points` into `k` groups.
///
/// Seeds with k-means++, then alternates mean updates and nearest-centroid
/// reassignment until assignments stop changing or `max_iterations` is
/// reached. A cluster that loses all its points is moved onto the point
/// farthest from its current centroid.
pub fn kmeans(points: Points<'_>, k: usize, seed: u64, max_iterations: usize) -> Result<KMeans> {
    if points.is_empty() {
        return Err(Error::Argument("k-means needs at least one point".into()));
    }
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let distinct = points.distinct_count();
    if k > distinct {
        return Err(Error::Argument(format!("k = {k} exceeds the {distinct} distinct points")));
    }
    let n = points.len();
    let dim = points.dim();
    let mut r = rng::seeded(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut r);

    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    for i in 0..n {
        let (a, d) = nearest(points.row(i), &centroids, dim);
        assignments[i] = a;
        dists[i] = d;
    }
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;

    while iterations < max_iterations {
        iterations += 1;
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(points.row(i)) {
                *s += v as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
        if counts.contains(&0) {
            for i in 0..n {
                dists[i] =
                    squared_distance(points.row(i), &centroids[assignments[i] * dim..(assignments[i] + 1) * dim]);
            }
            for c in (0..k).filter(|&c| counts[c] == 0) {
                let far = (0..n).fold(0, |best, i| if dists[i] > dists[best] { i } else { best });
                for (dst, &v) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(points.row(far)) {
                    *dst = v as f64;
                }
                dists[far] = 0.0;
            }
        }

        let mut changed = false;
        for i in 0..n {
            let (a, d) = nearest(points.row(i), &centroids, dim);
            if a != assignments[i] {
                changed = true;
                assignments[i] = a;
            }
            dists[i] = d;
        }
        history.push(dists.iter().sum());
        if !changed {
            break;
        }
    }

    Ok(KMeans { dim, centroids, assignments, inertia_history: history, iterations })
}
