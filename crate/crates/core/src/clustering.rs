//! Neighborhood partitions: k-means with k-means++ seeding, a capacity-balanced
//! variant, and consecutive index blocks.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

pub const DEFAULT_MAX_ITER: usize = 100;

/// Below this many point-center pairs the assignment step stays sequential.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    /// `N × n` cluster means; `N × 0` when a partition was built without data.
    pub centers: Matrix,
    pub sizes: Vec<usize>,
}

impl Assignment {
    pub fn from_labels(labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        let mut sizes = vec![0usize; n_clusters];
        for &l in &labels {
            if l >= n_clusters {
                return Err(Error::InvalidArgument(format!("label {l} out of range for {n_clusters} clusters")));
            }
            sizes[l] += 1;
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!("cluster {k} is empty")));
        }
        Ok(Assignment { labels, centers: Matrix::zeros(n_clusters, 0), sizes })
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    /// Row indices of every cluster, ascending within each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn with_centers(mut self, x: &Matrix) -> Result<Self> {
        if x.nrows() != self.labels.len() {
            return Err(Error::shape(format!("{} rows", self.labels.len()), x.nrows()));
        }
        self.centers = cluster_means(x, &self.labels, self.sizes.len());
        Ok(self)
    }

    pub fn inertia(&self, x: &Matrix) -> f64 {
        x.rows().zip(&self.labels).map(|(r, &l)| sq_dist(r, self.centers.row(l))).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    #[default]
    KMeans,
    /// k-means centers, then clusters filled to exactly `n + 1` points.
    Balanced,
    /// Consecutive row blocks, no clustering.
    Ascending,
}

impl std::str::FromStr for ClusterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(ClusterMode::KMeans),
            "balanced" => Ok(ClusterMode::Balanced),
            "ascending" => Ok(ClusterMode::Ascending),
            _ => Err(Error::InvalidArgument(format!("unknown cluster mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for ClusterMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterMode::KMeans => "kmeans",
            ClusterMode::Balanced => "balanced",
            ClusterMode::Ascending => "ascending",
        })
    }
}

/// `⌊m / (n+1)⌋`: one neuron per `n + 1` observations.
pub fn default_neuron_count(m: usize, n: usize) -> Result<usize> {
    if m < n + 1 {
        return Err(Error::TooFewObservations { have: m, need: n + 1 });
    }
    Ok(m / (n + 1))
}

/// Partitions `x` into `n_clusters` neighborhoods with the given mode. Balanced
/// clusters target `x.ncols() + 1` points each.
pub fn partition(x: &Matrix, n_clusters: usize, mode: ClusterMode, seed: u64, max_iter: usize) -> Result<Assignment> {
    match mode {
        ClusterMode::KMeans => kmeans(x, n_clusters, seed, max_iter),
        ClusterMode::Balanced => {
            let a = kmeans(x, n_clusters, seed, max_iter)?;
            balance(x, &a, x.ncols() + 1)
        }
        ClusterMode::Ascending => ascending_partition_into(x.nrows(), n_clusters)?.with_centers(x),
    }
}

pub fn kmeans(x: &Matrix, n_clusters: usize, seed: u64, max_iter: usize) -> Result<Assignment> {
    kmeans_with_trace(x, n_clusters, seed, max_iter).map(|(a, _)| a)
}

/// k-means that also returns the inertia after every Lloyd iteration.
pub fn kmeans_with_trace(x: &Matrix, n_clusters: usize, seed: u64, max_iter: usize) -> Result<(Assignment, Vec<f64>)> {
    let m = x.nrows();
    if n_clusters == 0 || n_clusters > m {
        return Err(Error::InvalidArgument(format!("cluster count must lie in [1, {m}], got {n_clusters}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".to_string()));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("observations"));
    }

    let mut rng = SeededRng::new(seed);
    let mut centers = plus_plus_seed(x, n_clusters, &mut rng);
    let mut labels = vec![usize::MAX; m];
    let mut trace = Vec::new();

    for _ in 0..max_iter {
        let nearest = nearest_centers(x, &centers);
        let changed = nearest.iter().zip(&labels).any(|((l, _), old)| l != old);
        for (slot, (l, _)) in labels.iter_mut().zip(&nearest) {
            *slot = *l;
        }
        let mut dist: Vec<f64> = nearest.into_iter().map(|(_, d)| d).collect();
        if !changed {
            break;
        }
        repair_empty(&mut labels, &mut dist, n_clusters);
        centers = cluster_means(x, &labels, n_clusters);
        trace.push(x.rows().zip(&labels).map(|(r, &l)| sq_dist(r, centers.row(l))).sum());
    }

    let mut sizes = vec![0usize; n_clusters];
    for &l in &labels {
        sizes[l] += 1;
    }
    Ok((Assignment { labels, centers, sizes }, trace))
}

fn plus_plus_seed(x: &Matrix, k: usize, rng: &mut SeededRng) -> Matrix {
    let m = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.below(m));
    let mut d2: Vec<f64> = x.rows().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target above the running sum; take the last candidate
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            // every point coincides with a chosen center
            let free: Vec<usize> = (0..m).filter(|i| !chosen.contains(i)).collect();
            free[rng.below(free.len())]
        };
        chosen.push(next);
        let c = x.row(next);
        for (i, r) in x.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, c));
        }
    }
    x.select_rows(&chosen)
}

/// Nearest center per row; ties go to the lower center index.
fn nearest_centers(x: &Matrix, centers: &Matrix) -> Vec<(usize, f64)> {
    let nearest = |r: &[f64]| {
        let mut best = (0usize, f64::INFINITY);
        for (k, c) in centers.rows().enumerate() {
            let d = sq_dist(r, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    };
    if x.nrows() * centers.nrows() * x.ncols().max(1) >= PAR_THRESHOLD {
        (0..x.nrows()).into_par_iter().map(|i| nearest(x.row(i))).collect()
    } else {
        x.rows().map(nearest).collect()
    }
}

/// Moves the point farthest from its center in the largest cluster into each
/// empty cluster.
fn repair_empty(labels: &mut [usize], dist: &mut [f64], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let largest = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap_or(0);
        let far = (0..labels.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        labels[far] = empty;
        dist[far] = 0.0;
        sizes[largest] -= 1;
        sizes[empty] += 1;
    }
}

fn cluster_means(x: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let n = x.ncols();
    let mut sums = Matrix::zeros(k, n);
    let mut counts = vec![0usize; k];
    for (r, &l) in x.rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(r) {
            *s += v;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            for s in sums.row_mut(c) {
                *s /= cnt as f64;
            }
        }
    }
    sums
}

/// Refills clusters around the centers of `a` so each holds exactly
/// `capacity` points. Pairs are taken in order of increasing distance; points
/// left over once every cluster is full join their nearest center.
pub fn balance(x: &Matrix, a: &Assignment, capacity: usize) -> Result<Assignment> {
    let (m, k) = (x.nrows(), a.n_clusters());
    if a.centers.ncols() != x.ncols() || a.centers.nrows() != k {
        return Err(Error::shape(format!("{k}x{} centers", x.ncols()), format!("{}x{}", a.centers.nrows(), a.centers.ncols())));
    }
    if capacity == 0 {
        return Err(Error::InvalidArgument("cluster capacity must be positive".to_string()));
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(m * k);
    for (i, r) in x.rows().enumerate() {
        for (c, ctr) in a.centers.rows().enumerate() {
            pairs.push((sq_dist(r, ctr), i, c));
        }
    }
    pairs.sort_unstable_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));

    let mut labels = vec![usize::MAX; m];
    let mut sizes = vec![0usize; k];
    let mut placed = 0usize;
    for &(_, i, c) in &pairs {
        if placed == m || sizes.iter().all(|&s| s >= capacity) {
            break;
        }
        if labels[i] == usize::MAX && sizes[c] < capacity {
            labels[i] = c;
            sizes[c] += 1;
            placed += 1;
        }
    }
    if placed < m {
        for (i, r) in x.rows().enumerate() {
            if labels[i] == usize::MAX {
                let c = (0..k).min_by(|&p, &q| sq_dist(r, a.centers.row(p)).total_cmp(&sq_dist(r, a.centers.row(q)))).unwrap_or(0);
                labels[i] = c;
                sizes[c] += 1;
            }
        }
    }
    // fewer points than total capacity can leave trailing clusters empty
    let keep: Vec<usize> = (0..k).filter(|&c| sizes[c] > 0).collect();
    let mut remap = vec![usize::MAX; k];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    for l in &mut labels {
        *l = remap[*l];
    }
    Assignment::from_labels(labels, keep.len())?.with_centers(x)
}

/// Blocks of `cluster_size` consecutive indices; the final partial block is
/// merged into the last full one, giving `⌊m / cluster_size⌋` clusters.
pub fn ascending_partition(m: usize, cluster_size: usize) -> Result<Assignment> {
    if cluster_size == 0 || cluster_size > m {
        return Err(Error::InvalidArgument(format!("cluster size must lie in [1, {m}], got {cluster_size}")));
    }
    let blocks = m / cluster_size;
    let labels = (0..m).map(|i| (i / cluster_size).min(blocks - 1)).collect();
    Assignment::from_labels(labels, blocks)
}

/// `n_clusters` consecutive blocks whose sizes differ by at most one; the
/// first `m mod n_clusters` blocks hold the extra point.
pub fn ascending_partition_into(m: usize, n_clusters: usize) -> Result<Assignment> {
    if n_clusters == 0 || n_clusters > m {
        return Err(Error::InvalidArgument(format!("cluster count must lie in [1, {m}], got {n_clusters}")));
    }
    let (base, extra) = (m / n_clusters, m % n_clusters);
    let mut labels = Vec::with_capacity(m);
    for c in 0..n_clusters {
        let size = base + usize::from(c < extra);
        labels.extend(std::iter::repeat(c).take(size));
    }
    Assignment::from_labels(labels, n_clusters)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}
