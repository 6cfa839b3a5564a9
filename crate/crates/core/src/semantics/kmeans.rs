//! Lloyd's k-means with k-means++ seeding.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Array2<f64>,
    /// Cluster of every item, indexed by dense item index.
    pub assignment: Vec<usize>,
    /// Sum of squared distances from each item to its assigned centroid.
    pub inertia: f64,
    /// Inertia after the assignment step of every Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(data: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), data.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just above the final sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // Every remaining point coincides with a centre.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = sq_dist(data.row(i), data.row(next));
            if d < *slot {
                *slot = d;
            }
        }
    }
    let mut centroids = Array2::zeros((k, data.ncols()));
    for (j, &i) in chosen.iter().enumerate() {
        centroids.row_mut(j).assign(&data.row(i));
    }
    centroids
}

fn update_means(data: ArrayView2<f64>, assignment: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((k, data.ncols()));
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        sums.row_mut(c).scaled_add(1.0, &data.row(i));
        counts[c] += 1;
    }
    for (j, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums.row_mut(j).mapv_inplace(|x| x / n as f64);
        }
    }
    sums
}

/// Cluster the rows of `data` into `k` groups; deterministic for a fixed seed.
pub fn kmeans(data: ArrayView2<f64>, k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel> {
    let n = data.nrows();
    if k < 2 {
        return Err(Error::config("k", format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::config(
            "k",
            format!("k = {k} exceeds the number of items ({n})"),
        ));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite entry in clustering input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(data, k, &mut rng);
    let mut previous: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let (mut assignment, mut dists): (Vec<usize>, Vec<f64>) = (0..n)
            .into_par_iter()
            .map(|i| nearest(data.row(i), &centroids))
            .unzip();

        let mut sizes = vec![0usize; k];
        for &c in &assignment {
            sizes[c] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            // Farthest point from its centroid among clusters that can spare one.
            let far = (0..n)
                .filter(|&i| sizes[assignment[i]] > 1)
                .fold(None::<usize>, |best, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                })
                .expect("k <= n leaves a cluster with a spare point");
            sizes[assignment[far]] -= 1;
            sizes[empty] = 1;
            assignment[far] = empty;
            dists[far] = 0.0;
            centroids.row_mut(empty).assign(&data.row(far));
        }

        trace.push(dists.iter().sum());
        if previous.as_ref() == Some(&assignment) {
            converged = true;
            previous = Some(assignment);
            break;
        }
        centroids = update_means(data, &assignment, k);
        previous = Some(assignment);
    }

    let assignment = previous.expect("at least one iteration");
    let inertia = assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(data.row(i), centroids.row(c)))
        .sum();
    Ok(ClusterModel {
        k,
        centroids,
        assignment,
        inertia,
        inertia_trace: trace,
        iterations,
        converged,
    })
}
