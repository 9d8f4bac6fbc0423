//! Lloyd's KMeans with k-means++ seeding, used to partition item embeddings
//! for the centroid-restricted baseline.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KmeansModel {
    pub centroids: Array2<f32>,
    pub assignment: Vec<u32>,
    members: Vec<Vec<u32>>,
    pub seed: u64,
    /// Sum of squared distances after each assignment step.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

impl KmeansModel {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn members(&self, centroid: usize) -> &[u32] {
        &self.members[centroid]
    }

    pub fn sse(&self) -> f64 {
        self.sse_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: ArrayView1<'_, f32>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).powi(2)).sum()
}

pub fn kmeans(points: &Array2<f32>, k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<KmeansModel> {
    let n = points.nrows();
    let d = points.ncols();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must be in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignment = vec![0u32; n];
    let mut dist = vec![0.0f64; n];
    let mut sse_history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters.max(1) {
        iterations += 1;
        // assignment step, ties to the lower centroid id
        for p in 0..n {
            let row = points.row(p);
            let (best, bd) = (0..k)
                .map(|c| (c, sq_dist(row, centroids.row(c))))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            assignment[p] = best as u32;
            dist[p] = bd;
        }
        sse_history.push(dist.iter().sum());

        // update step
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for p in 0..n {
            let c = assignment[p] as usize;
            counts[c] += 1;
            for (s, &x) in sums.row_mut(c).iter_mut().zip(points.row(p)) {
                *s += x as f64;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .filter(|&p| !taken[p])
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .unwrap();
                taken[far] = true;
                dist[far] = 0.0;
                for (s, &x) in sums.row_mut(c).iter_mut().zip(points.row(far)) {
                    *s = x as f64;
                }
                counts[c] = 1;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            let mut moved = 0.0;
            for (old, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                let new = s * inv;
                moved += (new - *old).powi(2);
                *old = new;
            }
            shift = shift.max(moved.sqrt());
        }
        if shift < tol {
            break;
        }
    }

    // final assignment against the converged centroids
    for p in 0..n {
        let row = points.row(p);
        let (best, bd) = (0..k)
            .map(|c| (c, sq_dist(row, centroids.row(c))))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        assignment[p] = best as u32;
        dist[p] = bd;
    }
    let final_sse: f64 = dist.iter().sum();
    if sse_history.last().is_none_or(|&s| s != final_sse) {
        sse_history.push(final_sse);
    }

    let mut members = vec![Vec::new(); k];
    for (p, &c) in assignment.iter().enumerate() {
        members[c as usize].push(p as u32);
    }
    Ok(KmeansModel {
        centroids: centroids.mapv(|v| v as f32),
        assignment,
        members,
        seed,
        sse_history,
        iterations,
    })
}

/// k-means++: first centre uniform, then proportional to squared distance
/// from the nearest chosen centre.
fn plus_plus_init(points: &Array2<f32>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::<f64>::zeros((k, points.ncols()));
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.row_mut(0).assign(&points.row(first).mapv(|v| v as f64));
    let mut best = vec![f64::INFINITY; n];
    for c in 1..k {
        for p in 0..n {
            best[p] = best[p].min(sq_dist(points.row(p), centroids.row(c - 1)));
        }
        let total: f64 = (0..n).filter(|&p| !chosen[p]).map(|p| best[p]).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for p in (0..n).filter(|&p| !chosen[p]) {
                target -= best[p];
                if target <= 0.0 && best[p] > 0.0 {
                    pick = Some(p);
                    break;
                }
            }
            pick.unwrap_or_else(|| (0..n).rev().find(|&p| !chosen[p] && best[p] > 0.0).unwrap())
        } else {
            let free: Vec<usize> = (0..n).filter(|&p| !chosen[p]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.row_mut(c).assign(&points.row(pick).mapv(|v| v as f64));
    }
    centroids
}
