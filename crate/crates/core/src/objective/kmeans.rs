//! Seeded k-means (k-means++ initialisation, Lloyd iterations) used to assign
//! prototype labels.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{Matrix, SeededRng};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    /// Inertia after each assignment step; non-increasing.
    pub inertia: Vec<f64>,
}

impl KMeansResult {
    pub fn final_inertia(&self) -> f64 {
        *self.inertia.last().expect("at least one assignment")
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
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

fn plus_plus(points: &[&[f64]], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.below(points.len())].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.below(points.len())
        };
        let c = points[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Clusters the rows of `data` into `k` groups. Stops when assignments no
/// longer change or after `max_iters` updates.
pub fn kmeans(data: &Matrix, k: usize, max_iters: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(invalid("k-means needs k >= 1"));
    }
    if data.rows() < k {
        return Err(Error::InvalidParameter(format!(
            "k-means with k = {k} needs at least {k} points, got {}",
            data.rows()
        )));
    }
    if !data.is_finite() {
        return Err(Error::NonFinite { op: "kmeans" });
    }
    let points: Vec<&[f64]> = (0..data.rows()).map(|i| data.row(i)).collect();
    let mut rng = SeededRng::new(seed);
    let mut centroids = plus_plus(&points, k, &mut rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut inertia = Vec::new();
    let mut iter = 0;
    loop {
        let mut changed = false;
        let mut total = 0.0;
        let mut dists = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            changed |= labels[i] != c;
            labels[i] = c;
            total += d;
            dists.push(d);
        }
        inertia.push(total);
        if !changed || iter >= max_iters {
            break;
        }
        iter += 1;

        let dim = data.cols();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // Reseed an empty cluster at the worst-served point.
                let far = (0..points.len())
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("non-empty data");
                centroids[c] = points[far].to_vec();
                dists[far] = 0.0;
            }
        }
    }
    let centroids = Matrix::from_rows(&centroids)?;
    Ok(KMeansResult {
        centroids,
        labels,
        inertia,
    })
}

/// Prototype assignment of the training set for the current epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeState {
    pub k: usize,
    pub centroids: Matrix,
    pub labels: Vec<usize>,
}

impl PrototypeState {
    pub fn from_kmeans(result: KMeansResult) -> Self {
        PrototypeState {
            k: result.centroids.rows(),
            centroids: result.centroids,
            labels: result.labels,
        }
    }
}
