use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid (lowest index on ties) and its squared distance.
fn nearest(point: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm from a farthest-point start.
///
/// The first centre is a uniformly drawn sample from the `kmeans` substream
/// of `seed`; each further centre is the sample farthest from those already
/// chosen. A cluster that loses all its members is moved onto the sample
/// farthest from its current centre.
pub fn kmeans_subclusters(points: ArrayView2<'_, f64>, k: usize, seed: u64, max_iters: usize) -> Result<Array2<f64>> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::Config("k-means needs k >= 1".into()));
    }
    if k > n {
        return Err(Error::InsufficientSamples {
            class: usize::MAX,
            available: n,
            required: k,
        });
    }
    let mut rng = rng::substream(seed, rng::STREAM_KMEANS);
    let mut centroids = Array2::zeros((k, points.ncols()));
    centroids.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut min_d: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, centroids.row(0))).collect();
    for j in 1..k {
        let far = farthest(&min_d);
        centroids.row_mut(j).assign(&points.row(far));
        for (i, p) in points.rows().into_iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(p, centroids.row(j)));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for (i, p) in points.rows().into_iter().enumerate() {
            let (j, d) = nearest(p, centroids.view());
            changed |= assign[i] != j;
            assign[i] = j;
            dist[i] = d;
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            let mut row = sums.row_mut(assign[i]);
            row += &p;
            counts[assign[i]] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mean = &sums.row(j) / counts[j] as f64;
                centroids.row_mut(j).assign(&mean);
            } else {
                let far = farthest(&dist);
                centroids.row_mut(j).assign(&points.row(far));
                dist[far] = 0.0;
            }
        }
    }
    Ok(centroids)
}

fn farthest(d: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in d.iter().enumerate() {
        if v > d[best] {
            best = i;
        }
    }
    best
}
