use ndarray::{Axis, ArrayView2};

use crate::datamodel::PrototypeSet;
use crate::error::{check_dim, Error, Result};

use super::kmeans::kmeans_subclusters;

pub const KMEANS_MAX_ITERS: usize = 100;

/// Default sub-cluster count for `per_class` prototypes.
pub fn default_alignment_k(per_class: usize) -> usize {
    per_class.clamp(1, 5)
}

/// For every unseen class, the mean distance from each of its prototypes to
/// the nearest of `k` k-means centroids of the class's real features,
/// divided by the RMS norm of those features.
///
/// Returns one value per unseen class, in class order.
pub fn prototype_alignment(
    protos: &PrototypeSet,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    num_seen: usize,
    num_unseen: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_dim("labels", features.nrows(), labels.len())?;
    check_dim("prototype dimension", features.ncols(), protos.prototypes.ncols())?;
    (num_seen..num_seen + num_unseen)
        .map(|class| {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            if rows.len() < k {
                return Err(Error::InsufficientSamples {
                    class,
                    available: rows.len(),
                    required: k,
                });
            }
            let real = features.select(Axis(0), &rows);
            let centroids = kmeans_subclusters(real.view(), k, seed.wrapping_add(class as u64), KMEANS_MAX_ITERS)?;
            let rms = (real.iter().map(|v| v * v).sum::<f64>() / rows.len() as f64).sqrt();
            let mine: Vec<usize> = (0..protos.len()).filter(|&i| protos.labels[i] == class).collect();
            if mine.is_empty() {
                return Err(Error::Invariant(format!("no prototypes for class {class}")));
            }
            let total: f64 = mine
                .iter()
                .map(|&i| {
                    let p = protos.prototypes.row(i);
                    centroids
                        .rows()
                        .into_iter()
                        .map(|c| (&c - &p).mapv(|d| d * d).sum().sqrt())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            let mean = total / mine.len() as f64;
            Ok(if rms > 0.0 { mean / rms } else { mean })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn coinciding_prototypes_have_zero_distance() {
        let features = array![[1.0, 2.0], [1.0, 2.0], [-3.0, 0.5], [-3.0, 0.5]];
        let labels = vec![2, 2, 3, 3];
        let protos = PrototypeSet {
            prototypes: array![[1.0, 2.0], [-3.0, 0.5]],
            labels: vec![2, 3],
            lambdas: vec![1.0, 1.0],
        };
        let d = prototype_alignment(&protos, features.view(), &labels, 2, 2, 1, 0).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let features = array![[1.0], [2.0]];
        let protos = PrototypeSet {
            prototypes: array![[1.0]],
            labels: vec![1],
            lambdas: vec![1.0],
        };
        let err = prototype_alignment(&protos, features.view(), &[1, 0], 1, 1, 2, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { class: 1, available: 1, required: 2 }));
    }

    #[test]
    fn default_k() {
        assert_eq!(default_alignment_k(90), 5);
        assert_eq!(default_alignment_k(3), 3);
        assert_eq!(default_alignment_k(0), 1);
    }
}
