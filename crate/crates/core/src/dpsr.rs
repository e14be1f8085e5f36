//! Class-to-class semantic similarity masks.
//!
//! Every class attribute row is reconstructed from all class rows (itself
//! included) by ridge regression; the coefficients are clamped at zero and
//! normalized into a probability row. During training, the row of a
//! sample's ground-truth class scales that sample's unseen-class scores.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::datamodel::AttributeMatrix;
use crate::error::{Error, Result};
use crate::linalg::ridge_solve;

pub const DEFAULT_PHI: f64 = 0.1;

/// Row-stochastic `(K+L) x (K+L)` similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
    phi: f64,
    num_seen: usize,
}

impl SimilarityMatrix {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn row(&self, class: usize) -> ArrayView1<'_, f64> {
        self.values.row(class)
    }

    /// Similarities of `class` to each unseen class.
    pub fn unseen_row(&self, class: usize) -> ArrayView1<'_, f64> {
        self.values.slice(s![class, self.num_seen..])
    }

    /// A matrix of ones: the mask that disables regularization.
    pub fn ones(num_seen: usize, num_classes: usize) -> Self {
        Self {
            values: Array2::ones((num_classes, num_classes)),
            phi: 0.0,
            num_seen,
        }
    }
}

/// Raw, unnormalized similarity coefficients of `row` over all rows of `all`.
pub fn solve_similarity_row(
    row: ArrayView1<'_, f64>,
    all: ArrayView2<'_, f64>,
    phi: f64,
) -> Result<Array1<f64>> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::Config(format!("phi must be positive, got {phi}")));
    }
    ridge_solve(all, row, phi, "class similarity")
}

/// Clamps negatives to zero and rescales to unit sum; an all-zero row
/// becomes uniform.
pub fn normalize_similarity(raw: ArrayView1<'_, f64>) -> Array1<f64> {
    let clamped = raw.mapv(|v| v.max(0.0));
    let total = clamped.sum();
    if total > 0.0 && total.is_finite() {
        clamped / total
    } else {
        Array1::from_elem(raw.len(), 1.0 / raw.len() as f64)
    }
}

pub fn build_similarity_matrix(attrs: &AttributeMatrix, phi: f64) -> Result<SimilarityMatrix> {
    let n = attrs.num_classes();
    let mut values = Array2::zeros((n, n));
    for p in 0..n {
        let raw = solve_similarity_row(attrs.row(p), attrs.values(), phi)?;
        values.row_mut(p).assign(&normalize_similarity(raw.view()));
    }
    Ok(SimilarityMatrix {
        values,
        phi,
        num_seen: attrs.num_seen(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalization_cases() {
        let a = normalize_similarity(array![0.2, 0.3, 0.5].view());
        for (x, y) in a.iter().zip([0.2, 0.3, 0.5]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(normalize_similarity(array![1.0, 1.0, 2.0].view()), array![0.25, 0.25, 0.5]);
        assert_eq!(normalize_similarity(array![-0.5, 1.0, 1.0].view()), array![0.0, 0.5, 0.5]);
        assert_eq!(normalize_similarity(array![-1.0, 0.0].view()), array![0.5, 0.5]);
    }

    #[test]
    fn duplicate_rows_share_similarity() {
        let all = array![[1.0, 0.0, 0.3], [0.2, 0.9, 0.1], [1.0, 0.0, 0.3]];
        let raw = solve_similarity_row(all.row(0), all.view(), 1e-6).unwrap();
        assert!((raw[0] - raw[2]).abs() < 1e-6);
    }

    #[test]
    fn large_phi_shrinks_raw_row() {
        let all = array![[1.0, 0.0], [0.2, 0.9], [0.5, 0.5]];
        let raw = solve_similarity_row(all.row(1), all.view(), 1e12).unwrap();
        assert!(raw.dot(&raw).sqrt() < 1e-9);
    }

    #[test]
    fn identical_rows_give_uniform_matrix() {
        let attrs = AttributeMatrix::new(Array2::from_elem((5, 3), 0.4), 3).unwrap();
        let sim = build_similarity_matrix(&attrs, 0.1).unwrap();
        for v in sim.values().iter() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_rows_are_diagonally_dominant() {
        let attrs = AttributeMatrix::new(Array2::eye(6) * 2.0, 4).unwrap();
        let sim = build_similarity_matrix(&attrs, 0.5).unwrap();
        for p in 0..6 {
            for q in 0..6 {
                assert!(sim.row(p)[p] >= sim.row(p)[q]);
            }
        }
    }

    #[test]
    fn awa2_shape_is_row_stochastic() {
        let attrs = AttributeMatrix::new(
            Array2::from_shape_fn((50, 85), |(r, c)| ((r * 7 + c * 13) % 11) as f64 / 11.0),
            40,
        )
        .unwrap();
        let sim = build_similarity_matrix(&attrs, DEFAULT_PHI).unwrap();
        assert_eq!(sim.values().dim(), (50, 50));
        for row in sim.values().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        assert_eq!(sim.unseen_row(3).len(), 10);
    }

    #[test]
    fn nonpositive_phi_is_rejected() {
        let all = Array2::eye(2);
        assert!(solve_similarity_row(all.row(0), all.view(), 0.0).is_err());
    }
}
