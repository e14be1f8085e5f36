//! Split binary cross-entropy objectives.
//!
//! All public losses are plain sums over samples and classes. Scores and
//! masked scores are clamped to `[SCORE_EPS, 1 - SCORE_EPS]` before the
//! logarithm.

use ndarray::{Array2, ArrayView2};

use crate::dpsr::SimilarityMatrix;
use crate::error::{check_dim, Error, Result};

use super::model::{clamp_score, sigmoid, SCORE_EPS};

/// Which training objective to minimize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `L_S + β L_U`, the unseen term optionally masked by class similarity.
    Regularized { beta: f64 },
    /// Plain BCE over every class column with no masking.
    Joint,
}

#[inline]
fn bce(m: f64, p: f64) -> f64 {
    let p = clamp_score(p);
    -(m * p.ln() + (1.0 - m) * (1.0 - p).ln())
}

fn check_shape(context: &'static str, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    check_dim(context, a.nrows(), b.nrows())?;
    check_dim(context, a.ncols(), b.ncols())
}

/// `L_S`: BCE over the seen-class columns.
pub fn loss_seen(scores: ArrayView2<'_, f64>, onehot: ArrayView2<'_, f64>) -> Result<f64> {
    check_shape("seen scores vs indicators", scores, onehot)?;
    Ok(scores.iter().zip(onehot.iter()).map(|(&c, &m)| bce(m, c)).sum())
}

/// `L_U`: BCE over the unseen-class columns with each score multiplied by
/// the similarity of the sample's true class to that unseen class.
pub fn loss_unseen(
    scores: ArrayView2<'_, f64>,
    onehot: ArrayView2<'_, f64>,
    similarity: ArrayView2<'_, f64>,
) -> Result<f64> {
    check_shape("unseen scores vs indicators", scores, onehot)?;
    check_shape("unseen scores vs similarity", scores, similarity)?;
    if let Some(bad) = similarity.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Invariant(format!("similarity {bad} outside [0, 1]")));
    }
    Ok(scores
        .iter()
        .zip(onehot.iter())
        .zip(similarity.iter())
        .map(|((&c, &m), &s)| bce(m, clamp_score(c) * s))
        .sum())
}

/// Unmasked BCE over all class columns.
pub fn loss_joint(scores: ArrayView2<'_, f64>, onehot: ArrayView2<'_, f64>) -> Result<f64> {
    check_shape("scores vs indicators", scores, onehot)?;
    Ok(scores.iter().zip(onehot.iter()).map(|(&c, &m)| bce(m, c)).sum())
}

pub fn total_loss(seen: f64, unseen: f64, beta: f64) -> f64 {
    seen + beta * unseen
}

/// `labels.len() x width` indicator matrix; column `j` stands for class
/// `offset + j`.
pub fn onehot(labels: &[usize], offset: usize, width: usize) -> Array2<f64> {
    let mut m = Array2::zeros((labels.len(), width));
    for (i, &y) in labels.iter().enumerate() {
        if (offset..offset + width).contains(&y) {
            m[[i, y - offset]] = 1.0;
        }
    }
    m
}

/// Per-sample similarity rows restricted to the unseen columns, or ones.
pub fn unseen_masks(
    labels: &[usize],
    num_seen: usize,
    num_unseen: usize,
    similarity: Option<&SimilarityMatrix>,
) -> Array2<f64> {
    let mut masks = Array2::ones((labels.len(), num_unseen));
    if let Some(sim) = similarity {
        for (i, &y) in labels.iter().enumerate() {
            masks.row_mut(i).assign(&sim.unseen_row(y));
        }
    }
    debug_assert!(labels.iter().all(|&y| y < num_seen + num_unseen));
    masks
}

/// Objective value and its gradient with respect to every logit.
///
/// `logits` holds one row per sample and one column per class. The
/// returned gradient is multiplied by `scale`; the loss is not.
pub(crate) fn objective_with_grad(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    num_seen: usize,
    masks: ArrayView2<'_, f64>,
    objective: Objective,
    scale: f64,
) -> (f64, Array2<f64>) {
    let (b, c) = logits.dim();
    debug_assert_eq!(labels.len(), b);
    let mut grad = Array2::zeros((b, c));
    let mut loss = 0.0;
    for i in 0..b {
        for j in 0..c {
            let m = if labels[i] == j { 1.0 } else { 0.0 };
            let sigma = sigmoid(logits[[i, j]]);
            let saturated = !(SCORE_EPS..=1.0 - SCORE_EPS).contains(&sigma);
            let score = clamp_score(sigma);
            let unseen_weight = match objective {
                Objective::Regularized { beta } => beta,
                Objective::Joint => 1.0,
            };
            if j < num_seen || objective == Objective::Joint {
                let weight = if j < num_seen { 1.0 } else { unseen_weight };
                loss += weight * bce(m, score);
                if !saturated {
                    grad[[i, j]] = scale * weight * (score - m);
                }
            } else {
                let s = masks[[i, j - num_seen]];
                let raw = score * s;
                let p = clamp_score(raw);
                loss += unseen_weight * bce(m, p);
                if !saturated && raw == p {
                    let d_p = -m / p + (1.0 - m) / (1.0 - p);
                    grad[[i, j]] = scale * unseen_weight * d_p * s * score * (1.0 - score);
                }
            }
        }
    }
    (loss, grad)
}

#[cfg(test)]
pub(crate) fn scores_from_logits(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    logits.mapv(|z| clamp_score(sigmoid(z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, s};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Independent elementwise loop, written against the formulas directly.
    fn brute_bce(scores: &Array2<f64>, m: &Array2<f64>, s: Option<&Array2<f64>>) -> f64 {
        let mut total = 0.0;
        for i in 0..scores.nrows() {
            for j in 0..scores.ncols() {
                let mut p = scores[[i, j]].clamp(1e-7, 1.0 - 1e-7);
                if let Some(s) = s {
                    p = (p * s[[i, j]]).clamp(1e-7, 1.0 - 1e-7);
                }
                let y = m[[i, j]];
                total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            }
        }
        total
    }

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, c: usize) -> (Array2<f64>, Vec<usize>) {
        let scores = Array2::from_shape_simple_fn((b, c), || rng.random_range(0.01..0.99));
        let labels = (0..b).map(|_| rng.random_range(0..c)).collect();
        (scores, labels)
    }

    #[test]
    fn midpoint_and_perfect_predictions() {
        let l = loss_seen(array![[0.5]].view(), array![[1.0]].view()).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = loss_seen(array![[1.0 - SCORE_EPS]].view(), array![[1.0]].view()).unwrap();
        assert!(l < 2e-7);
    }

    #[test]
    fn seen_loss_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (scores, labels) = random_batch(&mut rng, 3, 4);
        let m = onehot(&labels, 0, 4);
        let ours = loss_seen(scores.view(), m.view()).unwrap();
        assert!((ours - brute_bce(&scores, &m, None)).abs() < 1e-12);
    }

    #[test]
    fn unit_masks_reduce_to_plain_bce() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (scores, labels) = random_batch(&mut rng, 5, 3);
        let m = onehot(&labels, 0, 3);
        let ones = Array2::ones((5, 3));
        let masked = loss_unseen(scores.view(), m.view(), ones.view()).unwrap();
        assert_eq!(masked, loss_joint(scores.view(), m.view()).unwrap());
    }

    #[test]
    fn zero_masks_without_positives_cost_only_the_clamp() {
        let scores = array![[0.3, 0.9], [0.6, 0.1]];
        let zeros = Array2::zeros((2, 2));
        let floor = -4.0 * (1.0 - SCORE_EPS).ln();
        assert!((loss_unseen(scores.view(), zeros.view(), zeros.view()).unwrap() - floor).abs() < 1e-15);
    }

    #[test]
    fn unseen_loss_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (scores, labels) = random_batch(&mut rng, 6, 4);
        let m = onehot(&labels, 0, 4);
        let s = Array2::from_shape_simple_fn((6, 4), || rng.random_range(0.0..1.0));
        let ours = loss_unseen(scores.view(), m.view(), s.view()).unwrap();
        assert!((ours - brute_bce(&scores, &m, Some(&s))).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_similarity_and_shapes_are_rejected() {
        let a = Array2::from_elem((2, 2), 0.5);
        let bad = array![[0.5, 1.5], [0.0, 0.0]];
        assert!(loss_unseen(a.view(), a.view(), bad.view()).is_err());
        assert!(loss_seen(a.view(), Array2::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn total_loss_is_affine() {
        assert_eq!(total_loss(3.0, 7.0, 0.0), 3.0);
        assert_eq!(total_loss(3.0, 7.0, 0.2), 3.0 + 0.2 * 7.0);
    }

    #[test]
    fn split_losses_sum_to_joint_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (k, l) = (3, 2);
        let (scores, labels) = random_batch(&mut rng, 5, k + l);
        let ms = onehot(&labels, 0, k);
        let mu = onehot(&labels, k, l);
        let ls = loss_seen(scores.slice(s![.., ..k]), ms.view()).unwrap();
        let ones = Array2::ones((5, l));
        let lu = loss_unseen(scores.slice(s![.., k..]), mu.view(), ones.view()).unwrap();
        let joint = loss_joint(scores.view(), onehot(&labels, 0, k + l).view()).unwrap();
        assert!((total_loss(ls, lu, 1.0) - joint).abs() < 1e-10);
    }

    #[test]
    fn raising_a_negative_mask_never_lowers_its_term() {
        for c in [0.01, 0.3, 0.7, 0.99] {
            let mut prev = 0.0;
            for step in 0..=20 {
                let s = step as f64 / 20.0;
                let term = loss_unseen(array![[c]].view(), array![[0.0]].view(), array![[s]].view()).unwrap();
                assert!(term >= prev);
                prev = term;
            }
        }
    }

    #[test]
    fn objective_agrees_with_public_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (k, l, b) = (3, 2, 4);
        let logits = Array2::from_shape_simple_fn((b, k + l), || rng.random_range(-3.0..3.0));
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k + l)).collect();
        let masks = Array2::from_shape_simple_fn((b, l), || rng.random_range(0.0..1.0));
        let scores = scores_from_logits(logits.view());
        let beta = 0.2;
        let ls = loss_seen(scores.slice(s![.., ..k]), onehot(&labels, 0, k).view()).unwrap();
        let lu = loss_unseen(scores.slice(s![.., k..]), onehot(&labels, k, l).view(), masks.view()).unwrap();
        let (obj, _) =
            objective_with_grad(logits.view(), &labels, k, masks.view(), Objective::Regularized { beta }, 1.0);
        assert!((obj - total_loss(ls, lu, beta)).abs() < 1e-10);
        let joint = loss_joint(scores.view(), onehot(&labels, 0, k + l).view()).unwrap();
        let (obj, _) = objective_with_grad(logits.view(), &labels, k, masks.view(), Objective::Joint, 1.0);
        assert!((obj - joint).abs() < 1e-10);
    }
}
