//! Inference rules and accuracy metrics.

use std::collections::BTreeMap;

use ndarray::{ArrayView1, ArrayView2};

use crate::datamodel::{AttributeMatrix, FeatureDataset, Split};
use crate::error::{check_dim, Error, Result};
use crate::scc::{encode_semantics, score_matrix, SccModel};

/// Index of the largest value; the first one wins a tie.
pub fn argmax_first(values: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = j;
        }
    }
    best
}

/// Conventional setting: unseen columns only. Returns the global class index.
pub fn czsl_from_scores(scores: ArrayView1<'_, f64>, num_seen: usize) -> usize {
    num_seen + argmax_first(scores.slice(ndarray::s![num_seen..]))
}

/// Generalized setting: every column competes.
pub fn gzsl_from_scores(scores: ArrayView1<'_, f64>) -> usize {
    argmax_first(scores)
}

fn class_scores(model: &SccModel, attrs: &AttributeMatrix, features: ArrayView2<'_, f64>) -> Result<ndarray::Array2<f64>> {
    check_dim("classes", model.shape.num_classes(), attrs.num_classes())?;
    let embeddings = encode_semantics(model, attrs.values())?;
    score_matrix(model, features, embeddings.view())
}

pub fn predict_czsl(model: &SccModel, attrs: &AttributeMatrix, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    let scores = class_scores(model, attrs, features)?;
    Ok(scores.rows().into_iter().map(|r| czsl_from_scores(r, model.shape.num_seen)).collect())
}

pub fn predict_gzsl(model: &SccModel, attrs: &AttributeMatrix, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    let scores = class_scores(model, attrs, features)?;
    Ok(scores.rows().into_iter().map(gzsl_from_scores).collect())
}

/// Accuracy of each class in `classes`, in percent, in the given order.
pub fn per_class_accuracies(predictions: &[usize], labels: &[usize], classes: &[usize]) -> Result<Vec<f64>> {
    check_dim("predictions vs labels", labels.len(), predictions.len())?;
    if classes.is_empty() {
        return Err(Error::Invariant("accuracy over an empty class subset".into()));
    }
    let mut tally: BTreeMap<usize, (usize, usize)> = classes.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &y) in predictions.iter().zip(labels) {
        if let Some((hit, total)) = tally.get_mut(&y) {
            *total += 1;
            *hit += usize::from(p == y);
        }
    }
    classes
        .iter()
        .map(|c| {
            let (hit, total) = tally[c];
            if total == 0 {
                Err(Error::InsufficientSamples {
                    class: *c,
                    available: 0,
                    required: 1,
                })
            } else {
                Ok(100.0 * hit as f64 / total as f64)
            }
        })
        .collect()
}

/// Mean per-class Top-1 accuracy in percent; every class weighs the same.
pub fn per_class_top1(predictions: &[usize], labels: &[usize], classes: &[usize]) -> Result<f64> {
    let accs = per_class_accuracies(predictions, labels, classes)?;
    Ok(accs.iter().sum::<f64>() / accs.len() as f64)
}

pub fn harmonic_mean(unseen: f64, seen: f64) -> f64 {
    if unseen + seen <= 0.0 {
        0.0
    } else {
        2.0 * unseen * seen / (unseen + seen)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub name: String,
    pub unseen: bool,
    /// Generalized-setting accuracy, percent.
    pub gzsl: f64,
    /// Conventional-setting accuracy, percent; unseen classes only.
    pub czsl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlignmentSummary {
    pub k: usize,
    pub per_class: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub t1_czsl: f64,
    pub acc_unseen: f64,
    pub acc_seen: f64,
    pub harmonic: f64,
    pub per_class: Vec<ClassAccuracy>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alignment: Option<AlignmentSummary>,
    pub config_echo: serde_json::Value,
}

pub const CSV_HEADER: &str = "t1_czsl,acc_unseen,acc_seen,harmonic";

impl EvalReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{:.4},{:.4}",
            self.t1_czsl, self.acc_unseen, self.acc_seen, self.harmonic
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Scores the held-out splits: CZSL Top-1 on unseen test rows, and the
/// generalized U, S and H.
pub fn evaluate(
    model: &SccModel,
    attrs: &AttributeMatrix,
    dataset: &FeatureDataset,
    config_echo: serde_json::Value,
) -> Result<EvalReport> {
    check_dim("feature dimension", model.shape.d_v, dataset.dim())?;
    check_dim("seen classes", model.shape.num_seen, dataset.num_seen())?;
    let k = dataset.num_seen();
    let seen: Vec<usize> = (0..k).collect();
    let unseen: Vec<usize> = (k..dataset.num_classes()).collect();

    let embeddings = encode_semantics(model, attrs.values())?;
    let (xu, yu) = dataset.split_view(Split::TestUnseen);
    let (xs, ys) = dataset.split_view(Split::TestSeen);
    let su = score_matrix(model, xu.view(), embeddings.view())?;
    let ss = score_matrix(model, xs.view(), embeddings.view())?;

    let czsl_u: Vec<usize> = su.rows().into_iter().map(|r| czsl_from_scores(r, k)).collect();
    let gzsl_u: Vec<usize> = su.rows().into_iter().map(gzsl_from_scores).collect();
    let gzsl_s: Vec<usize> = ss.rows().into_iter().map(gzsl_from_scores).collect();

    let czsl_acc = per_class_accuracies(&czsl_u, &yu, &unseen)?;
    let gzsl_unseen_acc = per_class_accuracies(&gzsl_u, &yu, &unseen)?;
    let gzsl_seen_acc = per_class_accuracies(&gzsl_s, &ys, &seen)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (t1, u, s) = (mean(&czsl_acc), mean(&gzsl_unseen_acc), mean(&gzsl_seen_acc));

    let name = |c: usize| attrs.class_names().get(c).cloned().unwrap_or_default();
    let mut per_class: Vec<ClassAccuracy> = seen
        .iter()
        .zip(&gzsl_seen_acc)
        .map(|(&c, &a)| ClassAccuracy {
            class: c,
            name: name(c),
            unseen: false,
            gzsl: a,
            czsl: None,
        })
        .collect();
    per_class.extend(unseen.iter().enumerate().map(|(i, &c)| ClassAccuracy {
        class: c,
        name: name(c),
        unseen: true,
        gzsl: gzsl_unseen_acc[i],
        czsl: Some(czsl_acc[i]),
    }));

    Ok(EvalReport {
        t1_czsl: t1,
        acc_unseen: u,
        acc_seen: s,
        harmonic: harmonic_mean(u, s),
        per_class,
        alignment: None,
        config_echo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn scan_max(v: &[f64]) -> usize {
        let mut best = f64::NEG_INFINITY;
        let mut idx = usize::MAX;
        for (i, &x) in v.iter().enumerate() {
            if x > best {
                best = x;
                idx = i;
            }
        }
        idx
    }

    #[test]
    fn czsl_restricts_to_unseen_columns() {
        let s = array![0.1, 0.2, 0.3, 0.9, 0.8];
        assert_eq!(czsl_from_scores(s.view(), 3), 3);
        let tie = array![0.9, 0.9, 0.9, 0.5, 0.5];
        assert_eq!(czsl_from_scores(tie.view(), 3), 3);
    }

    #[test]
    fn gzsl_cases() {
        assert_eq!(gzsl_from_scores(array![0.9, 0.2, 0.3, 0.4, 0.8].view()), 0);
        assert_eq!(gzsl_from_scores(array![0.1, 0.2, 0.3, 0.4, 0.8].view()), 4);
        assert_eq!(gzsl_from_scores(array![0.1, 0.7, 0.3, 0.7, 0.2].view()), 1);
    }

    #[test]
    fn per_class_averaging_weights_classes_equally() {
        let mut labels = vec![0; 10];
        labels.push(1);
        let preds = vec![0; 11];
        assert_eq!(per_class_top1(&preds, &labels, &[0, 1]).unwrap(), 50.0);
        assert_eq!(per_class_top1(&labels, &labels, &[0, 1]).unwrap(), 100.0);
    }

    #[test]
    fn missing_class_and_empty_subset_are_errors() {
        assert!(per_class_top1(&[0], &[0], &[0, 1]).is_err());
        assert!(per_class_top1(&[0], &[0], &[]).is_err());
    }

    #[test]
    fn harmonic_mean_fixtures() {
        assert_eq!(harmonic_mean(80.0, 80.0), 80.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        assert_eq!(harmonic_mean(0.0, 70.0), 0.0);
        assert!((harmonic_mean(67.6, 82.3) - 74.2).abs() < 0.05);
        assert!((harmonic_mean(42.5, 49.9) - 45.9).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn argmax_matches_scan(v in prop::collection::vec(0.0f64..1.0, 1..12)) {
            prop_assert_eq!(argmax_first(Array1::from(v.clone()).view()), scan_max(&v));
        }

        #[test]
        fn gzsl_restricted_to_unseen_agrees_with_czsl(v in prop::collection::vec(0.0f64..1.0, 2..12), k in 1usize..10) {
            let k = k.min(v.len() - 1);
            let row = Array1::from(v.clone());
            let restricted = k + gzsl_from_scores(row.slice(ndarray::s![k..]));
            prop_assert_eq!(restricted, czsl_from_scores(row.view(), k));
        }

        #[test]
        fn harmonic_bounds(u in 0.0f64..100.0, s in 0.0f64..100.0) {
            let h = harmonic_mean(u, s);
            prop_assert!(h <= (u + s) / 2.0 + 1e-12);
            prop_assert!(h <= 2.0 * u.min(s) + 1e-12);
            prop_assert!((0.0..=100.0).contains(&h));
        }

        #[test]
        fn top1_matches_tally_and_ignores_row_order(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
            rot in 0usize..60,
        ) {
            let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let classes: Vec<usize> = (0..4).filter(|c| labels.contains(c)).collect();
            let mut expected = 0.0;
            for &c in &classes {
                let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
                let hits = rows.iter().filter(|&&i| preds[i] == c).count();
                expected += hits as f64 / rows.len() as f64;
            }
            expected *= 100.0 / classes.len() as f64;
            let got = per_class_top1(&preds, &labels, &classes).unwrap();
            prop_assert!((got - expected).abs() < 1e-9);

            let r = rot % pairs.len();
            let mut p2 = preds.clone();
            let mut l2 = labels.clone();
            p2.rotate_left(r);
            l2.rotate_left(r);
            prop_assert_eq!(per_class_top1(&p2, &l2, &classes).unwrap(), got);
            if classes.len() == 1 {
                let plain = 100.0 * preds.iter().zip(&labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64;
                prop_assert!((got - plain).abs() < 1e-9);
            }
        }
    }
}
