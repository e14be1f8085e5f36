//! Finite-difference verification of the analytic gradient.

use ndarray::ArrayView2;

use crate::datamodel::AttributeMatrix;
use crate::dpsr::SimilarityMatrix;
use crate::error::{check_dim, Result};

use super::loss::{unseen_masks, Objective};
use super::model::{SccModel, PARAM_NAMES};
use super::train::batch_objective;

/// Gradients smaller than this in magnitude are compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: &'static str,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

/// Compares the analytic gradient of the summed batch objective with
/// central differences of step `step`, over every parameter.
pub fn gradient_check(
    model: &SccModel,
    attrs: &AttributeMatrix,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    similarity: Option<&SimilarityMatrix>,
    objective: Objective,
    step: f64,
) -> Result<GradCheckReport> {
    let shape = model.shape;
    check_dim("feature dimension", shape.d_v, features.ncols())?;
    check_dim("labels", features.nrows(), labels.len())?;
    check_dim("attribute columns", shape.d_a, attrs.dim())?;
    let masks = match objective {
        Objective::Joint => unseen_masks(labels, shape.num_seen, shape.num_unseen, None),
        Objective::Regularized { .. } => unseen_masks(labels, shape.num_seen, shape.num_unseen, similarity),
    };
    let eval = |params: &super::model::Params, grads: Option<&mut super::model::Params>| {
        batch_objective(
            params,
            attrs.values(),
            features,
            labels,
            shape.num_seen,
            masks.view(),
            objective,
            1.0,
            grads,
        )
    };

    let mut analytic = model.params.clone();
    for g in analytic.slices_mut() {
        g.fill(0.0);
    }
    eval(&model.params, Some(&mut analytic));

    let mut probe = model.params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: PARAM_NAMES[0],
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let analytic_slices = analytic.slices();
    for t in 0..PARAM_NAMES.len() {
        for i in 0..analytic_slices[t].len() {
            let original = probe.slices()[t][i];
            probe.slices_mut()[t][i] = original + step;
            let up = eval(&probe, None);
            probe.slices_mut()[t][i] = original - step;
            let down = eval(&probe, None);
            probe.slices_mut()[t][i] = original;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic_slices[t][i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_parameter = PARAM_NAMES[t];
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
