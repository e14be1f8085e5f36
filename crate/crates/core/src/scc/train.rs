use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datamodel::AttributeMatrix;
use crate::dpsr::SimilarityMatrix;
use crate::error::{check_dim, Error, Result};
use crate::rng;
use crate::synthesis::UnifiedSet;

use super::loss::{objective_with_grad, unseen_masks, Objective};
use super::model::{backward, encoder_forward, fuse_all, scorer_forward, Params, SccModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dpsr_enabled: bool,
    /// Minimize the unmasked joint BCE instead; `beta` is ignored.
    pub plain_loss_mode: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.2,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 50,
            seed: 0,
            dpsr_enabled: true,
            plain_loss_mode: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be at least 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        if self.plain_loss_mode {
            Objective::Joint
        } else {
            Objective::Regularized { beta: self.beta }
        }
    }
}

/// Mean per-sample objective before training and after every epoch's pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Summed objective of one batch; when `grads` is given, the gradient
/// scaled by `scale` is accumulated into it.
pub(crate) fn batch_objective(
    params: &Params,
    attrs: ArrayView2<'_, f64>,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    num_seen: usize,
    masks: ArrayView2<'_, f64>,
    objective: Objective,
    scale: f64,
    grads: Option<&mut Params>,
) -> f64 {
    let classes = attrs.nrows();
    let enc = encoder_forward(params, attrs);
    let sc = scorer_forward(params, fuse_all(features, enc.embeddings.view()));
    let logits = sc
        .logits
        .view()
        .into_shape_with_order((labels.len(), classes))
        .expect("one logit per sample and class");
    let (loss, d_logits) = objective_with_grad(logits, labels, num_seen, masks, objective, scale);
    if let Some(grads) = grads {
        let flat = d_logits
            .into_shape_with_order(labels.len() * classes)
            .expect("contiguous");
        backward(params, &enc, &sc, features, flat.view(), grads);
    }
    loss
}

struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first: Params,
    second: Params,
}

impl Adam {
    fn new(like: &Params) -> Self {
        let mut zeros = like.clone();
        for s in zeros.slices_mut() {
            s.fill(0.0);
        }
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    fn update(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.first.slices_mut())
            .zip(self.second.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

fn mean_objective(
    model: &SccModel,
    attrs: ArrayView2<'_, f64>,
    set: &UnifiedSet,
    masks: &Array2<f64>,
    objective: Objective,
    batch_size: usize,
) -> f64 {
    let mut total = 0.0;
    for start in (0..set.len()).step_by(batch_size) {
        let end = (start + batch_size).min(set.len());
        total += batch_objective(
            &model.params,
            attrs,
            set.features.slice(ndarray::s![start..end, ..]),
            &set.labels[start..end],
            model.shape.num_seen,
            masks.slice(ndarray::s![start..end, ..]),
            objective,
            0.0,
            None,
        );
    }
    total / set.len().max(1) as f64
}

/// Minibatch Adam on the configured objective.
///
/// Batch losses are summed over samples and classes, then divided by the
/// batch size for the update. Sample order is reshuffled every epoch from
/// the `shuffle` substream of `cfg.seed`.
pub fn train(
    mut model: SccModel,
    set: &UnifiedSet,
    attrs: &AttributeMatrix,
    similarity: Option<&SimilarityMatrix>,
    cfg: &TrainConfig,
) -> Result<(SccModel, TrainHistory)> {
    cfg.validate()?;
    let shape = model.shape;
    check_dim("attribute columns", shape.d_a, attrs.dim())?;
    check_dim("classes", shape.num_classes(), attrs.num_classes())?;
    check_dim("seen classes", shape.num_seen, attrs.num_seen())?;
    check_dim("feature dimension", shape.d_v, set.features.ncols())?;
    if set.is_empty() {
        return Err(Error::Invariant("training set is empty".into()));
    }
    if let Some(&y) = set.labels.iter().find(|&&y| y >= shape.num_classes()) {
        return Err(Error::Invariant(format!("training label {y} out of range")));
    }
    let similarity = match (cfg.dpsr_enabled && !cfg.plain_loss_mode, similarity) {
        (true, Some(sim)) => {
            check_dim("similarity rows", shape.num_classes(), sim.values().nrows())?;
            Some(sim)
        }
        (true, None) => {
            return Err(Error::Config("DPSR enabled but no similarity matrix given".into()))
        }
        (false, _) => None,
    };

    let objective = cfg.objective();
    let attr_values = attrs.values();
    let masks = unseen_masks(&set.labels, shape.num_seen, shape.num_unseen, similarity);
    let initial_loss = mean_objective(&model, attr_values, set, &masks, objective, cfg.batch_size);
    if !initial_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            batch: 0,
            loss: initial_loss,
        });
    }

    let mut rng = rng::substream(cfg.seed, rng::STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut adam = Adam::new(&model.params);
    let mut grads = model.params.clone();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            let features = set.features.select(Axis(0), rows);
            let labels: Vec<usize> = rows.iter().map(|&r| set.labels[r]).collect();
            let batch_masks = masks.select(Axis(0), rows);
            for g in grads.slices_mut() {
                g.fill(0.0);
            }
            let loss = batch_objective(
                &model.params,
                attr_values,
                features.view(),
                &labels,
                shape.num_seen,
                batch_masks.view(),
                objective,
                1.0 / rows.len() as f64,
                Some(&mut grads),
            );
            if !loss.is_finite() || grads.slices().iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, batch, loss });
            }
            epoch_total += loss;
            adam.update(&mut model.params, &grads, cfg.learning_rate);
        }
        epoch_losses.push(epoch_total / set.len() as f64);
    }
    Ok((
        model,
        TrainHistory {
            initial_loss,
            epoch_losses,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpsr::build_similarity_matrix;
    use crate::scc::model::ModelShape;
    use ndarray::array;

    fn toy() -> (UnifiedSet, AttributeMatrix, ModelShape) {
        let attrs = AttributeMatrix::new(
            array![[1.0, 0.0, 0.2], [0.0, 1.0, 0.1], [0.5, 0.5, 0.9]],
            2,
        )
        .unwrap();
        let set = UnifiedSet {
            features: array![[1.0, 0.1], [0.9, 0.0], [0.0, 1.0], [0.1, 0.8], [0.5, 0.5]],
            labels: vec![0, 0, 1, 1, 2],
            synthetic: vec![false, false, false, false, true],
        };
        let shape = ModelShape {
            d_a: 3,
            d_v: 2,
            encoder_hidden: 8,
            scorer_hidden: 8,
            num_seen: 2,
            num_unseen: 1,
        };
        (set, attrs, shape)
    }

    #[test]
    fn zero_learning_rate_leaves_weights_bitwise_unchanged() {
        let (set, attrs, shape) = toy();
        let model = SccModel::init(shape, 1);
        let sim = build_similarity_matrix(&attrs, 0.1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            batch_size: 2,
            ..Default::default()
        };
        let (trained, history) = train(model.clone(), &set, &attrs, Some(&sim), &cfg).unwrap();
        assert_eq!(trained.params, model.params);
        assert_eq!(history.epoch_losses.len(), 1);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let (set, attrs, shape) = toy();
        let sim = build_similarity_matrix(&attrs, 0.1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 40,
            batch_size: 2,
            seed: 3,
            ..Default::default()
        };
        let (a, ha) = train(SccModel::init(shape, 3), &set, &attrs, Some(&sim), &cfg).unwrap();
        let (b, hb) = train(SccModel::init(shape, 3), &set, &attrs, Some(&sim), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(ha, hb);
        assert!(ha.final_loss() < ha.initial_loss);
    }

    #[test]
    fn plain_mode_ignores_beta_and_masks() {
        let (set, attrs, shape) = toy();
        let base = TrainConfig {
            plain_loss_mode: true,
            epochs: 3,
            batch_size: 2,
            ..Default::default()
        };
        let other = TrainConfig { beta: 5.0, dpsr_enabled: false, ..base };
        let (a, _) = train(SccModel::init(shape, 1), &set, &attrs, None, &base).unwrap();
        let (b, _) = train(SccModel::init(shape, 1), &set, &attrs, None, &other).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn missing_similarity_with_dpsr_is_a_config_error() {
        let (set, attrs, shape) = toy();
        let err = train(SccModel::init(shape, 1), &set, &attrs, None, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn runaway_weights_are_reported_as_divergence() {
        let (set, attrs, shape) = toy();
        let cfg = TrainConfig {
            dpsr_enabled: false,
            learning_rate: 1e300,
            epochs: 5,
            ..Default::default()
        };
        match train(SccModel::init(shape, 1), &set, &attrs, None, &cfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
