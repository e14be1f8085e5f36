//! Semantic encoder and contrastive scorer.
//!
//! The encoder maps a class attribute row to the visual feature space
//! (`d_a -> H_e -> d_v`, ReLU then LeakyReLU). A sample/class pair is fused
//! by elementwise product and scored by a second network
//! (`d_v -> H_s -> 1`, ReLU then sigmoid).
//!
//! Weights are stored input-major (`in x out`) so a batch forward pass is a
//! plain `X · W`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::rng;

pub const LEAKY_SLOPE: f64 = 0.01;
/// Scores are clamped to `[SCORE_EPS, 1 - SCORE_EPS]` before any logarithm.
pub const SCORE_EPS: f64 = 1e-7;
pub const DEFAULT_HIDDEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub d_a: usize,
    pub d_v: usize,
    pub encoder_hidden: usize,
    pub scorer_hidden: usize,
    pub num_seen: usize,
    pub num_unseen: usize,
}

impl ModelShape {
    pub fn num_classes(&self) -> usize {
        self.num_seen + self.num_unseen
    }
}

/// One tensor per layer parameter. Used for weights, gradients and
/// optimizer moments alike.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub enc_w1: Array2<f64>,
    pub enc_b1: Array1<f64>,
    pub enc_w2: Array2<f64>,
    pub enc_b2: Array1<f64>,
    pub sc_w1: Array2<f64>,
    pub sc_b1: Array1<f64>,
    pub sc_w2: Array1<f64>,
    pub sc_b2: Array1<f64>,
}

pub const PARAM_NAMES: [&str; 8] = [
    "encoder.fc1.weight",
    "encoder.fc1.bias",
    "encoder.fc2.weight",
    "encoder.fc2.bias",
    "scorer.fc1.weight",
    "scorer.fc1.bias",
    "scorer.fc2.weight",
    "scorer.fc2.bias",
];

impl Params {
    pub fn zeros(shape: &ModelShape) -> Self {
        let &ModelShape {
            d_a,
            d_v,
            encoder_hidden: he,
            scorer_hidden: hs,
            ..
        } = shape;
        Self {
            enc_w1: Array2::zeros((d_a, he)),
            enc_b1: Array1::zeros(he),
            enc_w2: Array2::zeros((he, d_v)),
            enc_b2: Array1::zeros(d_v),
            sc_w1: Array2::zeros((d_v, hs)),
            sc_b1: Array1::zeros(hs),
            sc_w2: Array1::zeros(hs),
            sc_b2: Array1::zeros(1),
        }
    }

    pub fn slices(&self) -> [&[f64]; 8] {
        [
            self.enc_w1.as_slice().expect("standard layout"),
            self.enc_b1.as_slice().expect("standard layout"),
            self.enc_w2.as_slice().expect("standard layout"),
            self.enc_b2.as_slice().expect("standard layout"),
            self.sc_w1.as_slice().expect("standard layout"),
            self.sc_b1.as_slice().expect("standard layout"),
            self.sc_w2.as_slice().expect("standard layout"),
            self.sc_b2.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.enc_w1.as_slice_mut().expect("standard layout"),
            self.enc_b1.as_slice_mut().expect("standard layout"),
            self.enc_w2.as_slice_mut().expect("standard layout"),
            self.enc_b2.as_slice_mut().expect("standard layout"),
            self.sc_w1.as_slice_mut().expect("standard layout"),
            self.sc_b1.as_slice_mut().expect("standard layout"),
            self.sc_w2.as_slice_mut().expect("standard layout"),
            self.sc_b2.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SccModel {
    pub shape: ModelShape,
    pub params: Params,
    /// Root seed the weights were initialized from.
    pub seed: u64,
}

impl SccModel {
    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases,
    /// drawn from the `init` substream of `seed`.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut rng = rng::substream(seed, rng::STREAM_INIT);
        let mut params = Params::zeros(&shape);
        let fan_ins = [
            shape.d_a,
            shape.d_a,
            shape.encoder_hidden,
            shape.encoder_hidden,
            shape.d_v,
            shape.d_v,
            shape.scorer_hidden,
            shape.scorer_hidden,
        ];
        for (tensor, fan_in) in params.slices_mut().into_iter().zip(fan_ins) {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in tensor {
                *v = rng.random_range(-bound..bound);
            }
        }
        Self { shape, params, seed }
    }

    pub fn zeros(shape: ModelShape) -> Self {
        Self {
            params: Params::zeros(&shape),
            shape,
            seed: 0,
        }
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clamp_score(c: f64) -> f64 {
    c.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

/// Intermediate values of the encoder for every class.
#[derive(Debug, Clone)]
pub(crate) struct EncoderPass {
    pub attrs: Array2<f64>,
    pub pre1: Array2<f64>,
    pub hidden: Array2<f64>,
    pub pre2: Array2<f64>,
    pub embeddings: Array2<f64>,
}

/// Intermediate values of the scorer for a batch of samples against all
/// classes; row `i * C + j` pairs sample `i` with class `j`.
#[derive(Debug, Clone)]
pub(crate) struct ScorerPass {
    pub fused: Array2<f64>,
    pub pre1: Array2<f64>,
    pub hidden: Array2<f64>,
    pub logits: Array1<f64>,
}

pub(crate) fn encoder_forward(params: &Params, attrs: ArrayView2<'_, f64>) -> EncoderPass {
    let mut pre1 = attrs.dot(&params.enc_w1);
    pre1 += &params.enc_b1;
    let hidden = pre1.mapv(relu);
    let mut pre2 = hidden.dot(&params.enc_w2);
    pre2 += &params.enc_b2;
    let embeddings = pre2.mapv(leaky_relu);
    EncoderPass {
        attrs: attrs.to_owned(),
        pre1,
        hidden,
        pre2,
        embeddings,
    }
}

/// Fuses every sample with every class embedding.
pub(crate) fn fuse_all(features: ArrayView2<'_, f64>, embeddings: ArrayView2<'_, f64>) -> Array2<f64> {
    let (b, d) = features.dim();
    let c = embeddings.nrows();
    let mut fused = Array2::zeros((b * c, d));
    for (i, x) in features.rows().into_iter().enumerate() {
        for (j, e) in embeddings.rows().into_iter().enumerate() {
            Zip::from(fused.row_mut(i * c + j))
                .and(&x)
                .and(&e)
                .for_each(|z, &xv, &ev| *z = xv * ev);
        }
    }
    fused
}

pub(crate) fn scorer_forward(params: &Params, fused: Array2<f64>) -> ScorerPass {
    let mut pre1 = fused.dot(&params.sc_w1);
    pre1 += &params.sc_b1;
    let hidden = pre1.mapv(relu);
    let mut logits = hidden.dot(&params.sc_w2);
    logits += params.sc_b2[0];
    ScorerPass {
        fused,
        pre1,
        hidden,
        logits,
    }
}

/// Backpropagates `d_logits` (one entry per fused row) into `grads`.
///
/// `features` must be the batch the scorer pass was computed from.
pub(crate) fn backward(
    params: &Params,
    enc: &EncoderPass,
    sc: &ScorerPass,
    features: ArrayView2<'_, f64>,
    d_logits: ArrayView1<'_, f64>,
    grads: &mut Params,
) {
    let c = enc.embeddings.nrows();

    // scorer output layer
    grads.sc_w2 += &sc.hidden.t().dot(&d_logits);
    grads.sc_b2[0] += d_logits.sum();

    // scorer hidden layer
    let mut d_pre = Array2::zeros(sc.pre1.raw_dim());
    Zip::from(d_pre.rows_mut())
        .and(sc.pre1.rows())
        .and(&d_logits)
        .for_each(|mut dst, pre, &g| {
            if g != 0.0 {
                Zip::from(&mut dst)
                    .and(&pre)
                    .and(&params.sc_w2)
                    .for_each(|d, &p, &w| *d = if p > 0.0 { g * w } else { 0.0 });
            }
        });
    grads.sc_w1 += &sc.fused.t().dot(&d_pre);
    grads.sc_b1 += &d_pre.sum_axis(Axis(0));
    let d_fused = d_pre.dot(&params.sc_w1.t());

    // fusion: Z_ij = x_i ⊙ e_j
    let mut d_emb = Array2::<f64>::zeros(enc.embeddings.raw_dim());
    for (i, x) in features.rows().into_iter().enumerate() {
        for j in 0..c {
            Zip::from(d_emb.row_mut(j))
                .and(d_fused.row(i * c + j))
                .and(&x)
                .for_each(|d, &g, &xv| *d += g * xv);
        }
    }

    // encoder
    let d_pre2 = Zip::from(&d_emb)
        .and(&enc.pre2)
        .map_collect(|&g, &p| if p > 0.0 { g } else { LEAKY_SLOPE * g });
    grads.enc_w2 += &enc.hidden.t().dot(&d_pre2);
    grads.enc_b2 += &d_pre2.sum_axis(Axis(0));
    let mut d_pre1 = d_pre2.dot(&params.enc_w2.t());
    Zip::from(&mut d_pre1)
        .and(&enc.pre1)
        .for_each(|g, &p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
    grads.enc_w1 += &enc.attrs.t().dot(&d_pre1);
    grads.enc_b1 += &d_pre1.sum_axis(Axis(0));
}

/// Class embeddings `E(a_j)`, one row per attribute row.
pub fn encode_semantics(model: &SccModel, attrs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_dim("attribute columns", model.shape.d_a, attrs.ncols())?;
    Ok(encoder_forward(&model.params, attrs).embeddings)
}

/// Elementwise fusion `Z_ij = F(x_i) ⊙ E(a_j)`.
pub fn fuse(feature: ArrayView1<'_, f64>, class_embedding: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    check_dim("fusion operands", feature.len(), class_embedding.len())?;
    Ok(&feature * &class_embedding)
}

/// Clamped contrastive score of one fused vector.
pub fn score(model: &SccModel, fused: ArrayView1<'_, f64>) -> Result<f64> {
    check_dim("fused vector", model.shape.d_v, fused.len())?;
    let mut pre = fused.dot(&model.params.sc_w1);
    pre += &model.params.sc_b1;
    let logit = pre.mapv(relu).dot(&model.params.sc_w2) + model.params.sc_b2[0];
    Ok(clamp_score(sigmoid(logit)))
}

/// Scores of every sample against every class embedding, `N x C`.
pub fn score_matrix(
    model: &SccModel,
    features: ArrayView2<'_, f64>,
    embeddings: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_dim("feature dimension", model.shape.d_v, features.ncols())?;
    check_dim("embedding dimension", model.shape.d_v, embeddings.ncols())?;
    const CHUNK: usize = 128;
    let c = embeddings.nrows();
    let mut out = Array2::zeros((features.nrows(), c));
    for (chunk_idx, chunk) in features.axis_chunks_iter(Axis(0), CHUNK).enumerate() {
        let pass = scorer_forward(&model.params, fuse_all(chunk, embeddings));
        for (r, &logit) in pass.logits.iter().enumerate() {
            out[[chunk_idx * CHUNK + r / c, r % c]] = clamp_score(sigmoid(logit));
        }
    }
    Ok(out)
}
