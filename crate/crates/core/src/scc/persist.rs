//! Model directories: `manifest.json`, one float64 ZFB file per parameter
//! tensor, and the (rescored) class attribute matrix the model was trained
//! against.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::datamodel::AttributeMatrix;
use crate::error::{Error, Result};
use crate::zfb::{self, Precision};

use super::model::{ModelShape, Params, SccModel, LEAKY_SLOPE, PARAM_NAMES};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLASS_ATTRIBUTES_FILE: &str = "class_attributes.zfb";
pub const MODEL_FORMAT: &str = "zsl-scc";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub d_v: usize,
    pub d_a: usize,
    pub num_seen: usize,
    pub num_unseen: usize,
    pub seed: u64,
    pub leaky_slope: f64,
    pub layers: Vec<LayerSpec>,
    pub class_names: Vec<String>,
}

fn layers(shape: &ModelShape) -> Vec<LayerSpec> {
    let layer = |name: &str, inputs, outputs, activation: &str| LayerSpec {
        name: name.into(),
        inputs,
        outputs,
        activation: activation.into(),
    };
    vec![
        layer("encoder.fc1", shape.d_a, shape.encoder_hidden, "relu"),
        layer("encoder.fc2", shape.encoder_hidden, shape.d_v, "leaky_relu"),
        layer("scorer.fc1", shape.d_v, shape.scorer_hidden, "relu"),
        layer("scorer.fc2", shape.scorer_hidden, 1, "sigmoid"),
    ]
}

fn param_file(name: &str) -> String {
    format!("{name}.zfb")
}

pub fn save_model(model: &SccModel, attrs: &AttributeMatrix, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shape = &model.shape;
    let manifest = ModelManifest {
        format: MODEL_FORMAT.into(),
        version: 1,
        d_v: shape.d_v,
        d_a: shape.d_a,
        num_seen: shape.num_seen,
        num_unseen: shape.num_unseen,
        seed: model.seed,
        leaky_slope: LEAKY_SLOPE,
        layers: layers(shape),
        class_names: attrs.class_names().to_vec(),
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))
        .map_err(|e| Error::io(&path, e))?;
    let p = &model.params;
    let tensors: [Array2<f64>; 8] = [
        p.enc_w1.clone(),
        row(&p.enc_b1),
        p.enc_w2.clone(),
        row(&p.enc_b2),
        p.sc_w1.clone(),
        row(&p.sc_b1),
        row(&p.sc_w2),
        row(&p.sc_b2),
    ];
    for (name, tensor) in PARAM_NAMES.iter().zip(&tensors) {
        zfb::write_matrix(&dir.join(param_file(name)), tensor, Precision::F64)?;
    }
    zfb::write_matrix(
        &dir.join(CLASS_ATTRIBUTES_FILE),
        &attrs.values().to_owned(),
        Precision::F64,
    )
}

fn row(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(ndarray::Axis(0))
}

pub fn load_model(dir: &Path) -> Result<(SccModel, AttributeMatrix)> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: ModelManifest = serde_json::from_slice(&bytes).map_err(|e| Error::Metadata {
        file: path.clone(),
        message: e.to_string(),
    })?;
    let bad = |message: String| Error::Metadata {
        file: path.clone(),
        message,
    };
    if manifest.format != MODEL_FORMAT || manifest.version != 1 {
        return Err(bad(format!("unsupported model format {} v{}", manifest.format, manifest.version)));
    }
    if manifest.layers.len() != 4 {
        return Err(bad(format!("expected 4 layers, found {}", manifest.layers.len())));
    }
    let shape = ModelShape {
        d_a: manifest.d_a,
        d_v: manifest.d_v,
        encoder_hidden: manifest.layers[0].outputs,
        scorer_hidden: manifest.layers[2].outputs,
        num_seen: manifest.num_seen,
        num_unseen: manifest.num_unseen,
    };
    if layers(&shape) != manifest.layers {
        return Err(bad("layer table does not describe this architecture".into()));
    }

    let mut params = Params::zeros(&shape);
    let expected: Vec<(usize, usize)> = params
        .slices()
        .iter()
        .zip([
            (shape.d_a, shape.encoder_hidden),
            (1, shape.encoder_hidden),
            (shape.encoder_hidden, shape.d_v),
            (1, shape.d_v),
            (shape.d_v, shape.scorer_hidden),
            (1, shape.scorer_hidden),
            (1, shape.scorer_hidden),
            (1, 1),
        ])
        .map(|(_, s)| s)
        .collect();
    for ((name, slot), dims) in PARAM_NAMES.iter().zip(params.slices_mut()).zip(expected) {
        let file = dir.join(param_file(name));
        let tensor = zfb::read_matrix(&file)?;
        if tensor.dim() != dims {
            return Err(Error::Format {
                file,
                offset: 4,
                message: format!("shape {:?}, manifest requires {dims:?}", tensor.dim()),
            });
        }
        slot.copy_from_slice(tensor.as_slice().expect("standard layout"));
    }
    let attrs_path = dir.join(CLASS_ATTRIBUTES_FILE);
    let values = zfb::read_matrix(&attrs_path)?;
    if values.dim() != (shape.num_classes(), shape.d_a) {
        return Err(Error::Format {
            file: attrs_path,
            offset: 4,
            message: format!("shape {:?} does not match the manifest", values.dim()),
        });
    }
    let attrs = AttributeMatrix::with_names(values, shape.num_seen, manifest.class_names)?;
    Ok((
        SccModel {
            shape,
            params,
            seed: manifest.seed,
        },
        attrs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trips_exactly() {
        let shape = ModelShape {
            d_a: 3,
            d_v: 4,
            encoder_hidden: 5,
            scorer_hidden: 6,
            num_seen: 2,
            num_unseen: 1,
        };
        let model = SccModel::init(shape, 17);
        let attrs = AttributeMatrix::new(Array2::from_elem((3, 3), 0.25), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model(&model, &attrs, dir.path()).unwrap();
        let (back, back_attrs) = load_model(dir.path()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back_attrs, attrs);
    }

    #[test]
    fn tensor_shape_mismatch_is_rejected() {
        let shape = ModelShape {
            d_a: 2,
            d_v: 2,
            encoder_hidden: 3,
            scorer_hidden: 3,
            num_seen: 1,
            num_unseen: 1,
        };
        let model = SccModel::init(shape, 1);
        let attrs = AttributeMatrix::new(Array2::zeros((2, 2)), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model(&model, &attrs, dir.path()).unwrap();
        zfb::write_matrix(
            &dir.path().join(param_file(PARAM_NAMES[2])),
            &Array2::zeros((2, 2)),
            Precision::F64,
        )
        .unwrap();
        assert!(load_model(dir.path()).is_err());
    }
}
