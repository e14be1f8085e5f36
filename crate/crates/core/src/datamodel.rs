//! Core data types and the on-disk feature bundle.
//!
//! Classes are indexed from zero with the `K` seen classes first, followed
//! by the `L` unseen classes. Everything in memory is `f64`; bundles store
//! `f32` payloads and are promoted on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::rng;
use crate::zfb::{self, Precision};

pub const BUNDLE_VERSION: u32 = 1;
pub const METADATA_FILE: &str = "metadata.json";
pub const FEATURES_FILE: &str = "features.zfb";
pub const ATTRIBUTES_FILE: &str = "attributes.zfb";
pub const LABELS_FILE: &str = "labels.zfb";
pub const CHECKSUMS_FILE: &str = "checksums.sha256";

/// Class-by-attribute score matrix, seen rows first.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix {
    values: Array2<f64>,
    num_seen: usize,
    class_names: Vec<String>,
}

impl AttributeMatrix {
    pub fn new(values: Array2<f64>, num_seen: usize) -> Result<Self> {
        let names = (0..values.nrows())
            .map(|c| {
                if c < num_seen {
                    format!("seen_{c}")
                } else {
                    format!("unseen_{}", c - num_seen)
                }
            })
            .collect();
        Self::with_names(values, num_seen, names)
    }

    pub fn with_names(values: Array2<f64>, num_seen: usize, class_names: Vec<String>) -> Result<Self> {
        if num_seen == 0 || num_seen >= values.nrows() {
            return Err(Error::Invariant(format!(
                "attribute matrix with {} rows cannot hold {num_seen} seen classes and at least one unseen class",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::Invariant("attribute matrix has zero columns".into()));
        }
        check_dim("class names", values.nrows(), class_names.len())?;
        check_finite("attribute matrix", values.iter())?;
        Ok(Self {
            values,
            num_seen,
            class_names,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Rows of the seen classes.
    pub fn seen(&self) -> ArrayView2<'_, f64> {
        self.values.slice(s![..self.num_seen, ..])
    }

    /// Rows of the unseen classes.
    pub fn unseen(&self) -> ArrayView2<'_, f64> {
        self.values.slice(s![self.num_seen.., ..])
    }

    pub fn row(&self, class: usize) -> ArrayView1<'_, f64> {
        self.values.row(class)
    }

    pub fn num_seen(&self) -> usize {
        self.num_seen
    }

    pub fn num_unseen(&self) -> usize {
        self.values.nrows() - self.num_seen
    }

    pub fn num_classes(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Same classes, new scores.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        check_dim("attribute rows", self.values.nrows(), values.nrows())?;
        Self::with_names(values, self.num_seen, self.class_names.clone())
    }
}

/// Row indices of the three evaluation splits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train_seen: Vec<usize>,
    pub test_seen: Vec<usize>,
    pub test_unseen: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    TrainSeen,
    TestSeen,
    TestUnseen,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::TrainSeen => &self.train_seen,
            Split::TestSeen => &self.test_seen,
            Split::TestUnseen => &self.test_unseen,
        }
    }
}

/// Labeled visual features plus split bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    splits: Splits,
    num_seen: usize,
    num_unseen: usize,
}

impl FeatureDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        splits: Splits,
        num_seen: usize,
        num_unseen: usize,
    ) -> Result<Self> {
        check_dim("labels per feature row", features.nrows(), labels.len())?;
        check_finite("features", features.iter())?;
        let total = num_seen + num_unseen;
        if let Some(i) = labels.iter().position(|&l| l >= total) {
            return Err(Error::Invariant(format!(
                "label {} at row {i} outside 0..{total}",
                labels[i]
            )));
        }
        let mut owner = vec![None; features.nrows()];
        for (name, split, seen) in [
            ("train_seen", &splits.train_seen, true),
            ("test_seen", &splits.test_seen, true),
            ("test_unseen", &splits.test_unseen, false),
        ] {
            for &row in split {
                if row >= features.nrows() {
                    return Err(Error::Invariant(format!(
                        "{name} index {row} out of bounds for {} rows",
                        features.nrows()
                    )));
                }
                if let Some(other) = owner[row].replace(name) {
                    return Err(Error::Invariant(format!(
                        "row {row} appears in both {other} and {name}"
                    )));
                }
                let label = labels[row];
                if seen != (label < num_seen) {
                    return Err(Error::Invariant(format!(
                        "{name} row {row} has label {label}, which is {} (K = {num_seen})",
                        if label < num_seen { "seen" } else { "unseen" }
                    )));
                }
            }
        }
        Ok(Self {
            features,
            labels,
            splits,
            num_seen,
            num_unseen,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn num_seen(&self) -> usize {
        self.num_seen
    }

    pub fn num_unseen(&self) -> usize {
        self.num_unseen
    }

    pub fn num_classes(&self) -> usize {
        self.num_seen + self.num_unseen
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    /// Copies the rows of one split, in split order.
    pub fn split_view(&self, split: Split) -> (Array2<f64>, Vec<usize>) {
        let rows = self.splits.get(split);
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        (features, labels)
    }
}

/// Synthesized unseen-class prototypes used as training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub prototypes: Array2<f64>,
    pub labels: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl PrototypeSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            prototypes: Array2::zeros((0, dim)),
            labels: Vec::new(),
            lambdas: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self, num_seen: usize, num_unseen: usize) -> Result<()> {
        check_dim("prototype labels", self.prototypes.nrows(), self.labels.len())?;
        check_dim("prototype lambdas", self.prototypes.nrows(), self.lambdas.len())?;
        check_finite("prototypes", self.prototypes.iter())?;
        if let Some(&l) = self
            .labels
            .iter()
            .find(|&&l| l < num_seen || l >= num_seen + num_unseen)
        {
            return Err(Error::Invariant(format!(
                "prototype label {l} is not an unseen class index"
            )));
        }
        Ok(())
    }

    /// Writes the prototype matrix (float64 container) to `path`, with labels
    /// and lambdas alongside as `<path>.labels` and `<path>.lambdas`.
    pub fn save(&self, path: &Path) -> Result<()> {
        zfb::write_matrix(path, &self.prototypes, Precision::F64)?;
        zfb::write_labels(&sidecar(path, "labels"), &self.labels)?;
        let lambdas = Array2::from_shape_vec((self.lambdas.len(), 1), self.lambdas.clone())
            .expect("column vector");
        zfb::write_matrix(&sidecar(path, "lambdas"), &lambdas, Precision::F64)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let prototypes = zfb::read_matrix(path)?;
        let labels = zfb::read_labels(&sidecar(path, "labels"))?;
        let lambdas = zfb::read_matrix(&sidecar(path, "lambdas"))?;
        Ok(Self {
            prototypes,
            labels,
            lambdas: lambdas.into_iter().collect(),
        })
    }
}

pub fn sidecar(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    name.into()
}

/// `metadata.json` of a bundle. Unknown keys are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub version: u32,
    pub d_v: usize,
    pub d_a: usize,
    pub num_seen: usize,
    pub num_unseen: usize,
    pub class_names: Vec<String>,
    pub splits: Splits,
}

pub fn save_bundle(dataset: &FeatureDataset, attrs: &AttributeMatrix, dir: &Path) -> Result<()> {
    if attrs.num_seen() != dataset.num_seen() || attrs.num_unseen() != dataset.num_unseen() {
        return Err(Error::Invariant(format!(
            "dataset has {}+{} classes but attribute matrix has {}+{}",
            dataset.num_seen(),
            dataset.num_unseen(),
            attrs.num_seen(),
            attrs.num_unseen()
        )));
    }
    check_finite("features", dataset.features.iter())?;
    check_finite("attribute matrix", attrs.values.iter())?;

    let metadata = BundleMetadata {
        version: BUNDLE_VERSION,
        d_v: dataset.dim(),
        d_a: attrs.dim(),
        num_seen: dataset.num_seen(),
        num_unseen: dataset.num_unseen(),
        class_names: attrs.class_names().to_vec(),
        splits: dataset.splits().clone(),
    };
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        (
            METADATA_FILE,
            serde_json::to_vec_pretty(&metadata).expect("metadata serializes"),
        ),
        (FEATURES_FILE, zfb::encode_matrix(&dataset.features, Precision::F32)),
        (ATTRIBUTES_FILE, zfb::encode_matrix(&attrs.values, Precision::F32)),
        (LABELS_FILE, zfb::encode_labels(&dataset.labels)),
    ];
    let checksums: String = files
        .iter()
        .map(|(name, bytes)| format!("{}  {name}\n", sha256_hex(bytes)))
        .collect();
    files.push((CHECKSUMS_FILE, checksums.into_bytes()));

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<(FeatureDataset, AttributeMatrix)> {
    let meta_path = dir.join(METADATA_FILE);
    let meta_bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: BundleMetadata = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Metadata {
        file: meta_path.clone(),
        message: e.to_string(),
    })?;
    let meta_err = |message: String| Error::Metadata {
        file: meta_path.clone(),
        message,
    };
    if meta.version != BUNDLE_VERSION {
        return Err(meta_err(format!("unsupported bundle version {}", meta.version)));
    }
    if meta.class_names.len() != meta.num_seen + meta.num_unseen {
        return Err(meta_err(format!(
            "{} class names for {} classes",
            meta.class_names.len(),
            meta.num_seen + meta.num_unseen
        )));
    }

    let checksum_path = dir.join(CHECKSUMS_FILE);
    let checksums = match fs::read_to_string(&checksum_path) {
        Ok(text) => parse_checksums(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(Error::io(&checksum_path, e)),
    };
    let read = |name: &str| -> Result<Vec<u8>> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if let Some(expected) = checksums.get(name) {
            let actual = sha256_hex(&bytes);
            if &actual != expected {
                return Err(Error::Format {
                    file: path,
                    offset: 0,
                    message: format!("checksum mismatch: expected {expected}, got {actual}"),
                });
            }
        }
        Ok(bytes)
    };
    if let Some(expected) = checksums.get(METADATA_FILE) {
        if &sha256_hex(&meta_bytes) != expected {
            return Err(meta_err("checksum mismatch".into()));
        }
    }

    let features_path = dir.join(FEATURES_FILE);
    let (features, _) = zfb::decode_matrix(&read(FEATURES_FILE)?, &features_path)?;
    let attrs_path = dir.join(ATTRIBUTES_FILE);
    let (attributes, _) = zfb::decode_matrix(&read(ATTRIBUTES_FILE)?, &attrs_path)?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = zfb::decode_labels(&read(LABELS_FILE)?, &labels_path)?;

    let shape_err = |file: &Path, message: String| Error::Format {
        file: file.to_path_buf(),
        offset: 4,
        message,
    };
    if features.ncols() != meta.d_v {
        return Err(shape_err(
            &features_path,
            format!("{} columns, metadata d_v = {}", features.ncols(), meta.d_v),
        ));
    }
    if labels.len() != features.nrows() {
        return Err(shape_err(
            &labels_path,
            format!("{} labels for {} feature rows", labels.len(), features.nrows()),
        ));
    }
    if attributes.dim() != (meta.num_seen + meta.num_unseen, meta.d_a) {
        return Err(shape_err(
            &attrs_path,
            format!(
                "shape {:?}, metadata requires ({}, {})",
                attributes.dim(),
                meta.num_seen + meta.num_unseen,
                meta.d_a
            ),
        ));
    }

    let dataset = FeatureDataset::new(features, labels, meta.splits, meta.num_seen, meta.num_unseen)?;
    let attrs = AttributeMatrix::with_names(attributes, meta.num_seen, meta.class_names)?;
    Ok((dataset, attrs))
}

fn parse_checksums(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|line| {
            let (hash, name) = line.split_once("  ")?;
            Some((name.trim().to_string(), hash.trim().to_string()))
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parameters of the planted synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub seed: u64,
    pub num_seen: usize,
    pub num_unseen: usize,
    pub d_v: usize,
    pub d_a: usize,
    pub samples_per_seen_class: usize,
    pub noise_scale: f64,
    /// Symmetric Dirichlet concentration of the unseen mixing weights.
    /// Small values make each unseen class resemble a few seen classes.
    pub mixing_concentration: f64,
}

impl WorldParams {
    /// Test rows generated per class, for both seen and unseen classes.
    pub fn test_per_class(&self) -> usize {
        (self.samples_per_seen_class / 4).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub dataset: FeatureDataset,
    pub attrs: AttributeMatrix,
    /// `L x d_v`, row `u` is the planted mean of unseen class `K + u`.
    pub true_unseen_means: Array2<f64>,
    /// `L x K`, row `u` is the convex combination that planted class `K + u`.
    pub mixing_weights: Array2<f64>,
}

/// Builds a world where each unseen class is a convex combination of seen
/// classes, identically in attribute space and in feature space.
///
/// Seen features are isotropic Gaussian clusters around standard-normal
/// means. Stored values are rounded through `f32` so the world survives a
/// bundle round trip unchanged. Rows are laid out as `train_seen`, then
/// `test_seen`, then `test_unseen`.
pub fn make_synthetic_world(params: &WorldParams) -> Result<SyntheticWorld> {
    let &WorldParams {
        seed,
        num_seen: k,
        num_unseen: l,
        d_v,
        d_a,
        samples_per_seen_class,
        noise_scale,
        mixing_concentration,
    } = params;
    if k < 2 || l < 1 {
        return Err(Error::Config(format!("need K >= 2 and L >= 1, got K = {k}, L = {l}")));
    }
    if d_v == 0 || d_a == 0 || samples_per_seen_class == 0 {
        return Err(Error::Config("dimensions and sample counts must be positive".into()));
    }
    if d_a < l {
        return Err(Error::Config(format!("d_a = {d_a} must be at least L = {l}")));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::Config(format!("invalid noise scale {noise_scale}")));
    }
    let gamma = Gamma::new(mixing_concentration, 1.0)
        .map_err(|_| Error::Config(format!("invalid mixing concentration {mixing_concentration}")))?;

    let q = |v: f64| v as f32 as f64;
    let mut rng = rng::substream(seed, rng::STREAM_WORLD);
    let seen_means = Array2::from_shape_simple_fn((k, d_v), || q(rng.sample(StandardNormal)));
    let seen_attrs = Array2::from_shape_simple_fn((k, d_a), || q(rng.random::<f64>()));
    let mut weights = Array2::<f64>::zeros((l, k));
    for mut row in weights.rows_mut() {
        row.mapv_inplace(|_| rng.sample(gamma) + f64::EPSILON);
        let total = row.sum();
        row /= total;
    }
    let unseen_attrs = weights.dot(&seen_attrs).mapv(q);
    let true_unseen_means = weights.dot(&seen_means);

    let mut attrs = Array2::zeros((k + l, d_a));
    attrs.slice_mut(s![..k, ..]).assign(&seen_attrs);
    attrs.slice_mut(s![k.., ..]).assign(&unseen_attrs);

    let test_per_class = params.test_per_class();
    let total = k * samples_per_seen_class + k * test_per_class + l * test_per_class;
    let mut features = Array2::zeros((total, d_v));
    let mut labels = Vec::with_capacity(total);
    let mut splits = Splits::default();
    let mut emit = |mean: ArrayView1<'_, f64>, label: usize, rng: &mut rng::StreamRng| {
        let row = labels.len();
        for (dst, &m) in features.row_mut(row).iter_mut().zip(mean) {
            let z: f64 = rng.sample(StandardNormal);
            *dst = q(m + noise_scale * z);
        }
        labels.push(label);
        row
    };
    for c in 0..k {
        for _ in 0..samples_per_seen_class {
            splits.train_seen.push(emit(seen_means.row(c), c, &mut rng));
        }
    }
    for c in 0..k {
        for _ in 0..test_per_class {
            splits.test_seen.push(emit(seen_means.row(c), c, &mut rng));
        }
    }
    for u in 0..l {
        for _ in 0..test_per_class {
            splits.test_unseen.push(emit(true_unseen_means.row(u), k + u, &mut rng));
        }
    }

    Ok(SyntheticWorld {
        dataset: FeatureDataset::new(features, labels, splits, k, l)?,
        attrs: AttributeMatrix::new(attrs, k)?,
        true_unseen_means,
        mixing_weights: weights,
    })
}
