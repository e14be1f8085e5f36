//! Unseen-class prototype synthesis.
//!
//! Each unseen attribute row is ridge-coded over the seen attribute rows; the
//! same coefficients applied to the seen class means give an estimated
//! cluster center for the unseen class. Drawing several regularization
//! strengths per class yields several distinct prototypes.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{AttributeMatrix, FeatureDataset, PrototypeSet, Split};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::ridge_solve;
use crate::rng;

/// Seen-class mean features, one column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeans {
    /// `d_v x K`.
    pub means: Array2<f64>,
    pub counts: Vec<usize>,
}

impl ClassMeans {
    pub fn num_classes(&self) -> usize {
        self.means.ncols()
    }

    pub fn dim(&self) -> usize {
        self.means.nrows()
    }
}

/// Ridge coefficients reconstructing one unseen class from the seen classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub coefficients: Array1<f64>,
    pub lambda: f64,
    pub target_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub per_class: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_class == 0 {
            return Err(Error::Config("prototypes per class must be at least 1".into()));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max && self.lambda_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < lambda_min <= lambda_max, got [{}, {}]",
                self.lambda_min, self.lambda_max
            )));
        }
        Ok(())
    }
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            per_class: 5,
            lambda_min: 1.0,
            lambda_max: 1.02,
        }
    }
}

/// Arithmetic mean of the `train_seen` features of every seen class.
pub fn compute_seen_means(dataset: &FeatureDataset) -> Result<ClassMeans> {
    let k = dataset.num_seen();
    let features = dataset.features();
    let mut sums = Array2::<f64>::zeros((dataset.dim(), k));
    let mut counts = vec![0usize; k];
    for &row in &dataset.splits().train_seen {
        let label = dataset.labels()[row];
        counts[label] += 1;
        let mut col = sums.column_mut(label);
        col += &features.row(row);
    }
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::InsufficientSamples {
                class,
                available: 0,
                required: 1,
            });
        }
        let mut col = sums.column_mut(class);
        col /= count as f64;
    }
    Ok(ClassMeans { means: sums, counts })
}

/// Codes `unseen_row` over the rows of `seen_rows` with ridge penalty `lambda`.
pub fn ridge_code(
    unseen_row: ArrayView1<'_, f64>,
    seen_rows: ArrayView2<'_, f64>,
    lambda: f64,
    target_class: usize,
) -> Result<SparseCode> {
    let coefficients = ridge_solve(seen_rows, unseen_row, lambda, "ridge coding")?;
    Ok(SparseCode {
        coefficients,
        lambda,
        target_class,
    })
}

/// The estimated cluster center `M^s α`.
pub fn synthesize_prototype(means: &ClassMeans, code: &SparseCode) -> Result<Array1<f64>> {
    check_dim("sparse code length", means.num_classes(), code.coefficients.len())?;
    Ok(means.means.dot(&code.coefficients))
}

/// Draws the per-class λ values: `per_class` uniform draws in
/// `[lambda_min, lambda_max]` for each unseen class in index order, sorted
/// ascending within the class.
pub fn draw_lambdas(num_unseen: usize, cfg: &SynthesisConfig, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::substream(seed, rng::STREAM_LAMBDA);
    let width = cfg.lambda_max - cfg.lambda_min;
    (0..num_unseen)
        .map(|_| {
            let mut draws: Vec<f64> = (0..cfg.per_class)
                .map(|_| cfg.lambda_min + width * rng.random::<f64>())
                .collect();
            draws.sort_by(f64::total_cmp);
            draws
        })
        .collect()
}

/// Emits `per_class` prototypes for every unseen class of `attrs`.
pub fn generate_prototype_set(
    attrs: &AttributeMatrix,
    means: &ClassMeans,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<PrototypeSet> {
    cfg.validate()?;
    check_dim("seen classes in class means", attrs.num_seen(), means.num_classes())?;
    let k = attrs.num_seen();
    let lambdas = draw_lambdas(attrs.num_unseen(), cfg, seed);
    let total = attrs.num_unseen() * cfg.per_class;
    let mut prototypes = Array2::zeros((total, means.dim()));
    let mut labels = Vec::with_capacity(total);
    let mut all_lambdas = Vec::with_capacity(total);
    for (u, class_lambdas) in lambdas.into_iter().enumerate() {
        let class = k + u;
        for lambda in class_lambdas {
            let code = ridge_code(attrs.row(class), attrs.seen(), lambda, class)?;
            let proto = synthesize_prototype(means, &code)?;
            prototypes.row_mut(labels.len()).assign(&proto);
            labels.push(class);
            all_lambdas.push(lambda);
        }
    }
    check_finite("prototypes", prototypes.iter())?;
    Ok(PrototypeSet {
        prototypes,
        labels,
        lambdas: all_lambdas,
    })
}

/// Real seen training rows followed by synthetic prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub synthetic: Vec<bool>,
}

impl UnifiedSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_real(&self) -> usize {
        self.synthetic.iter().filter(|s| !**s).count()
    }

    pub fn num_synthetic(&self) -> usize {
        self.synthetic.iter().filter(|s| **s).count()
    }
}

pub fn augment_training_set(dataset: &FeatureDataset, protos: &PrototypeSet) -> Result<UnifiedSet> {
    check_dim("prototype feature dimension", dataset.dim(), protos.prototypes.ncols())?;
    protos.validate(dataset.num_seen(), dataset.num_unseen())?;
    let (real, mut labels) = dataset.split_view(Split::TrainSeen);
    let mut synthetic = vec![false; labels.len()];
    synthetic.extend(std::iter::repeat_n(true, protos.len()));
    labels.extend_from_slice(&protos.labels);
    let features = concatenate(Axis(0), &[real.view(), protos.prototypes.view()])
        .expect("column counts checked");
    Ok(UnifiedSet {
        features,
        labels,
        synthetic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{make_synthetic_world, Splits, WorldParams};
    use ndarray::array;

    fn dataset(features: Array2<f64>, labels: Vec<usize>, k: usize) -> FeatureDataset {
        let splits = Splits {
            train_seen: (0..labels.len()).collect(),
            ..Default::default()
        };
        FeatureDataset::new(features, labels, splits, k, 1).unwrap()
    }

    #[test]
    fn singleton_means_are_the_samples() {
        let d = dataset(array![[1.0, 2.0], [3.0, 4.0]], vec![1, 0], 2);
        let m = compute_seen_means(&d).unwrap();
        assert_eq!(m.means, array![[3.0, 1.0], [4.0, 2.0]]);
        assert_eq!(m.counts, vec![1, 1]);
    }

    #[test]
    fn opposite_samples_average_to_zero() {
        let d = dataset(array![[1.5, -2.0], [-1.5, 2.0]], vec![0, 0], 1);
        let m = compute_seen_means(&d).unwrap();
        assert_eq!(m.means.column(0), array![0.0, 0.0].view());
    }

    #[test]
    fn empty_seen_class_is_an_error() {
        let d = dataset(array![[1.0], [2.0]], vec![0, 0], 2);
        assert!(matches!(
            compute_seen_means(&d),
            Err(Error::InsufficientSamples { class: 1, .. })
        ));
    }

    #[test]
    fn huge_lambda_shrinks_code_to_zero() {
        let seen = array![[0.3, 0.1, 0.9], [0.5, 0.7, 0.2]];
        let code = ridge_code(array![0.4, 0.4, 0.6].view(), seen.view(), 1e12, 2).unwrap();
        assert!(code.coefficients.dot(&code.coefficients).sqrt() < 1e-9);
    }

    #[test]
    fn one_hot_code_selects_a_column() {
        let means = ClassMeans {
            means: array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
            counts: vec![1; 3],
        };
        let code = SparseCode {
            coefficients: array![0.0, 1.0, 0.0],
            lambda: 1.0,
            target_class: 3,
        };
        assert_eq!(synthesize_prototype(&means, &code).unwrap(), array![2.0, 5.0]);
        let zero = SparseCode {
            coefficients: Array1::zeros(3),
            ..code.clone()
        };
        assert_eq!(synthesize_prototype(&means, &zero).unwrap(), array![0.0, 0.0]);
        let short = SparseCode {
            coefficients: Array1::zeros(2),
            ..code
        };
        assert!(synthesize_prototype(&means, &short).is_err());
    }

    fn world(noise: f64) -> crate::datamodel::SyntheticWorld {
        make_synthetic_world(&WorldParams {
            seed: 11,
            num_seen: 8,
            num_unseen: 4,
            d_v: 32,
            d_a: 16,
            samples_per_seen_class: 6,
            noise_scale: noise,
            mixing_concentration: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn degenerate_interval_matches_single_synthesis() {
        let w = world(0.2);
        let means = compute_seen_means(&w.dataset).unwrap();
        let cfg = SynthesisConfig {
            per_class: 1,
            lambda_min: 0.5,
            lambda_max: 0.5,
        };
        let set = generate_prototype_set(&w.attrs, &means, &cfg, 3).unwrap();
        for (i, &class) in set.labels.iter().enumerate() {
            let code = ridge_code(w.attrs.row(class), w.attrs.seen(), 0.5, class).unwrap();
            let single = synthesize_prototype(&means, &code).unwrap();
            assert_eq!(set.prototypes.row(i), single.view());
        }
    }

    #[test]
    fn distinct_lambdas_give_distinct_prototypes() {
        let w = world(0.2);
        let means = compute_seen_means(&w.dataset).unwrap();
        let class = 8;
        let a = ridge_code(w.attrs.row(class), w.attrs.seen(), 1.0, class).unwrap();
        let b = ridge_code(w.attrs.row(class), w.attrs.seen(), 1.02, class).unwrap();
        let pa = synthesize_prototype(&means, &a).unwrap();
        let pb = synthesize_prototype(&means, &b).unwrap();
        let diff = &pa - &pb;
        assert!(diff.dot(&diff).sqrt() > 0.0);
    }

    #[test]
    fn awa2_settings_yield_900_prototypes() {
        let k = 40;
        let l = 10;
        let attrs = AttributeMatrix::new(
            Array2::from_shape_fn((k + l, 85), |(r, c)| ((r * 31 + c * 17) % 23) as f64 / 23.0),
            k,
        )
        .unwrap();
        let means = ClassMeans {
            means: Array2::from_shape_fn((16, k), |(r, c)| (r as f64 - c as f64) / 10.0),
            counts: vec![1; k],
        };
        let cfg = SynthesisConfig {
            per_class: 90,
            lambda_min: 1.0,
            lambda_max: 1.02,
        };
        let set = generate_prototype_set(&attrs, &means, &cfg, 0).unwrap();
        assert_eq!(set.len(), 900);
        assert!(set.lambdas.iter().all(|&l| (1.0..=1.02).contains(&l)));
        set.validate(k, l).unwrap();
    }

    #[test]
    fn lambdas_are_sorted_and_reproducible() {
        let cfg = SynthesisConfig {
            per_class: 7,
            lambda_min: 1.0,
            lambda_max: 1.02,
        };
        let a = draw_lambdas(3, &cfg, 42);
        assert_eq!(a, draw_lambdas(3, &cfg, 42));
        assert_ne!(a, draw_lambdas(3, &cfg, 43));
        assert_ne!(a[0], a[1]);
        for class in &a {
            assert!(class.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn invalid_synthesis_config_is_rejected() {
        for cfg in [
            SynthesisConfig { per_class: 0, ..Default::default() },
            SynthesisConfig { lambda_min: 0.0, ..Default::default() },
            SynthesisConfig { lambda_min: 2.0, lambda_max: 1.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn augmentation_flags_partition_the_view() {
        let w = world(0.1);
        let means = compute_seen_means(&w.dataset).unwrap();
        let set = generate_prototype_set(&w.attrs, &means, &SynthesisConfig::default(), 1).unwrap();
        let view = augment_training_set(&w.dataset, &set).unwrap();
        let n = w.dataset.splits().train_seen.len();
        assert_eq!(view.len(), n + set.len());
        assert_eq!(view.num_real(), n);
        assert_eq!(view.num_synthetic(), set.len());
        assert!(view.synthetic[..n].iter().all(|s| !s));

        let empty = augment_training_set(&w.dataset, &PrototypeSet::empty(w.dataset.dim())).unwrap();
        let (real, labels) = w.dataset.split_view(Split::TrainSeen);
        assert_eq!(empty.features, real);
        assert_eq!(empty.labels, labels);
    }

    #[test]
    fn sun_sized_view_has_2520_rows() {
        // 72 unseen classes x 15 prototypes next to 1440 real rows.
        let k = 2;
        let l = 72;
        let labels = vec![0; 1440];
        let splits = Splits {
            train_seen: (0..1440).collect(),
            ..Default::default()
        };
        let d = FeatureDataset::new(Array2::zeros((1440, 4)), labels, splits, k, l).unwrap();
        let protos = PrototypeSet {
            prototypes: Array2::zeros((1080, 4)),
            labels: (0..1080).map(|i| k + i / 15).collect(),
            lambdas: vec![1.0; 1080],
        };
        let view = augment_training_set(&d, &protos).unwrap();
        assert_eq!(view.len(), 2520);
        let wrong_dim = PrototypeSet::empty(5);
        assert!(augment_training_set(&d, &wrong_dim).is_err());
    }
}
