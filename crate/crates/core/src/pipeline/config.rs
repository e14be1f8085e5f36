//! Run configuration: built-in defaults, an optional dataset preset, an
//! optional TOML file and command-line overrides, applied in that order.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::WorldParams;
use crate::dpsr::DEFAULT_PHI;
use crate::error::{Error, Result};
use crate::msas::MsasConfig;
use crate::scc::{TrainConfig, DEFAULT_HIDDEN};
use crate::synthesis::SynthesisConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Sun,
    Awa2,
    Cub,
    Synthetic,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sun" => Ok(Preset::Sun),
            "awa2" => Ok(Preset::Awa2),
            "cub" => Ok(Preset::Cub),
            "synthetic" => Ok(Preset::Synthetic),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

impl Preset {
    /// `(W_A, T_h, prototypes per class)`.
    pub fn settings(self) -> (f64, f64, usize) {
        match self {
            Preset::Sun => (0.005, 0.7, 15),
            Preset::Awa2 => (0.08, 0.8, 90),
            Preset::Cub => (0.3, 0.7, 10),
            Preset::Synthetic => (1.0, 1.0, 5),
        }
    }

    pub fn apply(self, cfg: &mut RunConfig) {
        let (weight, threshold, per_class) = self.settings();
        cfg.msas.weight = weight;
        cfg.msas.threshold = threshold;
        cfg.synthesis.per_class = per_class;
        let (lambda_min, lambda_max) = match self {
            Preset::Synthetic => (0.01, 0.0102),
            _ => (1.0, 1.02),
        };
        cfg.synthesis.lambda_min = lambda_min;
        cfg.synthesis.lambda_max = lambda_max;
    }
}

/// The planted benchmark world used by the synthetic preset.
pub fn synthetic_world_params(seed: u64) -> WorldParams {
    WorldParams {
        seed,
        num_seen: 8,
        num_unseen: 4,
        d_v: 32,
        d_a: 16,
        samples_per_seen_class: 100,
        noise_scale: 0.15,
        mixing_concentration: 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsasSection {
    pub enabled: bool,
    pub weight: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    pub per_class: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpsrSection {
    pub enabled: bool,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plain_loss: bool,
    pub encoder_hidden: usize,
    pub scorer_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub alignment: bool,
    pub alignment_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Option<Preset>,
    pub bundle: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub msas: MsasSection,
    pub synthesis: SynthesisSection,
    pub dpsr: DpsrSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for MsasSection {
    fn default() -> Self {
        Self {
            enabled: true,
            weight: 1.0,
            threshold: 1.0,
        }
    }
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let s = SynthesisConfig::default();
        Self {
            per_class: s.per_class,
            lambda_min: s.lambda_min,
            lambda_max: s.lambda_max,
        }
    }
}

impl Default for DpsrSection {
    fn default() -> Self {
        Self {
            enabled: true,
            phi: DEFAULT_PHI,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            beta: t.beta,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            plain_loss: t.plain_loss_mode,
            encoder_hidden: DEFAULT_HIDDEN,
            scorer_hidden: DEFAULT_HIDDEN,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            preset: None,
            bundle: None,
            out: None,
            msas: MsasSection::default(),
            synthesis: SynthesisSection::default(),
            dpsr: DpsrSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub bundle: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub wa: Option<f64>,
    pub th: Option<f64>,
    pub no_msas: bool,
    pub per_class: Option<usize>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub phi: Option<f64>,
    pub no_dpsr: bool,
    pub beta: Option<f64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub plain_loss: bool,
    pub hidden: Option<usize>,
    pub alignment_k: Option<usize>,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) if existing.is_table() && v.is_table() => merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl RunConfig {
    /// Parses TOML text. Keys absent from the text keep their default or,
    /// when a `preset` is named, the preset's value.
    pub fn from_toml_str(text: &str, preset_override: Option<Preset>) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        let mut file = toml::Value::Table(file);
        let preset = match (preset_override, file.get("preset")) {
            (Some(p), _) => Some(p),
            (None, Some(v)) => Some(
                v.as_str()
                    .ok_or_else(|| Error::Config("preset must be a string".into()))?
                    .parse()?,
            ),
            (None, None) => None,
        };
        let mut base = RunConfig::default();
        if let Some(p) = preset {
            p.apply(&mut base);
            base.preset = Some(p);
        }
        let mut merged = toml::Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(t) = file.as_table_mut() {
            t.remove("preset");
        }
        merge(&mut merged, file);
        merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))
    }

    pub fn from_file(path: &Path, preset_override: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml_str(&text, preset_override)?;
        for p in [&mut cfg.bundle, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Defaults, then the optional file, then `over`.
    pub fn resolve(file: Option<&Path>, over: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => Self::from_file(path, over.preset)?,
            None => {
                let mut cfg = RunConfig::default();
                if let Some(p) = over.preset {
                    p.apply(&mut cfg);
                    cfg.preset = Some(p);
                }
                cfg
            }
        };
        cfg.apply_overrides(over);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        set(&mut self.seed, &o.seed);
        if o.bundle.is_some() {
            self.bundle = o.bundle.clone();
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        set(&mut self.msas.weight, &o.wa);
        set(&mut self.msas.threshold, &o.th);
        self.msas.enabled &= !o.no_msas;
        set(&mut self.synthesis.per_class, &o.per_class);
        set(&mut self.synthesis.lambda_min, &o.lambda_min);
        set(&mut self.synthesis.lambda_max, &o.lambda_max);
        set(&mut self.dpsr.phi, &o.phi);
        self.dpsr.enabled &= !o.no_dpsr;
        set(&mut self.train.beta, &o.beta);
        set(&mut self.train.learning_rate, &o.lr);
        set(&mut self.train.epochs, &o.epochs);
        set(&mut self.train.batch_size, &o.batch);
        self.train.plain_loss |= o.plain_loss;
        set(&mut self.train.encoder_hidden, &o.hidden);
        set(&mut self.train.scorer_hidden, &o.hidden);
        if o.alignment_k.is_some() {
            self.eval.alignment = true;
            self.eval.alignment_k = o.alignment_k;
        }
    }

    pub fn msas_config(&self) -> MsasConfig {
        MsasConfig {
            weight: self.msas.weight,
            threshold: self.msas.threshold,
        }
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        SynthesisConfig {
            per_class: self.synthesis.per_class,
            lambda_min: self.synthesis.lambda_min,
            lambda_max: self.synthesis.lambda_max,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            beta: self.train.beta,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.seed,
            dpsr_enabled: self.dpsr.enabled,
            plain_loss_mode: self.train.plain_loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.msas.enabled {
            self.msas_config().validate()?;
        }
        self.synthesis_config().validate()?;
        self.train_config().validate()?;
        if !(self.dpsr.phi > 0.0 && self.dpsr.phi.is_finite()) {
            return Err(Error::Config(format!("phi must be positive, got {}", self.dpsr.phi)));
        }
        if self.train.encoder_hidden == 0 || self.train.scorer_hidden == 0 {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if self.eval.alignment_k == Some(0) {
            return Err(Error::Config("alignment k must be at least 1".into()));
        }
        if let Some(b) = &self.bundle {
            if !b.is_dir() {
                return Err(Error::Config(format!("bundle directory {} does not exist", b.display())));
            }
        }
        Ok(())
    }

    /// Resolved settings without filesystem paths; echoed into reports and
    /// hashed into the run manifest.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("bundle");
            m.remove("out");
        }
        v
    }
}
