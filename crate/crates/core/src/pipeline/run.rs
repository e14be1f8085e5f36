use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datamodel::{load_bundle, sha256_hex, AttributeMatrix, FeatureDataset, PrototypeSet, Split};
use crate::dpsr::{build_similarity_matrix, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::eval::{default_alignment_k, evaluate, prototype_alignment, AlignmentSummary, EvalReport, CSV_HEADER};
use crate::msas::msas_rescore;
use crate::rng;
use crate::scc::{save_model, train, ModelShape, SccModel, TrainHistory};
use crate::synthesis::{augment_training_set, compute_seen_means, generate_prototype_set};
use crate::zfb::{self, Precision};

use super::config::RunConfig;

pub const PROTOTYPES_FILE: &str = "prototypes.zfb";
pub const SIMILARITY_FILE: &str = "similarity.zfb";
pub const MODEL_DIR: &str = "model";
pub const HISTORY_FILE: &str = "history.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const STALE_MARKER: &str = "STALE";

/// Everything a pipeline run produces, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub attrs: AttributeMatrix,
    pub prototypes: PrototypeSet,
    pub similarity: Option<SimilarityMatrix>,
    pub model: SccModel,
    pub history: TrainHistory,
    pub report: EvalReport,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::stage(name, e))
}

/// Rescore, synthesize, build masks, train and evaluate on in-memory data.
pub fn execute(cfg: &RunConfig, dataset: &FeatureDataset, raw_attrs: &AttributeMatrix) -> Result<RunOutcome> {
    cfg.validate()?;
    let attrs = if cfg.msas.enabled {
        stage("msas", msas_rescore(raw_attrs, &cfg.msas_config()))?
    } else {
        raw_attrs.clone()
    };
    let prototypes = stage(
        "synthesis",
        compute_seen_means(dataset)
            .and_then(|means| generate_prototype_set(&attrs, &means, &cfg.synthesis_config(), cfg.seed)),
    )?;
    let similarity = if cfg.dpsr.enabled && !cfg.train.plain_loss {
        Some(stage("dpsr", build_similarity_matrix(&attrs, cfg.dpsr.phi))?)
    } else {
        None
    };
    let shape = ModelShape {
        d_a: attrs.dim(),
        d_v: dataset.dim(),
        encoder_hidden: cfg.train.encoder_hidden,
        scorer_hidden: cfg.train.scorer_hidden,
        num_seen: dataset.num_seen(),
        num_unseen: dataset.num_unseen(),
    };
    let (model, history) = stage(
        "train",
        augment_training_set(dataset, &prototypes).and_then(|set| {
            train(SccModel::init(shape, cfg.seed), &set, &attrs, similarity.as_ref(), &cfg.train_config())
        }),
    )?;
    let mut report = stage("eval", evaluate(&model, &attrs, dataset, cfg.echo()))?;
    if cfg.eval.alignment {
        let k = cfg
            .eval
            .alignment_k
            .unwrap_or_else(|| default_alignment_k(cfg.synthesis.per_class));
        let (features, labels) = dataset.split_view(Split::TestUnseen);
        let per_class = stage(
            "alignment",
            prototype_alignment(
                &prototypes,
                features.view(),
                &labels,
                dataset.num_seen(),
                dataset.num_unseen(),
                k,
                cfg.seed,
            ),
        )?;
        let mean = per_class.iter().sum::<f64>() / per_class.len() as f64;
        report.alignment = Some(AlignmentSummary { k, per_class, mean });
    }
    Ok(RunOutcome {
        attrs,
        prototypes,
        similarity,
        model,
        history,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSeed {
    pub name: String,
    pub seed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub config: serde_json::Value,
    pub root_seed: u64,
    pub streams: Vec<StreamSeed>,
    pub msas_enabled: bool,
    pub dpsr_enabled: bool,
    pub plain_loss_mode: bool,
    pub bundle_checksums: Vec<ArtifactEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

fn file_entry(root: &Path, path: &Path) -> Result<ArtifactEntry> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let rel = path.strip_prefix(root).unwrap_or(path);
    Ok(ArtifactEntry {
        path: rel.to_string_lossy().replace('\\', "/"),
        sha256: sha256_hex(&bytes),
    })
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            out.extend(list_files(&p)?);
        } else {
            out.push(p);
        }
    }
    Ok(out)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes every artifact of `outcome` under `out`, then the run manifest
/// listing all of them with checksums.
pub fn persist(cfg: &RunConfig, outcome: &RunOutcome, bundle: Option<&Path>, out: &Path) -> Result<RunManifest> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let protos = out.join(PROTOTYPES_FILE);
    outcome.prototypes.save(&protos)?;
    written.extend([
        protos.clone(),
        crate::datamodel::sidecar(&protos, "labels"),
        crate::datamodel::sidecar(&protos, "lambdas"),
    ]);
    if let Some(sim) = &outcome.similarity {
        let path = out.join(SIMILARITY_FILE);
        zfb::write_matrix(&path, &sim.values().to_owned(), Precision::F64)?;
        written.push(path);
    }
    let model_dir = out.join(MODEL_DIR);
    save_model(&outcome.model, &outcome.attrs, &model_dir)?;
    written.extend(list_files(&model_dir)?);
    let history = out.join(HISTORY_FILE);
    write(&history, &serde_json::to_vec_pretty(&outcome.history).expect("history serializes"))?;
    let report_json = out.join(REPORT_JSON);
    write(&report_json, outcome.report.to_json().as_bytes())?;
    let report_csv = out.join(REPORT_CSV);
    write(&report_csv, format!("{CSV_HEADER}\n{}\n", outcome.report.csv_row()).as_bytes())?;
    written.extend([history, report_json, report_csv]);

    let config = cfg.echo();
    let canonical = serde_json::to_vec(&config).expect("config serializes");
    let bundle_checksums = match bundle {
        Some(dir) => list_files(dir)?
            .iter()
            .map(|p| file_entry(dir, p))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let manifest = RunManifest {
        config_hash: sha256_hex(&canonical),
        config,
        root_seed: cfg.seed,
        streams: [rng::STREAM_INIT, rng::STREAM_SHUFFLE, rng::STREAM_LAMBDA]
            .iter()
            .map(|name| StreamSeed {
                name: name.to_string(),
                seed: hex::encode(rng::substream_seed(cfg.seed, name)),
            })
            .collect(),
        msas_enabled: cfg.msas.enabled,
        dpsr_enabled: outcome.similarity.is_some(),
        plain_loss_mode: cfg.train.plain_loss,
        bundle_checksums,
        artifacts: written.iter().map(|p| file_entry(out, p)).collect::<Result<_>>()?,
    };
    write(
        &out.join(RUN_MANIFEST),
        &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

/// Full run against the configured bundle, with artifacts under the
/// configured output directory.
///
/// A `STALE` marker is written before any artifact and removed only once
/// the manifest is complete; on failure it records the error.
pub fn run_pipeline(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let bundle = cfg
        .bundle
        .as_deref()
        .ok_or_else(|| Error::Config("no bundle directory configured".into()))?;
    let out = cfg
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("no output directory configured".into()))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let marker = out.join(STALE_MARKER);
    write(&marker, b"run in progress\n")?;
    let result = stage("load", load_bundle(bundle))
        .and_then(|(dataset, attrs)| execute(cfg, &dataset, &attrs))
        .and_then(|outcome| {
            stage("persist", persist(cfg, &outcome, Some(bundle), out))?;
            Ok(outcome.report)
        });
    match result {
        Ok(report) => {
            fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
            Ok(report)
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}
