use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use zsl::datamodel::{load_bundle, make_synthetic_world, save_bundle, PrototypeSet, Split};
use zsl::dpsr::build_similarity_matrix;
use zsl::eval::{default_alignment_k, evaluate, prototype_alignment, AlignmentSummary, CSV_HEADER};
use zsl::msas::msas_rescore;
use zsl::pipeline::{run_pipeline, run_sweep, sweep_csv, synthetic_world_params, Overrides, Preset, RunConfig, SweepAxis};
use zsl::scc::{load_model, save_model, train, ModelShape, SccModel};
use zsl::synthesis::{augment_training_set, compute_seen_means, generate_prototype_set};
use zsl::zfb::{self, Precision};
use zsl::{Error, Result};

#[derive(Parser)]
#[command(name = "zsl", version, about = "Zero-shot learning with synthesized unseen-class prototypes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize unseen-class prototypes from a bundle.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output prototype file; labels and lambdas are written alongside.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the classifier on real seen features plus prototypes.
    Train {
        #[command(flatten)]
        common: Common,
        /// Prototype file from `synth`; synthesized on the fly when omitted.
        #[arg(long)]
        protos: Option<PathBuf>,
        /// Also write the similarity matrix to this file.
        #[arg(long)]
        dump_similarity: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained model on the bundle's test splits.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// JSON report path; a one-row CSV is written next to it.
        #[arg(long)]
        report: PathBuf,
        /// Prototype file, required for the alignment analysis.
        #[arg(long)]
        protos: Option<PathBuf>,
        #[arg(long)]
        alignment_k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rescore, synthesize, train and evaluate in one go.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat `run` over several values of one setting.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// `per_class` or `beta`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Write a planted synthetic benchmark bundle.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        num_seen: Option<usize>,
        #[arg(long)]
        num_unseen: Option<usize>,
        #[arg(long)]
        d_v: Option<usize>,
        #[arg(long)]
        d_a: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        concentration: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sun, awa2, cub or synthetic.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    wa: Option<f64>,
    #[arg(long)]
    th: Option<f64>,
    #[arg(long)]
    no_msas: bool,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    no_dpsr: bool,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    plain_loss: bool,
    /// Width of both hidden layers.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    alignment_k: Option<usize>,
}

impl Common {
    fn resolve(&self, out: Option<PathBuf>) -> Result<RunConfig> {
        let over = Overrides {
            preset: self.preset,
            seed: self.seed,
            bundle: self.bundle.clone(),
            out,
            wa: self.wa,
            th: self.th,
            no_msas: self.no_msas,
            per_class: self.per_class,
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            phi: self.phi,
            no_dpsr: self.no_dpsr,
            beta: self.beta,
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            plain_loss: self.plain_loss,
            hidden: self.hidden,
            alignment_k: self.alignment_k,
        };
        RunConfig::resolve(self.config.as_deref(), &over)
    }
}

fn bundle_of(cfg: &RunConfig) -> Result<&Path> {
    cfg.bundle
        .as_deref()
        .ok_or_else(|| Error::Config("--bundle is required".into()))
}

fn rescored(cfg: &RunConfig, attrs: zsl::datamodel::AttributeMatrix) -> Result<zsl::datamodel::AttributeMatrix> {
    if cfg.msas.enabled {
        msas_rescore(&attrs, &cfg.msas_config())
    } else {
        Ok(attrs)
    }
}

fn write_report(path: &Path, report: &zsl::eval::EvalReport) -> Result<()> {
    let io = |p: &Path, e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    };
    std::fs::write(path, report.to_json()).map_err(|e| io(path, e))?;
    let csv = path.with_extension("csv");
    std::fs::write(&csv, format!("{CSV_HEADER}\n{}\n", report.csv_row())).map_err(|e| io(&csv, e))
}

fn print_summary(r: &zsl::eval::EvalReport) {
    println!(
        "T1 {:.2}  U {:.2}  S {:.2}  H {:.2}",
        r.t1_czsl, r.acc_unseen, r.acc_seen, r.harmonic
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, out } => {
            let cfg = common.resolve(None)?;
            let (dataset, attrs) = load_bundle(bundle_of(&cfg)?)?;
            let attrs = rescored(&cfg, attrs)?;
            let means = compute_seen_means(&dataset)?;
            let protos = generate_prototype_set(&attrs, &means, &cfg.synthesis_config(), cfg.seed)?;
            protos.save(&out)?;
            println!("{} prototypes written to {}", protos.len(), out.display());
        }
        Command::Train {
            common,
            protos,
            dump_similarity,
            out,
        } => {
            let cfg = common.resolve(None)?;
            let (dataset, attrs) = load_bundle(bundle_of(&cfg)?)?;
            let attrs = rescored(&cfg, attrs)?;
            let protos = match protos {
                Some(path) => PrototypeSet::load(&path)?,
                None => generate_prototype_set(
                    &attrs,
                    &compute_seen_means(&dataset)?,
                    &cfg.synthesis_config(),
                    cfg.seed,
                )?,
            };
            let similarity = if cfg.dpsr.enabled && !cfg.train.plain_loss {
                Some(build_similarity_matrix(&attrs, cfg.dpsr.phi)?)
            } else {
                None
            };
            if let (Some(path), Some(sim)) = (&dump_similarity, &similarity) {
                zfb::write_matrix(path, &sim.values().to_owned(), Precision::F64)?;
            }
            let shape = ModelShape {
                d_a: attrs.dim(),
                d_v: dataset.dim(),
                encoder_hidden: cfg.train.encoder_hidden,
                scorer_hidden: cfg.train.scorer_hidden,
                num_seen: dataset.num_seen(),
                num_unseen: dataset.num_unseen(),
            };
            let set = augment_training_set(&dataset, &protos)?;
            let (model, history) = train(
                SccModel::init(shape, cfg.seed),
                &set,
                &attrs,
                similarity.as_ref(),
                &cfg.train_config(),
            )?;
            save_model(&model, &attrs, &out)?;
            println!(
                "trained on {} samples; mean loss {:.6} -> {:.6}",
                set.len(),
                history.initial_loss,
                history.final_loss()
            );
        }
        Command::Eval {
            bundle,
            model,
            report,
            protos,
            alignment_k,
            seed,
        } => {
            let (dataset, _) = load_bundle(&bundle)?;
            let (model, attrs) = load_model(&model)?;
            let echo = json!({
                "model_seed": model.seed,
                "encoder_hidden": model.shape.encoder_hidden,
                "scorer_hidden": model.shape.scorer_hidden,
            });
            let mut r = evaluate(&model, &attrs, &dataset, echo)?;
            if alignment_k.is_some() || protos.is_some() {
                let path = protos.ok_or_else(|| Error::Config("--alignment-k needs --protos".into()))?;
                let protos = PrototypeSet::load(&path)?;
                let per_unseen = protos.len() / dataset.num_unseen().max(1);
                let k = alignment_k.unwrap_or_else(|| default_alignment_k(per_unseen));
                if k == 0 {
                    return Err(Error::Config("--alignment-k must be at least 1".into()));
                }
                let (x, y) = dataset.split_view(Split::TestUnseen);
                let per_class =
                    prototype_alignment(&protos, x.view(), &y, dataset.num_seen(), dataset.num_unseen(), k, seed)?;
                let mean = per_class.iter().sum::<f64>() / per_class.len() as f64;
                r.alignment = Some(AlignmentSummary { k, per_class, mean });
            }
            write_report(&report, &r)?;
            print_summary(&r);
        }
        Command::Run { common, out } => {
            let cfg = common.resolve(out)?;
            let r = run_pipeline(&cfg)?;
            print_summary(&r);
        }
        Command::Sweep {
            common,
            out,
            axis,
            values,
        } => {
            let axis: SweepAxis = axis.parse()?;
            let cfg = common.resolve(out)?;
            let rows = run_sweep(&cfg, axis, &values)?;
            print!("{}", sweep_csv(axis, &rows));
        }
        Command::MakeSynthetic {
            out,
            seed,
            num_seen,
            num_unseen,
            d_v,
            d_a,
            samples,
            noise,
            concentration,
        } => {
            let mut p = synthetic_world_params(seed);
            p.num_seen = num_seen.unwrap_or(p.num_seen);
            p.num_unseen = num_unseen.unwrap_or(p.num_unseen);
            p.d_v = d_v.unwrap_or(p.d_v);
            p.d_a = d_a.unwrap_or(p.d_a);
            p.samples_per_seen_class = samples.unwrap_or(p.samples_per_seen_class);
            p.noise_scale = noise.unwrap_or(p.noise_scale);
            p.mixing_concentration = concentration.unwrap_or(p.mixing_concentration);
            let world = make_synthetic_world(&p)?;
            save_bundle(&world.dataset, &world.attrs, &out)?;
            println!("bundle with {} rows written to {}", world.dataset.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
