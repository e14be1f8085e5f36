//! End-to-end runs, sweeps and their configuration.

mod config;
mod run;
mod sweep;

pub use config::{synthetic_world_params, DpsrSection, EvalSection, MsasSection, Overrides, Preset, RunConfig, SynthesisSection, TrainSection};
pub use run::{
    execute, persist, run_pipeline, ArtifactEntry, RunManifest, RunOutcome, StreamSeed, HISTORY_FILE, MODEL_DIR,
    PROTOTYPES_FILE, REPORT_CSV, REPORT_JSON, RUN_MANIFEST, SIMILARITY_FILE, STALE_MARKER,
};
pub use sweep::{run_sweep, sweep_csv, SweepAxis, SweepRow, SWEEP_HEADER};
