use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::EvalReport;

use super::config::RunConfig;
use super::run::run_pipeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PerClass,
    Beta,
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_class" | "per-class" => Ok(SweepAxis::PerClass),
            "beta" => Ok(SweepAxis::Beta),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PerClass => "per_class",
            SweepAxis::Beta => "beta",
        }
    }

    fn apply(self, cfg: &mut RunConfig, value: f64) -> Result<()> {
        match self {
            SweepAxis::PerClass => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Config(format!("per_class values must be positive integers, got {value}")));
                }
                cfg.synthesis.per_class = value as usize;
            }
            SweepAxis::Beta => cfg.train.beta = value,
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: Result<EvalReport>,
}

pub const SWEEP_HEADER: &str = "value,status,t1_czsl,acc_unseen,acc_seen,harmonic";

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut csv = format!("{}\n", SWEEP_HEADER.replacen("value", axis.name(), 1));
    for row in rows {
        match &row.outcome {
            Ok(r) => writeln!(csv, "{},ok,{}", row.value, r.csv_row()),
            Err(e) => writeln!(csv, "{},\"error: {}\",,,,", row.value, e.to_string().replace('"', "'")),
        }
        .expect("writing to a String");
    }
    csv
}

/// One pipeline run per value, all with the base seed, each writing into
/// `<out>/<axis>_<value>`. A failing row is recorded and the sweep goes on.
pub fn run_sweep(base: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let out: PathBuf = base
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory configured".into()))?;
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        cfg.out = Some(out.join(format!("{}_{value}", axis.name())));
        let outcome = axis.apply(&mut cfg, value).and_then(|_| run_pipeline(&cfg));
        rows.push(SweepRow { value, outcome });
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let path = out.join(format!("sweep_{}.csv", axis.name()));
    std::fs::write(&path, sweep_csv(axis, &rows)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{make_synthetic_world, save_bundle};
    use crate::pipeline::{synthetic_world_params, Preset};

    #[test]
    fn beta_sweep_writes_one_row_per_value_and_survives_failures() {
        let tmp = tempfile::tempdir().unwrap();
        let b = tmp.path().join("b");
        let mut p = synthetic_world_params(2);
        p.samples_per_seen_class = 8;
        let w = make_synthetic_world(&p).unwrap();
        save_bundle(&w.dataset, &w.attrs, &b).unwrap();
        let mut cfg = RunConfig {
            bundle: Some(b),
            out: Some(tmp.path().join("sweep")),
            ..Default::default()
        };
        Preset::Synthetic.apply(&mut cfg);
        cfg.train.epochs = 1;
        cfg.train.encoder_hidden = 8;
        cfg.train.scorer_hidden = 8;
        let rows = run_sweep(&cfg, SweepAxis::Beta, &[0.0, 0.2, -1.0]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].outcome.is_ok() && rows[1].outcome.is_ok() && rows[2].outcome.is_err());
        let csv = std::fs::read_to_string(tmp.path().join("sweep/sweep_beta.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(3).unwrap().contains("error"));
    }

    #[test]
    fn empty_values_and_fractional_counts_are_rejected() {
        let cfg = RunConfig::default();
        assert!(matches!(run_sweep(&cfg, SweepAxis::Beta, &[]), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        assert!(SweepAxis::PerClass.apply(&mut c, 2.5).is_err());
    }
}
