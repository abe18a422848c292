use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use provenance_core::bench::{
    fit_invlog_with, fit_linear, fit_poly2, iqr_filter, read_samples_csv, write_samples_csv,
    FitFamily, FitReport,
};

use crate::{usage, write_json, write_manifest, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub seed: u64,
    /// Sample CSV (`cycle,x,y_ms,kind`); relative paths resolve against
    /// the working directory.
    pub input: Option<PathBuf>,
    pub family: FitFamily,
    pub iqr: bool,
    /// Fit `y / x` instead of `y`.
    pub per_pair: bool,
    pub invlog_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            seed: 0,
            input: None,
            family: FitFamily::Linear,
            iqr: true,
            per_pair: false,
            invlog_step: 0.01,
        }
    }
}

/// Refits a sample CSV and writes `fit_report.json` and `filtered.csv`.
pub fn run(config: &FitConfig, out: &Path) -> CliResult<FitReport> {
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| usage("fit needs an input sample CSV"))?;
    if config.invlog_step.is_nan() || config.invlog_step <= 0.0 {
        return Err(usage("invlog_step must be positive"));
    }
    let mut samples = read_samples_csv(input)
        .map_err(|e| usage(format!("cannot read {}: {e}", input.display())))?;
    fs::create_dir_all(out)?;
    write_manifest(out, "fit", config.seed, config)?;
    if config.per_pair {
        for s in &mut samples {
            s.y_ms /= s.x;
        }
    }
    let (kept, removed) = if config.iqr {
        let f = iqr_filter(&samples);
        (f.kept, f.removed.len())
    } else {
        (samples, 0)
    };
    write_samples_csv(&out.join("filtered.csv"), &kept)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let xs: Vec<f64> = kept.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = kept.iter().map(|s| s.y_ms).collect();
    let model = match config.family {
        FitFamily::Poly2 => fit_poly2(&xs, &ys),
        FitFamily::Invlog => fit_invlog_with(&xs, &ys, config.invlog_step),
        FitFamily::Linear => fit_linear(&xs, &ys),
    }
    .map_err(|e| CliError::Failed(e.to_string()))?;
    let report = FitReport::new(&model, kept.len(), removed);
    write_json(&out.join("fit_report.json"), &report)?;
    Ok(report)
}
