use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use provenance_core::bench::{
    binned_medians, crossover, fit_invlog_with, fit_linear, fit_poly2, generate_workload,
    gnuplot_script, iqr_filter, measure_rctp, measure_rpr, reference, rpr_grid, write_grid_csv,
    write_op_counts_csv, write_samples_csv, BenchError, BenchSample, FailedRetrieval, FitFamily,
    FitModel, FitReport, RetrievalPlan,
};
use provenance_core::relay::{RelayConfig, Strategy};

use crate::{sub_seed, usage, write_json, write_manifest, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    NovelRctp,
    LegacyRctp,
    NovelRpr,
    LegacyRpr,
    Crossover,
    Grid,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::NovelRctp => "novel_rctp",
            Experiment::LegacyRctp => "legacy_rctp",
            Experiment::NovelRpr => "novel_rpr",
            Experiment::LegacyRpr => "legacy_rpr",
            Experiment::Crossover => "crossover",
            Experiment::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchPlan {
    pub seed: u64,
    pub experiments: Vec<Experiment>,
    pub cycle_time_ms: u64,
    /// Cycles per measured series.
    pub cycles: u64,
    /// Pairs per cycle of each processing-time series.
    pub rctp_n: Vec<u64>,
    /// Pairs per cycle of the retrieval series.
    pub rpr_n: u64,
    pub delta_cs: Vec<u64>,
    pub probes_per_delta: usize,
    pub iqr: bool,
    pub invlog_step: f64,
    pub verify_bin_width: f64,
    pub crossover_n: f64,
    pub grid_lambdas: Vec<f64>,
    pub grid_t_ps: Vec<f64>,
    pub grid_m: u64,
}

impl Default for BenchPlan {
    fn default() -> Self {
        BenchPlan {
            seed: 0,
            experiments: Vec::new(),
            cycle_time_ms: 1000,
            cycles: 20,
            rctp_n: vec![25, 50, 75, 100],
            rpr_n: 50,
            delta_cs: (1..20).collect(),
            probes_per_delta: 5,
            iqr: true,
            invlog_step: 0.01,
            verify_bin_width: 5.0,
            crossover_n: 1000.0,
            grid_lambdas: vec![250.0, 375.0, 500.0, 625.0, 750.0, 875.0, 1000.0],
            grid_t_ps: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            grid_m: 10,
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> CliResult<()> {
        if self.experiments.is_empty() {
            return Err(usage("bench plan lists no experiments"));
        }
        let needs = |e: &[Experiment]| self.experiments.iter().any(|x| e.contains(x));
        if self.cycles == 0 || self.cycle_time_ms == 0 {
            return Err(usage("cycles and cycle_time_ms must be positive"));
        }
        if needs(&[Experiment::NovelRctp, Experiment::LegacyRctp])
            && (self.rctp_n.is_empty() || self.rctp_n.contains(&0))
        {
            return Err(usage("rctp_n must list positive pair counts"));
        }
        if needs(&[Experiment::NovelRpr, Experiment::LegacyRpr]) && self.rpr_n == 0 {
            return Err(usage("rpr_n must be positive"));
        }
        if needs(&[Experiment::LegacyRpr]) {
            if self.delta_cs.is_empty() || self.probes_per_delta == 0 {
                return Err(usage("legacy-rpr needs delta_cs and probes_per_delta"));
            }
            if let Some(&d) = self.delta_cs.iter().find(|&&d| d == 0 || d >= self.cycles) {
                return Err(usage(format!("delta_c {d} outside 1..{}", self.cycles)));
            }
        }
        if self.invlog_step.is_nan()
            || self.invlog_step <= 0.0
            || self.verify_bin_width.is_nan()
            || self.verify_bin_width <= 0.0
        {
            return Err(usage("invlog_step and verify_bin_width must be positive"));
        }
        if needs(&[Experiment::Grid]) && (self.grid_lambdas.is_empty() || self.grid_t_ps.is_empty())
        {
            return Err(usage("grid needs grid_lambdas and grid_t_ps"));
        }
        Ok(())
    }

    fn relay(&self, strategy: Strategy) -> RelayConfig {
        RelayConfig {
            cycle_time_ms: self.cycle_time_ms,
            cycles_per_period: self.cycles,
            strategy,
            ..RelayConfig::default()
        }
    }

    fn workload(
        &self,
        n: u64,
        stream: u64,
    ) -> Result<Vec<Vec<provenance_core::merkle::KvPair>>, BenchError> {
        let t_c = self.cycle_time_ms as f64 / 1e3;
        generate_workload(
            n as f64 / t_c,
            t_c,
            self.cycles,
            sub_seed(self.seed, stream),
        )
    }
}

/// Fit reports of one experiment: wall-clock (machine dependent) and
/// operation counts (deterministic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFits {
    pub experiment: Experiment,
    pub timing: Option<FitReport>,
    pub ops: Option<FitReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub fits: Vec<ExperimentFits>,
    pub crossover: Option<provenance_core::bench::Crossover>,
    pub failures: Vec<FailedRetrieval>,
}

fn bench_err(e: BenchError) -> CliError {
    CliError::Failed(e.to_string())
}

fn hash_ops(samples: &[BenchSample]) -> Vec<f64> {
    samples.iter().map(|s| s.hash_ops as f64).collect()
}

struct Fitter<'a> {
    plan: &'a BenchPlan,
    out: &'a Path,
}

impl Fitter<'_> {
    /// Filters and fits the wall-clock samples, writing the raw and filtered
    /// CSVs and the report under `timing/`.
    fn timing(
        &self,
        name: &str,
        samples: &[BenchSample],
        family: FitFamily,
    ) -> CliResult<FitReport> {
        let dir = self.out.join("timing");
        write_samples_csv(&dir.join(format!("{name}.csv")), samples).map_err(bench_err)?;
        let (kept, removed) = if self.plan.iqr {
            let f = iqr_filter(samples);
            (f.kept, f.removed.len())
        } else {
            (samples.to_vec(), 0)
        };
        write_samples_csv(&dir.join(format!("{name}_filtered.csv")), &kept).map_err(bench_err)?;
        let xs: Vec<f64> = kept.iter().map(|s| s.x).collect();
        let ys: Vec<f64> = kept.iter().map(|s| s.y_ms).collect();
        let model = self.fit(family, &xs, &ys)?;
        let report = FitReport::new(&model, kept.len(), removed);
        write_json(&dir.join(format!("{name}_fit.json")), &report)?;
        Ok(report)
    }

    /// Op counts have no noise, so no filtering.
    fn ops(&self, name: &str, samples: &[BenchSample], ys: &[f64]) -> CliResult<FitReport> {
        let dir = self.out.join("ops");
        write_op_counts_csv(&dir.join(format!("{name}.csv")), samples).map_err(bench_err)?;
        let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
        let ys = ys.to_vec();
        let model = fit_linear(&xs, &ys).map_err(bench_err)?;
        let report = FitReport::new(&model, samples.len(), 0);
        write_json(&dir.join(format!("{name}_fit.json")), &report)?;
        Ok(report)
    }

    fn fit(&self, family: FitFamily, xs: &[f64], ys: &[f64]) -> CliResult<FitModel> {
        match family {
            FitFamily::Poly2 => fit_poly2(xs, ys),
            FitFamily::Invlog => fit_invlog_with(xs, ys, self.plan.invlog_step),
            FitFamily::Linear => fit_linear(xs, ys),
        }
        .map_err(bench_err)
    }
}

/// Runs every experiment of the plan. Wall-clock outputs go to `timing/`,
/// operation counts and model outputs elsewhere so they can be compared
/// byte for byte between runs.
pub fn run(plan: &BenchPlan, out: &Path) -> CliResult<BenchOutcome> {
    plan.validate()?;
    fs::create_dir_all(out.join("timing"))?;
    fs::create_dir_all(out.join("ops"))?;
    write_manifest(out, "bench", plan.seed, plan)?;
    let fitter = Fitter { plan, out };

    let mut outcome = BenchOutcome {
        fits: Vec::new(),
        crossover: None,
        failures: Vec::new(),
    };
    for &experiment in &plan.experiments {
        let name = experiment.name();
        let (timing, ops) = match experiment {
            Experiment::NovelRctp | Experiment::LegacyRctp => {
                let strategy = if experiment == Experiment::NovelRctp {
                    Strategy::Novel
                } else {
                    Strategy::Legacy
                };
                let mut all = Vec::new();
                let mut ops_per_pair = Vec::new();
                for (i, &n) in plan.rctp_n.iter().enumerate() {
                    let workload = plan.workload(n, 10 + i as u64).map_err(usage)?;
                    let mut series =
                        measure_rctp(&plan.relay(strategy), &workload).map_err(bench_err)?;
                    if strategy == Strategy::Legacy {
                        // Per-pair processing time against pairs per cycle.
                        for s in &mut series {
                            s.y_ms /= s.x;
                        }
                    }
                    ops_per_pair.extend(series.iter().map(|s| s.hash_ops as f64 / n as f64));
                    write_samples_csv(
                        &out.join("timing").join(format!("{name}_n{n}.csv")),
                        &series,
                    )
                    .map_err(bench_err)?;
                    all.extend(series);
                }
                let family = match strategy {
                    Strategy::Novel => FitFamily::Poly2,
                    Strategy::Legacy => FitFamily::Invlog,
                };
                let timing = fitter.timing(name, &all, family)?;
                // Hashes per inserted pair against trie size: flat for a
                // fixed-depth trie.
                let ops = fitter.ops(name, &all, &ops_per_pair)?;
                (Some(timing), Some(ops))
            }
            Experiment::NovelRpr => {
                let workload = plan.workload(plan.rpr_n, 20).map_err(usage)?;
                let run = measure_rpr(
                    &plan.relay(Strategy::Novel),
                    &workload,
                    &RetrievalPlan::SameCycle,
                )
                .map_err(bench_err)?;
                outcome.failures.extend(run.failures);
                let timing = fitter.timing(name, &run.samples, FitFamily::Linear)?;
                let ops = fitter.ops(name, &run.samples, &hash_ops(&run.samples))?;
                (Some(timing), Some(ops))
            }
            Experiment::LegacyRpr => {
                let workload = plan.workload(plan.rpr_n, 21).map_err(usage)?;
                let retrieval = RetrievalPlan::DeltaGrid {
                    delta_cs: plan.delta_cs.clone(),
                    probes_per_delta: plan.probes_per_delta,
                };
                let run = measure_rpr(&plan.relay(Strategy::Legacy), &workload, &retrieval)
                    .map_err(bench_err)?;
                outcome.failures.extend(run.failures);
                let timing = fitter.timing(name, &run.samples, FitFamily::Linear)?;
                write_samples_csv(
                    &out.join("timing").join("legacy_verify.csv"),
                    &run.verify_samples,
                )
                .map_err(bench_err)?;
                let medians = binned_medians(&run.verify_samples, plan.verify_bin_width);
                write_json(
                    &out.join("timing").join("legacy_verify_binned.json"),
                    &medians,
                )?;
                let ops = fitter.ops(name, &run.samples, &hash_ops(&run.samples))?;
                (Some(timing), Some(ops))
            }
            Experiment::Crossover => {
                let c = crossover(
                    &reference::legacy_rpr(),
                    &reference::novel_rpr(),
                    plan.crossover_n,
                )
                .map_err(bench_err)?;
                write_json(&out.join("crossover.json"), &c)?;
                outcome.crossover = Some(c);
                (None, None)
            }
            Experiment::Grid => {
                let grid = rpr_grid(
                    &plan.grid_lambdas,
                    &plan.grid_t_ps,
                    plan.grid_m,
                    &reference::novel_rpr(),
                )
                .map_err(bench_err)?;
                write_grid_csv(&out.join("grid.csv"), &grid).map_err(bench_err)?;
                fs::write(
                    out.join("grid.gp"),
                    gnuplot_script("grid.csv", "Predicted retrieval time"),
                )?;
                (None, None)
            }
        };
        if timing.is_some() || ops.is_some() {
            outcome.fits.push(ExperimentFits {
                experiment,
                timing,
                ops,
            });
        }
    }
    if !outcome.failures.is_empty() {
        write_json(&out.join("failures.json"), &outcome.failures)?;
        return Err(CliError::Failed(format!(
            "{} proof retrievals failed",
            outcome.failures.len()
        )));
    }
    Ok(outcome)
}
