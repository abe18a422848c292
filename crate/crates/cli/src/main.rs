use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use provenance_cli::{
    bench_cmd, fit_cmd, ledger_sim, load_config, relay_sim, usage, verify, CliError, CliResult,
};
use provenance_core::merkle::Digest;
use provenance_core::relay::Strategy;

#[derive(Parser)]
#[command(
    name = "provenance",
    version,
    about = "Merkle-trie relay, root ledger and benchmark runs"
)]
struct Cli {
    /// TOML config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's relay strategy (legacy or novel).
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relay plus simulated ledger, end to end.
    RelaySim,
    /// Commit-latency sweep and a fault run with safety checks.
    LedgerSim,
    /// Runs the experiments listed in a bench plan.
    Bench,
    /// Filters and fits a sample CSV.
    Fit {
        /// Overrides the config's input.
        input: Option<PathBuf>,
    },
    /// Checks a proof or proof bundle file.
    VerifyProof {
        proof: PathBuf,
        /// Root to check a single proof against; defaults to the proof's own.
        #[arg(long)]
        root: Option<String>,
        /// Roots CSV for bundles.
        #[arg(long)]
        roots: Option<PathBuf>,
    },
    /// Checks block files.
    VerifyChain {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Serves relay requests from stdin, one JSON object per line.
    RelayServe,
    /// Answers root queries from stdin against a block file.
    LedgerQuery { file: PathBuf },
}

fn seeded<T>(mut config: T, seed: Option<u64>, set: impl FnOnce(&mut T, u64)) -> T {
    if let Some(s) = seed {
        set(&mut config, s);
    }
    config
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = cli.config.as_deref();
    let out: &Path = &cli.out;
    match cli.command {
        Command::RelaySim => {
            let mut config: relay_sim::RelaySimConfig =
                seeded(load_config(cfg)?, cli.seed, |c, s| c.seed = s);
            if let Some(s) = cli.strategy {
                config.strategy = s;
            }
            let outcome = relay_sim::run(&config, out)?;
            println!(
                "{} roots, {}/{} bundles verified",
                outcome.roots.len(),
                outcome.pop.verified,
                outcome.pop.requested
            );
            if !outcome.passed() {
                return Err(CliError::Failed(outcome.problems.join("\n")));
            }
        }
        Command::LedgerSim => {
            let config: ledger_sim::LedgerSimConfig =
                seeded(load_config(cfg)?, cli.seed, |c, s| c.seed = s);
            let outcome = ledger_sim::run(&config, out)?;
            for row in &outcome.sweep {
                println!(
                    "nodes {}: {}/{} committed, mean {:.2} ticks, p99 {} ticks",
                    row.node_count,
                    row.committed,
                    row.proposals,
                    row.mean_commit_ticks,
                    row.p99_commit_ticks
                );
            }
            let f = &outcome.fault_run;
            println!(
                "fault run: {}/{} committed, safety {}",
                f.committed,
                f.proposals,
                if f.safety.is_safe() { "ok" } else { "violated" }
            );
            if !f.pass {
                return Err(CliError::Failed(
                    "fault run failed; see safety_report.json".into(),
                ));
            }
        }
        Command::Bench => {
            let plan: bench_cmd::BenchPlan = seeded(load_config(cfg)?, cli.seed, |c, s| c.seed = s);
            let outcome = bench_cmd::run(&plan, out)?;
            for f in &outcome.fits {
                if let Some(ops) = &f.ops {
                    println!("{:?}: op-count fit {:?}", f.experiment, ops.coefficients);
                }
            }
            if let Some(c) = &outcome.crossover {
                println!("crossover at delta_c {:.4} for n = {}", c.delta_c_star, c.n);
            }
        }
        Command::Fit { input } => {
            let mut config: fit_cmd::FitConfig =
                seeded(load_config(cfg)?, cli.seed, |c, s| c.seed = s);
            if input.is_some() {
                config.input = input;
            }
            let report = fit_cmd::run(&config, out)?;
            println!(
                "{:?} fit {:?}, rms {}",
                report.family, report.coefficients, report.rms_residual
            );
        }
        Command::VerifyProof { proof, root, roots } => {
            let root = root
                .map(|r| Digest::from_hex(&r).map_err(|e| usage(format!("--root: {e}"))))
                .transpose()?;
            println!(
                "{}",
                verify::verify_proof_file(&proof, root, roots.as_deref())?
            );
        }
        Command::VerifyChain { files } => {
            for line in verify::verify_chain_files(&files)? {
                println!("{line}");
            }
        }
        Command::RelayServe => {
            let mut config: verify::ServeConfig = load_config(cfg)?;
            if let Some(s) = cli.strategy {
                config.strategy = s;
            }
            verify::relay_serve(&config, io::stdin().lock(), io::stdout().lock())?;
        }
        Command::LedgerQuery { file } => {
            verify::ledger_query(&file, io::stdin().lock(), io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
