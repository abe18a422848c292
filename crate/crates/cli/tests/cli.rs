use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use provenance_cli::bench_cmd::{BenchPlan, Experiment};
use provenance_cli::fit_cmd::FitConfig;
use provenance_cli::ledger_sim::LedgerSimConfig;
use provenance_cli::relay_sim::{self, RelaySimConfig};
use provenance_cli::{bench_cmd, fit_cmd, ledger_sim, CliError};
use provenance_core::bench::{write_samples_csv, BenchSample, FitFamily, FitReport, SampleKind};
use provenance_core::ledger::load_block_file;
use provenance_core::relay::Strategy;

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_provenance"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn small_relay(strategy: Strategy) -> RelaySimConfig {
    RelaySimConfig {
        seed: 5,
        strategy,
        cycle_time_ms: 1000,
        cycles_per_period: 3,
        lambda: 5.0,
        ..RelaySimConfig::default()
    }
}

#[test]
fn novel_three_cycles_give_three_blocks_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = relay_sim::run(&small_relay(Strategy::Novel), dir.path()).unwrap();
    assert!(outcome.passed(), "{:?}", outcome.problems);
    assert_eq!(outcome.roots.len(), 3);
    assert!(outcome.roots.iter().all(|r| r.n_in_cycle == 5));
    for id in 0..3 {
        let blocks = load_block_file(dir.path().join(format!("blocks/node-{id}.jsonl"))).unwrap();
        assert_eq!(blocks.len(), 4, "genesis plus three roots");
    }
    assert_eq!(outcome.pop.requested, 15);
    assert_eq!(outcome.pop.verified, 15);
    assert!(outcome.pop.bundles.iter().all(|b| b.exclusions <= 1));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn legacy_bundles_grow_with_cycle_difference() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = relay_sim::run(&small_relay(Strategy::Legacy), dir.path()).unwrap();
    assert!(outcome.passed(), "{:?}", outcome.problems);
    let by_cycle = |c: u64| {
        let b = outcome
            .pop
            .bundles
            .iter()
            .find(|b| b.current_cycle == c)
            .unwrap();
        (b.delta_c, b.exclusions, b.hash_cost)
    };
    assert_eq!(by_cycle(0), (1, 0, 256));
    assert_eq!(by_cycle(1), (1, 0, 256));
    assert_eq!(by_cycle(2), (2, 1, 512));
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["relay-sim", "ledger-sim", "bench", "fit"] {
        let out = bin(&["--config", "absent.toml", cmd], dir.path());
        assert_eq!(out.status.code(), Some(2), "{cmd}");
    }
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "seed = 1\ncycle_tme_ms = 5\n").unwrap();
    let out = bin(&["--config", "c.toml", "relay-sim"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn even_node_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "node_counts = [3, 4]\n").unwrap();
    let out = bin(&["--config", "c.toml", "ledger-sim"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = ledger_sim::run(
        &LedgerSimConfig {
            node_counts: vec![2],
            ..LedgerSimConfig::default()
        },
        dir.path(),
    )
    .unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
}

#[test]
fn empty_plan_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["bench"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("p.toml"), "experiments = []\n").unwrap();
    let out = bin(&["--config", "p.toml", "bench"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn crossover_plan_reports_reference_value() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("p.toml"),
        "experiments = [\"crossover\"]\ncrossover_n = 1000.0\n",
    )
    .unwrap();
    let out = bin(&["--config", "p.toml", "--out", "o", "bench"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/crossover.json")).unwrap())
            .unwrap();
    let star = report["delta_c_star"].as_f64().unwrap();
    assert!((star - 183.18).abs() < 0.01, "{star}");
}

#[test]
fn novel_rctp_plan_gives_four_series_and_combined_fit() {
    let dir = tempfile::tempdir().unwrap();
    let plan = BenchPlan {
        experiments: vec![Experiment::NovelRctp],
        cycles: 5,
        ..BenchPlan::default()
    };
    let outcome = bench_cmd::run(&plan, dir.path()).unwrap();
    for n in [25, 50, 75, 100] {
        let series = dir.path().join(format!("timing/novel_rctp_n{n}.csv"));
        assert_eq!(fs::read_to_string(series).unwrap().lines().count(), 6);
    }
    let fit: FitReport = serde_json::from_str(
        &fs::read_to_string(dir.path().join("timing/novel_rctp_fit.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(fit.family, FitFamily::Poly2);
    assert_eq!(fit.n_samples + fit.n_outliers_removed, 20);
    let ops = outcome.fits[0].ops.as_ref().unwrap();
    assert_eq!(ops.coefficients, vec![257.0, 0.0]);
}

#[test]
fn grid_plan_writes_csv_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let plan = BenchPlan {
        experiments: vec![Experiment::Grid],
        grid_lambdas: vec![250.0, 1000.0],
        grid_t_ps: vec![10.0, 20.0, 30.0],
        ..BenchPlan::default()
    };
    bench_cmd::run(&plan, dir.path()).unwrap();
    let grid = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("lambda,T_p,R_pr_ms"));
    assert_eq!(grid.lines().count(), 7);
    assert!(fs::read_to_string(dir.path().join("grid.gp"))
        .unwrap()
        .contains("grid.csv"));
}

#[test]
fn ledger_sweep_is_reproducible_and_survives_leader_isolation() {
    let config = LedgerSimConfig {
        seed: 9,
        proposals_per_point: 20,
        safety_node_count: Some(5),
        isolate_leader_at: Some(40),
        isolate_for: 120,
        ..LedgerSimConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = ledger_sim::run(&config, a.path()).unwrap();
    ledger_sim::run(&config, b.path()).unwrap();
    for f in ["sweep.csv", "safety_report.json", "blocks/node-0.jsonl"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let counts: Vec<u32> = ra.sweep.iter().map(|r| r.node_count).collect();
    assert_eq!(counts, vec![1, 3, 5, 7]);
    let f = &ra.fault_run;
    assert!(f.isolated_leader.is_some());
    assert!(f.pass, "{f:?}");
    assert!(f.liveness_after_faults);
    assert!(f.safety.terms_with_leader >= 2, "a new leader takes over");
}

#[test]
fn fit_command_refits_sample_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut samples: Vec<BenchSample> = (1..=20)
        .map(|i| BenchSample {
            cycle: i,
            x: i as f64,
            y_ms: 3.0 + 0.5 * i as f64,
            kind: SampleKind::Rpr,
            hash_ops: 0,
        })
        .collect();
    samples[7].y_ms = 500.0;
    let input = dir.path().join("s.csv");
    write_samples_csv(&input, &samples).unwrap();
    let report = fit_cmd::run(
        &FitConfig {
            input: Some(input),
            ..FitConfig::default()
        },
        &dir.path().join("o"),
    )
    .unwrap();
    assert_eq!(report.n_outliers_removed, 1);
    assert!((report.coefficients[0] - 3.0).abs() < 1e-9);
    assert!((report.coefficients[1] - 0.5).abs() < 1e-9);
    assert!(dir.path().join("o/filtered.csv").exists());
    assert!(dir.path().join("o/fit_report.json").exists());
}

#[test]
fn verify_commands_use_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["--out", "r", "--seed", "3", "relay-sim"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ok = bin(
        &["verify-proof", "r/pops.jsonl", "--roots", "r/roots.csv"],
        dir.path(),
    );
    assert_eq!(ok.status.code(), Some(0));
    let no_roots = bin(&["verify-proof", "r/pops.jsonl"], dir.path());
    assert_eq!(no_roots.status.code(), Some(2));

    let first = fs::read_to_string(dir.path().join("r/pops.jsonl")).unwrap();
    let mut pop: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    let inclusion = pop["inclusion"].clone();
    fs::write(dir.path().join("single.json"), inclusion.to_string()).unwrap();
    assert_eq!(
        bin(&["verify-proof", "single.json"], dir.path())
            .status
            .code(),
        Some(0)
    );
    let wrong_root = "00".repeat(32);
    let out = bin(
        &["verify-proof", "single.json", "--root", &wrong_root],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    pop["inclusion"]["value"] = serde_json::json!("00");
    fs::write(dir.path().join("bad.json"), pop.to_string()).unwrap();
    let out = bin(
        &["verify-proof", "bad.json", "--roots", "r/roots.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));

    let chain = bin(
        &[
            "verify-chain",
            "r/blocks/node-0.jsonl",
            "r/blocks/node-1.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(chain.status.code(), Some(0));
    let path = dir.path().join("r/blocks/node-1.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut block: serde_json::Value = serde_json::from_str(&lines[4]).unwrap();
    block["timestamp"] = serde_json::json!(block["timestamp"].as_u64().unwrap() + 1);
    lines[4] = block.to_string();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let chain = bin(&["verify-chain", "r/blocks/node-1.jsonl"], dir.path());
    assert_eq!(chain.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&chain.stderr).contains("invalid at block 4"));
}

#[test]
fn ledger_query_answers_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = relay_sim::run(&small_relay(Strategy::Novel), dir.path()).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_provenance"))
        .args(["ledger-query", "blocks/node-2.jsonl"])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let input = format!(
        "{{\"root\":\"{}\"}}\n{{\"root\":\"{}\"}}\n",
        outcome.roots[2].root,
        "11".repeat(32)
    );
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], r#"{"found":true,"block_index":3}"#);
    assert_eq!(lines[1], r#"{"found":false,"block_index":null}"#);
}

#[test]
fn relay_serve_handles_submit_and_roots() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), "cycle_time_ms = 50\n").unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_provenance"))
        .args(["--config", "s.toml", "relay-serve"])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    stdin
        .write_all(b"{\"op\":\"submit\",\"key\":\"6b31\",\"value\":\"7631\"}\n")
        .unwrap();
    stdin.flush().unwrap();
    std::thread::sleep(std::time::Duration::from_millis(300));
    stdin
        .write_all(b"{\"op\":\"roots\",\"period\":0}\nnonsense\n")
        .unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], r#"{"cycle":0,"accepted":true}"#);
    let roots: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    assert!(roots.as_array().unwrap().len() >= 2);
    assert_eq!(roots[0]["n_in_cycle"], 1);
    assert!(lines[2].contains("error"));
}
