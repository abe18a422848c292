use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use provenance_core::ledger::{first_invalid_block, load_block_file, serve_queries, BlockStore};
use provenance_core::merkle::{verify_proof, Digest, Proof};
use provenance_core::relay::{
    serve_lines, verify_pop, CycleRoot, LiveRelay, NullPublisher, ProofOfProvenance, RelayConfig,
    Strategy,
};

use crate::{usage, CliError, CliResult};

/// Reads a roots CSV as written by `relay-sim`.
pub fn read_roots_csv(path: &Path) -> CliResult<Vec<CycleRoot>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<CycleRoot>, _>>()
        .map_err(|e| usage(format!("bad roots CSV {}: {e}", path.display())))
}

/// Checks every proof or bundle in a file holding one JSON object, or one
/// per line. A single proof is checked against `root` or, without one, its
/// own root; bundles need the roots CSV their anchors refer to.
pub fn verify_proof_file(
    path: &Path,
    root: Option<Digest>,
    roots_csv: Option<&Path>,
) -> CliResult<String> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let values: Vec<serde_json::Value> = serde_json::Deserializer::from_str(&text)
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("{} is not JSON: {e}", path.display())))?;
    if values.is_empty() {
        return Err(usage(format!("{} holds no proofs", path.display())));
    }
    let total = values.len();
    let mut roots = None;
    for (i, value) in values.into_iter().enumerate() {
        let n = i + 1;
        if value.get("anchor_cycles").is_some() {
            let pop: ProofOfProvenance = serde_json::from_value(value)
                .map_err(|e| usage(format!("entry {n}: bad bundle: {e}")))?;
            if roots.is_none() {
                let csv = roots_csv
                    .ok_or_else(|| usage("verifying a bundle needs --roots <roots.csv>"))?;
                roots = Some(read_roots_csv(csv)?);
            }
            match verify_pop(&pop, roots.as_deref().unwrap_or_default()) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(CliError::Failed(format!(
                        "entry {n}: bundle does not verify"
                    )))
                }
                Err(e) => {
                    return Err(CliError::Failed(format!(
                        "entry {n}: bundle cannot be verified: {e}"
                    )))
                }
            }
            continue;
        }
        let proof: Proof = serde_json::from_value(value)
            .map_err(|e| usage(format!("entry {n}: bad proof: {e}")))?;
        let root = root.unwrap_or_else(|| proof.root());
        match verify_proof(&root, &proof) {
            Ok(true) => {}
            Ok(false) => {
                return Err(CliError::Failed(format!(
                    "entry {n}: proof does not verify against {root}"
                )))
            }
            Err(e) => return Err(CliError::Failed(format!("entry {n}: malformed proof: {e}"))),
        }
    }
    Ok(format!("all {total} valid"))
}

/// Checks every block file; reports the first bad index of each.
pub fn verify_chain_files(paths: &[impl AsRef<Path>]) -> CliResult<Vec<String>> {
    if paths.is_empty() {
        return Err(usage("verify-chain needs at least one block file"));
    }
    let mut lines = Vec::new();
    let mut bad = 0;
    for path in paths {
        let path = path.as_ref();
        let blocks = load_block_file(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        match first_invalid_block(&blocks) {
            None => lines.push(format!(
                "{}: valid, {} blocks",
                path.display(),
                blocks.len()
            )),
            Some(i) => {
                bad += 1;
                lines.push(format!("{}: invalid at block {i}", path.display()));
            }
        }
    }
    if bad > 0 {
        return Err(CliError::Failed(lines.join("\n")));
    }
    Ok(lines)
}

/// Answers `{"root": hex}` lines against a block file.
pub fn ledger_query(path: &Path, input: impl BufRead, output: impl Write) -> CliResult<usize> {
    let blocks =
        load_block_file(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let store = BlockStore::from_blocks(blocks);
    Ok(serve_queries(&store, input, output)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub cycle_time_ms: u64,
    pub cycles_per_period: u64,
    pub strategy: Strategy,
    pub retained_periods: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        let r = RelayConfig::default();
        ServeConfig {
            cycle_time_ms: r.cycle_time_ms,
            cycles_per_period: r.cycles_per_period,
            strategy: r.strategy,
            retained_periods: r.retained_periods,
        }
    }
}

/// Wall-clock relay answering JSON request lines until `input` ends.
pub fn relay_serve(
    config: &ServeConfig,
    input: impl BufRead,
    output: impl Write,
) -> CliResult<usize> {
    let relay_config = RelayConfig {
        cycle_time_ms: config.cycle_time_ms,
        cycles_per_period: config.cycles_per_period,
        strategy: config.strategy,
        retained_periods: config.retained_periods,
        ..RelayConfig::default()
    };
    relay_config.validate().map_err(usage)?;
    let mut relay = LiveRelay::start(relay_config, NullPublisher).map_err(usage)?;
    let served = serve_lines(&mut relay, input, output)?;
    relay
        .shutdown()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    Ok(served)
}
