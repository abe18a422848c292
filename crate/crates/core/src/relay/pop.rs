use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::merkle::{proof_hash_cost, verify_proof, ExclusionProof, InclusionProof, Proof};

use super::{CycleRoot, RelayError, Strategy};

/// Inclusion where the asset was spent plus null proofs for the cycles that
/// must not contain it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofOfProvenance {
    #[serde(with = "crate::merkle::hex_bytes")]
    pub key: Vec<u8>,
    pub strategy: Strategy,
    pub inclusion: InclusionProof,
    pub exclusions: Vec<ExclusionProof>,
    /// Cycle of each proof: `[inclusion] + exclusions`.
    pub anchor_cycles: Vec<u64>,
    pub delta_c: u64,
}

impl ProofOfProvenance {
    pub fn current_cycle(&self) -> u64 {
        self.anchor_cycles.first().copied().unwrap_or_default()
    }

    /// First cycle that must not contain the key (legacy null-proof range
    /// start). `current_cycle + 1 - delta_c`.
    pub fn first_checked_cycle(&self) -> u64 {
        (self.current_cycle() + 1).saturating_sub(self.delta_c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("PoP serialization is infallible")
    }
}

/// Sibling hash evaluations needed to check every proof in the bundle.
pub fn hash_cost_of_pop(pop: &ProofOfProvenance) -> u64 {
    (1 + pop.exclusions.len() as u64) * proof_hash_cost()
}

/// Checks every component proof against the archived root of its anchor
/// cycle and that the anchors cover the range implied by `delta_c`.
///
/// A missing anchor is an error, not `false`: the bundle cannot be judged.
pub fn verify_pop(pop: &ProofOfProvenance, archived: &[CycleRoot]) -> Result<bool, RelayError> {
    let by_cycle: HashMap<u64, &CycleRoot> = archived.iter().map(|r| (r.cycle_index, r)).collect();
    if pop.anchor_cycles.len() != 1 + pop.exclusions.len() {
        return Ok(false);
    }
    for cycle in &pop.anchor_cycles {
        if !by_cycle.contains_key(cycle) {
            return Err(RelayError::Unverifiable { cycle: *cycle });
        }
    }
    if pop.delta_c == 0 || pop.delta_c > pop.current_cycle() + 1 {
        return Ok(false);
    }

    let current = pop.current_cycle();
    let shape_ok = match pop.strategy {
        Strategy::Legacy => {
            let expected: Vec<u64> = std::iter::once(current)
                .chain(pop.first_checked_cycle()..current)
                .collect();
            pop.anchor_cycles == expected
        }
        Strategy::Novel => match pop.anchor_cycles.as_slice() {
            [_] => true,
            [_, previous] => {
                *previous + 1 == current
                    && by_cycle[previous].period_index == by_cycle[&current].period_index
            }
            _ => false,
        },
    };
    if !shape_ok {
        return Ok(false);
    }

    if pop.inclusion.key != pop.key || pop.exclusions.iter().any(|e| e.key != pop.key) {
        return Ok(false);
    }

    let proofs = std::iter::once(Proof::Inclusion(pop.inclusion.clone()))
        .chain(pop.exclusions.iter().cloned().map(Proof::Exclusion));
    for (proof, cycle) in proofs.zip(&pop.anchor_cycles) {
        match verify_proof(&by_cycle[cycle].root, &proof) {
            Ok(true) => {}
            Ok(false) | Err(_) => return Ok(false),
        }
    }
    Ok(true)
}
