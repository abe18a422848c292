use std::collections::HashMap;

use crate::merkle::KvPair;

use super::{Receipt, RelayError};

/// A cycle bucket handed from the collector to the builder.
#[derive(Debug, Clone, Default)]
pub struct SealedCycle {
    pub cycle_index: u64,
    pub pairs: Vec<KvPair>,
    /// Keys whose proofs are assembled as soon as the cycle closes.
    pub prove_on_close: Vec<Vec<u8>>,
}

/// Accepts submissions into the open cycle bucket.
///
/// Sealing swaps in a fresh bucket, so a submission is never turned away
/// because a cycle is being built.
#[derive(Debug)]
pub struct Collector {
    cycles_per_period: u64,
    open: SealedCycle,
    /// Every key seen in the current period: value and the cycle it landed in.
    period_keys: HashMap<Vec<u8>, (Vec<u8>, u64)>,
}

impl Collector {
    pub fn new(cycles_per_period: u64, first_cycle: u64) -> Self {
        Collector {
            cycles_per_period,
            open: SealedCycle {
                cycle_index: first_cycle,
                ..SealedCycle::default()
            },
            period_keys: HashMap::new(),
        }
    }

    pub fn open_cycle(&self) -> u64 {
        self.open.cycle_index
    }

    pub fn pending(&self) -> usize {
        self.open.pairs.len()
    }

    pub fn submit(&mut self, kv: KvPair, prove_on_close: bool) -> Result<Receipt, RelayError> {
        kv.validate()?;
        if let Some((value, cycle)) = self.period_keys.get(&kv.key) {
            if *value != kv.value {
                return Err(RelayError::DuplicateKey {
                    key_hex: hex::encode(&kv.key),
                });
            }
            return Ok(Receipt {
                cycle_index: *cycle,
                accepted: true,
            });
        }
        let cycle = self.open.cycle_index;
        self.period_keys
            .insert(kv.key.clone(), (kv.value.clone(), cycle));
        if prove_on_close {
            self.open.prove_on_close.push(kv.key.clone());
        }
        self.open.pairs.push(kv);
        Ok(Receipt {
            cycle_index: cycle,
            accepted: true,
        })
    }

    /// Hands over the open bucket and opens the next cycle.
    pub fn seal(&mut self) -> SealedCycle {
        let next = self.open.cycle_index + 1;
        let sealed = std::mem::replace(
            &mut self.open,
            SealedCycle {
                cycle_index: next,
                ..SealedCycle::default()
            },
        );
        if next.is_multiple_of(self.cycles_per_period) {
            self.period_keys.clear();
        }
        sealed
    }
}
