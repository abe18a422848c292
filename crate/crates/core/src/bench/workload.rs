use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::merkle::KvPair;

use super::BenchError;

/// `m` cycles of `round(lambda * t_c_s)` pairs: 16-byte random keys, unique
/// across the whole workload, and 32-byte random values.
pub fn generate_workload(
    lambda: f64,
    t_c_s: f64,
    m: u64,
    seed: u64,
) -> Result<Vec<Vec<KvPair>>, BenchError> {
    if !(lambda > 0.0 && t_c_s > 0.0 && lambda.is_finite() && t_c_s.is_finite()) || m == 0 {
        return Err(BenchError::InvalidArgument(format!(
            "lambda {lambda}, T_c {t_c_s} and m {m} must all be positive"
        )));
    }
    let per_cycle = (lambda * t_c_s).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(per_cycle * m as usize);
    let mut cycles = Vec::with_capacity(m as usize);
    for _ in 0..m {
        let mut pairs = Vec::with_capacity(per_cycle);
        while pairs.len() < per_cycle {
            let key: [u8; 16] = rng.gen();
            let value: [u8; 32] = rng.gen();
            if seen.insert(key) {
                pairs.push(KvPair::new(key.to_vec(), value.to_vec()).expect("non-empty"));
            }
        }
        cycles.push(pairs);
    }
    Ok(cycles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let w = generate_workload(750.0, 1.0, 3, 9).unwrap();
        assert_eq!(w.iter().map(Vec::len).collect::<Vec<_>>(), vec![750; 3]);
        assert_eq!(w, generate_workload(750.0, 1.0, 3, 9).unwrap());
        assert_ne!(w, generate_workload(750.0, 1.0, 3, 10).unwrap());
        assert_eq!(generate_workload(1.0, 1.0, 1, 0).unwrap()[0].len(), 1);
        let keys: HashSet<_> = w.iter().flatten().map(|kv| kv.key.clone()).collect();
        assert_eq!(keys.len(), 2250);
        assert!(generate_workload(0.0, 1.0, 1, 0).is_err());
    }
}
