use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::merkle::KvPair;

use super::{
    Builder, Collector, CycleRoot, ProofOfProvenance, Receipt, RelayConfig, RelayError,
    RootPublisher,
};

/// Wall-clock relay: submissions take only the collector lock, a builder
/// thread seals and builds cycles as they end.
pub struct LiveRelay {
    collector: Arc<Mutex<Collector>>,
    builder: Arc<Mutex<Builder>>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<Result<(), RelayError>>>,
}

impl LiveRelay {
    pub fn start(
        config: RelayConfig,
        publisher: impl RootPublisher + Send + 'static,
    ) -> Result<Self, RelayError> {
        let cycle_time = Duration::from_millis(config.cycle_time_ms);
        let collector = Arc::new(Mutex::new(Collector::new(config.cycles_per_period, 0)));
        let builder = Arc::new(Mutex::new(Builder::new(config, Box::new(publisher))?));
        let stop = Arc::new(AtomicBool::new(false));

        let worker = {
            let collector = Arc::clone(&collector);
            let builder = Arc::clone(&builder);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                let origin = Instant::now();
                let mut next_boundary = cycle_time;
                while !stop.load(Ordering::Acquire) {
                    let elapsed = origin.elapsed();
                    if elapsed < next_boundary {
                        std::thread::sleep((next_boundary - elapsed).min(Duration::from_millis(5)));
                        continue;
                    }
                    let sealed = collector.lock().unwrap().seal();
                    let mut b = builder.lock().unwrap();
                    b.close(sealed, next_boundary.as_millis() as u64)?;
                    if b.period_full() {
                        b.rotate()?;
                    }
                    next_boundary += cycle_time;
                }
                Ok(())
            })
        };

        Ok(LiveRelay {
            collector,
            builder,
            stop,
            worker: Some(worker),
        })
    }

    pub fn submit(&self, kv: KvPair) -> Result<Receipt, RelayError> {
        self.collector.lock().unwrap().submit(kv, false)
    }

    pub fn retrieve_pop(
        &self,
        key: &[u8],
        inception_cycle: u64,
        current_cycle: u64,
    ) -> Result<ProofOfProvenance, RelayError> {
        self.builder
            .lock()
            .unwrap()
            .retrieve_pop(key, inception_cycle, current_cycle)
    }

    pub fn archived_roots(&self) -> Vec<CycleRoot> {
        self.builder.lock().unwrap().archived_roots().to_vec()
    }

    /// Stops the builder thread; the open cycle is discarded.
    pub fn shutdown(mut self) -> Result<(), RelayError> {
        self.stop_worker()
    }

    fn stop_worker(&mut self) -> Result<(), RelayError> {
        self.stop.store(true, Ordering::Release);
        match self.worker.take() {
            Some(handle) => handle
                .join()
                .map_err(|_| RelayError::InvalidState("builder thread panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for LiveRelay {
    fn drop(&mut self) {
        let _ = self.stop_worker();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relay::{verify_pop, NullPublisher, Strategy};

    #[test]
    fn closes_cycles_on_wall_clock() {
        let config = RelayConfig {
            cycle_time_ms: 20,
            cycles_per_period: 100,
            strategy: Strategy::Novel,
            ..RelayConfig::default()
        };
        let relay = LiveRelay::start(config, NullPublisher).unwrap();
        let receipt = relay
            .submit(KvPair::new(b"live".to_vec(), b"v".to_vec()).unwrap())
            .unwrap();
        let deadline = Instant::now() + Duration::from_secs(5);
        while relay.archived_roots().len() < (receipt.cycle_index + 2) as usize {
            assert!(Instant::now() < deadline, "builder never closed the cycle");
            std::thread::sleep(Duration::from_millis(5));
        }
        let roots = relay.archived_roots();
        let spent = roots[receipt.cycle_index as usize].clone();
        assert_eq!(spent.n_in_cycle, 1);
        if receipt.cycle_index > 0 {
            let pop = relay
                .retrieve_pop(b"live", receipt.cycle_index - 1, receipt.cycle_index)
                .unwrap();
            assert!(verify_pop(&pop, &roots).unwrap());
        }
        relay.shutdown().unwrap();
    }
}
