use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::merkle::KvPair;

use super::{CycleRoot, LiveRelay, ProofOfProvenance, Receipt, Relay, RelayError};

/// One request line of the relay protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RelayRequest {
    Submit {
        key: String,
        value: String,
    },
    Pop {
        key: String,
        inception_cycle: u64,
        current_cycle: u64,
    },
    Roots {
        period: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RelayResponse {
    Error { error: String },
    Submitted { cycle: u64, accepted: bool },
    Roots(Vec<CycleRoot>),
    Pop(Box<ProofOfProvenance>),
}

impl From<RelayError> for RelayResponse {
    fn from(e: RelayError) -> Self {
        RelayResponse::Error {
            error: e.to_string(),
        }
    }
}

pub trait RelayService {
    fn handle(&mut self, request: RelayRequest) -> RelayResponse;
}

fn decode(field: &str, hex_str: &str) -> Result<Vec<u8>, RelayError> {
    hex::decode(hex_str).map_err(|e| RelayError::InvalidArgument(format!("{field}: {e}")))
}

trait Ops {
    fn submit(&mut self, kv: KvPair) -> Result<Receipt, RelayError>;
    fn pop(
        &self,
        key: &[u8],
        inception: u64,
        current: u64,
    ) -> Result<ProofOfProvenance, RelayError>;
    fn roots(&self, period: u64) -> Vec<CycleRoot>;
}

impl Ops for Relay {
    fn submit(&mut self, kv: KvPair) -> Result<Receipt, RelayError> {
        Relay::submit(self, kv)
    }
    fn pop(
        &self,
        key: &[u8],
        inception: u64,
        current: u64,
    ) -> Result<ProofOfProvenance, RelayError> {
        self.retrieve_pop(key, inception, current)
    }
    fn roots(&self, period: u64) -> Vec<CycleRoot> {
        Relay::roots(self, period)
    }
}

impl Ops for LiveRelay {
    fn submit(&mut self, kv: KvPair) -> Result<Receipt, RelayError> {
        LiveRelay::submit(self, kv)
    }
    fn pop(
        &self,
        key: &[u8],
        inception: u64,
        current: u64,
    ) -> Result<ProofOfProvenance, RelayError> {
        self.retrieve_pop(key, inception, current)
    }
    fn roots(&self, period: u64) -> Vec<CycleRoot> {
        self.archived_roots()
            .into_iter()
            .filter(|r| r.period_index == period)
            .collect()
    }
}

fn dispatch(service: &mut impl Ops, request: RelayRequest) -> Result<RelayResponse, RelayError> {
    Ok(match request {
        RelayRequest::Submit { key, value } => {
            let kv = KvPair::new(decode("key", &key)?, decode("value", &value)?)?;
            let receipt = service.submit(kv)?;
            RelayResponse::Submitted {
                cycle: receipt.cycle_index,
                accepted: receipt.accepted,
            }
        }
        RelayRequest::Pop {
            key,
            inception_cycle,
            current_cycle,
        } => {
            let key = decode("key", &key)?;
            RelayResponse::Pop(Box::new(service.pop(
                &key,
                inception_cycle,
                current_cycle,
            )?))
        }
        RelayRequest::Roots { period } => RelayResponse::Roots(service.roots(period)),
    })
}

impl RelayService for Relay {
    fn handle(&mut self, request: RelayRequest) -> RelayResponse {
        dispatch(self, request).unwrap_or_else(RelayResponse::from)
    }
}

/// Wall-clock variant: cycles close on their own while requests are served.
impl RelayService for LiveRelay {
    fn handle(&mut self, request: RelayRequest) -> RelayResponse {
        dispatch(self, request).unwrap_or_else(RelayResponse::from)
    }
}

/// Serves newline-delimited JSON requests until the reader is exhausted.
/// Works over any byte stream, e.g. a `UnixStream` or `TcpStream`.
pub fn serve_lines<S: RelayService, R: BufRead, W: Write>(
    service: &mut S,
    reader: R,
    mut writer: W,
) -> std::io::Result<usize> {
    let mut served = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<RelayRequest>(&line) {
            Ok(request) => service.handle(request),
            Err(e) => RelayResponse::Error {
                error: format!("bad request: {e}"),
            },
        };
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        served += 1;
    }
    Ok(served)
}
