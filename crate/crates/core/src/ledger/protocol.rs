use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::merkle::Digest;

use super::store::{BlockStore, QueryResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub root: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryResponse {
    Error { error: String },
    Result(QueryResult),
}

pub fn handle_query(store: &BlockStore, line: &str) -> QueryResponse {
    match serde_json::from_str::<QueryRequest>(line) {
        Ok(req) => QueryResponse::Result(store.query_root(&req.root)),
        Err(e) => QueryResponse::Error {
            error: format!("bad query: {e}"),
        },
    }
}

/// Answers one JSON query per input line. Returns the number answered.
pub fn serve_queries(
    store: &BlockStore,
    reader: impl BufRead,
    mut writer: impl Write,
) -> io::Result<usize> {
    let mut served = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_query(store, &line);
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        served += 1;
    }
    writer.flush()?;
    Ok(served)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::Block;

    #[test]
    fn query_lines() {
        let mut store = BlockStore::in_memory();
        let root = Digest([3; 32]);
        let block = Block::next(store.last(), 1, root);
        store.append(block).unwrap();
        let input = format!(
            "{{\"root\":\"{root}\"}}\n{{\"root\":\"{}\"}}\nnot json\n",
            Digest([4; 32])
        );
        let mut out = Vec::new();
        assert_eq!(
            serve_queries(&store, input.as_bytes(), &mut out).unwrap(),
            3
        );
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines[0], r#"{"found":true,"block_index":1}"#);
        assert_eq!(lines[1], r#"{"found":false,"block_index":null}"#);
        assert!(lines[2].starts_with(r#"{"error":"#));
    }
}
