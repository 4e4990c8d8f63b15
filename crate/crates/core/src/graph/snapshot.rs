//! Single-file graph snapshots.
//!
//! Layout (UTF-8, LF line endings):
//!
//! ```text
//! HRICAT-GRAPH 1
//! {"edges":[...],"nodes":[...]}
//! sha256 <64 hex digits over the two lines above, newlines included>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{CanonicalGraph, GraphError, PropertyGraph};

pub const SNAPSHOT_MAGIC: &str = "HRICAT-GRAPH 1";

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn encode(graph: &PropertyGraph) -> String {
    let mut body = String::new();
    body.push_str(SNAPSHOT_MAGIC);
    body.push('\n');
    body.push_str(&graph.canonical_json());
    body.push('\n');
    let digest = hex_digest(body.as_bytes());
    body.push_str("sha256 ");
    body.push_str(&digest);
    body.push('\n');
    body
}

pub(crate) fn decode(text: &str) -> Result<PropertyGraph, GraphError> {
    let corrupt = |msg: &str| GraphError::CorruptStore(msg.to_string());
    let trailer_start =
        text.trim_end_matches('\n').rfind('\n').map(|i| i + 1).ok_or_else(|| corrupt("missing checksum trailer"))?;
    let (body, trailer) = text.split_at(trailer_start);
    let expected = trailer.trim_end().strip_prefix("sha256 ").ok_or_else(|| corrupt("missing checksum trailer"))?;
    if hex_digest(body.as_bytes()) != expected {
        return Err(corrupt("checksum mismatch"));
    }
    let mut lines = body.lines();
    if lines.next() != Some(SNAPSHOT_MAGIC) {
        return Err(corrupt("bad header"));
    }
    let json = lines.next().ok_or_else(|| corrupt("missing graph table"))?;
    let canonical: CanonicalGraph = serde_json::from_str(json).map_err(|e| GraphError::CorruptStore(e.to_string()))?;
    PropertyGraph::from_canonical(canonical)
}

/// Writes the snapshot atomically (temp file + rename).
pub fn save(graph: &PropertyGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(encode(graph).as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<PropertyGraph, GraphError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| GraphError::CorruptStore("not UTF-8".into()))?;
    decode(&text)
}
