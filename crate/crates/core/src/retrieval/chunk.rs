use serde::{Deserialize, Serialize};

use super::RetrievalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceKind {
    DataReport,
    Publication,
    MetadataRecord,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::DataReport => "report",
            SourceKind::Publication => "publication",
            SourceKind::MetadataRecord => "record",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    /// `{doi}#{kind}#{seq}` with a zero-padded sequence, so id order is
    /// document order within one source.
    pub id: String,
    pub source_doi: String,
    pub source_kind: SourceKind,
    pub section: String,
    pub text: String,
    /// Unit length once indexed; empty before.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub tokens: usize,
    pub overlap: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig { tokens: 300, overlap: 50 }
    }
}

/// Splits at `## ` headings, then into windows of `tokens` whitespace tokens
/// stepping `tokens - overlap`. The heading line stays with its section.
pub fn chunk_document(
    doc: &str,
    kind: SourceKind,
    doi: &str,
    config: ChunkConfig,
) -> Result<Vec<Chunk>, RetrievalError> {
    if doc.trim().is_empty() {
        return Err(RetrievalError::EmptyDocument);
    }
    let window = config.tokens.max(1);
    let step = window.saturating_sub(config.overlap).max(1);

    let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
    for line in doc.lines() {
        let trimmed = line.trim();
        if let Some(h) = trimmed.strip_prefix("## ") {
            sections.push((h.trim().to_string(), Vec::new()));
        } else if sections.is_empty() {
            if trimmed.is_empty() {
                continue;
            }
            sections.push((String::new(), Vec::new()));
        }
        sections.last_mut().expect("pushed above").1.extend(trimmed.split_whitespace());
    }

    let mut out = Vec::new();
    for (section, tokens) in sections.into_iter().filter(|(_, t)| !t.is_empty()) {
        let mut start = 0;
        loop {
            let end = (start + window).min(tokens.len());
            out.push(Chunk {
                id: format!("{doi}#{}#{:04}", kind.as_str(), out.len()),
                source_doi: doi.to_string(),
                source_kind: kind,
                section: section.clone(),
                text: tokens[start..end].join(" "),
                embedding: Vec::new(),
            });
            if end == tokens.len() {
                break;
            }
            start += step;
        }
    }
    Ok(out)
}
