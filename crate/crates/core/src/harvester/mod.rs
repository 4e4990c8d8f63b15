//! Repository metadata harvesting: fetch a dataset's metadata export, parse it
//! into a [`MetadataRecord`], derive entity proposals with keyword rules and
//! upsert everything into the knowledge graph.

mod ddi;
mod fetch;
mod rules;
mod upsert;

pub use ddi::parse_ddi;
pub(crate) use ddi::parse_with_file_ids;
pub use fetch::{export_url, fetch_record, Fetcher};
pub use rules::{
    builtin_rules, extract_entities, extract_with_residue, fold_key, validate_rules, EntityProposal, Extraction,
    KeywordRule, RuleError, ValueSource,
};
pub use upsert::{
    entity_key, is_dataset_scoped, upsert_dataset, Endpoint, GraphProposals, LinkProposal, NodeProposal, UpsertSummary,
};

use serde::{Deserialize, Serialize};

use crate::graph::GraphError;

#[derive(Debug, thiserror::Error)]
pub enum HarvestError {
    #[error("network error: {0}")]
    Network(String),
    #[error("no published dataset for {0}")]
    NotFound(String),
    #[error("malformed repository response: {0}")]
    MalformedResponse(String),
    #[error("not a DOI: {0}")]
    InvalidDoi(String),
    #[error("record has no persistent identifier")]
    MissingIdentifier,
    #[error("record has no title")]
    MissingTitle,
    #[error("invalid file path {0:?}")]
    InvalidFilePath(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Normalizes DOI spellings to `doi:<prefix>/<suffix>`, keeping case.
/// `https://doi.org/10.1/X`, `doi:10.1/X` and `10.1/X` all map to `doi:10.1/X`.
pub fn canonical_doi(raw: &str) -> String {
    let s = raw.trim();
    let lower = s.to_ascii_lowercase();
    let stripped = ["https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/", "doi:"]
        .iter()
        .find(|p| lower.starts_with(*p))
        .map(|p| &s[p.len()..])
        .unwrap_or(s);
    format!("doi:{}", stripped.trim())
}

/// A DOI is accepted if it carries the `doi:` scheme or starts with the `10.` directory prefix.
pub fn is_well_formed_doi(raw: &str) -> bool {
    let s = raw.trim();
    let body = if s.len() >= 4 && s[..4].eq_ignore_ascii_case("doi:") { &s[4..] } else { s };
    body.starts_with("10.") && body.contains('/') && !body.contains(char::is_whitespace)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative, `/`-separated, no `..` segments.
    pub path: String,
    pub size: u64,
    pub content_type: String,
    pub access_url: Option<String>,
    /// `<algorithm>:<hex>`, e.g. `md5:9e10...`.
    pub checksum: Option<String>,
}

/// Repository-independent description of one published dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub doi: String,
    pub title: String,
    pub description: String,
    pub authors: Vec<String>,
    pub subjects: Vec<String>,
    pub license: Option<String>,
    pub publication_date: String,
    pub repository_url: String,
    pub files: Vec<FileEntry>,
    pub kv_fields: Vec<(String, String)>,
}

impl MetadataRecord {
    /// Canonical JSON: UTF-8 with sorted keys.
    pub fn to_canonical_json(&self) -> String {
        crate::text::to_canonical_json_pretty(self).expect("record is serializable")
    }

    /// Fills missing file access URLs with the repository's datafile access
    /// endpoint, using the numeric file id stashed during parsing.
    pub fn fill_access_urls(&mut self, repo_base: &str, file_ids: &[Option<u64>]) {
        let base = repo_base.trim_end_matches('/');
        for (f, id) in self.files.iter_mut().zip(file_ids) {
            if f.access_url.is_none() {
                if let Some(id) = id {
                    f.access_url = Some(format!("{base}/api/access/datafile/{id}"));
                }
            }
        }
        if self.repository_url.is_empty() {
            self.repository_url = format!("{base}/dataset.xhtml?persistentId={}", self.doi);
        }
    }
}

/// Checks the relative-path invariant and normalizes `\` to `/`.
pub fn normalize_file_path(raw: &str) -> Result<String, HarvestError> {
    let p = raw.replace('\\', "/");
    let p = p.trim_start_matches("./");
    let ok = !p.is_empty()
        && !p.starts_with('/')
        && !p.contains(':')
        && p.split('/').all(|seg| !seg.is_empty() && seg != ".." && seg != ".");
    if ok {
        Ok(p.to_string())
    } else {
        Err(HarvestError::InvalidFilePath(raw.to_string()))
    }
}
