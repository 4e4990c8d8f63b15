use std::time::Duration;

use serde_json::Value;

use super::{is_well_formed_doi, HarvestError};

/// Export endpoint for a dataset's metadata record.
pub fn export_url(repo_base: &str) -> String {
    format!("{}/api/datasets/export", repo_base.trim_end_matches('/'))
}

/// Blocking HTTP client for repository exports. Holds no mutable state, so
/// one instance can serve concurrent callers.
#[derive(Clone)]
pub struct Fetcher {
    client: reqwest::blocking::Client,
}

impl Default for Fetcher {
    fn default() -> Self {
        Fetcher::with_timeout(Duration::from_secs(30))
    }
}

impl Fetcher {
    pub fn with_timeout(timeout: Duration) -> Self {
        let client =
            reqwest::blocking::Client::builder().timeout(timeout).build().expect("static client configuration");
        Fetcher { client }
    }

    /// `GET {repo_base}/api/datasets/export?exporter=ddi&persistentId={doi}`.
    pub fn fetch_record(&self, repo_base: &str, doi: &str) -> Result<Value, HarvestError> {
        if !is_well_formed_doi(doi) {
            return Err(HarvestError::InvalidDoi(doi.to_string()));
        }
        let resp = self
            .client
            .get(export_url(repo_base))
            .query(&[("exporter", "ddi"), ("persistentId", doi.trim())])
            .send()
            .map_err(|e| HarvestError::Network(e.to_string()))?;
        match resp.status().as_u16() {
            200 => {}
            404 => return Err(HarvestError::NotFound(doi.to_string())),
            s => return Err(HarvestError::Network(format!("repository answered HTTP {s}"))),
        }
        let body = resp.text().map_err(|e| HarvestError::Network(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| HarvestError::MalformedResponse(e.to_string()))
    }
}

pub fn fetch_record(repo_base: &str, doi: &str) -> Result<Value, HarvestError> {
    Fetcher::default().fetch_record(repo_base, doi)
}
