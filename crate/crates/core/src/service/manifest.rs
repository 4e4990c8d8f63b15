//! Download manifests and their shell-script rendering.

use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::graph::{locate_files, PropertyGraph, PropertyValue, QueryError};

pub const NO_CHECKSUM: &str = "-";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub size: u64,
    pub access_url: String,
    /// `<algorithm>:<hex>` or `-`.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownloadManifest {
    pub doi: String,
    pub entries: Vec<ManifestEntry>,
    pub generated_at: String,
}

/// Manifest over the files `locate_files` selects for `filters`, sorted by path.
pub fn build_manifest(
    graph: &PropertyGraph,
    doi: &str,
    filters: &BTreeMap<String, String>,
    generated_at: DateTime<Utc>,
) -> Result<DownloadManifest, QueryError> {
    let dataset =
        crate::graph::resolve_dataset(graph, doi).ok_or_else(|| QueryError::DatasetNotFound(vec![doi.to_string()]))?;
    let canonical_doi = dataset.str_property("doi").unwrap_or(&dataset.key).to_string();
    let mut entries: Vec<ManifestEntry> = locate_files(graph, doi, filters)?
        .into_iter()
        .map(|f| ManifestEntry {
            path: f.str_property("path").unwrap_or(&f.key).to_string(),
            size: match f.property("size") {
                Some(PropertyValue::Int(n)) => (*n).max(0) as u64,
                _ => 0,
            },
            access_url: f.str_property("access_url").unwrap_or_default().to_string(),
            checksum: f.str_property("checksum").unwrap_or(NO_CHECKSUM).to_string(),
        })
        .collect();
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    entries.dedup_by(|a, b| a.path == b.path);
    Ok(DownloadManifest {
        doi: canonical_doi,
        entries,
        generated_at: generated_at.to_rfc3339_opts(SecondsFormat::Secs, true),
    })
}

/// Single-quotes a string for POSIX sh.
pub fn sh_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn checksum_tool(algorithm: &str) -> Option<&'static str> {
    match algorithm.to_ascii_lowercase().replace('-', "").as_str() {
        "md5" => Some("md5sum"),
        "sha1" => Some("sha1sum"),
        "sha256" => Some("sha256sum"),
        "sha512" => Some("sha512sum"),
        _ => None,
    }
}

/// POSIX shell script: one `curl` line per entry with an access URL, then one
/// checksum verification line per entry with a known checksum algorithm.
pub fn render_script(m: &DownloadManifest) -> String {
    let mut s = String::new();
    s.push_str("#!/bin/sh\n");
    s.push_str(&format!("# Files of {} (manifest generated {})\n", m.doi, m.generated_at));
    s.push_str("set -eu\n\n");
    for e in &m.entries {
        if e.access_url.is_empty() {
            s.push_str(&format!("echo {} >&2\n", sh_quote(&format!("no access URL for {}", e.path))));
        } else {
            s.push_str(&format!("curl -fL --create-dirs -o {} {}\n", sh_quote(&e.path), sh_quote(&e.access_url)));
        }
    }
    let checks: Vec<String> = m
        .entries
        .iter()
        .filter(|e| !e.access_url.is_empty())
        .filter_map(|e| {
            let (alg, hex) = e.checksum.split_once(':')?;
            let tool = checksum_tool(alg)?;
            Some(format!("echo {} | {tool} -c -\n", sh_quote(&format!("{hex}  {}", e.path))))
        })
        .collect();
    if !checks.is_empty() {
        s.push('\n');
        checks.iter().for_each(|c| s.push_str(c));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Properties;

    fn graph() -> PropertyGraph {
        let mut g = PropertyGraph::new();
        let mut p = Properties::new();
        p.insert("doi".into(), "doi:10.1/M".into());
        p.insert("title".into(), "M".into());
        let (d, _) = g.upsert_node("Dataset", "doi:10.1/M", p).unwrap();
        for (path, url, sum, modality) in
            [("b/s01_video.mp4", "https://r/2", Some("md5:bbb"), "video"), ("a/it's.csv", "https://r/1", None, "table")]
        {
            let mut p = Properties::new();
            p.insert("path".into(), path.into());
            p.insert("size".into(), PropertyValue::Int(5));
            p.insert("access_url".into(), url.into());
            p.insert("modality".into(), modality.into());
            if let Some(s) = sum {
                p.insert("checksum".into(), s.into());
            }
            let (f, _) = g.upsert_node("DataFile", &format!("doi:10.1/M/{path}"), p).unwrap();
            g.add_edge("containsFile", &d, &f).unwrap();
        }
        g
    }

    #[test]
    fn manifest_and_script() {
        let g = graph();
        let m = build_manifest(&g, "10.1/M", &BTreeMap::new(), DateTime::UNIX_EPOCH).unwrap();
        assert_eq!(m.generated_at, "1970-01-01T00:00:00Z");
        let paths: Vec<&str> = m.entries.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, ["a/it's.csv", "b/s01_video.mp4"]);
        assert_eq!(m.entries[0].checksum, "-");
        let script = render_script(&m);
        assert_eq!(script.lines().filter(|l| l.starts_with("curl ")).count(), 2);
        assert!(script.contains(r"-o 'a/it'\''s.csv' 'https://r/1'"));
        assert!(script.contains("echo 'bbb  b/s01_video.mp4' | md5sum -c -"));

        let only_video: BTreeMap<String, String> = [("modality".to_string(), "video".to_string())].into();
        let m = build_manifest(&g, "doi:10.1/M", &only_video, DateTime::UNIX_EPOCH).unwrap();
        assert_eq!(m.entries.len(), 1);
        assert!(build_manifest(&g, "doi:10.1/NO", &BTreeMap::new(), DateTime::UNIX_EPOCH).is_err());
    }
}
