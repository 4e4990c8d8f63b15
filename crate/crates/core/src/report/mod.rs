//! Structured data reports.
//!
//! A report is plain text: `## <Section>` headings, `Key: Value` lines
//! (first colon separates) and free text. CRLF line endings are accepted.
//! Headings outside the known section set are kept under their literal name
//! and flagged provisional so they can be tracked for promotion into the data
//! model.

mod naming;

pub use naming::{classify_file, parse_naming_convention, Classification, FilePattern, NamingConvention, NamingError};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::{Properties, PropertyValue};
use crate::harvester::{extract_entities, Endpoint, FileEntry, GraphProposals, KeywordRule, MetadataRecord};

pub const KNOWN_SECTIONS: [&str; 9] = [
    "Overview",
    "RobotDescription",
    "Methodology",
    "ParticipantsAndEthics",
    "Instruments",
    "Processing",
    "QualityStatement",
    "FileOrganization",
    "Appendix",
];

/// Holds lines that appear before the first heading.
pub const PREAMBLE: &str = "Preamble";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("report is empty")]
    EmptyDocument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSection {
    pub name: String,
    pub pairs: Vec<(String, String)>,
    pub free_text: Vec<String>,
    pub provisional: bool,
}

impl ReportSection {
    fn new(name: String, provisional: bool) -> Self {
        ReportSection { name, pairs: Vec::new(), free_text: Vec::new(), provisional }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataReport {
    pub sections: Vec<ReportSection>,
    pub source_doi: Option<String>,
    /// Number of heading lines consumed, for line accounting.
    pub heading_lines: usize,
}

impl DataReport {
    pub fn section(&self, name: &str) -> Option<&ReportSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn provisional_sections(&self) -> impl Iterator<Item = &ReportSection> {
        self.sections.iter().filter(|s| s.provisional)
    }

    pub fn pair_count(&self) -> usize {
        self.sections.iter().map(|s| s.pairs.len()).sum()
    }

    pub fn free_text_count(&self) -> usize {
        self.sections.iter().map(|s| s.free_text.len()).sum()
    }
}

/// Maps "Robot Description" / "robot-description" onto the known
/// `RobotDescription` spelling.
fn canonical_section(raw: &str) -> Option<&'static str> {
    let squashed: String = raw.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
    KNOWN_SECTIONS
        .iter()
        .copied()
        .find(|k| k.to_lowercase() == squashed)
        .or_else(|| (squashed == "participantsethics").then_some("ParticipantsAndEthics"))
}

/// `Key: Value` with a short, letter-initial key; URLs are not pairs.
fn split_pair(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once(':')?;
    let k = k.trim();
    let first = k.chars().next()?;
    if !first.is_alphanumeric() || k.chars().count() > 64 || v.starts_with("//") {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

pub fn parse_report(text: &str) -> Result<DataReport, ReportError> {
    if text.trim().is_empty() {
        return Err(ReportError::EmptyDocument);
    }
    let mut sections: Vec<ReportSection> = Vec::new();
    let mut current: Option<usize> = None;
    let mut heading_lines = 0;
    for raw in text.lines() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if let Some(heading) = line.strip_prefix("## ") {
            heading_lines += 1;
            let heading = heading.trim();
            let (name, provisional) = match canonical_section(heading) {
                Some(k) => (k.to_string(), false),
                None => (heading.to_string(), true),
            };
            current = Some(match sections.iter().position(|s| s.name == name) {
                Some(i) => i,
                None => {
                    sections.push(ReportSection::new(name, provisional));
                    sections.len() - 1
                }
            });
            continue;
        }
        let idx = match current {
            Some(i) => i,
            None => {
                let i = match sections.iter().position(|s| s.name == PREAMBLE) {
                    Some(i) => i,
                    None => {
                        sections.push(ReportSection::new(PREAMBLE.to_string(), false));
                        sections.len() - 1
                    }
                };
                current = Some(i);
                i
            }
        };
        let section = &mut sections[idx];
        match split_pair(line) {
            Some(pair) => section.pairs.push(pair),
            None => section.free_text.push(line.to_string()),
        }
    }
    let source_doi = sections
        .iter()
        .flat_map(|s| &s.pairs)
        .find(|(k, _)| k.eq_ignore_ascii_case("doi"))
        .map(|(_, v)| crate::harvester::canonical_doi(v));
    Ok(DataReport { sections, source_doi, heading_lines })
}

/// Sessions, classified files and rule-extracted entities from a report.
///
/// Each distinct `session` binding becomes an `ExperimentSession`
/// (`hasSession`); each classified file becomes a `DataFile` carrying its
/// token bindings, linked from its session when one is bound.
pub fn report_to_graph(
    report: &DataReport,
    conv: &NamingConvention,
    files: &[FileEntry],
    rules: &[KeywordRule],
) -> GraphProposals {
    let mut p = GraphProposals { report_ingested: true, ..Default::default() };
    let mut sessions: BTreeSet<String> = BTreeSet::new();
    for f in files {
        let Some(c) = classify_file(conv, &f.path) else { continue };
        let mut props = Properties::new();
        for (k, v) in &c.bindings {
            props.insert(k.clone(), PropertyValue::Str(v.clone()));
        }
        props.insert("pattern".into(), PropertyValue::Int(c.priority));
        props.insert("path".into(), f.path.clone().into());
        let file = p.push_node("DataFile", &f.path, props);
        if let Some(session) = c.bindings.get("session") {
            let mut sprops = Properties::new();
            sprops.insert("name".into(), session.clone().into());
            let s = p.push_node("ExperimentSession", session, sprops);
            if sessions.insert(session.clone()) {
                p.link("hasSession", Endpoint::Dataset, s);
            }
            p.link("containsFile", s, file);
        }
    }
    let empty = MetadataRecord {
        doi: report.source_doi.clone().unwrap_or_default(),
        title: String::new(),
        description: String::new(),
        authors: vec![],
        subjects: vec![],
        license: None,
        publication_date: String::new(),
        repository_url: String::new(),
        files: vec![],
        kv_fields: vec![],
    };
    p.add_entities(&extract_entities(&empty, Some(report), rules));
    p
}
