//! FAIR checks for one dataset.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::datamodel::DataModelSchema;
use crate::graph::{resolve_dataset, NodeId, PropertyGraph, QueryError};
use crate::harvester::is_well_formed_doi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Principle {
    F,
    A,
    I,
    R,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairCheck {
    pub principle: Principle,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairAudit {
    pub doi: String,
    pub checks: Vec<FairCheck>,
}

impl FairAudit {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&FairCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failing(&self) -> impl Iterator<Item = &FairCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// The dataset node, everything it links to, and what those link to.
pub fn dataset_subgraph(graph: &PropertyGraph, dataset: &NodeId) -> PropertyGraph {
    let mut ids: BTreeSet<NodeId> = BTreeSet::from([dataset.clone()]);
    let first: Vec<NodeId> = graph.outgoing(dataset).map(|e| e.target.clone()).collect();
    for n in &first {
        ids.insert(n.clone());
        ids.extend(graph.outgoing(n).map(|e| e.target.clone()));
    }
    let mut sub = PropertyGraph::new();
    for id in &ids {
        if let Some(n) = graph.node(id) {
            sub.upsert_node(&n.label, &n.key, n.properties.clone()).expect("copied properties are finite");
        }
    }
    for id in &ids {
        for e in graph.outgoing(id).filter(|e| ids.contains(&e.target)) {
            sub.add_edge(&e.edge_type, &e.source, &e.target).expect("both endpoints copied");
        }
    }
    sub
}

fn check(principle: Principle, name: &str, passed: bool, detail: impl Into<String>) -> FairCheck {
    FairCheck { principle, name: name.to_string(), passed, detail: detail.into() }
}

pub fn audit_dataset(graph: &PropertyGraph, schema: &DataModelSchema, doi: &str) -> Result<FairAudit, QueryError> {
    let ds = resolve_dataset(graph, doi).ok_or_else(|| QueryError::DatasetNotFound(vec![doi.to_string()]))?;
    let doi = ds.str_property("doi").unwrap_or(&ds.key).to_string();
    let nonempty = |k: &str| ds.str_property(k).filter(|v| !v.trim().is_empty());
    let mut checks = Vec::new();

    checks.push(check(Principle::F, "persistent_identifier", is_well_formed_doi(&doi), format!("identifier {doi}")));
    checks.push(match nonempty("title") {
        Some(t) => check(Principle::F, "title", true, format!("title \"{t}\"")),
        None => check(Principle::F, "title", false, "no title"),
    });

    checks.push(match nonempty("repository_url") {
        Some(u) => check(Principle::A, "repository_landing_page", true, u),
        None => check(Principle::A, "repository_landing_page", false, "no repository landing page"),
    });
    let files: Vec<_> = graph
        .outgoing(&ds.id)
        .filter(|e| e.edge_type == "containsFile")
        .filter_map(|e| graph.node(&e.target))
        .collect();
    let missing: Vec<&str> = files
        .iter()
        .filter(|f| f.str_property("access_url").is_none_or(|u| u.trim().is_empty()))
        .map(|f| f.display_name())
        .collect();
    checks.push(if missing.is_empty() {
        check(Principle::A, "file_access_urls", true, format!("{} file(s) with access URLs", files.len()))
    } else {
        check(Principle::A, "file_access_urls", false, format!("no access URL for: {}", missing.join(", ")))
    });

    let report = schema.validate(&dataset_subgraph(graph, &ds.id));
    checks.push(if report.is_empty() {
        check(Principle::I, "schema_conformance", true, format!("conforms to data model v{}", schema.version()))
    } else {
        check(
            Principle::I,
            "schema_conformance",
            false,
            format!(
                "{} violation(s): {}",
                report.violations.len(),
                serde_json::to_string(&report.violations).unwrap_or_default()
            ),
        )
    });

    checks.push(match nonempty("license") {
        Some(l) => check(Principle::R, "license", true, l),
        None => check(Principle::R, "license", false, "no license recorded"),
    });
    let report_ingested = ds.property("report_ingested").and_then(|v| v.as_bool()).unwrap_or(false);
    checks.push(check(
        Principle::R,
        "data_report",
        report_ingested,
        if report_ingested { "data report ingested" } else { "no data report ingested" },
    ));
    let pubs = graph
        .outgoing(&ds.id)
        .filter(|e| e.edge_type == "describedBy")
        .filter(|e| graph.node(&e.target).is_some_and(|n| n.label == "Publication"))
        .count();
    checks.push(check(Principle::R, "publication_linked", pubs > 0, format!("{pubs} linked publication(s)")));
    Ok(FairAudit { doi, checks })
}
