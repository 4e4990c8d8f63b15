use serde::{Deserialize, Serialize};

use super::{EntityProposal, Extraction, HarvestError, MetadataRecord};
use crate::datamodel::DataModelSchema;
use crate::graph::{NodeId, Properties, PropertyGraph, PropertyValue, Upserted, DATASET_LABEL};
use crate::text::normalize_name;

/// Labels whose nodes belong to exactly one dataset. Everything else is a
/// shared entity keyed by its normalized name.
pub fn is_dataset_scoped(label: &str) -> bool {
    matches!(label, "ExperimentSession" | "DataFile")
}

/// Identity key of a non-dataset node.
pub fn entity_key(label: &str, name: &str, doi: &str) -> String {
    match label {
        "DataFile" => format!("{doi}/{name}"),
        l if is_dataset_scoped(l) => format!("{doi}/{}", normalize_name(name)),
        _ => normalize_name(name),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProposal {
    pub label: String,
    /// Identity within the label; a file path for `DataFile`.
    pub name: String,
    pub properties: Properties,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Dataset,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkProposal {
    pub edge_type: String,
    pub source: Endpoint,
    pub target: Endpoint,
}

/// Everything to be written for one dataset besides the dataset node itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphProposals {
    pub nodes: Vec<NodeProposal>,
    pub links: Vec<LinkProposal>,
    pub unmapped_fields: Vec<(String, String)>,
    pub report_ingested: bool,
}

impl GraphProposals {
    pub fn push_node(&mut self, label: &str, name: &str, properties: Properties) -> Endpoint {
        if let Some(i) = self
            .nodes
            .iter()
            .position(|n| n.label == label && entity_key(label, &n.name, "") == entity_key(label, name, ""))
        {
            for (k, v) in properties {
                self.nodes[i].properties.entry(k).or_insert(v);
            }
            return Endpoint::Node(i);
        }
        self.nodes.push(NodeProposal { label: label.to_string(), name: name.to_string(), properties });
        Endpoint::Node(self.nodes.len() - 1)
    }

    pub fn link(&mut self, edge_type: &str, source: Endpoint, target: Endpoint) {
        let l = LinkProposal { edge_type: edge_type.to_string(), source, target };
        if !self.links.contains(&l) {
            self.links.push(l);
        }
    }

    pub fn add_entities(&mut self, entities: &[EntityProposal]) {
        for e in entities {
            let target = self.push_node(&e.label, e.name(), e.properties.clone());
            self.link(&e.edge_type, Endpoint::Dataset, target);
        }
    }

    /// Entity proposals from keyword extraction, with the unclaimed residue.
    pub fn from_extraction(extraction: &Extraction) -> Self {
        let mut p = GraphProposals::default();
        p.add_entities(&extraction.proposals);
        p.unmapped_fields = extraction.unmapped.clone();
        p
    }

    /// Appends another proposal set, remapping its node indices.
    pub fn merge(&mut self, other: GraphProposals) {
        let mut remap = Vec::with_capacity(other.nodes.len());
        for n in other.nodes {
            remap.push(self.push_node(&n.label, &n.name, n.properties));
        }
        let fix = |e: Endpoint| match e {
            Endpoint::Dataset => Endpoint::Dataset,
            Endpoint::Node(i) => remap[i],
        };
        for l in other.links {
            self.link(&l.edge_type, fix(l.source), fix(l.target));
        }
        self.unmapped_fields.extend(other.unmapped_fields);
        self.report_ingested |= other.report_ingested;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpsertSummary {
    pub doi: String,
    pub nodes_created: usize,
    pub nodes_reused: usize,
    pub edges_created: usize,
    pub edges_reused: usize,
    pub unmapped_fields: usize,
}

impl UpsertSummary {
    pub fn created_anything(&self) -> bool {
        self.nodes_created > 0 || self.edges_created > 0
    }
}

fn dataset_properties(record: &MetadataRecord, proposals: &GraphProposals) -> Properties {
    let mut p = Properties::new();
    let mut put = |k: &str, v: &str| {
        p.insert(k.to_string(), PropertyValue::Str(v.to_string()));
    };
    put("doi", &record.doi);
    put("title", &record.title);
    put("description", &record.description);
    put("publication_date", &record.publication_date);
    put("repository_url", &record.repository_url);
    put("authors", &record.authors.join("; "));
    put("subjects", &record.subjects.join("; "));
    if let Some(l) = &record.license {
        put("license", l);
    }
    let aliases: Vec<&str> =
        record.kv_fields.iter().filter(|(k, _)| k == "alternativeTitle").map(|(_, v)| v.as_str()).collect();
    if !aliases.is_empty() {
        put("aliases", &aliases.join(" | "));
    }
    put("unmapped_fields", &serde_json::to_string(&proposals.unmapped_fields).expect("strings serialize"));
    p
}

/// Structural mappings that do not go through keyword rules: files and
/// linked publications.
fn record_structure(record: &MetadataRecord) -> GraphProposals {
    let mut p = GraphProposals::default();
    for f in &record.files {
        let mut props = Properties::new();
        props.insert("path".into(), f.path.clone().into());
        props.insert("size".into(), PropertyValue::Int(f.size.min(i64::MAX as u64) as i64));
        props.insert("content_type".into(), f.content_type.clone().into());
        if let Some(u) = &f.access_url {
            props.insert("access_url".into(), u.clone().into());
        }
        if let Some(c) = &f.checksum {
            props.insert("checksum".into(), c.clone().into());
        }
        let n = p.push_node("DataFile", &f.path, props);
        p.link("containsFile", Endpoint::Dataset, n);
    }
    for (k, v) in &record.kv_fields {
        if k == "publicationCitation" && !v.trim().is_empty() {
            let mut props = Properties::new();
            props.insert("name".into(), crate::text::collapse_whitespace(v).into());
            let n = p.push_node("Publication", v, props);
            p.link("describedBy", Endpoint::Dataset, n);
        }
    }
    p
}

fn check_against_schema(schema: &DataModelSchema, proposals: &GraphProposals) -> Result<(), HarvestError> {
    let label_of = |e: Endpoint| match e {
        Endpoint::Dataset => Ok(DATASET_LABEL),
        Endpoint::Node(i) => proposals
            .nodes
            .get(i)
            .map(|n| n.label.as_str())
            .ok_or_else(|| HarvestError::SchemaViolation(format!("link references missing proposal #{i}"))),
    };
    for n in &proposals.nodes {
        if !schema.has_node_label(&n.label) {
            return Err(HarvestError::SchemaViolation(format!("unknown label {}", n.label)));
        }
    }
    for l in &proposals.links {
        let (s, t) = (label_of(l.source)?, label_of(l.target)?);
        if !schema.permits_edge(&l.edge_type, s, t) {
            return Err(HarvestError::SchemaViolation(format!("edge {} not permitted from {s} to {t}", l.edge_type)));
        }
    }
    Ok(())
}

/// Creates or updates the dataset node keyed by DOI, its files and
/// publications, and every proposed entity and link. Shared entities are
/// merged by `(label, normalized name)`. The whole proposal set is checked
/// against the schema before anything is written; re-running with the same
/// inputs creates nothing.
pub fn upsert_dataset(
    graph: &mut PropertyGraph,
    schema: &DataModelSchema,
    record: &MetadataRecord,
    proposals: &GraphProposals,
) -> Result<UpsertSummary, HarvestError> {
    let mut all = record_structure(record);
    all.merge(proposals.clone());
    check_against_schema(schema, &all)?;

    let mut summary = UpsertSummary {
        doi: record.doi.clone(),
        unmapped_fields: proposals.unmapped_fields.len(),
        ..Default::default()
    };
    let tally = |u: Upserted, created: &mut usize, reused: &mut usize| match u {
        Upserted::Created => *created += 1,
        Upserted::Reused => *reused += 1,
    };

    let mut dprops = dataset_properties(record, proposals);
    if proposals.report_ingested {
        dprops.insert("report_ingested".into(), PropertyValue::Bool(true));
    }
    let (dataset, u) = graph.upsert_node(DATASET_LABEL, &record.doi, dprops)?;
    tally(u, &mut summary.nodes_created, &mut summary.nodes_reused);

    let mut ids: Vec<NodeId> = Vec::with_capacity(all.nodes.len());
    for n in &all.nodes {
        let key = entity_key(&n.label, &n.name, &record.doi);
        let (id, u) = graph.upsert_node(&n.label, &key, n.properties.clone())?;
        tally(u, &mut summary.nodes_created, &mut summary.nodes_reused);
        ids.push(id);
    }
    let resolve = |e: Endpoint| match e {
        Endpoint::Dataset => dataset.clone(),
        Endpoint::Node(i) => ids[i].clone(),
    };
    for l in &all.links {
        let u = graph.add_edge(&l.edge_type, &resolve(l.source), &resolve(l.target))?;
        tally(u, &mut summary.edges_created, &mut summary.edges_reused);
    }
    Ok(summary)
}
