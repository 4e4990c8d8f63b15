//! The robotics data model: node labels, edge types and their property
//! schemas, plus validation of graph content against them.
//!
//! Schemas are immutable values. Every mutation returns a new schema whose
//! version is exactly one higher than its input.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::{PropertyGraph, PropertyValue};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("{kind:?} {name} already exists")]
    DuplicateLabel { kind: LabelKind, name: String },
    #[error("label {0} not found")]
    NotFound(String),
    #[error("label {0} is not provisional")]
    NotProvisional(String),
    #[error("edge type {0} needs non-empty source and target label sets")]
    EmptyEndpoints(String),
    #[error("edge type {edge} references undeclared label {label}")]
    UndeclaredEndpoint { edge: String, label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    NodeLabel,
    EdgeType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelStatus {
    Core,
    Provisional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    String,
    Integer,
    Float,
    Boolean,
    Any,
}

impl ValueKind {
    fn admits(self, value: &PropertyValue) -> bool {
        matches!(
            (self, value),
            (ValueKind::Any, _)
                | (ValueKind::String, PropertyValue::Str(_))
                | (ValueKind::Integer, PropertyValue::Int(_))
                | (ValueKind::Float, PropertyValue::Float(_) | PropertyValue::Int(_))
                | (ValueKind::Boolean, PropertyValue::Bool(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub kind: ValueKind,
    pub required: bool,
}

impl PropertySpec {
    pub fn required(name: &str, kind: ValueKind) -> Self {
        PropertySpec { name: name.into(), kind, required: true }
    }

    pub fn optional(name: &str, kind: ValueKind) -> Self {
        PropertySpec { name: name.into(), kind, required: false }
    }
}

/// A node label or edge type declaration.
///
/// Properties not declared here are permitted; declared ones are
/// kind-checked, and `required` ones must be present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaLabel {
    pub name: String,
    pub kind: LabelKind,
    pub status: LabelStatus,
    pub properties: Vec<PropertySpec>,
    /// Edge types only.
    #[serde(default)]
    pub source_labels: BTreeSet<String>,
    #[serde(default)]
    pub target_labels: BTreeSet<String>,
}

impl SchemaLabel {
    pub fn node(name: &str, properties: Vec<PropertySpec>) -> Self {
        SchemaLabel {
            name: name.into(),
            kind: LabelKind::NodeLabel,
            status: LabelStatus::Core,
            properties,
            source_labels: BTreeSet::new(),
            target_labels: BTreeSet::new(),
        }
    }

    pub fn edge(name: &str, sources: &[&str], targets: &[&str]) -> Self {
        SchemaLabel {
            name: name.into(),
            kind: LabelKind::EdgeType,
            status: LabelStatus::Core,
            properties: Vec::new(),
            source_labels: sources.iter().map(|s| s.to_string()).collect(),
            target_labels: targets.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataModelSchema {
    version: u64,
    labels: BTreeMap<String, SchemaLabel>,
    edge_types: BTreeMap<String, SchemaLabel>,
}

pub const NODE_LABELS: [&str; 17] = [
    "Dataset",
    "Lab",
    "Publication",
    "Robot",
    "RobotModel",
    "Sensor",
    "ControlMode",
    "ResearchMethod",
    "ExperimentLocation",
    "ExperimentSetting",
    "ExperimentSession",
    "ExperimentCondition",
    "ParticipantGroup",
    "Instrument",
    "DataFile",
    "QualityStatement",
    "EthicsApproval",
];

/// The builtin schema, version 1, everything `Core`.
///
/// `hasSensor` and `usesControl` also accept a `Dataset` source, `hasCondition`
/// accepts `Dataset`, and `containsFile` accepts `ExperimentSession`; flat
/// repository records attach those entities to the dataset directly, and
/// classified files hang off their session.
pub fn builtin_schema() -> DataModelSchema {
    use ValueKind::*;
    let mut labels = BTreeMap::new();
    for name in NODE_LABELS {
        let props = match name {
            "Dataset" => vec![
                PropertySpec::required("doi", String),
                PropertySpec::required("title", String),
                PropertySpec::optional("description", String),
                PropertySpec::optional("license", String),
                PropertySpec::optional("publication_date", String),
                PropertySpec::optional("repository_url", String),
                PropertySpec::optional("report_ingested", Boolean),
            ],
            "DataFile" => vec![
                PropertySpec::required("path", String),
                PropertySpec::optional("size", Integer),
                PropertySpec::optional("content_type", String),
                PropertySpec::optional("access_url", String),
                PropertySpec::optional("checksum", String),
            ],
            _ => vec![PropertySpec::optional("name", String)],
        };
        labels.insert(name.to_string(), SchemaLabel::node(name, props));
    }
    let edges = [
        SchemaLabel::edge("usesModel", &["Dataset"], &["RobotModel"]),
        SchemaLabel::edge("hasRobot", &["Dataset"], &["Robot"]),
        SchemaLabel::edge("hasSensor", &["Robot", "Dataset"], &["Sensor"]),
        SchemaLabel::edge("usesControl", &["Robot", "Dataset"], &["ControlMode"]),
        SchemaLabel::edge("usesMethod", &["Dataset"], &["ResearchMethod"]),
        SchemaLabel::edge("conductedAt", &["Dataset"], &["ExperimentLocation"]),
        SchemaLabel::edge("hasSetting", &["Dataset"], &["ExperimentSetting"]),
        SchemaLabel::edge("hasSession", &["Dataset"], &["ExperimentSession"]),
        SchemaLabel::edge("hasCondition", &["ExperimentSession", "Dataset"], &["ExperimentCondition"]),
        SchemaLabel::edge("involves", &["Dataset"], &["ParticipantGroup"]),
        SchemaLabel::edge("usesInstrument", &["Dataset"], &["Instrument"]),
        SchemaLabel::edge("containsFile", &["Dataset", "ExperimentSession"], &["DataFile"]),
        SchemaLabel::edge("describedBy", &["Dataset"], &["Publication"]),
        SchemaLabel::edge("producedBy", &["Dataset"], &["Lab"]),
        SchemaLabel::edge("approvedBy", &["Dataset"], &["EthicsApproval"]),
        SchemaLabel::edge("hasQuality", &["Dataset"], &["QualityStatement"]),
    ];
    let edge_types = edges.into_iter().map(|e| (e.name.clone(), e)).collect();
    DataModelSchema { version: 1, labels, edge_types }
}

/// A single way a graph fails to conform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownLabel {
        node: String,
        label: String,
    },
    UnknownEdgeType {
        edge: String,
        edge_type: String,
    },
    /// One per offending edge, whichever end is wrong.
    EndpointLabel {
        edge: String,
        edge_type: String,
        source_label: String,
        target_label: String,
    },
    MissingProperty {
        node: String,
        label: String,
        property: String,
    },
    PropertyKind {
        node: String,
        property: String,
        expected: ValueKind,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Serialize)]
struct SchemaExport<'a> {
    version: u64,
    labels: Vec<&'a SchemaLabel>,
}

impl DataModelSchema {
    /// Builds a schema from explicit declarations, checking edge closure.
    pub fn new(version: u64, labels: Vec<SchemaLabel>) -> Result<Self, SchemaError> {
        let mut schema = DataModelSchema { version, labels: BTreeMap::new(), edge_types: BTreeMap::new() };
        for label in labels {
            let slot = match label.kind {
                LabelKind::NodeLabel => &mut schema.labels,
                LabelKind::EdgeType => &mut schema.edge_types,
            };
            if slot.contains_key(&label.name) {
                return Err(SchemaError::DuplicateLabel { kind: label.kind, name: label.name });
            }
            slot.insert(label.name.clone(), label);
        }
        for edge in schema.edge_types.values() {
            schema.check_edge(edge)?;
        }
        Ok(schema)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn node_label(&self, name: &str) -> Option<&SchemaLabel> {
        self.labels.get(name)
    }

    pub fn edge_type(&self, name: &str) -> Option<&SchemaLabel> {
        self.edge_types.get(name)
    }

    pub fn node_labels(&self) -> impl Iterator<Item = &SchemaLabel> {
        self.labels.values()
    }

    pub fn edge_types(&self) -> impl Iterator<Item = &SchemaLabel> {
        self.edge_types.values()
    }

    pub fn has_node_label(&self, name: &str) -> bool {
        self.labels.contains_key(name)
    }

    /// Whether an edge of `edge_type` may run from `source` to `target` labels.
    pub fn permits_edge(&self, edge_type: &str, source: &str, target: &str) -> bool {
        self.edge_types
            .get(edge_type)
            .is_some_and(|e| e.source_labels.contains(source) && e.target_labels.contains(target))
    }

    fn check_edge(&self, edge: &SchemaLabel) -> Result<(), SchemaError> {
        if edge.source_labels.is_empty() || edge.target_labels.is_empty() {
            return Err(SchemaError::EmptyEndpoints(edge.name.clone()));
        }
        for l in edge.source_labels.iter().chain(&edge.target_labels) {
            if !self.labels.contains_key(l) {
                return Err(SchemaError::UndeclaredEndpoint { edge: edge.name.clone(), label: l.clone() });
            }
        }
        Ok(())
    }

    /// Returns a new schema containing `label` as `Provisional`.
    pub fn add_provisional(&self, mut label: SchemaLabel) -> Result<DataModelSchema, SchemaError> {
        let existing = match label.kind {
            LabelKind::NodeLabel => &self.labels,
            LabelKind::EdgeType => &self.edge_types,
        };
        if existing.contains_key(&label.name) {
            return Err(SchemaError::DuplicateLabel { kind: label.kind, name: label.name });
        }
        if label.kind == LabelKind::EdgeType {
            self.check_edge(&label)?;
        }
        label.status = LabelStatus::Provisional;
        let mut next = self.clone();
        next.version += 1;
        match label.kind {
            LabelKind::NodeLabel => next.labels.insert(label.name.clone(), label),
            LabelKind::EdgeType => next.edge_types.insert(label.name.clone(), label),
        };
        Ok(next)
    }

    /// Moves a provisional label (node label first, then edge type) to `Core`.
    /// Only the status changes, so promotion never invalidates a graph.
    pub fn promote(&self, name: &str) -> Result<DataModelSchema, SchemaError> {
        let mut next = self.clone();
        let label = next
            .labels
            .get_mut(name)
            .or_else(|| next.edge_types.get_mut(name))
            .ok_or_else(|| SchemaError::NotFound(name.to_string()))?;
        if label.status != LabelStatus::Provisional {
            return Err(SchemaError::NotProvisional(name.to_string()));
        }
        label.status = LabelStatus::Core;
        next.version += 1;
        Ok(next)
    }

    /// Lists every way `graph` fails to conform. Provisional labels validate
    /// exactly like core ones.
    pub fn validate(&self, graph: &PropertyGraph) -> ValidationReport {
        let mut violations = Vec::new();
        for node in graph.nodes() {
            let Some(label) = self.labels.get(&node.label) else {
                violations.push(Violation::UnknownLabel { node: node.id.to_string(), label: node.label.clone() });
                continue;
            };
            for spec in &label.properties {
                match node.properties.get(&spec.name) {
                    None if spec.required => violations.push(Violation::MissingProperty {
                        node: node.id.to_string(),
                        label: node.label.clone(),
                        property: spec.name.clone(),
                    }),
                    Some(v) if !spec.kind.admits(v) => violations.push(Violation::PropertyKind {
                        node: node.id.to_string(),
                        property: spec.name.clone(),
                        expected: spec.kind,
                    }),
                    _ => {}
                }
            }
        }
        for edge in graph.edges() {
            let Some(et) = self.edge_types.get(&edge.edge_type) else {
                violations
                    .push(Violation::UnknownEdgeType { edge: edge.id.clone(), edge_type: edge.edge_type.clone() });
                continue;
            };
            let label_of = |id| graph.node(id).map(|n| n.label.clone()).unwrap_or_default();
            let (source_label, target_label) = (label_of(&edge.source), label_of(&edge.target));
            if !et.source_labels.contains(&source_label) || !et.target_labels.contains(&target_label) {
                violations.push(Violation::EndpointLabel {
                    edge: edge.id.clone(),
                    edge_type: edge.edge_type.clone(),
                    source_label,
                    target_label,
                });
            }
        }
        ValidationReport { violations }
    }

    /// Canonical documentation export: `{version, labels: [...]}` with sorted
    /// keys; node labels precede edge types, each group sorted by name.
    pub fn to_canonical_json(&self) -> String {
        let export = SchemaExport {
            version: self.version,
            labels: self.labels.values().chain(self.edge_types.values()).collect(),
        };
        crate::text::to_canonical_json_pretty(&export).expect("schema is serializable")
    }
}
