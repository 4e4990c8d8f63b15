//! Embedded labeled property graph.
//!
//! Nodes carry a label, an identity key and scalar properties; edges are typed
//! and unique per `(edge_type, source, target)`. Three secondary indexes are
//! maintained alongside the primary tables:
//!
//! - label -> node ids
//! - (label, identity key) -> node id
//! - (label, normalized `name` property) -> node ids
//!
//! plus outgoing/incoming adjacency. [`PropertyGraph::audit`] rebuilds all of
//! them from scratch and reports any divergence.

mod query;
mod snapshot;

pub use query::{
    compare, dataset_profile, facet_values, find_datasets_by, locate_files, resolve_dataset, ComparedDataset,
    ComparisonRow, ComparisonTable, DatasetProfile, EntityRef, ProfileGroup, QueryError,
};
pub use snapshot::{load, save, SNAPSHOT_MAGIC};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::normalize_name;

pub const DATASET_LABEL: &str = "Dataset";

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("node {0} does not exist")]
    NodeNotFound(NodeId),
    #[error("edge {edge_type} {from} -> {target} references a missing node")]
    DanglingEdge { edge_type: String, from: NodeId, target: NodeId },
    #[error("property {key} on {node} is not a finite number")]
    NonFiniteProperty { node: NodeId, key: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt graph store: {0}")]
    CorruptStore(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    /// Node ids are derived from identity so that re-ingesting the same
    /// content always lands on the same id.
    pub fn for_key(label: &str, key: &str) -> Self {
        NodeId(format!("{label}:{key}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// Scalar property value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropertyValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl PropertyValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropertyValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            PropertyValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Plain-text rendering used for filter comparison and answer templates.
    pub fn render(&self) -> String {
        match self {
            PropertyValue::Bool(b) => b.to_string(),
            PropertyValue::Int(i) => i.to_string(),
            PropertyValue::Float(x) => x.to_string(),
            PropertyValue::Str(s) => s.clone(),
        }
    }

    fn is_finite(&self) -> bool {
        !matches!(self, PropertyValue::Float(x) if !x.is_finite())
    }
}

impl From<&str> for PropertyValue {
    fn from(s: &str) -> Self {
        PropertyValue::Str(s.to_string())
    }
}

impl From<String> for PropertyValue {
    fn from(s: String) -> Self {
        PropertyValue::Str(s)
    }
}

impl From<i64> for PropertyValue {
    fn from(v: i64) -> Self {
        PropertyValue::Int(v)
    }
}

impl From<bool> for PropertyValue {
    fn from(v: bool) -> Self {
        PropertyValue::Bool(v)
    }
}

pub type Properties = BTreeMap<String, PropertyValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    /// Identity key within the label: a DOI for datasets, a normalized name
    /// for shared entities, `doi/name` for dataset-scoped nodes.
    pub key: String,
    pub properties: Properties,
}

impl Node {
    pub fn property(&self, key: &str) -> Option<&PropertyValue> {
        self.properties.get(key)
    }

    pub fn str_property(&self, key: &str) -> Option<&str> {
        self.properties.get(key).and_then(PropertyValue::as_str)
    }

    /// Human-facing name: `name`, then `title`, then `path`, then the key.
    pub fn display_name(&self) -> &str {
        ["name", "title", "path"].iter().find_map(|k| self.str_property(k)).unwrap_or(&self.key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub edge_type: String,
    pub source: NodeId,
    pub target: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub edge_type: String,
    pub source: NodeId,
    pub target: NodeId,
}

impl Edge {
    pub fn key(&self) -> EdgeKey {
        EdgeKey { edge_type: self.edge_type.clone(), source: self.source.clone(), target: self.target.clone() }
    }
}

/// Canonical, index-free form of a graph: nodes sorted by id, edges sorted by
/// `(edge_type, source, target)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Default)]
pub struct PropertyGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeKey, Edge>,
    by_label: BTreeMap<String, BTreeSet<NodeId>>,
    by_key: BTreeMap<(String, String), NodeId>,
    by_name: BTreeMap<(String, String), BTreeSet<NodeId>>,
    out_edges: BTreeMap<NodeId, BTreeSet<EdgeKey>>,
    in_edges: BTreeMap<NodeId, BTreeSet<EdgeKey>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upserted {
    Created,
    Reused,
}

impl PropertyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn nodes_with_label<'a>(&'a self, label: &str) -> impl Iterator<Item = &'a Node> + 'a {
        self.by_label.get(label).into_iter().flatten().filter_map(move |id| self.nodes.get(id))
    }

    pub fn node_by_key(&self, label: &str, key: &str) -> Option<&Node> {
        self.by_key.get(&(label.to_string(), key.to_string())).and_then(|id| self.nodes.get(id))
    }

    /// Nodes of `label` whose `name` property normalizes to the same form as `name`.
    pub fn nodes_by_name<'a>(&'a self, label: &str, name: &str) -> impl Iterator<Item = &'a Node> + 'a {
        self.by_name
            .get(&(label.to_string(), normalize_name(name)))
            .into_iter()
            .flatten()
            .filter_map(move |id| self.nodes.get(id))
    }

    pub fn outgoing<'a>(&'a self, id: &NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.out_edges.get(id).into_iter().flatten().filter_map(move |k| self.edges.get(k))
    }

    pub fn incoming<'a>(&'a self, id: &NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.in_edges.get(id).into_iter().flatten().filter_map(move |k| self.edges.get(k))
    }

    pub fn has_edge(&self, edge_type: &str, source: &NodeId, target: &NodeId) -> bool {
        self.edges.contains_key(&EdgeKey {
            edge_type: edge_type.to_string(),
            source: source.clone(),
            target: target.clone(),
        })
    }

    /// Creates the node identified by `(label, key)` or merges `properties`
    /// into the existing one.
    pub fn upsert_node(
        &mut self,
        label: &str,
        key: &str,
        properties: Properties,
    ) -> Result<(NodeId, Upserted), GraphError> {
        let id = NodeId::for_key(label, key);
        if let Some((k, _)) = properties.iter().find(|(_, v)| !v.is_finite()) {
            return Err(GraphError::NonFiniteProperty { node: id, key: k.clone() });
        }
        if self.nodes.contains_key(&id) {
            for (k, v) in properties {
                self.set_property(&id, &k, v)?;
            }
            return Ok((id, Upserted::Reused));
        }
        let node = Node { id: id.clone(), label: label.to_string(), key: key.to_string(), properties };
        self.index_node(&node);
        self.nodes.insert(id.clone(), node);
        Ok((id, Upserted::Created))
    }

    pub fn set_property(&mut self, id: &NodeId, key: &str, value: PropertyValue) -> Result<(), GraphError> {
        if !value.is_finite() {
            return Err(GraphError::NonFiniteProperty { node: id.clone(), key: key.to_string() });
        }
        let node = self.nodes.get(id).cloned().ok_or_else(|| GraphError::NodeNotFound(id.clone()))?;
        self.unindex_node(&node);
        let node = self.nodes.get_mut(id).expect("checked above");
        node.properties.insert(key.to_string(), value);
        let node = node.clone();
        self.index_node(&node);
        Ok(())
    }

    pub fn remove_property(&mut self, id: &NodeId, key: &str) -> Result<Option<PropertyValue>, GraphError> {
        let node = self.nodes.get(id).cloned().ok_or_else(|| GraphError::NodeNotFound(id.clone()))?;
        self.unindex_node(&node);
        let node = self.nodes.get_mut(id).expect("checked above");
        let old = node.properties.remove(key);
        let node = node.clone();
        self.index_node(&node);
        Ok(old)
    }

    /// Adds a typed edge; returns [`Upserted::Reused`] when it already existed.
    pub fn add_edge(&mut self, edge_type: &str, source: &NodeId, target: &NodeId) -> Result<Upserted, GraphError> {
        if !self.nodes.contains_key(source) || !self.nodes.contains_key(target) {
            return Err(GraphError::DanglingEdge {
                edge_type: edge_type.to_string(),
                from: source.clone(),
                target: target.clone(),
            });
        }
        let key = EdgeKey { edge_type: edge_type.to_string(), source: source.clone(), target: target.clone() };
        if self.edges.contains_key(&key) {
            return Ok(Upserted::Reused);
        }
        let edge = Edge {
            id: format!("{edge_type}:{source}->{target}"),
            edge_type: edge_type.to_string(),
            source: source.clone(),
            target: target.clone(),
        };
        self.out_edges.entry(source.clone()).or_default().insert(key.clone());
        self.in_edges.entry(target.clone()).or_default().insert(key.clone());
        self.edges.insert(key, edge);
        Ok(Upserted::Created)
    }

    pub fn remove_edge(&mut self, edge_type: &str, source: &NodeId, target: &NodeId) -> bool {
        let key = EdgeKey { edge_type: edge_type.to_string(), source: source.clone(), target: target.clone() };
        if self.edges.remove(&key).is_none() {
            return false;
        }
        remove_from_set(&mut self.out_edges, source, &key);
        remove_from_set(&mut self.in_edges, target, &key);
        true
    }

    /// Removes a node together with every incident edge.
    pub fn remove_node(&mut self, id: &NodeId) -> Option<Node> {
        let node = self.nodes.get(id)?.clone();
        let incident: Vec<EdgeKey> =
            self.out_edges.get(id).into_iter().chain(self.in_edges.get(id)).flatten().cloned().collect();
        for k in incident {
            self.remove_edge(&k.edge_type, &k.source, &k.target);
        }
        self.unindex_node(&node);
        self.out_edges.remove(id);
        self.in_edges.remove(id);
        self.nodes.remove(id)
    }

    fn index_node(&mut self, node: &Node) {
        self.by_label.entry(node.label.clone()).or_default().insert(node.id.clone());
        self.by_key.insert((node.label.clone(), node.key.clone()), node.id.clone());
        if let Some(name) = node.str_property("name") {
            self.by_name.entry((node.label.clone(), normalize_name(name))).or_default().insert(node.id.clone());
        }
    }

    fn unindex_node(&mut self, node: &Node) {
        remove_from_set(&mut self.by_label, &node.label, &node.id);
        self.by_key.remove(&(node.label.clone(), node.key.clone()));
        if let Some(name) = node.str_property("name") {
            remove_from_set(&mut self.by_name, &(node.label.clone(), normalize_name(name)), &node.id);
        }
    }

    pub fn to_canonical(&self) -> CanonicalGraph {
        CanonicalGraph { nodes: self.nodes.values().cloned().collect(), edges: self.edges.values().cloned().collect() }
    }

    /// Canonical JSON serialization (sorted keys, sorted tables).
    pub fn canonical_json(&self) -> String {
        crate::text::to_canonical_json(&self.to_canonical()).expect("graph values are finite")
    }

    pub fn from_canonical(canonical: CanonicalGraph) -> Result<Self, GraphError> {
        let mut graph = PropertyGraph::new();
        for node in canonical.nodes {
            if node.id != NodeId::for_key(&node.label, &node.key) {
                return Err(GraphError::CorruptStore(format!("node id {} does not match its label/key", node.id)));
            }
            if graph.nodes.contains_key(&node.id) {
                return Err(GraphError::CorruptStore(format!("duplicate node {}", node.id)));
            }
            graph.upsert_node(&node.label, &node.key, node.properties)?;
        }
        for edge in canonical.edges {
            graph
                .add_edge(&edge.edge_type, &edge.source, &edge.target)
                .map_err(|e| GraphError::CorruptStore(e.to_string()))?;
        }
        Ok(graph)
    }

    /// Rebuilds every index from the node/edge tables and lists divergences.
    pub fn audit(&self) -> Vec<String> {
        let mut rebuilt = PropertyGraph::new();
        let mut problems = Vec::new();
        for node in self.nodes.values() {
            rebuilt.index_node(node);
            rebuilt.nodes.insert(node.id.clone(), node.clone());
        }
        for (key, edge) in &self.edges {
            if &edge.key() != key {
                problems.push(format!("edge {} stored under a mismatched key", edge.id));
            }
            if !self.nodes.contains_key(&edge.source) || !self.nodes.contains_key(&edge.target) {
                problems.push(format!("dangling edge {}", edge.id));
            }
            rebuilt.out_edges.entry(edge.source.clone()).or_default().insert(key.clone());
            rebuilt.in_edges.entry(edge.target.clone()).or_default().insert(key.clone());
        }
        let strip = |m: &BTreeMap<NodeId, BTreeSet<EdgeKey>>| {
            m.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (k.clone(), v.clone())).collect::<BTreeMap<_, _>>()
        };
        if rebuilt.by_label != non_empty(&self.by_label) {
            problems.push("label index diverges from node table".into());
        }
        if rebuilt.by_key != self.by_key {
            problems.push("key index diverges from node table".into());
        }
        if rebuilt.by_name != non_empty(&self.by_name) {
            problems.push("name index diverges from node table".into());
        }
        if strip(&rebuilt.out_edges) != strip(&self.out_edges) {
            problems.push("outgoing adjacency diverges from edge table".into());
        }
        if strip(&rebuilt.in_edges) != strip(&self.in_edges) {
            problems.push("incoming adjacency diverges from edge table".into());
        }
        problems
    }
}

fn non_empty<K: Ord + Clone>(m: &BTreeMap<K, BTreeSet<NodeId>>) -> BTreeMap<K, BTreeSet<NodeId>> {
    m.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (k.clone(), v.clone())).collect()
}

fn remove_from_set<K: Ord, V: Ord>(map: &mut BTreeMap<K, BTreeSet<V>>, key: &K, value: &V) {
    if let Some(set) = map.get_mut(key) {
        set.remove(value);
        if set.is_empty() {
            map.remove(key);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn props(pairs: &[(&str, &str)]) -> Properties {
        pairs.iter().map(|(k, v)| (k.to_string(), PropertyValue::from(*v))).collect()
    }

    #[test]
    fn upsert_is_keyed_by_identity() {
        let mut g = PropertyGraph::new();
        let (a, s1) =
            g.upsert_node("RobotModel", "boston dynamics spot", props(&[("name", "Boston Dynamics Spot")])).unwrap();
        let (b, s2) =
            g.upsert_node("RobotModel", "boston dynamics spot", props(&[("name", "Boston Dynamics Spot")])).unwrap();
        assert_eq!(a, b);
        assert_eq!((s1, s2), (Upserted::Created, Upserted::Reused));
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.nodes_by_name("RobotModel", "boston  DYNAMICS spot").count(), 1);
    }

    #[test]
    fn edges_are_unique_and_never_dangle() {
        let mut g = PropertyGraph::new();
        let (d, _) = g.upsert_node("Dataset", "doi:1", props(&[("doi", "doi:1")])).unwrap();
        let (r, _) = g.upsert_node("RobotModel", "spot", props(&[("name", "Spot")])).unwrap();
        assert_eq!(g.add_edge("usesModel", &d, &r).unwrap(), Upserted::Created);
        assert_eq!(g.add_edge("usesModel", &d, &r).unwrap(), Upserted::Reused);
        assert_eq!(g.edge_count(), 1);
        let missing = NodeId::from("Sensor:none");
        assert!(matches!(g.add_edge("hasSensor", &d, &missing), Err(GraphError::DanglingEdge { .. })));
        g.remove_node(&r);
        assert_eq!(g.edge_count(), 0);
        assert!(g.audit().is_empty());
    }

    #[test]
    fn renaming_updates_the_name_index() {
        let mut g = PropertyGraph::new();
        let (id, _) = g.upsert_node("Sensor", "lidar", props(&[("name", "LiDAR")])).unwrap();
        g.set_property(&id, "name", "Ouster LiDAR".into()).unwrap();
        assert_eq!(g.nodes_by_name("Sensor", "lidar").count(), 0);
        assert_eq!(g.nodes_by_name("Sensor", "ouster lidar").count(), 1);
        g.remove_property(&id, "name").unwrap();
        assert_eq!(g.nodes_by_name("Sensor", "ouster lidar").count(), 0);
        assert!(g.audit().is_empty());
    }

    #[test]
    fn non_finite_floats_are_rejected() {
        let mut g = PropertyGraph::new();
        let mut p = Properties::new();
        p.insert("score".into(), PropertyValue::Float(f64::NAN));
        assert!(matches!(g.upsert_node("Dataset", "doi:1", p), Err(GraphError::NonFiniteProperty { .. })));
    }
}
