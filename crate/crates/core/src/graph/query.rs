//! Read-only queries over the knowledge graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Node, NodeId, Properties, PropertyGraph, DATASET_LABEL};
use crate::datamodel::DataModelSchema;
use crate::harvester::canonical_doi;
use crate::text::normalize_numeric;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("unknown facet {0}")]
    UnknownFacet(String),
    #[error("dataset(s) not found: {}", .0.join(", "))]
    DatasetNotFound(Vec<String>),
    #[error("a comparison needs at least two datasets, got {0}")]
    TooFewDatasets(usize),
}

/// Looks a dataset node up by DOI. Accepts `doi:`-prefixed, bare and
/// resolver-URL forms, and falls back to a case-insensitive match.
pub fn resolve_dataset<'a>(graph: &'a PropertyGraph, doi: &str) -> Option<&'a Node> {
    let canonical = canonical_doi(doi);
    graph
        .node_by_key(DATASET_LABEL, &canonical)
        .or_else(|| graph.nodes_with_label(DATASET_LABEL).find(|n| n.key.eq_ignore_ascii_case(&canonical)))
}

fn dataset_doi(node: &Node) -> &str {
    node.str_property("doi").unwrap_or(&node.key)
}

/// Datasets with an edge (either direction) to a node of `label` named `name`,
/// sorted by DOI.
pub fn find_datasets_by<'a>(
    graph: &'a PropertyGraph,
    schema: &DataModelSchema,
    label: &str,
    name: &str,
) -> Result<Vec<&'a Node>, QueryError> {
    if !schema.has_node_label(label) {
        return Err(QueryError::UnknownLabel(label.to_string()));
    }
    let mut hits: BTreeMap<&str, &Node> = BTreeMap::new();
    for entity in graph.nodes_by_name(label, name) {
        let neighbours =
            graph.outgoing(&entity.id).map(|e| &e.target).chain(graph.incoming(&entity.id).map(|e| &e.source));
        for id in neighbours {
            if let Some(n) = graph.node(id).filter(|n| n.label == DATASET_LABEL) {
                hits.insert(dataset_doi(n), n);
            }
        }
    }
    Ok(hits.into_values().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRef {
    pub id: NodeId,
    pub label: String,
    pub name: String,
    pub properties: Properties,
}

impl EntityRef {
    fn of(node: &Node) -> Self {
        EntityRef {
            id: node.id.clone(),
            label: node.label.clone(),
            name: node.display_name().to_string(),
            properties: node.properties.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileGroup {
    pub edge_type: String,
    pub entities: Vec<EntityRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub doi: String,
    pub id: NodeId,
    pub properties: Properties,
    pub groups: Vec<ProfileGroup>,
}

impl DatasetProfile {
    pub fn group(&self, edge_type: &str) -> Option<&ProfileGroup> {
        self.groups.iter().find(|g| g.edge_type == edge_type)
    }
}

/// One-hop neighbourhood of a dataset grouped by edge type (sorted by edge
/// type, then entity name).
pub fn dataset_profile(graph: &PropertyGraph, doi: &str) -> Result<DatasetProfile, QueryError> {
    let node = resolve_dataset(graph, doi).ok_or_else(|| QueryError::DatasetNotFound(vec![doi.to_string()]))?;
    let mut groups: BTreeMap<&str, Vec<EntityRef>> = BTreeMap::new();
    let neighbours = graph
        .outgoing(&node.id)
        .map(|e| (e.edge_type.as_str(), &e.target))
        .chain(graph.incoming(&node.id).map(|e| (e.edge_type.as_str(), &e.source)));
    for (edge_type, id) in neighbours {
        if let Some(n) = graph.node(id) {
            groups.entry(edge_type).or_default().push(EntityRef::of(n));
        }
    }
    let groups = groups
        .into_iter()
        .map(|(edge_type, mut entities)| {
            entities.sort_by(|a, b| a.name.cmp(&b.name).then_with(|| a.id.cmp(&b.id)));
            ProfileGroup { edge_type: edge_type.to_string(), entities }
        })
        .collect();
    Ok(DatasetProfile {
        doi: dataset_doi(node).to_string(),
        id: node.id.clone(),
        properties: node.properties.clone(),
        groups,
    })
}

/// Nodes reached from the dataset through `edge_type`, either directly or
/// via one intermediate node the dataset links to (robot -> sensor,
/// session -> condition).
pub fn facet_values<'a>(graph: &'a PropertyGraph, dataset: &NodeId, edge_type: &str) -> Vec<&'a Node> {
    let mut out: BTreeMap<&NodeId, &Node> = BTreeMap::new();
    let mut frontier = vec![dataset];
    frontier.extend(graph.outgoing(dataset).map(|e| &e.target));
    for src in frontier {
        for e in graph.outgoing(src).filter(|e| e.edge_type == edge_type) {
            if let Some(n) = graph.node(&e.target) {
                out.insert(&n.id, n);
            }
        }
    }
    out.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparedDataset {
    pub doi: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub facet: String,
    /// One cell per dataset column: sorted entity names.
    pub cells: Vec<Vec<String>>,
    pub same: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub datasets: Vec<ComparedDataset>,
    pub rows: Vec<ComparisonRow>,
}

/// Facet-by-dataset comparison. `facets` defaults to every schema edge type.
pub fn compare(
    graph: &PropertyGraph,
    schema: &DataModelSchema,
    dois: &[String],
    facets: Option<&[String]>,
) -> Result<ComparisonTable, QueryError> {
    if dois.len() < 2 {
        return Err(QueryError::TooFewDatasets(dois.len()));
    }
    let resolved: Vec<Option<&Node>> = dois.iter().map(|d| resolve_dataset(graph, d)).collect();
    let missing: Vec<String> =
        dois.iter().zip(&resolved).filter(|(_, n)| n.is_none()).map(|(d, _)| d.clone()).collect();
    if !missing.is_empty() {
        return Err(QueryError::DatasetNotFound(missing));
    }
    let nodes: Vec<&Node> = resolved.into_iter().flatten().collect();
    let facets: Vec<String> = match facets {
        Some(f) if !f.is_empty() => {
            if let Some(bad) = f.iter().find(|f| schema.edge_type(f).is_none()) {
                return Err(QueryError::UnknownFacet(bad.clone()));
            }
            let set: BTreeSet<&String> = f.iter().collect();
            set.into_iter().cloned().collect()
        }
        _ => schema.edge_types().map(|e| e.name.clone()).collect(),
    };
    let rows = facets
        .into_iter()
        .map(|facet| {
            let cells: Vec<Vec<String>> = nodes
                .iter()
                .map(|n| {
                    facet_values(graph, &n.id, &facet)
                        .into_iter()
                        .map(|v| v.display_name().to_string())
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect()
                })
                .collect();
            let same = cells.windows(2).all(|w| w[0] == w[1]);
            ComparisonRow { facet, cells, same }
        })
        .collect();
    Ok(ComparisonTable {
        datasets: nodes
            .iter()
            .map(|n| ComparedDataset {
                doi: dataset_doi(n).to_string(),
                title: n.str_property("title").unwrap_or_default().to_string(),
            })
            .collect(),
        rows,
    })
}

/// DataFile nodes of a dataset whose properties satisfy every filter, sorted
/// by path. All-digit values compare without leading zeros ("1" == "01").
pub fn locate_files<'a>(
    graph: &'a PropertyGraph,
    doi: &str,
    filters: &BTreeMap<String, String>,
) -> Result<Vec<&'a Node>, QueryError> {
    let dataset = resolve_dataset(graph, doi).ok_or_else(|| QueryError::DatasetNotFound(vec![doi.to_string()]))?;
    let mut files: Vec<&Node> = graph
        .outgoing(&dataset.id)
        .filter(|e| e.edge_type == "containsFile")
        .filter_map(|e| graph.node(&e.target))
        .filter(|n| n.label == "DataFile")
        .filter(|n| {
            filters.iter().all(|(k, want)| {
                n.property(k).is_some_and(|v| normalize_numeric(&v.render()) == normalize_numeric(want))
            })
        })
        .collect();
    files.sort_by(|a, b| a.str_property("path").cmp(&b.str_property("path")).then_with(|| a.id.cmp(&b.id)));
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::builtin_schema;
    use crate::graph::PropertyValue;

    fn p(pairs: &[(&str, &str)]) -> Properties {
        pairs.iter().map(|(k, v)| (k.to_string(), PropertyValue::from(*v))).collect()
    }

    fn dataset(g: &mut PropertyGraph, doi: &str, title: &str) -> NodeId {
        g.upsert_node("Dataset", doi, p(&[("doi", doi), ("title", title)])).unwrap().0
    }

    fn entity(g: &mut PropertyGraph, label: &str, name: &str) -> NodeId {
        g.upsert_node(label, &crate::text::normalize_name(name), p(&[("name", name)])).unwrap().0
    }

    fn fixture() -> PropertyGraph {
        let mut g = PropertyGraph::new();
        let a = dataset(&mut g, "doi:10.1/A", "Alpha");
        let b = dataset(&mut g, "doi:10.1/B", "Beta");
        let spot = entity(&mut g, "RobotModel", "Boston Dynamics Spot");
        let jackal = entity(&mut g, "RobotModel", "Clearpath Jackal");
        let joy = entity(&mut g, "ControlMode", "joystick teleoperation");
        let auto = entity(&mut g, "ControlMode", "autonomous navigation");
        g.add_edge("usesModel", &a, &spot).unwrap();
        g.add_edge("usesModel", &b, &jackal).unwrap();
        g.add_edge("usesControl", &a, &joy).unwrap();
        g.add_edge("usesControl", &b, &auto).unwrap();
        for (path, session, modality) in [
            ("s01_p01_video.mp4", "01", "video"),
            ("s01_p01_audio.wav", "01", "audio"),
            ("s02_p01_video.mp4", "02", "video"),
        ] {
            let (f, _) = g
                .upsert_node(
                    "DataFile",
                    &format!("doi:10.1/A/{path}"),
                    p(&[("path", path), ("session", session), ("modality", modality)]),
                )
                .unwrap();
            g.add_edge("containsFile", &a, &f).unwrap();
        }
        g
    }

    #[test]
    fn which_datasets_use_spot() {
        let g = fixture();
        let s = builtin_schema();
        let hits = find_datasets_by(&g, &s, "RobotModel", "boston dynamics  spot").unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].str_property("doi"), Some("doi:10.1/A"));
        assert!(find_datasets_by(&PropertyGraph::new(), &s, "RobotModel", "x").unwrap().is_empty());
        assert_eq!(
            find_datasets_by(&g, &s, "Spaceship", "x").unwrap_err(),
            QueryError::UnknownLabel("Spaceship".into())
        );
    }

    #[test]
    fn profile_groups_by_edge_type() {
        let mut g = fixture();
        let prof = dataset_profile(&g, "10.1/A").unwrap();
        let models = prof.group("usesModel").unwrap();
        assert_eq!(models.entities[0].name, "Boston Dynamics Spot");
        let kinds: Vec<_> = prof.groups.iter().map(|g| g.edge_type.as_str()).collect();
        assert_eq!(kinds, ["containsFile", "usesControl", "usesModel"]);
        assert_eq!(
            dataset_profile(&g, "doi:missing").unwrap_err(),
            QueryError::DatasetNotFound(vec!["doi:missing".into()])
        );
        dataset(&mut g, "doi:10.1/C", "Lonely");
        assert!(dataset_profile(&g, "doi:10.1/C").unwrap().groups.is_empty());
    }

    #[test]
    fn comparison_flags() {
        let g = fixture();
        let s = builtin_schema();
        let dois = vec!["doi:10.1/A".to_string(), "doi:10.1/B".to_string()];
        let t = compare(&g, &s, &dois, Some(&["usesControl".to_string()])).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(!t.rows[0].same);
        assert_eq!(t.rows[0].cells[0], vec!["joystick teleoperation"]);
        assert_eq!(t.rows[0].cells[1], vec!["autonomous navigation"]);

        let selfie = compare(&g, &s, &[dois[0].clone(), dois[0].clone()], None).unwrap();
        assert_eq!(selfie.rows.len(), s.edge_types().count());
        assert!(selfie.rows.iter().all(|r| r.same));

        let err = compare(&g, &s, &[dois[0].clone(), "doi:missing".into()], None).unwrap_err();
        assert_eq!(err, QueryError::DatasetNotFound(vec!["doi:missing".into()]));
        assert_eq!(compare(&g, &s, &dois[..1], None).unwrap_err(), QueryError::TooFewDatasets(1));
        assert!(matches!(compare(&g, &s, &dois, Some(&["warpDrive".to_string()])), Err(QueryError::UnknownFacet(_))));
    }

    #[test]
    fn locate_with_zero_pad_insensitive_filters() {
        let g = fixture();
        let mut f = BTreeMap::new();
        f.insert("modality".to_string(), "video".to_string());
        f.insert("session".to_string(), "1".to_string());
        let hits = locate_files(&g, "doi:10.1/A", &f).unwrap();
        let paths: Vec<_> = hits.iter().map(|n| n.str_property("path").unwrap()).collect();
        assert_eq!(paths, ["s01_p01_video.mp4"]);
        assert_eq!(locate_files(&g, "doi:10.1/A", &BTreeMap::new()).unwrap().len(), 3);
        let mut rain = BTreeMap::new();
        rain.insert("weather".to_string(), "rain".to_string());
        assert!(locate_files(&g, "doi:10.1/A", &rain).unwrap().is_empty());
    }
}
