//! Answer composition. Grounded mode answers structured intents from graph
//! queries through fixed templates and free-form questions from retrieved
//! chunks; LLM mode hands the same facts and chunks to a completion provider.
//! Either way every answer lists the facts or chunks it was built from.

use serde::{Deserialize, Serialize};

use super::{parse_intent, CompletionProvider, EmbeddingProvider, Intent, RetrievalError, VectorIndex};
use crate::datamodel::DataModelSchema;
use crate::graph::{compare, find_datasets_by, locate_files, resolve_dataset, Edge, Node, NodeId, PropertyGraph};

pub const NO_ANSWER: &str = "No grounded information found.";
pub const MAX_CONTEXT_FACTS: usize = 12;
pub const MAX_CONTEXT_CHUNKS: usize = 6;
const COMPLETION_MAX_TOKENS: usize = 512;
const SNIPPET_WORDS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerMode {
    #[default]
    Grounded,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Edge { source: String, edge_type: String, target: String },
    Property { node: String, key: String, value: String },
    Chunk { chunk_id: String },
}

impl Source {
    fn edge(e: &Edge) -> Self {
        Source::Edge { source: e.source.to_string(), edge_type: e.edge_type.clone(), target: e.target.to_string() }
    }

    /// One-line rendering used as LLM context.
    pub fn render(&self, graph: &PropertyGraph) -> String {
        let name = |id: &str| {
            graph
                .node(&NodeId::from(id))
                .map(|n| format!("{} \"{}\"", n.label, n.display_name()))
                .unwrap_or_else(|| id.to_string())
        };
        match self {
            Source::Edge { source, edge_type, target } => {
                format!("({}) -[{edge_type}]-> ({})", name(source), name(target))
            }
            Source::Property { node, key, value } => format!("({}) {key} = {value}", name(node)),
            Source::Chunk { chunk_id } => format!("[{chunk_id}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedAnswer {
    pub text: String,
    pub sources: Vec<Source>,
    pub intent: Intent,
    pub mode: AnswerMode,
    /// Set when nothing grounded was found; `text` is then [`NO_ANSWER`].
    pub empty: bool,
}

/// What an answer is computed from.
pub struct Knowledge<'a> {
    pub graph: &'a PropertyGraph,
    pub schema: &'a DataModelSchema,
    pub index: &'a VectorIndex,
    pub embedder: &'a dyn EmbeddingProvider,
    pub completer: Option<&'a dyn CompletionProvider>,
    pub top_k: usize,
}

/// Human wording for an edge type in answer text.
pub fn edge_noun(edge_type: &str) -> &str {
    match edge_type {
        "usesModel" => "robot model",
        "hasRobot" => "robot",
        "hasSensor" => "sensors",
        "usesControl" => "control mode",
        "usesMethod" => "research method",
        "conductedAt" => "location",
        "hasSetting" => "setting",
        "hasSession" => "sessions",
        "hasCondition" => "conditions",
        "involves" => "participants",
        "usesInstrument" => "instruments",
        "containsFile" => "files",
        "describedBy" => "publications",
        "producedBy" => "lab",
        "approvedBy" => "ethics approval",
        "hasQuality" => "quality statement",
        other => other,
    }
}

/// Edges of `edge_type` leaving the dataset or a node it links to directly,
/// sorted and deduplicated.
pub fn facet_edges<'a>(graph: &'a PropertyGraph, dataset: &NodeId, edge_type: &str) -> Vec<&'a Edge> {
    let mut sources = vec![dataset.clone()];
    sources.extend(graph.outgoing(dataset).map(|e| e.target.clone()));
    let mut out: Vec<&Edge> = sources
        .iter()
        .flat_map(|s| graph.outgoing(s).filter(|e| e.edge_type == edge_type).collect::<Vec<_>>())
        .collect();
    out.sort_by_key(|e| e.key());
    out.dedup_by(|a, b| a.key() == b.key());
    out
}

fn names(graph: &PropertyGraph, edges: &[&Edge]) -> Vec<String> {
    let mut v: Vec<String> =
        edges.iter().filter_map(|e| graph.node(&e.target)).map(|n| n.display_name().to_string()).collect();
    v.sort();
    v.dedup();
    v
}

fn title_of(n: &Node) -> String {
    let doi = n.str_property("doi").unwrap_or(&n.key);
    match n.str_property("title") {
        Some(t) => format!("{t} ({doi})"),
        None => doi.to_string(),
    }
}

fn dataset(graph: &PropertyGraph, doi: &str) -> Result<Node, RetrievalError> {
    resolve_dataset(graph, doi)
        .cloned()
        .ok_or_else(|| RetrievalError::Query(crate::graph::QueryError::DatasetNotFound(vec![doi.to_string()])))
}

/// Template text and supporting facts for a structured intent; `None` text
/// when the graph holds nothing relevant.
fn graph_answer(intent: &Intent, k: &Knowledge) -> Result<(Option<String>, Vec<Source>), RetrievalError> {
    let g = k.graph;
    match intent {
        Intent::WhichDatasets { label, name } => {
            let hits = find_datasets_by(g, k.schema, label, name)?;
            let mut sources = Vec::new();
            let mut parts = Vec::new();
            for ds in &hits {
                let linking = g
                    .outgoing(&ds.id)
                    .chain(g.incoming(&ds.id))
                    .filter(|e| {
                        let other = if e.source == ds.id { &e.target } else { &e.source };
                        g.node(other).is_some_and(|n| {
                            n.label == *label
                                && crate::text::normalize_name(n.display_name()) == crate::text::normalize_name(name)
                        })
                    })
                    .map(Source::edge);
                sources.extend(linking);
                parts.push(title_of(ds));
            }
            let text =
                (!parts.is_empty()).then(|| format!("Datasets linked to {label} \"{name}\": {}.", parts.join("; ")));
            Ok((text, sources))
        }
        Intent::Detail { doi, topic: Some(t) } => {
            let ds = dataset(g, doi)?;
            let edges = facet_edges(g, &ds.id, t);
            let values = names(g, &edges);
            let text = (!values.is_empty()).then(|| {
                let noun = edge_noun(t);
                let mut noun = noun.to_string();
                if let Some(first) = noun.get(..1) {
                    noun = first.to_uppercase() + &noun[1..];
                }
                format!("{noun} of {}: {}.", title_of(&ds), values.join(", "))
            });
            Ok((text, edges.into_iter().map(Source::edge).collect()))
        }
        Intent::Detail { doi, topic: None } => {
            let ds = dataset(g, doi)?;
            let mut sources = Vec::new();
            let mut text = title_of(&ds);
            if let Some(t) = ds.str_property("title") {
                sources.push(Source::Property { node: ds.id.to_string(), key: "title".into(), value: t.to_string() });
            }
            text.push('.');
            if let Some(l) = ds.str_property("license") {
                text.push_str(&format!(" License: {l}."));
                sources.push(Source::Property { node: ds.id.to_string(), key: "license".into(), value: l.to_string() });
            }
            let mut types: Vec<&str> = g.outgoing(&ds.id).map(|e| e.edge_type.as_str()).collect();
            types.sort();
            types.dedup();
            for t in types.into_iter().filter(|t| *t != "containsFile") {
                let edges: Vec<&Edge> = g.outgoing(&ds.id).filter(|e| e.edge_type == t).collect();
                text.push_str(&format!(" {}: {}.", edge_noun(t), names(g, &edges).join(", ")));
                sources.extend(edges.into_iter().map(Source::edge));
            }
            Ok((Some(text), sources))
        }
        Intent::Compare { dois, facets } => {
            let table = compare(g, k.schema, dois, (!facets.is_empty()).then_some(facets.as_slice()))?;
            let nodes: Vec<Node> = dois.iter().map(|d| dataset(g, d)).collect::<Result<_, _>>()?;
            let mut lines = Vec::new();
            let mut sources = Vec::new();
            for row in table.rows.iter().filter(|r| r.cells.iter().any(|c| !c.is_empty())) {
                let cells: Vec<String> = table
                    .datasets
                    .iter()
                    .zip(&row.cells)
                    .map(|(d, c)| {
                        let v = if c.is_empty() { "none recorded".to_string() } else { c.join(", ") };
                        format!("{}: {v}", if d.title.is_empty() { &d.doi } else { &d.title })
                    })
                    .collect();
                let verdict = if row.same { "same" } else { "different" };
                lines.push(format!("{} ({verdict}): {}", edge_noun(&row.facet), cells.join(" | ")));
                for n in &nodes {
                    sources.extend(facet_edges(g, &n.id, &row.facet).into_iter().map(Source::edge));
                }
            }
            let text = (!lines.is_empty()).then(|| lines.join("\n"));
            Ok((text, sources))
        }
        Intent::LocateFiles { doi, filters } => {
            let ds = dataset(g, doi)?;
            let files = locate_files(g, doi, filters)?;
            let sources: Vec<Source> = files
                .iter()
                .filter_map(|f| g.outgoing(&ds.id).find(|e| e.edge_type == "containsFile" && e.target == f.id))
                .map(Source::edge)
                .collect();
            let text = (!files.is_empty()).then(|| {
                let list: Vec<String> = files
                    .iter()
                    .map(|f| match f.str_property("access_url") {
                        Some(u) => format!("{} <{u}>", f.display_name()),
                        None => f.display_name().to_string(),
                    })
                    .collect();
                let filter_text = if filters.is_empty() {
                    String::new()
                } else {
                    let f: Vec<String> = filters.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    format!(" matching {}", f.join(", "))
                };
                format!("{} file(s) in {}{filter_text}: {}", files.len(), title_of(&ds), list.join("; "))
            });
            Ok((text, sources))
        }
        Intent::FreeForm { .. } => Ok((None, Vec::new())),
    }
}

fn relevant_chunks(query: &str, k: &Knowledge, n: usize) -> Result<Vec<super::ScoredChunk>, RetrievalError> {
    if k.index.is_empty() || n == 0 {
        return Ok(Vec::new());
    }
    Ok(k.index.retrieve(query, k.embedder, n)?.into_iter().filter(|s| s.score > 0.0).collect())
}

fn snippet(text: &str) -> String {
    let w: Vec<&str> = text.split_whitespace().collect();
    if w.len() <= SNIPPET_WORDS {
        w.join(" ")
    } else {
        format!("{} ...", w[..SNIPPET_WORDS].join(" "))
    }
}

fn empty_answer(intent: Intent, mode: AnswerMode) -> GroundedAnswer {
    GroundedAnswer { text: NO_ANSWER.to_string(), sources: Vec::new(), intent, mode, empty: true }
}

pub fn build_prompt(question: &str, facts: &[String], chunks: &[(String, String)]) -> String {
    let mut p = String::from(
        "Answer the question using only the graph facts and documents below. \
         If they do not contain the answer, say so.\n\nGraph facts:\n",
    );
    for f in facts {
        p.push_str(&format!("- {f}\n"));
    }
    p.push_str("\nDocuments:\n");
    for (id, text) in chunks {
        p.push_str(&format!("[{id}] {text}\n"));
    }
    p.push_str(&format!("\nQuestion: {question}\n"));
    p
}

/// Answers `query` in the given mode. Comparison questions that do not name
/// two known datasets fail with `AmbiguousComparison`.
pub fn answer(query: &str, k: &Knowledge, mode: AnswerMode) -> Result<GroundedAnswer, RetrievalError> {
    let intent = parse_intent(query, k.graph)?;
    answer_intent(query, intent, k, mode)
}

pub fn answer_intent(
    query: &str,
    intent: Intent,
    k: &Knowledge,
    mode: AnswerMode,
) -> Result<GroundedAnswer, RetrievalError> {
    let (text, mut facts) = graph_answer(&intent, k)?;
    match mode {
        AnswerMode::Grounded => {
            if let Intent::FreeForm { .. } = intent {
                let hits = relevant_chunks(query, k, k.top_k)?;
                if hits.is_empty() {
                    return Ok(empty_answer(intent, mode));
                }
                let text = hits
                    .iter()
                    .map(|h| {
                        let section = if h.chunk.section.is_empty() { "document" } else { &h.chunk.section };
                        format!("From {} ({section}): {}", h.chunk.source_doi, snippet(&h.chunk.text))
                    })
                    .collect::<Vec<_>>()
                    .join("\n");
                let sources = hits.into_iter().map(|h| Source::Chunk { chunk_id: h.chunk.id }).collect();
                return Ok(GroundedAnswer { text, sources, intent, mode, empty: false });
            }
            match text {
                Some(text) if !facts.is_empty() => {
                    Ok(GroundedAnswer { text, sources: facts, intent, mode, empty: false })
                }
                _ => Ok(empty_answer(intent, mode)),
            }
        }
        AnswerMode::Llm => {
            facts.truncate(MAX_CONTEXT_FACTS);
            let hits = relevant_chunks(query, k, MAX_CONTEXT_CHUNKS)?;
            if facts.is_empty() && hits.is_empty() {
                return Ok(empty_answer(intent, mode));
            }
            let completer = k.completer.ok_or_else(|| RetrievalError::Provider {
                chunk_id: None,
                message: "no completion provider configured".into(),
            })?;
            let rendered: Vec<String> = facts.iter().map(|f| f.render(k.graph)).collect();
            let docs: Vec<(String, String)> = hits.iter().map(|h| (h.chunk.id.clone(), h.chunk.text.clone())).collect();
            let prompt = build_prompt(query, &rendered, &docs);
            let reply = completer
                .complete(&prompt, COMPLETION_MAX_TOKENS)
                .map_err(|e| RetrievalError::Provider { chunk_id: None, message: e.0 })?;
            facts.extend(hits.into_iter().map(|h| Source::Chunk { chunk_id: h.chunk.id }));
            Ok(GroundedAnswer { text: reply, sources: facts, intent, mode, empty: false })
        }
    }
}

/// Sources that do not exist in the graph or index; empty when the answer
/// is fully grounded.
pub fn unverified_sources(answer: &GroundedAnswer, graph: &PropertyGraph, index: &VectorIndex) -> Vec<Source> {
    answer
        .sources
        .iter()
        .filter(|s| match s {
            Source::Edge { source, edge_type, target } => {
                !graph.has_edge(edge_type, &NodeId::from(source.as_str()), &NodeId::from(target.as_str()))
            }
            Source::Property { node, key, value } => graph
                .node(&NodeId::from(node.as_str()))
                .and_then(|n| n.property(key))
                .is_none_or(|v| v.render() != *value),
            Source::Chunk { chunk_id } => index.get(chunk_id).is_none(),
        })
        .cloned()
        .collect()
}
