//! Rule-based query intent parsing.
//!
//! Queries are folded (lowercase, punctuation to spaces) and scanned for
//! dataset names, entity names, topic words and cue words. Dataset names are
//! matched against a small alias set per dataset: the title, the title
//! without a trailing "study"/"dataset"/"data"/"corpus", the part before a
//! colon, any curated aliases, and the DOI. Aliases shared by more than one
//! dataset are ignored rather than guessed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::graph::{Node, PropertyGraph, DATASET_LABEL};
use crate::text::{fold_for_matching, normalize_numeric};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Intent {
    WhichDatasets {
        label: String,
        name: String,
    },
    Detail {
        doi: String,
        topic: Option<String>,
    },
    /// `dois` sorted; `facets` empty means every facet.
    Compare {
        dois: Vec<String>,
        facets: Vec<String>,
    },
    LocateFiles {
        doi: String,
        filters: BTreeMap<String, String>,
    },
    FreeForm {
        text: String,
    },
}

/// Topic words and the edge type they ask about. A trailing `*` marks a
/// stem ("teleoperat*" matches "teleoperated").
const TOPICS: &[(&str, &str)] = &[
    ("robot model", "usesModel"),
    ("model", "usesModel"),
    ("robot platform", "hasRobot"),
    ("robot", "hasRobot"),
    ("platform", "hasRobot"),
    ("sensor", "hasSensor"),
    ("lidar", "hasSensor"),
    ("camera", "hasSensor"),
    ("control mode", "usesControl"),
    ("control", "usesControl"),
    ("teleoperat*", "usesControl"),
    ("autonom*", "usesControl"),
    ("participant", "involves"),
    ("people", "involves"),
    ("research method", "usesMethod"),
    ("method", "usesMethod"),
    ("methodology", "usesMethod"),
    ("instrument", "usesInstrument"),
    ("survey", "usesInstrument"),
    ("questionnaire", "usesInstrument"),
    ("interview", "usesInstrument"),
    ("condition", "hasCondition"),
    ("location", "conductedAt"),
    ("where", "conductedAt"),
    ("setting", "hasSetting"),
    ("environment", "hasSetting"),
    ("session", "hasSession"),
    ("publication", "describedBy"),
    ("paper", "describedBy"),
    ("lab", "producedBy"),
    ("ethics", "approvedBy"),
    ("quality", "hasQuality"),
];

const COMPARE_CUES: &[&str] = &[
    "difference",
    "differences",
    "differ",
    "differs",
    "different",
    "compare",
    "compared",
    "comparing",
    "comparison",
    "versus",
    "vs",
    "contrast",
];
const COLLECTION_CUES: &[&str] = &["datasets", "studies", "collections", "corpora"];
const FILE_CUES: &[&str] = &["file", "files", "download", "recordings"];
const TITLE_SUFFIXES: &[&str] = &["study", "dataset", "data", "corpus"];

/// File properties that are metadata, not naming-convention tokens.
const STRUCTURAL_FILE_KEYS: &[&str] = &["path", "size", "content_type", "access_url", "checksum", "pattern"];

fn words(s: &str) -> Vec<String> {
    fold_for_matching(s).split(' ').filter(|w| !w.is_empty()).map(String::from).collect()
}

fn word_eq(query_word: &str, pattern_word: &str) -> bool {
    if let Some(stem) = pattern_word.strip_suffix('*') {
        return query_word.starts_with(stem);
    }
    query_word == pattern_word || query_word.strip_prefix(pattern_word).is_some_and(|rest| rest == "s" || rest == "es")
}

fn occurrences(query: &[String], pattern: &[String], exact: bool) -> Vec<usize> {
    if pattern.is_empty() || pattern.len() > query.len() {
        return Vec::new();
    }
    (0..=query.len() - pattern.len())
        .filter(|&i| {
            pattern.iter().enumerate().all(|(j, p)| {
                let q = &query[i + j];
                if exact {
                    q == p
                } else {
                    word_eq(q, p)
                }
            })
        })
        .collect()
}

pub fn dataset_aliases(node: &Node) -> Vec<String> {
    let mut out = BTreeSet::new();
    let title = node.str_property("title").unwrap_or_default();
    let folded = fold_for_matching(title);
    if !folded.is_empty() {
        let mut w: Vec<&str> = folded.split(' ').collect();
        out.insert(folded.clone());
        while w.len() > 1 && TITLE_SUFFIXES.contains(w.last().expect("non-empty")) {
            w.pop();
            out.insert(w.join(" "));
        }
    }
    if let Some((head, _)) = title.split_once(':') {
        let h = fold_for_matching(head);
        if !h.is_empty() {
            out.insert(h);
        }
    }
    if let Some(aliases) = node.str_property("aliases") {
        for a in aliases.split(" | ") {
            let a = fold_for_matching(a);
            if !a.is_empty() {
                out.insert(a);
            }
        }
    }
    let doi = node.str_property("doi").unwrap_or(&node.key);
    out.insert(fold_for_matching(doi));
    if let Some(bare) = doi.strip_prefix("doi:") {
        out.insert(fold_for_matching(bare));
    }
    out.into_iter().collect()
}

fn dataset_doi(node: &Node) -> String {
    node.str_property("doi").unwrap_or(&node.key).to_string()
}

/// Dataset DOIs mentioned in the query, in order of first mention, and the
/// query words with those mentions blanked out.
pub fn match_datasets(query: &str, graph: &PropertyGraph) -> (Vec<String>, Vec<String>) {
    let mut q = words(query);
    let mut owners: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for n in graph.nodes_with_label(DATASET_LABEL) {
        for a in dataset_aliases(n) {
            owners.entry(a).or_default().insert(dataset_doi(n));
        }
    }
    // (start, len, doi), longest first.
    let mut spans: Vec<(usize, usize, String)> = Vec::new();
    for (alias, dois) in &owners {
        if dois.len() != 1 {
            continue;
        }
        let pat: Vec<String> = alias.split(' ').map(String::from).collect();
        for start in occurrences(&q, &pat, true) {
            spans.push((start, pat.len(), dois.iter().next().expect("one owner").clone()));
        }
    }
    spans.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)).then(a.2.cmp(&b.2)));
    let mut taken = vec![false; q.len()];
    let mut chosen: Vec<(usize, String)> = Vec::new();
    for (start, len, doi) in spans {
        if taken[start..start + len].iter().any(|t| *t) {
            continue;
        }
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        chosen.push((start, doi));
    }
    chosen.sort();
    let mut dois = Vec::new();
    for (_, d) in chosen {
        if !dois.contains(&d) {
            dois.push(d);
        }
    }
    for (w, t) in q.iter_mut().zip(&taken) {
        if *t {
            w.clear();
        }
    }
    (dois, q)
}

/// The most specific topic mentioned: most words, then earliest mention,
/// then lexicon order.
fn find_topic(q: &[String]) -> Option<String> {
    let mut best: Option<(usize, usize, usize)> = None;
    for (i, (phrase, _)) in TOPICS.iter().enumerate() {
        let pat: Vec<String> = phrase.split(' ').map(String::from).collect();
        if let Some(&pos) = occurrences(q, &pat, false).first() {
            let cand = (pat.len(), pos, i);
            let better = match best {
                None => true,
                Some((n, p, j)) => cand.0 > n || (cand.0 == n && (cand.1, cand.2) < (p, j)),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.map(|(_, _, i)| TOPICS[i].1.to_string())
}

/// Longest entity name (not a dataset, file or session) mentioned.
fn find_entity(q: &[String], graph: &PropertyGraph) -> Option<(String, String)> {
    let mut best: Option<(usize, String, String)> = None;
    for n in graph.nodes() {
        if matches!(n.label.as_str(), "Dataset" | "DataFile" | "ExperimentSession") {
            continue;
        }
        let Some(name) = n.str_property("name") else { continue };
        let pat = words(name);
        if pat.is_empty() || occurrences(q, &pat, false).is_empty() {
            continue;
        }
        let cand = (pat.len(), n.label.clone(), name.to_string());
        let better = match &best {
            None => true,
            Some((len, label, nm)) => cand.0 > *len || (cand.0 == *len && (&cand.1, &cand.2) < (label, nm)),
        };
        if better {
            best = Some(cand);
        }
    }
    best.map(|(_, l, n)| (l, n))
}

/// `<key> <value>` pairs and bare non-numeric values naming file tokens.
fn file_filters(q: &[String], graph: &PropertyGraph, doi: &str) -> BTreeMap<String, String> {
    let mut known: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    if let Some(ds) = crate::graph::resolve_dataset(graph, doi) {
        let files =
            graph.outgoing(&ds.id).filter(|e| e.edge_type == "containsFile").filter_map(|e| graph.node(&e.target));
        for f in files {
            for (k, v) in &f.properties {
                if !STRUCTURAL_FILE_KEYS.contains(&k.as_str()) {
                    known.entry(k.clone()).or_default().insert(v.render());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (key, values) in &known {
        let key_words = words(key);
        'values: for v in values {
            let vw = words(v);
            if vw.is_empty() {
                continue;
            }
            let keyed: Vec<String> = key_words.iter().chain(&vw).cloned().collect();
            for start in occurrences(q, &key_words, false) {
                let after = start + key_words.len();
                if vw.len() == 1 && q.get(after).is_some_and(|w| normalize_numeric(w) == normalize_numeric(&vw[0])) {
                    out.insert(key.clone(), v.clone());
                    break 'values;
                }
            }
            let numeric = vw.iter().all(|w| w.bytes().all(|b| b.is_ascii_digit()));
            if !occurrences(q, &keyed, false).is_empty() || (!numeric && !occurrences(q, &vw, false).is_empty()) {
                out.insert(key.clone(), v.clone());
                break;
            }
        }
    }
    out
}

fn has_any(q: &[String], cues: &[&str]) -> bool {
    q.iter().any(|w| cues.contains(&w.as_str()))
}

pub fn parse_intent(text: &str, graph: &PropertyGraph) -> Result<Intent, RetrievalError> {
    let (dois, q) = match_datasets(text, graph);
    let topic = find_topic(&q);

    if has_any(&q, COMPARE_CUES) {
        if dois.len() < 2 {
            return Err(RetrievalError::AmbiguousComparison(format!(
                "comparison needs two named datasets, found {}",
                dois.len()
            )));
        }
        let mut dois = dois;
        dois.sort();
        return Ok(Intent::Compare { dois, facets: topic.into_iter().collect() });
    }
    let point_to = !occurrences(&q, &["point".to_string(), "to".to_string()], true).is_empty();
    if let Some(doi) = dois.first() {
        if has_any(&q, FILE_CUES) || point_to {
            let filters = file_filters(&q, graph, doi);
            return Ok(Intent::LocateFiles { doi: doi.clone(), filters });
        }
    }
    let asks_collection = has_any(&q, COLLECTION_CUES)
        || (q.iter().any(|w| w == "which" || w == "what" || w == "any")
            && q.iter().any(|w| w == "dataset" || w == "study"));
    if dois.is_empty() && asks_collection {
        if let Some((label, name)) = find_entity(&q, graph) {
            return Ok(Intent::WhichDatasets { label, name });
        }
    }
    if let Some(doi) = dois.first() {
        return Ok(Intent::Detail { doi: doi.clone(), topic });
    }
    Ok(Intent::FreeForm { text: text.trim().to_string() })
}
