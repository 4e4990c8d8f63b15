//! Keyword rules mapping free-form metadata fields onto data-model entities.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetadataRecord;
use crate::datamodel::DataModelSchema;
use crate::graph::{Properties, PropertyValue, DATASET_LABEL};
use crate::report::DataReport;
use crate::text::{collapse_whitespace, normalize_name};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueSource {
    /// The text after the field's key: the value itself, or the part after the
    /// colon when the key was found embedded in the value (`Key: Value`).
    AfterColon,
    /// The field value verbatim.
    WholeField,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub pattern: String,
    pub target_label: String,
    pub edge_type: String,
    #[serde(default = "default_value_source")]
    pub value_source: ValueSource,
}

fn default_value_source() -> ValueSource {
    ValueSource::AfterColon
}

impl KeywordRule {
    pub fn new(pattern: &str, target_label: &str, edge_type: &str) -> Self {
        KeywordRule {
            pattern: pattern.into(),
            target_label: target_label.into(),
            edge_type: edge_type.into(),
            value_source: ValueSource::AfterColon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule {pattern:?}: unknown label {label}")]
    UnknownLabel { pattern: String, label: String },
    #[error("rule {pattern:?}: edge type {edge_type} cannot link Dataset to {label}")]
    EdgeNotPermitted { pattern: String, edge_type: String, label: String },
    #[error("rule with an empty pattern")]
    EmptyPattern,
}

/// The seven terms named by the curation workflow plus sensor, location and method.
pub fn builtin_rules() -> Vec<KeywordRule> {
    vec![
        KeywordRule::new("robot model", "RobotModel", "usesModel"),
        KeywordRule::new("robot", "Robot", "hasRobot"),
        KeywordRule::new("participant", "ParticipantGroup", "involves"),
        KeywordRule::new("experiment session", "ExperimentSession", "hasSession"),
        KeywordRule::new("interview", "Instrument", "usesInstrument"),
        KeywordRule::new("survey", "Instrument", "usesInstrument"),
        KeywordRule::new("condition", "ExperimentCondition", "hasCondition"),
        KeywordRule::new("sensor", "Sensor", "hasSensor"),
        KeywordRule::new("location", "ExperimentLocation", "conductedAt"),
        KeywordRule::new("method", "ResearchMethod", "usesMethod"),
    ]
}

pub fn validate_rules(rules: &[KeywordRule], schema: &DataModelSchema) -> Result<(), RuleError> {
    for r in rules {
        if fold_key(&r.pattern).is_empty() {
            return Err(RuleError::EmptyPattern);
        }
        if !schema.has_node_label(&r.target_label) {
            return Err(RuleError::UnknownLabel { pattern: r.pattern.clone(), label: r.target_label.clone() });
        }
        if !schema.permits_edge(&r.edge_type, DATASET_LABEL, &r.target_label) {
            return Err(RuleError::EdgeNotPermitted {
                pattern: r.pattern.clone(),
                edge_type: r.edge_type.clone(),
                label: r.target_label.clone(),
            });
        }
    }
    Ok(())
}

/// Splits camelCase, lowercases and turns punctuation into spaces:
/// `robotModel` and `Robot-Model` both fold to `robot model`.
pub fn fold_key(key: &str) -> String {
    let mut spaced = String::with_capacity(key.len() + 4);
    let mut prev_lower = false;
    for ch in key.chars() {
        if ch.is_uppercase() && prev_lower {
            spaced.push(' ');
        }
        prev_lower = ch.is_lowercase() || ch.is_ascii_digit();
        spaced.push(ch);
    }
    crate::text::fold_for_matching(&spaced)
}

fn word_matches(key_word: &str, pattern_word: &str) -> bool {
    key_word == pattern_word || key_word.strip_prefix(pattern_word).is_some_and(|rest| rest == "s" || rest == "es")
}

/// Whether the folded key contains the folded pattern as a run of whole
/// words (plural `s`/`es` tolerated).
fn key_matches(key_words: &[&str], pattern_words: &[&str]) -> bool {
    !pattern_words.is_empty()
        && key_words.windows(pattern_words.len()).any(|w| w.iter().zip(pattern_words).all(|(k, p)| word_matches(k, p)))
}

/// The most specific matching rule: most pattern words, then longest pattern,
/// then earliest in the list.
fn best_rule<'r>(key: &str, rules: &'r [KeywordRule]) -> Option<&'r KeywordRule> {
    let folded = fold_key(key);
    let key_words: Vec<&str> = folded.split(' ').filter(|w| !w.is_empty()).collect();
    let mut best: Option<(&KeywordRule, usize, usize)> = None;
    for r in rules {
        let pat = fold_key(&r.pattern);
        let pw: Vec<&str> = pat.split(' ').filter(|w| !w.is_empty()).collect();
        if key_matches(&key_words, &pw) {
            let better = match best {
                None => true,
                Some((_, n, len)) => pw.len() > n || (pw.len() == n && pat.len() > len),
            };
            if better {
                best = Some((r, pw.len(), pat.len()));
            }
        }
    }
    best.map(|(r, _, _)| r)
}

fn split_embedded(value: &str) -> Option<(&str, &str)> {
    let (k, v) = value.split_once(':')?;
    if k.trim().is_empty() || v.starts_with("//") {
        return None;
    }
    Some((k.trim(), v.trim()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityProposal {
    pub label: String,
    pub properties: Properties,
    pub edge_type: String,
}

impl EntityProposal {
    pub fn name(&self) -> &str {
        self.properties.get("name").and_then(PropertyValue::as_str).unwrap_or("")
    }
}

/// Proposals plus the fields no rule claimed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub proposals: Vec<EntityProposal>,
    pub unmapped: Vec<(String, String)>,
    pub matched: usize,
}

/// Matches one field. The key is tried first; failing that, a value of the
/// form `Key: Value` is matched on its embedded key.
fn match_field<'r>(key: &str, value: &str, rules: &'r [KeywordRule]) -> Option<(&'r KeywordRule, String)> {
    let (rule, embedded) = match best_rule(key, rules) {
        Some(r) => (r, None),
        None => {
            let (k, v) = split_embedded(value)?;
            (best_rule(k, rules)?, Some(v))
        }
    };
    let name = match rule.value_source {
        ValueSource::WholeField => value,
        ValueSource::AfterColon => embedded.unwrap_or(value),
    };
    let name = collapse_whitespace(name);
    (!name.is_empty()).then_some((rule, name))
}

/// Runs the rules over the record's `kv_fields` and then every report pair,
/// in order. Proposals are deduplicated on `(label, normalized name)`, first
/// occurrence wins. `matched + unmapped.len()` equals the number of inputs.
pub fn extract_with_residue(record: &MetadataRecord, report: Option<&DataReport>, rules: &[KeywordRule]) -> Extraction {
    let mut out = Extraction::default();
    let mut seen = BTreeSet::new();
    let report_pairs = report.into_iter().flat_map(|r| r.sections.iter()).flat_map(|s| s.pairs.iter());
    for (key, value) in record.kv_fields.iter().chain(report_pairs) {
        match match_field(key, value, rules) {
            Some((rule, name)) => {
                out.matched += 1;
                if seen.insert((rule.target_label.clone(), normalize_name(&name))) {
                    let mut properties = Properties::new();
                    properties.insert("name".into(), PropertyValue::Str(name));
                    out.proposals.push(EntityProposal {
                        label: rule.target_label.clone(),
                        properties,
                        edge_type: rule.edge_type.clone(),
                    });
                }
            }
            None => out.unmapped.push((key.clone(), value.clone())),
        }
    }
    out
}

pub fn extract_entities(
    record: &MetadataRecord,
    report: Option<&DataReport>,
    rules: &[KeywordRule],
) -> Vec<EntityProposal> {
    extract_with_residue(record, report, rules).proposals
}
