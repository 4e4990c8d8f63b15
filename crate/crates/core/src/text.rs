//! Small text helpers shared by the extraction, graph and intent layers.

use serde::Serialize;

/// Trims, collapses internal whitespace and case-folds a name so that
/// "Boston  Dynamics spot" and "boston dynamics Spot" share an identity.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().map(|w| w.to_lowercase()).collect::<Vec<_>>().join(" ")
}

/// Trims and collapses whitespace without changing case (display form).
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercases and replaces every non-alphanumeric run with a single space.
/// Used for loose phrase matching in queries ("real-world" ~ "Real World").
pub fn fold_for_matching(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

/// Strips leading zeros from all-digit strings so "1" and "001" compare equal.
pub fn normalize_numeric(s: &str) -> &str {
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        let trimmed = s.trim_start_matches('0');
        if trimmed.is_empty() {
            "0"
        } else {
            trimmed
        }
    } else {
        s
    }
}

/// Serializes through `serde_json::Value`, whose map type keeps keys sorted,
/// so the output is independent of struct field order.
pub fn to_canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

pub fn to_canonical_json_pretty<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string_pretty(&v)
}
