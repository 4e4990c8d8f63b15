//! File naming conventions declared in a report's file-organization section.
//!
//! ```text
//! pattern 1: s{session}_p{participant}_{modality}.{ext}
//! pattern 9: *
//! tokens: modality ∈ {video, audio, pose}
//! tokens 1: ext in {mp4, wav, csv}
//! ```
//!
//! `{name}` binds a token, `*` matches anything without binding. Templates
//! are matched against the file's basename. `tokens:` lines restrict a token
//! to a value set, for every pattern or (with a priority) for one pattern.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ReportSection;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NamingError {
    #[error("malformed pattern {template:?}: {reason}")]
    MalformedPattern { template: String, reason: String },
    #[error("priority {0} used by more than one pattern")]
    DuplicatePriority(i64),
    #[error("no \"pattern <priority>: <template>\" line")]
    NoPatterns,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Token(String),
    Wildcard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilePattern {
    pub priority: i64,
    pub template: String,
    /// Token names in template order.
    pub tokens: Vec<String>,
    /// Allowed values per token; tokens absent here accept any non-empty text.
    pub domains: BTreeMap<String, Vec<String>>,
    #[serde(skip)]
    regex: Option<Regex>,
}

impl PartialEq for FilePattern {
    fn eq(&self, other: &Self) -> bool {
        (self.priority, &self.template, &self.domains) == (other.priority, &other.template, &other.domains)
    }
}

impl FilePattern {
    fn matcher(&self) -> Regex {
        match &self.regex {
            Some(r) => r.clone(),
            None => compile(&parse_template(&self.template).expect("validated"), &self.domains),
        }
    }

    pub fn is_catch_all(&self) -> bool {
        self.template.trim() == "*"
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NamingConvention {
    /// Ascending priority.
    pub patterns: Vec<FilePattern>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub priority: i64,
    pub template: String,
    pub bindings: BTreeMap<String, String>,
}

fn malformed(template: &str, reason: &str) -> NamingError {
    NamingError::MalformedPattern { template: template.to_string(), reason: reason.to_string() }
}

fn is_token_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_template(template: &str) -> Result<Vec<Piece>, NamingError> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut chars = template.chars();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some('{') | None => return Err(malformed(template, "unbalanced brace")),
                        Some(ch) => name.push(ch),
                    }
                }
                if !is_token_name(&name) {
                    return Err(malformed(template, &format!("bad token name {name:?}")));
                }
                if !literal.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Token(name));
            }
            '}' => return Err(malformed(template, "unbalanced brace")),
            '*' => {
                if !literal.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Wildcard);
            }
            '/' => return Err(malformed(template, "templates match basenames and cannot contain '/'")),
            c => literal.push(c),
        }
    }
    if !literal.is_empty() {
        pieces.push(Piece::Literal(literal));
    }
    if pieces.is_empty() {
        return Err(malformed(template, "empty template"));
    }
    for w in pieces.windows(2) {
        if !matches!(w[0], Piece::Literal(_)) && !matches!(w[1], Piece::Literal(_)) {
            return Err(malformed(template, "adjacent tokens need a separator"));
        }
    }
    let mut seen = Vec::new();
    for p in &pieces {
        if let Piece::Token(n) = p {
            if seen.contains(&n) {
                return Err(malformed(template, &format!("token {n} appears twice")));
            }
            seen.push(n);
        }
    }
    Ok(pieces)
}

fn compile(pieces: &[Piece], domains: &BTreeMap<String, Vec<String>>) -> Regex {
    let mut re = String::from("^");
    for p in pieces {
        match p {
            Piece::Literal(l) => re.push_str(&regex::escape(l)),
            Piece::Wildcard => re.push_str(".*?"),
            Piece::Token(n) => match domains.get(n) {
                Some(values) => {
                    let mut vs: Vec<&String> = values.iter().collect();
                    vs.sort_by_key(|v| std::cmp::Reverse(v.len()));
                    let alt: Vec<String> = vs.iter().map(|v| regex::escape(v)).collect();
                    re.push_str(&format!("(?P<{n}>{})", alt.join("|")));
                }
                None => re.push_str(&format!("(?P<{n}>.+?)")),
            },
        }
    }
    re.push('$');
    Regex::new(&re).expect("escaped template compiles")
}

/// `modality ∈ {video, audio}; ext in {mp4}`
fn parse_domains(spec: &str, line: &str) -> Result<Vec<(String, Vec<String>)>, NamingError> {
    let mut out = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, rest) = part
            .split_once('∈')
            .or_else(|| part.split_once(" in "))
            .ok_or_else(|| malformed(line, "token domain needs '∈' or 'in'"))?;
        let name = name.trim();
        let set = rest
            .trim()
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| malformed(line, "token domain must be a {…} set"))?;
        if !is_token_name(name) {
            return Err(malformed(line, &format!("bad token name {name:?}")));
        }
        let values: Vec<String> = set.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(malformed(line, "empty token domain"));
        }
        out.push((name.to_string(), values));
    }
    Ok(out)
}

/// Parses `pattern` and `tokens` lines; other lines are ignored.
pub fn parse_naming_convention(text: &str) -> Result<NamingConvention, NamingError> {
    let mut raw: Vec<(i64, String)> = Vec::new();
    let mut global: Vec<(String, Vec<String>)> = Vec::new();
    let mut scoped: Vec<(i64, String, Vec<String>)> = Vec::new();
    for line in text.lines().map(str::trim) {
        let Some((head, body)) = line.split_once(':') else { continue };
        let mut words = head.split_whitespace();
        let kind = words.next().unwrap_or("").to_ascii_lowercase();
        let priority = words.next();
        if words.next().is_some() {
            continue;
        }
        match (kind.as_str(), priority) {
            ("pattern", Some(p)) => {
                let p: i64 = p.parse().map_err(|_| malformed(line, "priority must be an integer"))?;
                if raw.iter().any(|(q, _)| *q == p) {
                    return Err(NamingError::DuplicatePriority(p));
                }
                raw.push((p, body.trim().to_string()));
            }
            ("tokens", None) => global.extend(parse_domains(body, line)?),
            ("tokens", Some(p)) => {
                let p: i64 = p.parse().map_err(|_| malformed(line, "priority must be an integer"))?;
                for (n, v) in parse_domains(body, line)? {
                    scoped.push((p, n, v));
                }
            }
            _ => {}
        }
    }
    if raw.is_empty() {
        return Err(NamingError::NoPatterns);
    }
    raw.sort_by_key(|(p, _)| *p);
    let last = raw.len() - 1;
    let mut patterns = Vec::with_capacity(raw.len());
    for (i, (priority, template)) in raw.into_iter().enumerate() {
        let pieces = parse_template(&template)?;
        let has_literal = pieces.iter().any(|p| matches!(p, Piece::Literal(_)));
        let explicit_wildcard = pieces == [Piece::Wildcard];
        if !has_literal && !(explicit_wildcard && i == last) {
            return Err(malformed(&template, "catch-all pattern is only allowed as a final \"*\""));
        }
        let tokens: Vec<String> = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Token(n) => Some(n.clone()),
                _ => None,
            })
            .collect();
        let mut domains = BTreeMap::new();
        for (n, v) in &global {
            if tokens.contains(n) {
                domains.insert(n.clone(), v.clone());
            }
        }
        for (p, n, v) in &scoped {
            if *p == priority && tokens.contains(n) {
                domains.insert(n.clone(), v.clone());
            }
        }
        let regex = Some(compile(&pieces, &domains));
        patterns.push(FilePattern { priority, template, tokens, domains, regex });
    }
    Ok(NamingConvention { patterns })
}

impl NamingConvention {
    /// The file-organization section's pairs and free text, reassembled.
    pub fn from_section(section: &ReportSection) -> Result<Self, NamingError> {
        let mut text = String::new();
        for (k, v) in &section.pairs {
            text.push_str(&format!("{k}: {v}\n"));
        }
        parse_naming_convention(&text)
    }
}

/// First pattern, in ascending priority, that matches the basename of `path`.
pub fn classify_file(conv: &NamingConvention, path: &str) -> Option<Classification> {
    let basename = path.rsplit('/').next().unwrap_or(path);
    if basename.is_empty() {
        return None;
    }
    conv.patterns.iter().find_map(|p| {
        let caps = p.matcher().captures(basename)?;
        let bindings = p.tokens.iter().filter_map(|t| Some((t.clone(), caps.name(t)?.as_str().to_string()))).collect();
        Some(Classification { priority: p.priority, template: p.template.clone(), bindings })
    })
}
