//! Parser for the JSON metadata export of Dataverse-style repositories.
//!
//! Only a thin subset of the export is interpreted structurally (identifier,
//! title, description, authors, subjects, license, dates, files). Every field
//! of every metadata block is additionally flattened into `kv_fields`, in
//! block-name order and field order within a block, so nothing is dropped.

use serde_json::Value;

use super::{canonical_doi, normalize_file_path, FileEntry, HarvestError, MetadataRecord};

/// Parses an export document. The document may be wrapped in the API's
/// `{"status": "OK", "data": {...}}` envelope.
pub fn parse_ddi(doc: &Value) -> Result<MetadataRecord, HarvestError> {
    parse_with_file_ids(doc).map(|(r, _)| r)
}

pub(crate) fn parse_with_file_ids(doc: &Value) -> Result<(MetadataRecord, Vec<Option<u64>>), HarvestError> {
    let ds = doc.get("data").filter(|d| d.is_object()).unwrap_or(doc);
    let version = ds.get("datasetVersion").unwrap_or(ds);

    let doi = identifier(ds).ok_or(HarvestError::MissingIdentifier)?;

    let mut kv_fields = Vec::new();
    if let Some(blocks) = version.get("metadataBlocks").and_then(Value::as_object) {
        for block in blocks.values() {
            for field in block.get("fields").and_then(Value::as_array).into_iter().flatten() {
                flatten_field(field, &mut kv_fields);
            }
        }
    }
    let first = |key: &str| kv_fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
    let all =
        |key: &str| -> Vec<String> { kv_fields.iter().filter(|(k, _)| k == key).map(|(_, v)| v.clone()).collect() };

    let title = first("title")
        .or_else(|| ds.get("title").and_then(Value::as_str).map(String::from))
        .filter(|t| !t.trim().is_empty())
        .ok_or(HarvestError::MissingTitle)?;
    let description = all("dsDescriptionValue").join("\n\n");
    let authors = all("authorName");
    let subjects = all("subject");
    let license = license(version);
    let publication_date = ds
        .get("publicationDate")
        .or_else(|| version.get("releaseTime"))
        .and_then(Value::as_str)
        .map(|s| s.get(..10).unwrap_or(s).to_string())
        .unwrap_or_default();
    let repository_url = ds.get("persistentUrl").and_then(Value::as_str).unwrap_or_default().to_string();

    let mut files = Vec::new();
    let mut file_ids = Vec::new();
    for f in version.get("files").and_then(Value::as_array).into_iter().flatten() {
        let (entry, id) = file_entry(f)?;
        files.push(entry);
        file_ids.push(id);
    }

    Ok((
        MetadataRecord {
            doi,
            title: title.trim().to_string(),
            description,
            authors,
            subjects,
            license,
            publication_date,
            repository_url,
            files,
            kv_fields,
        },
        file_ids,
    ))
}

fn identifier(ds: &Value) -> Option<String> {
    let s = |k: &str| ds.get(k).and_then(Value::as_str).filter(|v| !v.trim().is_empty());
    if let Some(pid) = s("persistentId").or_else(|| s("datasetPersistentId")) {
        return Some(canonical_doi(pid));
    }
    match (s("protocol"), s("authority"), s("identifier")) {
        (Some(p), Some(a), Some(i)) if p.eq_ignore_ascii_case("doi") => Some(format!("doi:{a}/{i}")),
        _ => s("persistentUrl").filter(|u| u.contains("doi.org/")).map(canonical_doi),
    }
}

fn license(version: &Value) -> Option<String> {
    match version.get("license") {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Some(Value::Object(o)) => {
            o.get("name").and_then(Value::as_str).filter(|s| !s.trim().is_empty()).map(|s| s.trim().to_string())
        }
        _ => version
            .get("termsOfUse")
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().to_string()),
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Flattens one `{typeName, typeClass, multiple, value}` field.
fn flatten_field(field: &Value, out: &mut Vec<(String, String)>) {
    let Some(name) = field.get("typeName").and_then(Value::as_str) else {
        return;
    };
    let value = field.get("value").unwrap_or(&Value::Null);
    let items: Vec<&Value> = match value {
        Value::Array(a) => a.iter().collect(),
        other => vec![other],
    };
    for item in items {
        match item {
            Value::Object(compound) => {
                for sub in compound.values() {
                    if sub.get("typeName").is_some() {
                        flatten_field(sub, out);
                    }
                }
            }
            other => {
                if let Some(s) = scalar(other) {
                    out.push((name.to_string(), s));
                }
            }
        }
    }
}

fn file_entry(f: &Value) -> Result<(FileEntry, Option<u64>), HarvestError> {
    let data = f.get("dataFile").unwrap_or(f);
    let str_of = |v: &Value, k: &str| v.get(k).and_then(Value::as_str).map(String::from);
    let name = str_of(f, "label")
        .or_else(|| str_of(data, "filename"))
        .ok_or_else(|| HarvestError::MalformedResponse("file entry without a label".into()))?;
    let raw_path = match str_of(f, "directoryLabel").filter(|d| !d.is_empty()) {
        Some(dir) => format!("{}/{name}", dir.trim_end_matches('/')),
        None => name,
    };
    let path = normalize_file_path(&raw_path)?;
    let checksum = data
        .get("checksum")
        .and_then(|c| Some(format!("{}:{}", str_of(c, "type")?.to_ascii_lowercase(), str_of(c, "value")?)))
        .or_else(|| str_of(data, "md5").map(|m| format!("md5:{m}")));
    let entry = FileEntry {
        path,
        size: data.get("filesize").and_then(Value::as_u64).unwrap_or(0),
        content_type: str_of(data, "contentType").unwrap_or_else(|| "application/octet-stream".into()),
        access_url: str_of(data, "accessUrl").or_else(|| str_of(f, "accessUrl")),
        checksum,
    };
    Ok((entry, data.get("id").and_then(Value::as_u64)))
}
