//! The catalog: schema, keyword rules, knowledge graph and chunk index kept
//! together, plus the harvest pipeline that feeds them.
//!
//! Persistence is two files: the graph snapshot at the store path and a JSON
//! sidecar (`<store>.docs.json`) holding the harvested records, report texts
//! and provisional report sections. The chunk index is rebuilt from the
//! sidecar on open, so the embedding provider can change between runs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datamodel::{builtin_schema, DataModelSchema, SchemaError, SchemaLabel};
use crate::graph::{self, GraphError, PropertyGraph};
use crate::harvester::{
    builtin_rules, canonical_doi, extract_with_residue, upsert_dataset, validate_rules, Fetcher, GraphProposals,
    HarvestError, KeywordRule, MetadataRecord, RuleError, UpsertSummary,
};
use crate::report::{parse_report, report_to_graph, DataReport, NamingConvention, NamingError, ReportError};
use crate::retrieval::{chunk_document, ChunkConfig, EmbeddingProvider, RetrievalError, SourceKind, VectorIndex};

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error(transparent)]
    Harvest(#[from] HarvestError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Naming(#[from] NamingError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("dataset {0} is not in the catalog")]
    DatasetNotFound(String),
    #[error("report documents {report}, not {dataset}")]
    ReportMismatch { report: String, dataset: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Everything persisted besides the graph itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub records: BTreeMap<String, MetadataRecord>,
    pub reports: BTreeMap<String, String>,
    pub provisional_sections: Vec<String>,
}

pub fn sidecar_path(store: &Path) -> PathBuf {
    let mut name = store.as_os_str().to_owned();
    name.push(".docs.json");
    PathBuf::from(name)
}

/// Output of the read-only half of a harvest: nothing here touches the
/// catalog, so it can run without holding any lock.
#[derive(Debug, Clone)]
pub struct PreparedHarvest {
    pub record: MetadataRecord,
    pub report_text: Option<String>,
    pub report: Option<DataReport>,
    pub proposals: GraphProposals,
    pub chunks: VectorIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestOutcome {
    pub summary: UpsertSummary,
    pub chunks_indexed: usize,
}

/// Rule extraction over record and report, plus sessions and classified
/// files when the report declares a naming convention.
pub fn build_proposals(
    record: &MetadataRecord,
    report: Option<&DataReport>,
    rules: &[KeywordRule],
) -> Result<GraphProposals, CatalogError> {
    let extraction = extract_with_residue(record, report, rules);
    let mut proposals = GraphProposals::from_extraction(&extraction);
    if let Some(r) = report {
        proposals.report_ingested = true;
        if let Some(section) = r.section("FileOrganization") {
            let has_patterns = section.pairs.iter().any(|(k, _)| k.to_ascii_lowercase().starts_with("pattern"));
            if has_patterns {
                let conv = NamingConvention::from_section(section)?;
                proposals.merge(report_to_graph(r, &conv, &record.files, &[]));
            }
        }
    }
    Ok(proposals)
}

fn record_document(record: &MetadataRecord) -> String {
    let mut doc = format!("## Overview\n{}\n", record.title);
    if !record.description.is_empty() {
        doc.push_str(&record.description);
        doc.push('\n');
    }
    if !record.kv_fields.is_empty() {
        doc.push_str("## Metadata\n");
        for (k, v) in &record.kv_fields {
            doc.push_str(&format!("{k}: {v}\n"));
        }
    }
    doc
}

/// Chunks the record, its publication citations and the report.
pub fn dataset_chunks(
    record: &MetadataRecord,
    report_text: Option<&str>,
    config: ChunkConfig,
) -> Result<Vec<crate::retrieval::Chunk>, CatalogError> {
    let mut chunks = chunk_document(&record_document(record), SourceKind::MetadataRecord, &record.doi, config)?;
    let citations: Vec<&str> = record
        .kv_fields
        .iter()
        .filter(|(k, v)| k == "publicationCitation" && !v.trim().is_empty())
        .map(|(_, v)| v.as_str())
        .collect();
    if !citations.is_empty() {
        chunks.extend(chunk_document(&citations.join("\n"), SourceKind::Publication, &record.doi, config)?);
    }
    if let Some(text) = report_text.filter(|t| !t.trim().is_empty()) {
        chunks.extend(chunk_document(text, SourceKind::DataReport, &record.doi, config)?);
    }
    Ok(chunks)
}

/// Parses an export document, fills repository URLs and checks that an
/// accompanying report documents the same dataset.
pub fn prepare_record(
    doc: &serde_json::Value,
    repo_base: &str,
    report_text: Option<&str>,
) -> Result<(MetadataRecord, Option<DataReport>), CatalogError> {
    let (mut record, ids) = crate::harvester::parse_with_file_ids(doc)?;
    record.fill_access_urls(repo_base, &ids);
    let report = report_text.map(parse_report).transpose()?;
    if let Some(src) = report.as_ref().and_then(|r| r.source_doi.as_ref()) {
        if !src.eq_ignore_ascii_case(&record.doi) {
            return Err(CatalogError::ReportMismatch { report: src.clone(), dataset: record.doi.clone() });
        }
    }
    Ok((record, report))
}

/// Proposals and embedded chunks for one dataset, computed without touching
/// any catalog state.
pub fn prepare_harvest(
    rules: &[KeywordRule],
    chunking: ChunkConfig,
    record: MetadataRecord,
    report_text: Option<String>,
    report: Option<DataReport>,
    embedder: &dyn EmbeddingProvider,
) -> Result<PreparedHarvest, CatalogError> {
    let proposals = build_proposals(&record, report.as_ref(), rules)?;
    let mut chunks = VectorIndex::new();
    chunks.embed_and_index(dataset_chunks(&record, report_text.as_deref(), chunking)?, embedder)?;
    Ok(PreparedHarvest { record, report_text, report, proposals, chunks })
}

pub struct Catalog {
    pub schema: DataModelSchema,
    pub rules: Vec<KeywordRule>,
    pub graph: PropertyGraph,
    pub index: VectorIndex,
    pub sidecar: Sidecar,
    pub chunking: ChunkConfig,
    store: Option<PathBuf>,
}

impl Catalog {
    /// In-memory catalog with the builtin schema and the builtin rules
    /// followed by `extra_rules`.
    pub fn new(extra_rules: Vec<KeywordRule>) -> Result<Self, CatalogError> {
        let schema = builtin_schema();
        let mut rules = builtin_rules();
        rules.extend(extra_rules);
        validate_rules(&rules, &schema)?;
        Ok(Catalog {
            schema,
            rules,
            graph: PropertyGraph::new(),
            index: VectorIndex::new(),
            sidecar: Sidecar::default(),
            chunking: ChunkConfig::default(),
            store: None,
        })
    }

    /// Opens (or starts) a catalog persisted at `store`.
    pub fn open(
        store: &Path,
        extra_rules: Vec<KeywordRule>,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Self, CatalogError> {
        let mut c = Catalog::new(extra_rules)?;
        c.store = Some(store.to_path_buf());
        if store.exists() {
            c.graph = graph::load(store)?;
        }
        let side = sidecar_path(store);
        if side.exists() {
            let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
            c.sidecar = serde_json::from_str(&text)
                .map_err(|e| CatalogError::Graph(GraphError::CorruptStore(format!("{}: {e}", side.display()))))?;
        }
        for name in c.sidecar.provisional_sections.clone() {
            c.track_section(&name)?;
        }
        c.rebuild_index(embedder)?;
        Ok(c)
    }

    pub fn store_path(&self) -> Option<&Path> {
        self.store.as_deref()
    }

    pub fn save(&self) -> Result<(), CatalogError> {
        let Some(store) = &self.store else { return Ok(()) };
        if let Some(dir) = store.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        graph::save(&self.graph, store)?;
        let side = sidecar_path(store);
        let tmp = side.with_extension("tmp");
        let body = crate::text::to_canonical_json_pretty(&self.sidecar).expect("sidecar serializes");
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(body.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, &side)
        };
        write().map_err(|e| io_err(&side, e))
    }

    pub fn rebuild_index(&mut self, embedder: &dyn EmbeddingProvider) -> Result<usize, CatalogError> {
        let mut index = VectorIndex::new();
        for (doi, record) in &self.sidecar.records {
            let chunks = dataset_chunks(record, self.sidecar.reports.get(doi).map(String::as_str), self.chunking)?;
            index.embed_and_index(chunks, embedder)?;
        }
        self.index = index;
        Ok(self.index.len())
    }

    /// Unknown report sections become provisional node labels in the schema
    /// so they can be reviewed and promoted later.
    fn track_section(&mut self, name: &str) -> Result<(), CatalogError> {
        let label: String = name.chars().filter(|c| c.is_alphanumeric()).collect();
        if label.is_empty() || self.schema.has_node_label(&label) {
            return Ok(());
        }
        self.schema = self.schema.add_provisional(SchemaLabel::node(&label, vec![]))?;
        if !self.sidecar.provisional_sections.iter().any(|s| s == name) {
            self.sidecar.provisional_sections.push(name.to_string());
        }
        Ok(())
    }

    /// Read-only half of a harvest: proposals and embedded chunks.
    pub fn prepare(
        &self,
        record: MetadataRecord,
        report_text: Option<String>,
        report: Option<DataReport>,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<PreparedHarvest, CatalogError> {
        prepare_harvest(&self.rules, self.chunking, record, report_text, report, embedder)
    }

    /// Writes a prepared harvest. Re-applying identical input creates nothing.
    pub fn apply(&mut self, prepared: PreparedHarvest) -> Result<HarvestOutcome, CatalogError> {
        if let (Some(want), Some(have)) = (prepared.chunks.dimension(), self.index.dimension()) {
            if want != have && !self.index.is_empty() {
                return Err(RetrievalError::DimensionMismatch { expected: have, got: want }.into());
            }
        }
        let summary = upsert_dataset(&mut self.graph, &self.schema, &prepared.record, &prepared.proposals)?;
        if let Some(r) = &prepared.report {
            let names: Vec<String> = r.provisional_sections().map(|s| s.name.clone()).collect();
            for n in names {
                self.track_section(&n)?;
            }
        }
        let doi = prepared.record.doi.clone();
        self.index.remove_dataset(&doi);
        let chunks: Vec<_> = prepared.chunks.chunks().cloned().collect();
        let chunks_indexed = chunks.len();
        self.index.insert_embedded(chunks)?;
        if let Some(t) = prepared.report_text {
            self.sidecar.reports.insert(doi.clone(), t);
        }
        self.sidecar.records.insert(doi, prepared.record);
        Ok(HarvestOutcome { summary, chunks_indexed })
    }

    /// Fetches, parses and ingests one dataset.
    pub fn harvest(
        &mut self,
        fetcher: &Fetcher,
        repo_base: &str,
        doi: &str,
        report_text: Option<&str>,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<HarvestOutcome, CatalogError> {
        let doc = fetcher.fetch_record(repo_base, doi)?;
        self.ingest_document(&doc, repo_base, report_text, embedder)
    }

    /// Ingests an already fetched export document.
    pub fn ingest_document(
        &mut self,
        doc: &serde_json::Value,
        repo_base: &str,
        report_text: Option<&str>,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<HarvestOutcome, CatalogError> {
        let (record, report) = prepare_record(doc, repo_base, report_text)?;
        let prepared = self.prepare(record, report_text.map(String::from), report, embedder)?;
        self.apply(prepared)
    }

    /// Attaches a data report to a dataset that was already harvested.
    pub fn ingest_report(
        &mut self,
        doi: &str,
        report_text: &str,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<HarvestOutcome, CatalogError> {
        let key = self
            .sidecar
            .records
            .keys()
            .find(|k| k.eq_ignore_ascii_case(&canonical_doi(doi)))
            .cloned()
            .ok_or_else(|| CatalogError::DatasetNotFound(doi.to_string()))?;
        let record = self.sidecar.records[&key].clone();
        let report = parse_report(report_text)?;
        if let Some(src) = &report.source_doi {
            if !src.eq_ignore_ascii_case(&record.doi) {
                return Err(CatalogError::ReportMismatch { report: src.clone(), dataset: record.doi.clone() });
            }
        }
        let prepared = self.prepare(record, Some(report_text.to_string()), Some(report), embedder)?;
        self.apply(prepared)
    }

    pub fn record(&self, doi: &str) -> Option<&MetadataRecord> {
        let canonical = canonical_doi(doi);
        self.sidecar
            .records
            .get(&canonical)
            .or_else(|| self.sidecar.records.iter().find(|(k, _)| k.eq_ignore_ascii_case(&canonical)).map(|(_, v)| v))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CatalogError {
    CatalogError::Io { path: path.display().to_string(), message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashingEmbedder;
    use serde_json::json;

    fn doc() -> serde_json::Value {
        json!({
            "persistentId": "doi:10.1/CAT",
            "datasetVersion": {
                "license": {"name": "CC BY 4.0"},
                "metadataBlocks": {"citation": {"fields": [
                    {"typeName": "title", "value": "Catalog Test Study"},
                    {"typeName": "keywordValue", "value": "Robot Model: Boston Dynamics Spot"}
                ]}},
                "files": [
                    {"label": "s01_p01_video.mp4", "dataFile": {"id": 1, "filesize": 10}},
                    {"label": "s02_p01_audio.wav", "dataFile": {"id": 2, "filesize": 20}}
                ]
            }
        })
    }

    const REPORT: &str = "DOI: doi:10.1/CAT\n## FileOrganization\npattern 1: s{session}_p{participant}_{modality}.{ext}\n## StressSignals\nSignal: EDA\n";

    #[test]
    fn ingest_is_idempotent_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("catalog.snap");
        let mut c = Catalog::open(&store, vec![], &HashingEmbedder).unwrap();
        let first = c.ingest_document(&doc(), "https://repo.example", Some(REPORT), &HashingEmbedder).unwrap();
        assert!(first.summary.nodes_created > 0);
        assert_eq!(c.graph.nodes_with_label("ExperimentSession").count(), 2);
        assert_eq!(c.schema.node_label("StressSignals").unwrap().status, crate::datamodel::LabelStatus::Provisional);
        let again = c.ingest_document(&doc(), "https://repo.example", Some(REPORT), &HashingEmbedder).unwrap();
        assert!(!again.summary.created_anything());
        assert!(c.schema.validate(&c.graph).is_empty());
        c.save().unwrap();

        let back = Catalog::open(&store, vec![], &HashingEmbedder).unwrap();
        assert_eq!(back.graph.canonical_json(), c.graph.canonical_json());
        assert_eq!(back.index.len(), c.index.len());
        assert!(back.schema.has_node_label("StressSignals"));
    }

    #[test]
    fn report_for_another_dataset_is_rejected() {
        let mut c = Catalog::new(vec![]).unwrap();
        let r = c.ingest_document(&doc(), "https://repo.example", Some("DOI: doi:10.1/OTHER\n"), &HashingEmbedder);
        assert!(matches!(r, Err(CatalogError::ReportMismatch { .. })));
        assert!(c.graph.is_empty());
    }

    #[test]
    fn report_after_harvest() {
        let mut c = Catalog::new(vec![]).unwrap();
        c.ingest_document(&doc(), "https://repo.example", None, &HashingEmbedder).unwrap();
        assert_eq!(c.graph.nodes_with_label("ExperimentSession").count(), 0);
        c.ingest_report("10.1/CAT", REPORT, &HashingEmbedder).unwrap();
        assert_eq!(c.graph.nodes_with_label("ExperimentSession").count(), 2);
        let ds = c.graph.node_by_key("Dataset", "doi:10.1/CAT").unwrap();
        assert_eq!(ds.property("report_ingested").and_then(|v| v.as_bool()), Some(true));
        assert!(matches!(
            c.ingest_report("doi:10.1/NOPE", REPORT, &HashingEmbedder),
            Err(CatalogError::DatasetNotFound(_))
        ));
    }
}
