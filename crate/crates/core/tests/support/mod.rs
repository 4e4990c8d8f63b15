//! Helpers shared by integration test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::Query;
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use hricat_core::catalog::Catalog;
use hricat_core::eval::{Dimension, Rating, RatingTable};
use hricat_core::graph::{Properties, PropertyGraph, PropertyValue};
use hricat_core::harvester::{canonical_doi, Fetcher, KeywordRule};
use hricat_core::retrieval::{EmbeddingProvider, HashingEmbedder, HttpCompleter};
use hricat_core::service::{router, AppState};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use reqwest::blocking::Client;
use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub const VID2REAL: &str = "doi:10.18738/T8/VID2RW";
pub const CODA: &str = "doi:10.18738/T8/CODA01";
/// Served as a 200 response whose body is not JSON.
pub const BROKEN: &str = "doi:10.18738/T8/BROKEN";
/// Served as an HTTP 500.
pub const FAILING: &str = "doi:10.18738/T8/FAILS";

pub fn extension_rules() -> Vec<KeywordRule> {
    serde_json::from_str(&fixture_text("rules_extension.json")).unwrap()
}

/// (doi, report text) for every fixture dataset.
pub fn corpus() -> Vec<(&'static str, String)> {
    vec![(VID2REAL, fixture_text("repo/vid2real_report.txt")), (CODA, fixture_text("repo/coda_report.txt"))]
}

pub fn paraphrase_groups() -> Vec<(String, Vec<String>)> {
    let v: Value = serde_json::from_str(&fixture_text("paraphrases.json")).unwrap();
    v.as_array()
        .unwrap()
        .iter()
        .map(|g| {
            let name = g["name"].as_str().unwrap().to_string();
            let qs = g["queries"].as_array().unwrap().iter().map(|q| q.as_str().unwrap().to_string()).collect();
            (name, qs)
        })
        .collect()
}

/// Serves `router` on an ephemeral local port from a background runtime and
/// returns its base URL.
pub fn spawn(router: Router) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{addr}")
}

/// Dataverse-style export endpoint over the fixture records.
pub fn mock_repository() -> Router {
    let records: HashMap<String, String> =
        [(VID2REAL, fixture_text("repo/vid2real.json")), (CODA, fixture_text("repo/coda.json"))]
            .into_iter()
            .map(|(d, t)| (d.to_string(), t))
            .collect();
    Router::new().route(
        "/api/datasets/export",
        get(move |Query(q): Query<HashMap<String, String>>| {
            let records = records.clone();
            async move {
                let doi = canonical_doi(q.get("persistentId").map(String::as_str).unwrap_or_default());
                if q.get("exporter").map(String::as_str) != Some("ddi") {
                    return (StatusCode::BAD_REQUEST, "exporter required".to_string()).into_response();
                }
                match doi.as_str() {
                    BROKEN => (StatusCode::OK, "<html>maintenance</html>".to_string()).into_response(),
                    FAILING => (StatusCode::INTERNAL_SERVER_ERROR, "boom".to_string()).into_response(),
                    d => match records.get(d) {
                        Some(body) => ([("content-type", "application/json")], body.clone()).into_response(),
                        None => (StatusCode::NOT_FOUND, "no such dataset".to_string()).into_response(),
                    },
                }
            }
        }),
    )
}

/// `/embed` backed by the hashing embedder, `/complete` echoing the first
/// graph fact of the prompt, and `/down/*` failing with HTTP 500.
pub fn mock_providers() -> Router {
    Router::new()
        .route(
            "/embed",
            post(|Json(body): Json<Value>| async move {
                let texts: Vec<String> = serde_json::from_value(body["texts"].clone()).unwrap_or_default();
                Json(json!({ "vectors": HashingEmbedder.embed(&texts).unwrap() }))
            }),
        )
        .route(
            "/complete",
            post(|Json(body): Json<Value>| async move {
                let prompt = body["prompt"].as_str().unwrap_or_default();
                let fact = prompt.lines().find(|l| l.starts_with("- ")).unwrap_or("- nothing");
                Json(json!({ "text": format!("According to the catalog, {}", &fact[2..]) }))
            }),
        )
        .route("/down/embed", post(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "down") }))
        .route("/down/complete", post(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "down") }))
}

/// In-memory catalog holding the harvested fixture corpus.
pub fn harvested_catalog(repo: &str) -> Catalog {
    let mut c = Catalog::new(extension_rules()).unwrap();
    let fetcher = Fetcher::default();
    for (doi, report) in corpus() {
        c.harvest(&fetcher, repo, doi, Some(&report), &HashingEmbedder).unwrap();
    }
    c
}

pub fn ir(rater: &str, prompt: &str, score: f64) -> Rating {
    Rating { rater: rater.into(), prompt: prompt.into(), dimension: Dimension::InformationRetrieval, score }
}

/// μ = 4, α = (+0.3, −0.3), σ = 0.1, 2 raters × 50 prompts, small prompt
/// effects.
pub fn recovery_table(seed: u64) -> RatingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let theta: Vec<f64> = (0..50).map(|_| rng.random_range(-0.3..0.3)).collect();
    let mut rows = Vec::new();
    for (rater, alpha) in [("r1", 0.3), ("r2", -0.3)] {
        for (j, t) in theta.iter().enumerate() {
            let y: f64 = 4.0 + alpha + t + noise.sample(&mut rng);
            rows.push(ir(rater, &format!("p{j:02}"), y.clamp(0.0, 5.0)));
        }
    }
    RatingTable::new(rows).unwrap()
}

/// Exact posterior means for the single-dimension model
/// `y = μ + α_i + θ_j + γ + ε`, from the covariance form of the
/// linear-Gaussian posterior given σ², mixed over a log-spaced σ² grid
/// weighted by the marginal likelihood times the inverse-gamma prior.
///
/// Returns (E[γ | y], E[α_i − ᾱ | y] for each rater in sorted order).
pub fn closed_form_means(table: &RatingTable, mu_mean: f64, mu_var: f64, shape: f64, scale: f64) -> (f64, Vec<f64>) {
    let raters: Vec<&str> = table.raters().into_iter().collect();
    let prompts: Vec<&str> = table.prompts().into_iter().collect();
    let (ni, nj, n) = (raters.len(), prompts.len(), table.len());
    let p = 2 + ni + nj;
    let gamma = p - 1;
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = DVector::<f64>::zeros(n);
    for (r, row) in table.rows().iter().enumerate() {
        x[(r, 0)] = 1.0;
        x[(r, 1 + raters.iter().position(|v| *v == row.rater).unwrap())] = 1.0;
        x[(r, 1 + ni + prompts.iter().position(|v| *v == row.prompt).unwrap())] = 1.0;
        x[(r, gamma)] = 1.0;
        y[r] = row.score;
    }
    let mut m0 = DVector::<f64>::zeros(p);
    m0[0] = mu_mean;
    let mut s0 = DMatrix::<f64>::identity(p, p);
    s0[(0, 0)] = mu_var;
    let resid = &y - &x * &m0;
    let xs0 = &x * &s0;
    let base = &xs0 * x.transpose();

    let (lo, hi, steps) = ((1e-5f64).ln(), (50.0f64).ln(), 6000);
    let mut log_w = Vec::with_capacity(steps);
    let mut cond = Vec::with_capacity(steps);
    for s in 0..steps {
        let t = lo + (hi - lo) * s as f64 / (steps - 1) as f64;
        let s2 = t.exp();
        let k = &base + DMatrix::<f64>::identity(n, n) * s2;
        let chol = k.cholesky().expect("positive definite");
        let solved = chol.solve(&resid);
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let loglik = -0.5 * (resid.dot(&solved) + log_det);
        let log_prior = -(shape + 1.0) * s2.ln() - scale / s2;
        // Uniform grid in ln σ², so include the Jacobian σ².
        log_w.push(loglik + log_prior + s2.ln());
        let post_mean = &m0 + xs0.transpose() * solved;
        let a_bar = (0..ni).map(|i| post_mean[1 + i]).sum::<f64>() / ni as f64;
        let alphas: Vec<f64> = (0..ni).map(|i| post_mean[1 + i] - a_bar).collect();
        cond.push((post_mean[gamma], alphas));
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let g = w.iter().zip(&cond).map(|(w, c)| w * c.0).sum::<f64>() / total;
    let a = (0..ni).map(|i| w.iter().zip(&cond).map(|(w, c)| w * c.1[i]).sum::<f64>() / total).collect();
    (g, a)
}

pub const ENTITY_LABELS: [&str; 4] = ["RobotModel", "Sensor", "ControlMode", "Robot"];
pub const ENTITY_NAMES: [&str; 6] =
    ["Boston Dynamics Spot", "boston  dynamics SPOT", "3D LiDAR", "Teleoperation", "Husky", "Autonomous"];
const FILE_EDGE_TYPES: [&str; 2] = ["containsFile", "hasSession"];

/// Random graph with at most `max_nodes` nodes: datasets, named entities
/// (several keys may share one normalized name), files with token
/// properties, and edges in both directions.
pub fn random_graph(seed: u64, max_nodes: usize) -> PropertyGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = PropertyGraph::new();
    let n_datasets = rng.random_range(1..=10.min(max_nodes));
    let rest = max_nodes - n_datasets;
    let n_entities = rng.random_range(0..=rest / 2);
    let n_files = rng.random_range(0..=rest - n_entities);
    let mut datasets = Vec::new();
    for i in 0..n_datasets {
        let doi = format!("doi:10.5555/D{i:03}");
        let mut p = Properties::new();
        p.insert("doi".into(), doi.as_str().into());
        p.insert("title".into(), format!("Dataset {i}").into());
        datasets.push(g.upsert_node("Dataset", &doi, p).unwrap().0);
    }
    let mut entities = Vec::new();
    for i in 0..n_entities {
        let label = ENTITY_LABELS[rng.random_range(0..ENTITY_LABELS.len())];
        let name = ENTITY_NAMES[rng.random_range(0..ENTITY_NAMES.len())];
        let mut p = Properties::new();
        p.insert("name".into(), name.into());
        entities.push(g.upsert_node(label, &format!("e{i}"), p).unwrap().0);
    }
    for e in &entities {
        for _ in 0..rng.random_range(0..3) {
            let d = &datasets[rng.random_range(0..datasets.len())];
            if rng.random_bool(0.8) {
                g.add_edge("usesModel", d, e).unwrap();
            } else {
                g.add_edge("mentions", e, d).unwrap();
            }
        }
    }
    for i in 0..n_files {
        let mut p = Properties::new();
        p.insert("path".into(), format!("f{i:04}.bin").into());
        p.insert("session".into(), ["1", "01", "2", "10"][rng.random_range(0..4)].into());
        p.insert("modality".into(), ["video", "audio"][rng.random_range(0..2)].into());
        if rng.random_bool(0.5) {
            p.insert("pattern".into(), PropertyValue::Int(rng.random_range(1..3)));
        }
        let f = g.upsert_node("DataFile", &format!("f{i}"), p).unwrap().0;
        let d = &datasets[rng.random_range(0..datasets.len())];
        g.add_edge(FILE_EDGE_TYPES[rng.random_range(0..2)], d, &f).unwrap();
    }
    g
}

/// Dataset DOIs adjacent to a `label` node whose name normalizes like
/// `name`, by a scan over every edge.
pub fn brute_find_datasets(g: &PropertyGraph, label: &str, name: &str) -> Vec<String> {
    let norm = |s: &str| s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ");
    let mut out: Vec<String> = Vec::new();
    for e in g.edges() {
        let (s, t) = (g.node(&e.source).unwrap(), g.node(&e.target).unwrap());
        for (a, b) in [(s, t), (t, s)] {
            if a.label == "Dataset" && b.label == label && b.str_property("name").is_some_and(|n| norm(n) == norm(name))
            {
                out.push(a.str_property("doi").unwrap().to_string());
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// File paths under a dataset's `containsFile` edges whose properties equal
/// every filter, where digit strings compare by numeric value.
pub fn brute_locate_files(g: &PropertyGraph, doi: &str, filters: &BTreeMap<String, String>) -> Vec<String> {
    let same = |a: &str, b: &str| match (a.parse::<u128>(), b.parse::<u128>()) {
        (Ok(x), Ok(y)) if a.bytes().all(|c| c.is_ascii_digit()) && b.bytes().all(|c| c.is_ascii_digit()) => x == y,
        _ => a == b,
    };
    let mut out: Vec<String> = g
        .edges()
        .filter(|e| e.edge_type == "containsFile")
        .filter(|e| g.node(&e.source).is_some_and(|n| n.label == "Dataset" && n.str_property("doi") == Some(doi)))
        .filter_map(|e| g.node(&e.target))
        .filter(|f| f.label == "DataFile")
        .filter(|f| filters.iter().all(|(k, v)| f.property(k).is_some_and(|p| same(&p.render(), v))))
        .map(|f| f.str_property("path").unwrap().to_string())
        .collect();
    out.sort();
    out
}

/// Random filter over the token properties used by [`random_graph`].
pub fn random_filters(rng: &mut ChaCha8Rng) -> BTreeMap<String, String> {
    let mut f = BTreeMap::new();
    if rng.random_bool(0.5) {
        f.insert("session".into(), ["1", "001", "2", "10", "3"][rng.random_range(0..5)].to_string());
    }
    if rng.random_bool(0.5) {
        f.insert("modality".into(), ["video", "audio"][rng.random_range(0..2)].to_string());
    }
    if rng.random_bool(0.3) {
        f.insert("pattern".into(), ["1", "2"][rng.random_range(0..2)].to_string());
    }
    f
}

/// Percent-encodes a DOI for use as one path segment.
pub fn enc(doi: &str) -> String {
    doi.replace(':', "%3A").replace('/', "%2F")
}

/// Blocking client for a live service instance.
pub struct Server {
    pub base: String,
    pub repo: String,
    pub state: Arc<AppState>,
    pub http: Client,
}

impl Server {
    pub fn start(catalog: Catalog, embedder: Arc<dyn EmbeddingProvider>, llm: Option<&str>) -> Self {
        let completer = llm.map(|u| Arc::new(HttpCompleter::new(u, Duration::from_secs(5))) as _);
        let state = Arc::new(AppState::new(catalog, embedder, completer, Fetcher::default(), 3));
        let base = spawn(router(state.clone()));
        Server { base, repo: spawn(mock_repository()), state, http: Client::new() }
    }

    pub fn harvested() -> Self {
        Self::harvested_from(&spawn(mock_repository()))
    }

    pub fn harvested_from(repo: &str) -> Self {
        let repo = repo.to_string();
        let s = Self::start(harvested_catalog(&repo), Arc::new(HashingEmbedder), None);
        Server { repo, ..s }
    }

    pub fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().unwrap();
        (r.status(), r.json().unwrap_or(Value::Null))
    }

    pub fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().unwrap();
        (r.status(), r.json().unwrap_or(Value::Null))
    }

    pub fn session(&self) -> String {
        let (s, v) = self.post("/sessions", json!({}));
        assert_eq!(s, StatusCode::CREATED);
        v["session_id"].as_str().unwrap().to_string()
    }

    pub fn ask(&self, session: &str, text: &str) -> (StatusCode, Value) {
        self.post(&format!("/sessions/{session}/query"), json!({ "text": text }))
    }
}

pub fn assert_error(v: &Value, code: &str) {
    assert_eq!(v["error_code"], code, "{v}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()), "{v}");
    assert!(v.get("details").is_some(), "{v}");
}

/// Message log with timestamps dropped.
pub fn log(v: &Value) -> Vec<(String, String, Value)> {
    v["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| (m["role"].to_string(), m["text"].as_str().unwrap().to_string(), m["sources"].clone()))
        .collect()
}
