mod support;

use hricat_core::retrieval::{
    answer, chunk_document, AnswerMode, Chunk, ChunkConfig, HashingEmbedder, HttpCompleter, HttpEmbedder, Knowledge,
    RetrievalError, Source, SourceKind, VectorIndex,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Duration;
use support::*;

fn chunk(id: String, embedding: Vec<f64>) -> Chunk {
    Chunk {
        id,
        source_doi: "doi:10.1/X".into(),
        source_kind: SourceKind::DataReport,
        section: String::new(),
        text: String::new(),
        embedding,
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Every chunk scored by a plain loop, sorted by score then id.
fn exhaustive(index: &VectorIndex, q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = index
        .chunks()
        .map(|c| {
            let mut s = 0.0;
            for (a, b) in q.iter().zip(&c.embedding) {
                s += a * b;
            }
            (c.id.clone(), s.clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn random_index(rng: &mut ChaCha8Rng, n: usize, dim: usize, levels: i32) -> VectorIndex {
    let mut idx = VectorIndex::new();
    let chunks = (0..n)
        .map(|i| {
            // Coarse levels produce exact duplicates and therefore ties.
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-levels..=levels) as f64 + 0.5).collect();
            chunk(format!("c{:05}", (i * 7919) % 100_000), unit(v))
        })
        .collect();
    idx.insert_embedded(chunks).unwrap();
    idx
}

#[test]
fn thousand_chunk_index_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let idx = random_index(&mut rng, 1000, 24, 3);
    assert_eq!(idx.len(), 1000);
    for _ in 0..50 {
        let q = unit((0..24).map(|_| rng.random_range(-1.0..1.0)).collect());
        for k in [1, 5, 37, 1000, 1500] {
            let got = idx.top_k(&q, k);
            let want = exhaustive(&idx, &q, k);
            assert_eq!(got.len(), want.len());
            for (g, (id, s)) in got.iter().zip(&want) {
                assert_eq!(&g.chunk.id, id);
                assert!((g.score - s).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn self_query_scores_one() {
    let repo = spawn(mock_repository());
    let c = harvested_catalog(&repo);
    for ch in c.index.chunks() {
        let hits = c.index.retrieve(&ch.text, &HashingEmbedder, 1).unwrap();
        assert!((hits[0].score - 1.0).abs() <= 1e-6, "{}", ch.id);
    }
}

#[test]
fn chunk_windows_cover_every_token() {
    let text: String = (0..1000).map(|i| format!("w{i} ")).collect();
    let doc = format!("## Overview\n{text}");
    let chunks =
        chunk_document(&doc, SourceKind::DataReport, "doi:10.1/X", ChunkConfig { tokens: 300, overlap: 50 }).unwrap();
    assert!(chunks.len() >= 4);
    for i in 0..1000 {
        let w = format!("w{i}");
        assert!(chunks.iter().any(|c| c.text.split_whitespace().any(|t| t == w)), "{w}");
    }
    assert!(chunks.iter().all(|c| c.text.split_whitespace().count() <= 300 + 2));
    assert_eq!(chunks[0].id, "doi:10.1/X#report#0000");
}

#[test]
fn llm_mode_and_provider_failures() {
    let repo = spawn(mock_repository());
    let providers = spawn(mock_providers());
    let c = harvested_catalog(&repo);
    let t = Duration::from_secs(5);
    let embedder = HttpEmbedder::new(&providers, t);
    let completer = HttpCompleter::new(&providers, t);
    let k = Knowledge {
        graph: &c.graph,
        schema: &c.schema,
        index: &c.index,
        embedder: &embedder,
        completer: Some(&completer),
        top_k: 3,
    };
    let a = answer("What sensors does CODa use?", &k, AnswerMode::Llm).unwrap();
    assert!(a.text.starts_with("According to the catalog"), "{}", a.text);
    assert!(a.sources.iter().any(|s| matches!(s, Source::Edge { edge_type, .. } if edge_type == "hasSensor")));

    let down = HttpEmbedder::new(&format!("{providers}/down"), t);
    let k = Knowledge { embedder: &down, completer: None, ..k };
    assert!(matches!(
        answer("annotation of point clouds", &k, AnswerMode::Grounded),
        Err(RetrievalError::Provider { .. })
    ));
    let mut idx = VectorIndex::new();
    let chunks =
        chunk_document("## A\nsome text", SourceKind::DataReport, "doi:10.1/X", ChunkConfig::default()).unwrap();
    assert!(matches!(idx.embed_and_index(chunks, &down), Err(RetrievalError::Provider { .. })));
    assert!(idx.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_k_equals_exhaustive(seed in any::<u64>(), n in 1usize..300, k in 1usize..40, levels in 1i32..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = random_index(&mut rng, n, 8, levels);
        let q = unit((0..8).map(|_| rng.random_range(-levels..=levels) as f64 + 0.5).collect());
        let got: Vec<(String, f64)> = idx.top_k(&q, k).into_iter().map(|s| (s.chunk.id, s.score)).collect();
        let want = exhaustive(&idx, &q, k);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(&g.0, &w.0);
            prop_assert!((g.1 - w.1).abs() <= 1e-9);
        }
    }

    #[test]
    fn hashing_embeddings_are_unit_or_zero(text in "[a-zA-Z ,.!?]{0,200}") {
        let v = HashingEmbedder.embed_one(&text);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
    }
}
