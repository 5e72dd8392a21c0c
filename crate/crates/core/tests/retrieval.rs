mod common;

use common::oracle::{count, exhaustive_search, random_corpus, random_query, words};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stagewise_core::domain::record::read_corpus;
use stagewise_core::domain::RetrievalFilter;
use stagewise_core::retrieval::{bm25_score, build_index, search_terms, Bm25Params};
use stagewise_core::text::tokenize;

// Computed by a standalone script (regex split, direct df/tf counting) over
// sigir_min.jsonl before the index existed. avgdl = 92 / 3.
const SIGIR_VENUE: [(&str, f64); 3] =
    [("D1", 0.12784651782026193), ("D2", 0.17504374266323425), ("D3", 0.15098745177208586)];

#[test]
fn sigir_venue_scores_match_frozen_oracle() {
    let idx = build_index(read_corpus(&fixture("sigir_min.jsonl")).unwrap()).unwrap();
    assert_eq!(idx.len(), 3);
    let terms = tokenize("sigir venue");
    for (id, expected) in SIGIR_VENUE {
        let got = bm25_score(&terms, id, &idx, Bm25Params::default()).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected, "{id}: {got} vs {expected}");
    }
    let ranked = search_terms(&idx, &terms, &RetrievalFilter::default(), 5, Bm25Params::default());
    assert_eq!(ranked.chunk_ids(), ["D2", "D3", "D1"]);
}

#[test]
fn stats_match_brute_force_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let corpus = loop {
        let c = random_corpus(&mut rng, 20);
        if c.len() == 20 {
            break c;
        }
    };
    let expected = count(&corpus);
    let idx = build_index(corpus.clone()).unwrap();
    let s = idx.stats();
    assert_eq!(s.total_chunks, 20);
    assert_eq!(s.chunk_lengths, expected.lengths);
    assert_eq!(s.doc_freq, expected.doc_freq);
    assert_eq!(s.total_tokens, expected.total_tokens);
    assert_eq!(s.avg_chunk_length, expected.total_tokens as f64 / 20.0);
    for c in &corpus {
        for w in words(&c.text) {
            let tf = words(&c.text).iter().filter(|x| **x == w).count() as u32;
            assert_eq!(idx.term_frequency(&w, &c.chunk_id), tf);
        }
    }
}

#[test]
fn search_matches_exhaustive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..25 {
        let corpus = random_corpus(&mut rng, 50);
        let idx = build_index(corpus.clone()).unwrap();
        for _ in 0..4 {
            let q = random_query(&mut rng);
            let want = exhaustive_search(&corpus, &q, 5, |_| true);
            let got = search_terms(&idx, &tokenize(&q), &RetrievalFilter::default(), 5, Bm25Params::default());
            assert_eq!(got.chunk_ids(), want.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>(), "{q}");
            for (e, (_, s)) in got.entries.iter().zip(&want) {
                assert!((e.score - s).abs() <= 1e-9 * s.abs().max(1e-300));
            }
        }
    }
}
