//! Reference implementations kept independent of the library: plain
//! counting loops, no index, no shared helpers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use stagewise_core::domain::{DocumentChunk, RetrievalFilter};

/// Lowercase words made of alphanumeric characters.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub struct Counts {
    pub lengths: BTreeMap<String, usize>,
    pub doc_freq: BTreeMap<String, usize>,
    pub total_tokens: u64,
}

pub fn count(corpus: &[DocumentChunk]) -> Counts {
    let mut lengths = BTreeMap::new();
    let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0u64;
    for c in corpus {
        let w = words(&c.text);
        total += w.len() as u64;
        lengths.insert(c.chunk_id.clone(), w.len());
        let mut seen: Vec<&String> = w.iter().collect();
        seen.sort();
        seen.dedup();
        for t in seen {
            *doc_freq.entry(t.clone()).or_default() += 1;
        }
    }
    Counts { lengths, doc_freq, total_tokens: total }
}

/// Scores every chunk against `query` and returns the top `k` chunks that
/// share a term with it and pass `keep`.
pub fn exhaustive_search(
    corpus: &[DocumentChunk],
    query: &str,
    k: usize,
    keep: impl Fn(&DocumentChunk) -> bool,
) -> Vec<(String, f64)> {
    let (k1, b) = (1.2_f64, 0.75_f64);
    let docs: Vec<Vec<String>> = corpus.iter().map(|c| words(&c.text)).collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    let q = words(query);
    let mut scored = Vec::new();
    for (c, d) in corpus.iter().zip(&docs) {
        let mut score = 0.0;
        let mut matched = false;
        for t in &q {
            let tf = d.iter().filter(|w| *w == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avg));
        }
        if matched && keep(c) {
            scored.push((c.chunk_id.clone(), score));
        }
    }
    scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    scored.truncate(k);
    scored
}

const VOCAB: &[&str] = &[
    "sigir",
    "padua",
    "venue",
    "hotel",
    "train",
    "july",
    "conference",
    "registration",
    "fee",
    "museum",
    "river",
    "walk",
    "station",
    "airport",
    "flight",
    "dinner",
    "keynote",
    "poster",
    "session",
    "ticket",
    "2025",
    "city",
];
const DOMAINS: &[&str] = &["sigir.org", "news.example.com", "dl.acm.org", "stays.example.com", "blog.sigir.org"];

pub fn random_corpus(rng: &mut impl Rng, max_chunks: usize) -> Vec<DocumentChunk> {
    let n = rng.gen_range(1..=max_chunks);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=25);
            let text: Vec<&str> = (0..len).map(|_| *VOCAB.choose(rng).unwrap()).collect();
            let domain = *DOMAINS.choose(rng).unwrap();
            DocumentChunk {
                chunk_id: format!("c{i:03}"),
                doc_id: format!("doc{}", i / 3),
                text: text.join(if rng.gen_bool(0.5) { " " } else { ", " }),
                source_domain: domain.into(),
                published_date: if rng.gen_bool(0.8) {
                    chrono::NaiveDate::from_ymd_opt(
                        2023 + rng.gen_range(0..3),
                        rng.gen_range(1..=12),
                        rng.gen_range(1..=28),
                    )
                } else {
                    None
                },
                url: format!("https://{domain}/{i}"),
            }
        })
        .collect()
}

pub fn random_query(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..=4);
    let mut q: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
    if rng.gen_bool(0.2) {
        q.push("sourdough");
    }
    q.join(" ")
}

pub fn random_filter(rng: &mut impl Rng) -> RetrievalFilter {
    match rng.gen_range(0..4) {
        0 => RetrievalFilter::allow(&[DOMAINS[rng.gen_range(0..DOMAINS.len())]]),
        1 => RetrievalFilter::block(&[DOMAINS[rng.gen_range(0..DOMAINS.len())]]),
        2 => RetrievalFilter::window(chrono::NaiveDate::from_ymd_opt(2024, 1, 1), None),
        _ => RetrievalFilter::default(),
    }
}

/// Independent restatement of the filter semantics: suffix match on whole
/// labels, undated chunks fail any date window.
pub fn admits(f: &RetrievalFilter, c: &DocumentChunk) -> bool {
    let suffix = |d: &str, s: &str| d == s || d.ends_with(&format!(".{s}"));
    if f.time_from.is_some() || f.time_to.is_some() {
        match c.published_date {
            None => return false,
            Some(d) => {
                if f.time_from.is_some_and(|x| d < x) || f.time_to.is_some_and(|x| d > x) {
                    return false;
                }
            }
        }
    }
    if let Some(allow) = &f.domain_allow {
        if !allow.iter().any(|s| suffix(&c.source_domain, s)) {
            return false;
        }
    }
    if let Some(block) = &f.domain_block {
        if block.iter().any(|s| suffix(&c.source_domain, s)) {
            return false;
        }
    }
    true
}
