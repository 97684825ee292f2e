use std::collections::BTreeSet;
use std::path::Path;

use creepdb::corpus::{parse_query, search_index, BooleanQuery, CorpusError, CorpusIndex};
use proptest::prelude::*;
use serde_json::json;

const VOCAB: [&str; 8] = ["creep", "steel", "nickel", "polymer", "rupture", "norton", "fatigue", "alloy"];

fn write_corpus(dir: &Path, docs: &[Vec<usize>]) -> CorpusIndex {
    let mut manifest = String::new();
    for (i, words) in docs.iter().enumerate() {
        let page = format!("doc{i}.txt");
        let text: Vec<&str> = words.iter().map(|w| VOCAB[*w]).collect();
        std::fs::write(dir.join(&page), format!("Body. {}.", text.join(" and "))).unwrap();
        let line = json!({"id": format!("b{i:02}"), "doi": format!("10.9/{i}"), "title": "Study", "year": 2000, "pages": [page]});
        manifest.push_str(&line.to_string());
        manifest.push('\n');
    }
    CorpusIndex::from_manifest_text(&manifest, dir).unwrap()
}

// Evaluate on the raw word sets without going through tokenization.
fn brute(q: &Q, words: &BTreeSet<usize>) -> bool {
    match q {
        Q::Term(w) => words.contains(w),
        Q::Phrase(a, b) => words.contains(a) && words.contains(b),
        Q::And(c) => c.iter().all(|x| brute(x, words)),
        Q::Or(c) => c.iter().any(|x| brute(x, words)),
        Q::Not(c) => !brute(c, words),
    }
}

#[derive(Debug, Clone)]
enum Q {
    Term(usize),
    Phrase(usize, usize),
    And(Vec<Q>),
    Or(Vec<Q>),
    Not(Box<Q>),
}

fn lower(q: &Q) -> BooleanQuery {
    match q {
        Q::Term(w) => BooleanQuery::term(VOCAB[*w]).unwrap(),
        Q::Phrase(a, b) => BooleanQuery::term(&format!("{} {}", VOCAB[*a], VOCAB[*b])).unwrap(),
        Q::And(c) => BooleanQuery::and(c.iter().map(lower).collect()),
        Q::Or(c) => BooleanQuery::or(c.iter().map(lower).collect()),
        Q::Not(c) => BooleanQuery::not(lower(c)),
    }
}

fn arb_q() -> impl Strategy<Value = Q> {
    let leaf = prop_oneof![
        3 => (0..VOCAB.len()).prop_map(Q::Term),
        1 => (0..VOCAB.len(), 0..VOCAB.len()).prop_map(|(a, b)| Q::Phrase(a, b)),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Q::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Q::Or),
            inner.prop_map(|q| Q::Not(Box::new(q))),
        ]
    })
}

fn arb_docs() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0..VOCAB.len(), 0..6), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_equals_brute_force(docs in arb_docs(), q in arb_q()) {
        let dir = tempfile::tempdir().unwrap();
        let index = write_corpus(dir.path(), &docs);
        let query = lower(&q);
        prop_assert!(query.is_well_formed());
        let got = search_index(&index, &query).unwrap();
        let want: Vec<String> = docs
            .iter()
            .enumerate()
            .filter(|(_, d)| brute(&q, &d.iter().copied().collect()))
            .map(|(i, _)| format!("b{i:02}"))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn rendered_queries_parse_back(q in arb_q()) {
        let query = lower(&q);
        let back = parse_query(&query.to_string()).unwrap();
        prop_assert_eq!(back, query);
    }
}

#[test]
fn manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.txt"), "creep").unwrap();
    let line = |id: &str, doi: &str, page: &str| {
        json!({"id": id, "doi": doi, "title": "T", "year": 2001, "pages": [page]}).to_string()
    };
    let dup = format!("{}\n{}\n", line("a", "10.1/x", "p.txt"), line("b", "10.1/x", "p.txt"));
    assert!(matches!(
        CorpusIndex::from_manifest_text(&dup, dir.path()),
        Err(CorpusError::DuplicateDoi { .. })
    ));
    let missing = line("a", "10.1/x", "nope.txt");
    assert!(matches!(
        CorpusIndex::from_manifest_text(&missing, dir.path()),
        Err(CorpusError::MissingAsset { .. })
    ));
    assert!(matches!(
        CorpusIndex::from_manifest_text("{not json", dir.path()),
        Err(CorpusError::MalformedManifest { line: 1, .. })
    ));
    let empty = CorpusIndex::from_manifest_text("", dir.path()).unwrap();
    assert!(matches!(
        search_index(&empty, &BooleanQuery::term("creep").unwrap()),
        Err(CorpusError::EmptyIndex)
    ));
}

#[test]
fn fixture_corpus_loads() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/manifest.jsonl");
    let index = CorpusIndex::ingest_manifest(&manifest).unwrap();
    assert_eq!(index.len(), 6);
    let hits = search_index(&index, &parse_query("creep AND NOT fatigue").unwrap()).unwrap();
    assert!(!hits.is_empty() && hits.len() < 6);
    for id in index.ids() {
        let b = index.load(&id).unwrap();
        assert!(!b.pages.is_empty());
    }
}
