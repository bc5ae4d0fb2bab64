//! The shipped fixtures are load-bearing: the corpus texts must cover all
//! five polarity categories under the published threshold schemes when
//! scored by the shipped stub, and the stub's completion bank must keep the
//! polarity it echoes. Everything here is checked against an independent
//! oracle, not against frozen numbers from the implementation.

mod common;

use common::{fixture_path, oracle_opinion, shipped_stub};
use leadsim_core::domain::{categorize, OpinionScore, PolarityCategory, Topic};
use leadsim_core::experiments::{build_action_bank, ingest_corpus};
use leadsim_core::opinion::elicit_opinion;
use leadsim_core::textmodel::TextModel;

const MATCH_LP: f64 = -1.0;
const MISS_LP: f64 = -8.0;

#[test]
fn shipped_stub_matches_its_spec_file() {
    let stub = shipped_stub();
    let echo = stub.spec().echo.as_ref().expect("shipped stub uses the echo rule");
    assert_eq!((echo.match_logprob, echo.miss_logprob), (MATCH_LP, MISS_LP));
    assert!(stub.supports_scoring());
}

#[test]
fn library_scores_agree_with_the_oracle_on_every_fixture_post() {
    let stub = shipped_stub();
    for (topic, corpus) in [
        (Topic::gender(), "corpus_gender.csv"),
        (Topic::drug(), "corpus_drug.jsonl"),
    ] {
        let posts = ingest_corpus(fixture_path(corpus), None).unwrap();
        for post in &posts {
            let got = elicit_opinion(&post.text, &topic, stub.as_ref()).unwrap();
            let expected =
                oracle_opinion(&post.text, &topic.pro_claim, &topic.con_claim, MATCH_LP, MISS_LP);
            assert!(
                (got.value - expected).abs() < 1e-12,
                "{}: {} vs oracle {}",
                post.id,
                got.value,
                expected
            );
        }
    }
}

#[test]
fn gender_corpus_covers_all_five_categories() {
    let stub = shipped_stub();
    let topic = Topic::gender();
    let posts = ingest_corpus(fixture_path("corpus_gender.csv"), Some("gender")).unwrap();
    assert_eq!(posts.len(), 20);
    let (bank, scores) = build_action_bank(&posts, &topic, stub.as_ref()).unwrap();
    assert_eq!(bank.counts().iter().sum::<usize>(), 20);
    for (cat, count) in PolarityCategory::ALL.into_iter().zip(bank.counts()) {
        assert!(count > 0, "category {cat} is empty");
    }
    // the ten seed posts alone (agents of the desk-scale grid) already span
    // several categories, so step-0 states are heterogeneous
    let seed_cats: std::collections::BTreeSet<PolarityCategory> = scores[..10]
        .iter()
        .map(|s| categorize(*s, &topic.category_scheme))
        .collect();
    assert!(seed_cats.len() >= 4, "seed posts too uniform: {seed_cats:?}");
}

#[test]
fn drug_corpus_covers_all_five_categories() {
    let stub = shipped_stub();
    let topic = Topic::drug();
    let posts = ingest_corpus(fixture_path("corpus_drug.jsonl"), Some("drug")).unwrap();
    assert_eq!(posts.len(), 20);
    let (bank, _) = build_action_bank(&posts, &topic, stub.as_ref()).unwrap();
    for (cat, count) in PolarityCategory::ALL.into_iter().zip(bank.counts()) {
        assert!(count > 0, "category {cat} is empty");
    }
}

#[test]
fn completion_bank_sentences_keep_their_polarity() {
    // pro completions must elicit above-neutral scores and carry pro markers
    // so that followers echo them; con symmetrically; neutral carries none
    let stub = shipped_stub();
    let topic = Topic::gender();
    let scheme = &topic.category_scheme;
    let spec = stub.spec().clone();
    let has_marker = |text: &str, markers: &[String]| {
        text.split_whitespace().any(|t| {
            let norm = t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
            markers.iter().any(|m| m.to_lowercase() == norm)
        })
    };
    for text in &spec.completions.pro {
        let s = elicit_opinion(text, &topic, stub.as_ref()).unwrap();
        assert!(
            categorize(s, scheme) >= PolarityCategory::Pro,
            "pro bank text scored {}",
            s.value
        );
        assert!(has_marker(text, &spec.pro_markers));
        assert!(!has_marker(text, &spec.con_markers));
    }
    for text in &spec.completions.con {
        let s = elicit_opinion(text, &topic, stub.as_ref()).unwrap();
        assert!(
            categorize(s, scheme) <= PolarityCategory::Con,
            "con bank text scored {}",
            s.value
        );
        assert!(has_marker(text, &spec.con_markers));
        assert!(!has_marker(text, &spec.pro_markers));
    }
    for text in &spec.completions.neutral {
        assert!(!has_marker(text, &spec.pro_markers));
        assert!(!has_marker(text, &spec.con_markers));
    }
}

#[test]
fn frozen_fixture_scores_hold() {
    // spot values computed with the oracle and frozen; a drift here means the
    // stub rule or a fixture text changed
    let stub = shipped_stub();
    let gender = Topic::gender();
    let drug = Topic::drug();
    let cases = [
        ("A society without gender is a really good idea for everyone", &gender, 0.7057850278),
        ("Society without gender is a really bad idea", &gender, 0.3147990233),
        ("Nothing here changes my mind either way", &gender, 0.5),
        ("Drugs policy needs careful study", &drug, 0.4255574832),
        ("Legalising drugs is a really bad idea", &drug, 0.0147740317),
    ];
    for (text, topic, expected) in cases {
        let s = elicit_opinion(text, topic, stub.as_ref()).unwrap();
        assert!(
            (s.value - expected).abs() < 1e-9,
            "'{text}' scored {} expected {expected}",
            s.value
        );
        let o = oracle_opinion(text, &topic.pro_claim, &topic.con_claim, MATCH_LP, MISS_LP);
        assert!((s.value - o).abs() < 1e-12);
    }
    let _ = OpinionScore::new(0.5).unwrap();
}
