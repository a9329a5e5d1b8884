mod golden;

use proptest::prelude::*;
use rand::SeedableRng;
use vizseq::bundled;
use vizseq::corpus::{infer_schema, load_corpus_dir};
use vizseq::validate::{score_batch, validate_spec, validate_text, GrammarSubset, Rule};

#[test]
fn golden_suite_is_classified_exactly() {
    let suite = golden::suite();
    assert!(suite.cases.len() >= 20);
    let failures: Vec<String> = suite.cases.iter().filter_map(|c| golden::check(c, &suite.schema).err()).collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn golden_suite_covers_every_error_rule() {
    let suite = golden::suite();
    let covered: std::collections::BTreeSet<Rule> = suite.cases.iter().flat_map(|c| c.rules.iter().copied()).collect();
    for rule in [
        Rule::Json,
        Rule::NotObject,
        Rule::Mark,
        Rule::Encoding,
        Rule::Channel,
        Rule::FieldType,
        Rule::Aggregate,
        Rule::Bin,
        Rule::TimeUnit,
        Rule::Sort,
        Rule::Transform,
        Rule::Phantom,
        Rule::KindMismatch,
    ] {
        assert!(covered.contains(&rule), "{rule:?}");
    }
}

#[test]
fn every_corpus_spec_is_valid_for_its_own_data() {
    let grammar = GrammarSubset::default();
    for ex in load_corpus_dir(&bundled::corpus_dir()).unwrap() {
        let schema = infer_schema(&ex.dataset).unwrap();
        let r = validate_spec(ex.spec.as_object().unwrap(), &grammar, Some(&schema));
        assert!(r.visualization_valid && r.errors.is_empty(), "{}: {:?}", ex.name, r.errors);
    }
}

#[test]
fn rates_of_the_golden_suite() {
    let suite = golden::suite();
    let results: Vec<_> = suite
        .cases
        .iter()
        .map(|c| validate_text(&c.text, &GrammarSubset::default(), Some(&suite.schema)))
        .collect();
    let rates = score_batch(&results).unwrap();
    let n = suite.cases.len() as f64;
    let count = |f: fn(&golden::Case) -> bool| suite.cases.iter().filter(|c| f(c)).count() as f64 / n;
    assert_eq!(rates.language, count(|c| c.language));
    assert_eq!(rates.visualization, count(|c| c.visualization));
    assert_eq!(rates.phantom, count(|c| !c.phantoms.is_empty()));
}

proptest! {
    #[test]
    fn plotable_implies_parseable(seed in any::<u64>(), pick in 0usize..36, edits in 1usize..6) {
        let suite = golden::suite();
        let base = &suite.cases[pick % suite.cases.len()].text;
        let text = golden::mutate(base, edits, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let r = validate_text(&text, &GrammarSubset::default(), Some(&suite.schema));
        prop_assert!(!r.visualization_valid || r.language_valid);
        prop_assert_eq!(r.language_valid, serde_json::from_str::<serde_json::Value>(&text).is_ok_and(|v| v.is_object()));
    }

    #[test]
    fn arbitrary_text_never_panics(text in ".{0,200}") {
        let r = validate_text(&text, &GrammarSubset::default(), None);
        prop_assert!(!r.visualization_valid || r.language_valid);
    }
}
