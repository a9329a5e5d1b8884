//! Hand-labelled validator cases and a text fuzzer.

use std::collections::BTreeSet;

use rand::Rng;
use serde::Deserialize;
use vizseq::corpus::FieldSchema;
use vizseq::validate::{validate_text, GrammarSubset, Rule, ValidityResult};

#[derive(Debug, Deserialize)]
pub struct Case {
    pub name: String,
    pub text: String,
    pub language: bool,
    pub visualization: bool,
    pub phantoms: Vec<String>,
    pub rules: BTreeSet<Rule>,
}

#[derive(Debug, Deserialize)]
pub struct Suite {
    pub schema: Vec<FieldSchema>,
    pub cases: Vec<Case>,
}

pub fn suite() -> Suite {
    serde_json::from_str(include_str!("validator.json")).expect("golden suite parses")
}

/// `Err` describes how the validator disagreed with the label.
pub fn check(case: &Case, schema: &[FieldSchema]) -> Result<ValidityResult, String> {
    let r = validate_text(&case.text, &GrammarSubset::default(), Some(schema));
    let rules: BTreeSet<Rule> = r.errors.iter().map(|d| d.rule).collect();
    if r.language_valid != case.language
        || r.visualization_valid != case.visualization
        || r.phantom_fields != case.phantoms
        || rules != case.rules
    {
        return Err(format!(
            "{}: got language {} visualization {} phantoms {:?} rules {:?}",
            case.name, r.language_valid, r.visualization_valid, r.phantom_fields, rules
        ));
    }
    Ok(r)
}

const ALPHABET: &[u8] = br#"{}[]:,"\ abcdefmnopqrstuvxyz0123456789.-"#;

/// Applies up to `edits` random character edits to `text`.
pub fn mutate(text: &str, edits: usize, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.gen_range(1..=edits) {
        let i = rng.gen_range(0..=chars.len());
        let c = ALPHABET[rng.gen_range(0..ALPHABET.len())] as char;
        match rng.gen_range(0..4) {
            0 if i < chars.len() => {
                chars.remove(i);
            }
            1 if i < chars.len() => chars[i] = c,
            2 => chars.truncate(i),
            _ => chars.insert(i, c),
        }
    }
    chars.into_iter().collect()
}
