//! Data shipped with the crate.

use std::path::PathBuf;

use crate::corpus::Dataset;

/// Held-out tables converted from the Rdatasets collection.
pub const HELDOUT: &[(&str, &str)] = &[
    ("Nile", include_str!("../data/rdatasets/Nile.json")),
    ("PlantGrowth", include_str!("../data/rdatasets/PlantGrowth.json")),
    ("cars", include_str!("../data/rdatasets/cars.json")),
    ("engel", include_str!("../data/rdatasets/engel.json")),
    ("iris", include_str!("../data/rdatasets/iris.json")),
    ("longley", include_str!("../data/rdatasets/longley.json")),
    ("sleep", include_str!("../data/rdatasets/sleep.json")),
    ("stackloss", include_str!("../data/rdatasets/stackloss.json")),
    ("sunspot.year", include_str!("../data/rdatasets/sunspot.year.json")),
    ("women", include_str!("../data/rdatasets/women.json")),
];

pub fn heldout_datasets() -> Vec<Dataset> {
    HELDOUT
        .iter()
        .map(|(name, text)| Dataset::from_json_str(*name, text).expect("bundled datasets are well-formed"))
        .collect()
}

pub fn heldout_dataset(name: &str) -> Option<Dataset> {
    HELDOUT
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| Dataset::from_json_str(*n, text).expect("bundled datasets are well-formed"))
}

/// Directory of the bundled training corpus.
pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join("corpus")
}
