//! Validity rates of beam candidates on held-out datasets.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::Model;
use crate::corpus::{sample_rows, Dataset};
use crate::decoder::beam_search;
use crate::linalg::Real;
use crate::pipeline::{prepare, realize, GenerateError};
use crate::validate::{score_batch, GrammarSubset, ValidityResult};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no beam widths configured")]
    EmptyConfiguration,
    #[error("no datasets to evaluate")]
    NoDatasets,
    #[error("no candidate was produced for beam width {0}")]
    NoSamples(usize),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("report: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub widths: Vec<usize>,
    pub per_dataset_rows: usize,
    pub seed: u64,
    pub model_tag: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { widths: vec![5, 10, 15, 20], per_dataset_rows: 10, seed: 0, model_tag: "bilstm-attn".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model_tag: String,
    pub beam_width: usize,
    pub language: f64,
    pub visualization: f64,
    pub phantom: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub seed: u64,
    pub checkpoint_id: String,
    pub per_dataset_rows: usize,
    /// Every returned beam counts as one sample.
    pub accounting: String,
    pub datasets: Vec<String>,
    pub skipped_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub metadata: EvalMetadata,
}

/// One decoded candidate, for the diagnostics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub dataset: String,
    pub row: usize,
    pub beam_width: usize,
    pub rank: usize,
    pub spec: String,
    pub score: f64,
    pub validity: ValidityResult,
}

/// FNV-1a, so each dataset's row sample depends only on its name.
fn name_seed(seed: u64, name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325 ^ seed, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Decodes sampled rows of each dataset at every width and aggregates
/// per-candidate validity. `sink` receives every candidate.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    datasets: &[Dataset],
    config: &EvalConfig,
    checkpoint_id: &str,
    mut sink: impl FnMut(&CandidateRecord),
) -> Result<EvalReport, EvalError> {
    if config.widths.is_empty() {
        return Err(EvalError::EmptyConfiguration);
    }
    if datasets.is_empty() {
        return Err(EvalError::NoDatasets);
    }
    let grammar = GrammarSubset::default();
    let mut per_width: Vec<Vec<ValidityResult>> = vec![Vec::new(); config.widths.len()];
    let mut skipped = 0;
    for ds in datasets {
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(config.seed, &ds.name));
        let mut rows = sample_rows(ds.records.len(), config.per_dataset_rows.min(ds.records.len()), &mut rng);
        rows.sort_unstable();
        for row in rows {
            let prepared = match prepare(model, ds, row) {
                Ok(p) => p,
                Err(GenerateError::TooLong { len, limit }) => {
                    log::warn!("{}: row {row} normalizes to {len} characters (limit {limit}), skipped", ds.name);
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            for (wi, &k) in config.widths.iter().enumerate() {
                let hyps = beam_search(&model.params, &prepared.ids, k, model.max_len, false)
                    .map_err(GenerateError::from)?;
                for (rank, h) in hyps.iter().enumerate() {
                    let g = realize(model, &prepared, h, &grammar);
                    sink(&CandidateRecord {
                        dataset: ds.name.clone(),
                        row,
                        beam_width: k,
                        rank,
                        spec: g.spec,
                        score: g.score,
                        validity: g.validity.clone(),
                    });
                    per_width[wi].push(g.validity);
                }
            }
        }
    }
    let mut report_rows = Vec::new();
    for (wi, &k) in config.widths.iter().enumerate() {
        let rates = score_batch(&per_width[wi]).map_err(|_| EvalError::NoSamples(k))?;
        report_rows.push(EvalRow {
            model_tag: config.model_tag.clone(),
            beam_width: k,
            language: rates.language,
            visualization: rates.visualization,
            phantom: rates.phantom,
            samples: rates.count,
        });
    }
    Ok(EvalReport {
        rows: report_rows,
        metadata: EvalMetadata {
            seed: config.seed,
            checkpoint_id: checkpoint_id.to_string(),
            per_dataset_rows: config.per_dataset_rows,
            accounting: "per-candidate".into(),
            datasets: datasets.iter().map(|d| d.name.clone()).collect(),
            skipped_rows: skipped,
        },
    })
}

/// Text table (one column per width, one line per metric) and the JSON form.
pub fn render_report(report: &EvalReport) -> Result<(String, String), EvalError> {
    if report.rows.is_empty() {
        return Err(EvalError::EmptyConfiguration);
    }
    let mut tags: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !tags.contains(&r.model_tag.as_str()) {
            tags.push(&r.model_tag);
        }
    }
    let mut text = String::new();
    for tag in tags {
        let rows: Vec<&EvalRow> = report.rows.iter().filter(|r| r.model_tag == tag).collect();
        let _ = write!(text, "{:<16}", tag);
        for r in &rows {
            let _ = write!(text, "{:>10}", format!("k={}", r.beam_width));
        }
        text.push('\n');
        let metrics: [(&str, fn(&EvalRow) -> String); 4] = [
            ("language", |r| format!("{:.3}", r.language)),
            ("visualization", |r| format!("{:.3}", r.visualization)),
            ("phantom", |r| format!("{:.3}", r.phantom)),
            ("samples", |r| r.samples.to_string()),
        ];
        for (name, f) in metrics {
            let _ = write!(text, "{:<16}", name);
            for r in &rows {
                let _ = write!(text, "{:>10}", f(r));
            }
            text.push('\n');
        }
    }
    let json = serde_json::to_string_pretty(report)?;
    Ok((text, json))
}

pub fn parse_report(json: &str) -> Result<EvalReport, EvalError> {
    Ok(serde_json::from_str(json)?)
}

/// Minimum acceptable rates; a missing entry is not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub language: Option<f64>,
    pub visualization: Option<f64>,
    /// Maximum acceptable phantom rate.
    pub phantom: Option<f64>,
}

impl Thresholds {
    /// Human-readable description of every missed threshold.
    pub fn failures(&self, report: &EvalReport) -> Vec<String> {
        let mut out = Vec::new();
        for r in &report.rows {
            if let Some(min) = self.language.filter(|&m| r.language < m) {
                out.push(format!("{} k={}: language {:.3} < {min}", r.model_tag, r.beam_width, r.language));
            }
            if let Some(min) = self.visualization.filter(|&m| r.visualization < m) {
                out.push(format!("{} k={}: visualization {:.3} < {min}", r.model_tag, r.beam_width, r.visualization));
            }
            if let Some(max) = self.phantom.filter(|&m| r.phantom > m) {
                out.push(format!("{} k={}: phantom {:.3} > {max}", r.model_tag, r.beam_width, r.phantom));
            }
        }
        out
    }
}
