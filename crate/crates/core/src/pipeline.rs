//! Record in, validated candidate specifications out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::Model;
use crate::corpus::{backward_transform, forward_transform, infer_schema, CorpusError, Dataset, FieldSchema, NameMapping};
use crate::decoder::{beam_search, greedy_decode, DecodeError, Hypothesis};
use crate::linalg::Real;
use crate::tokenizer::TokenizeError;
use crate::validate::{validate_text, GrammarSubset, ValidityResult};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("row {row} is out of range for a dataset of {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("normalized record has {len} characters; the model accepts at most {limit}")]
    TooLong { len: usize, limit: usize },
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// A record normalized for the model.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: Vec<FieldSchema>,
    pub mapping: NameMapping,
    pub source: String,
    pub ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSpec {
    /// Decoded text with original field names restored.
    pub spec: String,
    /// Decoded text as emitted, with placeholders.
    pub normalized: String,
    pub score: f64,
    pub log_prob: f64,
    pub finished: bool,
    pub validity: ValidityResult,
}

pub fn prepare<T: Real>(model: &Model<T>, dataset: &Dataset, row: usize) -> Result<Prepared, GenerateError> {
    let rows = dataset.records.len();
    let record = dataset.records.get(row).ok_or(GenerateError::RowOutOfRange { row, rows })?;
    let schema = infer_schema(dataset)?;
    let (source, mapping) = forward_transform(record, &schema)?;
    let ids = match model.vocabs.source.encode(&source, model.max_len) {
        Ok(seq) => seq.0,
        Err(TokenizeError::TooLong { len, .. }) => {
            return Err(GenerateError::TooLong { len, limit: model.max_len - 1 })
        }
        Err(e) => unreachable!("encode only fails on length: {e}"),
    };
    Ok(Prepared { schema, mapping, source, ids })
}

/// Restores names and validates one hypothesis against the original schema.
pub fn realize<T: Real>(model: &Model<T>, prepared: &Prepared, h: &Hypothesis, grammar: &GrammarSubset) -> GeneratedSpec {
    let normalized = model.vocabs.target.decode(&h.tokens).expect("decoder emits in-vocabulary ids");
    let spec = backward_transform(&normalized, &prepared.mapping);
    let validity = validate_text(&spec, grammar, Some(&prepared.schema));
    GeneratedSpec { spec, normalized, score: h.score, log_prob: h.log_prob, finished: h.finished, validity }
}

/// Beam-decodes one row of `dataset`. Width 1 uses greedy decoding.
pub fn generate<T: Real>(
    model: &Model<T>,
    dataset: &Dataset,
    row: usize,
    beam_width: usize,
    record_attention: bool,
) -> Result<(Prepared, Vec<Hypothesis>, Vec<GeneratedSpec>), GenerateError> {
    let prepared = prepare(model, dataset, row)?;
    let hyps = if beam_width == 1 {
        vec![greedy_decode(&model.params, &prepared.ids, model.max_len, record_attention)?]
    } else {
        beam_search(&model.params, &prepared.ids, beam_width, model.max_len, record_attention)?
    };
    let grammar = GrammarSubset::default();
    let specs = hyps.iter().map(|h| realize(model, &prepared, h, &grammar)).collect();
    Ok((prepared, hyps, specs))
}
