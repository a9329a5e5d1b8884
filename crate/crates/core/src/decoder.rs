//! Greedy and beam-search decoding.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Real;
use crate::model::{decode_batch, encode_source, DecState, ModelError, ModelParams};
use crate::tokenizer::{Vocabulary, EOS, PAD, SOS, UNK};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("beam width must be at least 1")]
    ZeroBeam,
    #[error("max_len must be at least 1")]
    ZeroLength,
    #[error("hypothesis was decoded without attention recording")]
    MissingAlignment,
    #[error("alignment is {rows}x{cols} but labels are {row_labels}x{col_labels}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        row_labels: usize,
        col_labels: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Emitted ids, ending in EOS when finished.
    pub tokens: Vec<u32>,
    /// Log-probability of each emitted id.
    pub step_log_probs: Vec<f64>,
    pub log_prob: f64,
    /// `log_prob / tokens.len()`.
    pub score: f64,
    pub finished: bool,
    /// One attention row per emitted id, when recorded.
    pub alignment: Option<Vec<Vec<f64>>>,
}

impl Hypothesis {
    fn new(tokens: Vec<u32>, step_log_probs: Vec<f64>, alignment: Option<Vec<Vec<f64>>>) -> Self {
        let log_prob: f64 = step_log_probs.iter().sum();
        let finished = tokens.last() == Some(&EOS);
        let score = if tokens.is_empty() { 0.0 } else { log_prob / tokens.len() as f64 };
        Self { tokens, step_log_probs, log_prob, score, finished, alignment }
    }
}

/// Most likely token at each step; ties go to the lowest id.
pub fn greedy_decode<T: Real>(
    params: &ModelParams<T>,
    source: &[u32],
    max_len: usize,
    record_attention: bool,
) -> Result<Hypothesis, DecodeError> {
    if max_len == 0 {
        return Err(DecodeError::ZeroLength);
    }
    let enc = encode_source(params, source)?;
    let mut state = enc.initial_state();
    let mut prev = SOS;
    let (mut tokens, mut lps, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    while tokens.len() < max_len {
        let out = decode_batch(params, &enc, &[prev], &[&state])?.remove(0);
        let mut best = 0;
        for (i, lp) in out.log_probs.iter().enumerate() {
            if *lp > out.log_probs[best] {
                best = i;
            }
        }
        tokens.push(best as u32);
        lps.push(out.log_probs[best].to_f64_lossless());
        if record_attention {
            rows.push(out.attention.iter().map(|a| a.to_f64_lossless()).collect());
        }
        state = out.state;
        prev = best as u32;
        if prev == EOS {
            break;
        }
    }
    Ok(Hypothesis::new(tokens, lps, record_attention.then_some(rows)))
}

struct Node {
    parent: Option<usize>,
    token: u32,
    log_prob: f64,
    attention: Option<Vec<f64>>,
}

struct Live<T> {
    node: Option<usize>,
    cum: f64,
    state: DecState<T>,
}

fn trace(arena: &[Node], mut at: Option<usize>, record: bool) -> Hypothesis {
    let (mut tokens, mut lps, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    while let Some(i) = at {
        let n = &arena[i];
        tokens.push(n.token);
        lps.push(n.log_prob);
        if let Some(a) = &n.attention {
            rows.push(a.clone());
        }
        at = n.parent;
    }
    tokens.reverse();
    lps.reverse();
    rows.reverse();
    Hypothesis::new(tokens, lps, record.then_some(rows))
}

fn by_score(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score)
}

/// Beam search keeping `k` unfinished hypotheses per step.
///
/// Candidates are walked best first until `k` unfinished ones fill the live
/// slots; finished candidates met on the way move to a pool and do not
/// occupy live slots. Search ends once the pool holds `k` hypotheses, in
/// which case the pool is returned, or after `max_len` steps, in which case
/// the pool and the surviving unfinished beams are returned together.
/// Results are sorted by per-token score, best first, and truncated to `k`.
pub fn beam_search<T: Real>(
    params: &ModelParams<T>,
    source: &[u32],
    k: usize,
    max_len: usize,
    record_attention: bool,
) -> Result<Vec<Hypothesis>, DecodeError> {
    if k == 0 {
        return Err(DecodeError::ZeroBeam);
    }
    if max_len == 0 {
        return Err(DecodeError::ZeroLength);
    }
    let enc = encode_source(params, source)?;
    let mut arena: Vec<Node> = Vec::new();
    let mut pool: Vec<usize> = Vec::new();
    let mut live = vec![Live { node: None, cum: 0.0, state: enc.initial_state() }];
    for _ in 0..max_len {
        let tokens: Vec<u32> = live.iter().map(|l| l.node.map_or(SOS, |n| arena[n].token)).collect();
        let states: Vec<&DecState<T>> = live.iter().map(|l| &l.state).collect();
        let outs = decode_batch(params, &enc, &tokens, &states)?;
        let vocab = params.hyper.tgt_vocab;
        let mut cands: Vec<(f64, usize, u32)> = Vec::with_capacity(live.len() * vocab);
        for (i, out) in outs.iter().enumerate() {
            for (v, lp) in out.log_probs.iter().enumerate() {
                cands.push((live[i].cum + lp.to_f64_lossless(), i, v as u32));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next: Vec<Live<T>> = Vec::with_capacity(k);
        for (cum, i, v) in cands {
            if next.len() >= k {
                break;
            }
            if v == EOS && pool.len() >= k {
                continue;
            }
            let out = &outs[i];
            arena.push(Node {
                parent: live[i].node,
                token: v,
                log_prob: out.log_probs[v as usize].to_f64_lossless(),
                attention: record_attention.then(|| out.attention.iter().map(|a| a.to_f64_lossless()).collect()),
            });
            let id = arena.len() - 1;
            if v == EOS {
                pool.push(id);
            } else {
                next.push(Live { node: Some(id), cum, state: out.state.clone() });
            }
        }
        live = next;
        if pool.len() >= k || live.is_empty() {
            break;
        }
    }
    let mut ends: Vec<Option<usize>> = pool.iter().map(|&i| Some(i)).collect();
    if pool.len() < k {
        ends.extend(live.iter().map(|l| l.node));
    }
    let mut hyps: Vec<Hypothesis> = ends.into_iter().map(|e| trace(&arena, e, record_attention)).collect();
    hyps.sort_by(by_score);
    hyps.truncate(k);
    Ok(hyps)
}

/// Attention matrix with printable labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMatrix {
    /// One label per emitted target token.
    pub rows: Vec<String>,
    /// One label per source position, including the end marker.
    pub columns: Vec<String>,
    pub weights: Vec<Vec<f64>>,
}

fn token_label(vocab: &Vocabulary, id: u32) -> String {
    match id {
        PAD => "<pad>".into(),
        SOS => "<sos>".into(),
        EOS => "<eos>".into(),
        UNK => "<unk>".into(),
        _ => vocab.symbol(id).map_or_else(|| format!("<{id}>"), String::from),
    }
}

/// Labels a hypothesis' attention rows with target symbols and its columns
/// with the characters of `source` followed by `<eos>`.
pub fn export_attention(h: &Hypothesis, source: &str, target_vocab: &Vocabulary) -> Result<AttentionMatrix, DecodeError> {
    let weights = h.alignment.clone().ok_or(DecodeError::MissingAlignment)?;
    let rows: Vec<String> = h.tokens.iter().map(|&t| token_label(target_vocab, t)).collect();
    let mut columns: Vec<String> = source.chars().map(String::from).collect();
    columns.push("<eos>".into());
    let cols = weights.first().map_or(columns.len(), |r| r.len());
    if weights.len() != rows.len() || weights.iter().any(|r| r.len() != columns.len()) {
        return Err(DecodeError::ShapeMismatch {
            rows: weights.len(),
            cols,
            row_labels: rows.len(),
            col_labels: columns.len(),
        });
    }
    Ok(AttentionMatrix { rows, columns, weights })
}

impl AttentionMatrix {
    /// Tab-separated table. The first line holds an empty corner cell and the
    /// column labels; every following line holds a row label and its weights.
    /// Labels are written as JSON string literals, so quotes, braces, tabs
    /// and backslashes survive unambiguously.
    pub fn to_tsv(&self) -> String {
        let lit = |s: &String| serde_json::to_string(s).expect("strings serialize");
        let mut out = String::new();
        out.push_str("\"\"");
        for c in &self.columns {
            out.push('\t');
            out.push_str(&lit(c));
        }
        out.push('\n');
        for (label, row) in self.rows.iter().zip(&self.weights) {
            out.push_str(&lit(label));
            for w in row {
                out.push('\t');
                out.push_str(&format!("{w:.6}"));
            }
            out.push('\n');
        }
        out
    }
}
