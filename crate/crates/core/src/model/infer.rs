//! Step-wise inference on a single encoded source.

use super::network::{bridge_forward, decoder_step, encoder_forward, forward, DecState, EncoderView, Example, Mode};
use super::params::ModelParams;
use super::ModelError;
use crate::linalg::Real;

/// Encoder memory of one source sequence.
#[derive(Debug, Clone)]
pub struct EncodedSource<T> {
    /// `len x 2H` top-layer states.
    pub states: Vec<T>,
    keys: Vec<T>,
    pub len: usize,
    init: DecState<T>,
}

impl<T: Real> EncodedSource<T> {
    /// Decoder state before the first step.
    pub fn initial_state(&self) -> DecState<T> {
        self.init.clone()
    }
}

/// Result of one decoder step for one hypothesis.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub log_probs: Vec<T>,
    pub state: DecState<T>,
    /// Attention over the source positions, sums to one.
    pub attention: Vec<T>,
}

pub fn encode_source<T: Real>(p: &ModelParams<T>, source: &[u32]) -> Result<EncodedSource<T>, ModelError> {
    if source.is_empty() {
        return Err(ModelError::EmptySequence("source".into()));
    }
    if let Some(&id) = source.iter().find(|&&id| id as usize >= p.hyper.src_vocab) {
        return Err(ModelError::TokenOutOfRange { id, vocab: p.hyper.src_vocab });
    }
    let enc = encoder_forward(p, &[source], &mut None);
    let init = bridge_forward(p, &enc);
    Ok(EncodedSource { len: source.len(), states: enc.out, keys: enc.keys, init })
}

/// Advances several hypotheses over the same source in one batch.
pub fn decode_batch<T: Real>(
    p: &ModelParams<T>,
    enc: &EncodedSource<T>,
    tokens: &[u32],
    states: &[&DecState<T>],
) -> Result<Vec<StepOutput<T>>, ModelError> {
    let hy = p.hyper;
    if tokens.len() != states.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} tokens for {} states",
            tokens.len(),
            states.len()
        )));
    }
    if let Some(&id) = tokens.iter().find(|&&id| id as usize >= hy.tgt_vocab) {
        return Err(ModelError::TokenOutOfRange { id, vocab: hy.tgt_vocab });
    }
    let h = hy.d_cell;
    for s in states {
        if s.c.len() != hy.layers
            || s.h.len() != hy.layers
            || s.c.iter().chain(&s.h).any(|v| v.len() != h)
            || s.ctx.len() != 2 * h
        {
            return Err(ModelError::DimensionMismatch("decoder state does not match the model".into()));
        }
    }
    let n = tokens.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let stacked = DecState {
        c: (0..hy.layers).map(|l| states.iter().flat_map(|s| s.c[l].iter().copied()).collect()).collect(),
        h: (0..hy.layers).map(|l| states.iter().flat_map(|s| s.h[l].iter().copied()).collect()).collect(),
        ctx: states.iter().flat_map(|s| s.ctx.iter().copied()).collect(),
    };
    let view = EncoderView {
        out: &enc.states,
        keys: &enc.keys,
        stride: 1,
        cols: vec![0; n],
        lens: vec![enc.len; n],
        max_len: enc.len,
    };
    let step = decoder_step(p, &view, tokens, &stacked, &mut None);
    let v = hy.tgt_vocab;
    let m = enc.len;
    Ok((0..n)
        .map(|b| StepOutput {
            log_probs: step.logp[b * v..(b + 1) * v].to_vec(),
            state: DecState {
                c: step.state.c.iter().map(|c| c[b * h..(b + 1) * h].to_vec()).collect(),
                h: step.state.h.iter().map(|x| x[b * h..(b + 1) * h].to_vec()).collect(),
                ctx: step.state.ctx[b * 2 * h..(b + 1) * 2 * h].to_vec(),
            },
            attention: step.alpha[b * m..(b + 1) * m].to_vec(),
        })
        .collect())
}

pub fn decode_step<T: Real>(
    p: &ModelParams<T>,
    enc: &EncodedSource<T>,
    prev_token: u32,
    state: &DecState<T>,
) -> Result<StepOutput<T>, ModelError> {
    Ok(decode_batch(p, enc, &[prev_token], &[state])?.remove(0))
}

/// Teacher-forced score of one target sequence.
#[derive(Debug, Clone)]
pub struct SequenceScore {
    pub total_nll: f64,
    pub step_nll: Vec<f64>,
    /// One row per target step, one column per source position.
    pub alignment: Vec<Vec<f64>>,
}

pub fn model_forward<T: Real>(
    p: &ModelParams<T>,
    source: &[u32],
    target: &[u32],
    mode: Mode,
) -> Result<SequenceScore, ModelError> {
    let pass = forward(p, &[Example { source, target }], mode)?;
    Ok(SequenceScore {
        total_nll: pass.total_nll,
        alignment: pass.alignment(0),
        step_nll: pass.step_nll.into_iter().next().unwrap_or_default(),
    })
}
