//! Mini-batch training with Adam.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError, Model};
use crate::corpus::{CorpusExample, TrainingPair};
use crate::linalg::Real;
use crate::model::{backward, forward, Example, Hyper, Mode, ModelParams};
use crate::tokenizer::{TokenSequence, Vocabs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub seed: u64,
    pub d_cell: usize,
    /// Width of the attention scorer; `None` means `d_cell`.
    pub d_attn: Option<usize>,
    pub clip_norm: f64,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    /// Record a history point every this many steps; 0 records only the final step.
    pub eval_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            steps: 20_000,
            dropout: 0.5,
            max_len: 500,
            seed: 0,
            d_cell: 512,
            d_attn: None,
            clip_norm: 5.0,
            checkpoint_every: 0,
            eval_every: 1000,
            checkpoint_path: None,
            log_path: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training pair fits max_len {0}")]
    NoTrainableData(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training log: {0}")]
    Log(#[from] std::io::Error),
    #[error("parameters became non-finite at step {0}")]
    Diverged(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub step: usize,
    /// Mean per-token training NLL over the steps since the previous point.
    pub train_nll: f64,
    /// Per-token NLL on the held-out pairs, when any were given.
    pub heldout_log_perplexity: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub points: Vec<HistoryPoint>,
    /// Per-step training NLL per token.
    pub step_loss: Vec<f64>,
}

/// Adam with bias correction.
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: ModelParams<T>,
    v: ModelParams<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ModelParams<T>, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        self.t += 1;
        let (b1, b2) = (T::from_f64_lossy(self.beta1), T::from_f64_lossy(self.beta2));
        let (one, eps) = (T::one(), T::from_f64_lossy(self.eps));
        let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(self.t));
        let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(self.t));
        let lr = T::from_f64_lossy(self.lr);
        self.m.zip_mut(grads, |_, m, g| {
            for (mv, &gv) in m.data.iter_mut().zip(&g.data) {
                *mv = b1 * *mv + (one - b1) * gv;
            }
        });
        self.v.zip_mut(grads, |_, v, g| {
            for (vv, &gv) in v.data.iter_mut().zip(&g.data) {
                *vv = b2 * *vv + (one - b2) * gv * gv;
            }
        });
        let mut moments = Vec::new();
        self.m.visit(|_, m| moments.push(m));
        let mut seconds = Vec::new();
        self.v.visit(|_, v| seconds.push(v));
        let mut it = moments.into_iter().zip(seconds);
        params.visit_mut(|_, p| {
            let (m, v) = it.next().expect("same layout");
            for ((pv, &mv), &vv) in p.data.iter_mut().zip(&m.data).zip(&v.data) {
                *pv -= lr * (mv / c1) / ((vv / c2).sqrt() + eps);
            }
        });
    }
}

/// Pairs encoded for one vocabulary, skipping those longer than `max_len`.
pub fn encode_pairs(pairs: &[TrainingPair], vocabs: &Vocabs, max_len: usize) -> Vec<(TokenSequence, TokenSequence)> {
    let mut skipped = 0;
    let out: Vec<_> = pairs
        .iter()
        .filter_map(|p| {
            let enc = vocabs
                .source
                .encode(&p.source, max_len)
                .and_then(|s| Ok((s, vocabs.target.encode(&p.target, max_len)?)));
            if enc.is_err() {
                skipped += 1;
            }
            enc.ok()
        })
        .collect();
    if skipped > 0 {
        log::warn!("{skipped} pairs exceed max_len {max_len} and were skipped");
    }
    out
}

/// Mean over pairs of per-token NLL.
pub fn log_perplexity<T: Real>(params: &ModelParams<T>, pairs: &[(TokenSequence, TokenSequence)]) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    let mut sum = 0.0;
    for chunk in pairs.chunks(32) {
        let batch: Vec<Example> = chunk.iter().map(|(s, t)| Example { source: &s.0, target: &t.0 }).collect();
        let pass = forward(params, &batch, Mode::Eval).expect("pairs were encoded with this model's vocabularies");
        for (nll, (_, t)) in pass.step_nll.iter().zip(chunk) {
            sum += nll.iter().sum::<f64>() / t.len() as f64;
        }
    }
    sum / pairs.len() as f64
}

/// Splits examples (not pairs) so that no spec is shared across the split.
/// Returns `(train, heldout)`; at least one example stays in training.
pub fn split_examples(corpus: &[CorpusExample], heldout_fraction: f64, seed: u64) -> (Vec<CorpusExample>, Vec<CorpusExample>) {
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_held = ((corpus.len() as f64 * heldout_fraction).round() as usize).min(corpus.len().saturating_sub(1));
    let (held, train) = idx.split_at(n_held);
    let pick = |ids: &[usize]| {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.iter().map(|&i| corpus[i].clone()).collect()
    };
    (pick(train), pick(held))
}

/// Batches of indices with similar target lengths, in shuffled order.
fn epoch_batches(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..lengths.len()).collect();
    idx.shuffle(rng);
    let mut batches = Vec::new();
    for pool in idx.chunks(batch_size * 50) {
        let mut pool = pool.to_vec();
        pool.sort_by_key(|&i| lengths[i]);
        batches.extend(pool.chunks(batch_size).map(|c| c.to_vec()));
    }
    batches.shuffle(rng);
    batches
}

fn validate(config: &TrainConfig) -> Result<(), TrainError> {
    let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return bad("learning_rate must be finite and non-negative");
    }
    if config.batch_size == 0 || config.steps == 0 {
        return bad("batch_size and steps must be at least 1");
    }
    if !(0.0..1.0).contains(&config.dropout) {
        return bad("dropout must be in [0, 1)");
    }
    if config.max_len < 2 || config.d_cell == 0 || config.d_attn == Some(0) {
        return bad("max_len must be at least 2 and model sizes positive");
    }
    Ok(())
}

/// Fresh parameters for the given vocabularies and config.
pub fn init_params<T: Real>(vocabs: &Vocabs, config: &TrainConfig) -> ModelParams<T> {
    let mut hyper = Hyper::new(vocabs.source.len(), vocabs.target.len(), config.d_cell);
    if let Some(a) = config.d_attn {
        hyper.d_attn = a;
    }
    ModelParams::init(hyper, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

/// Trains from freshly initialized parameters.
pub fn train<T: Real>(
    pairs: &[TrainingPair],
    heldout: &[TrainingPair],
    vocabs: &Vocabs,
    config: &TrainConfig,
) -> Result<(Model<T>, TrainHistory), TrainError> {
    validate(config)?;
    let params = init_params(vocabs, config);
    train_from(params, pairs, heldout, vocabs, config)
}

/// Trains starting from `params`.
pub fn train_from<T: Real>(
    mut params: ModelParams<T>,
    pairs: &[TrainingPair],
    heldout: &[TrainingPair],
    vocabs: &Vocabs,
    config: &TrainConfig,
) -> Result<(Model<T>, TrainHistory), TrainError> {
    validate(config)?;
    let data = encode_pairs(pairs, vocabs, config.max_len);
    if data.is_empty() {
        return Err(TrainError::NoTrainableData(config.max_len));
    }
    let held = encode_pairs(heldout, vocabs, config.max_len);
    let lengths: Vec<usize> = data.iter().map(|(_, t)| t.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_BA7C);
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut log = match &config.log_path {
        Some(p) => Some(BufWriter::new(
            OpenOptions::new().create(true).write(true).truncate(true).open(p).map(|f: File| f)?,
        )),
        None => None,
    };
    let mut history = TrainHistory::default();
    let mut queue: Vec<Vec<usize>> = Vec::new();
    let mut window = (0.0, 0usize);
    for step in 1..=config.steps {
        if queue.is_empty() {
            queue = epoch_batches(&lengths, config.batch_size, &mut rng);
            queue.reverse();
        }
        let batch_idx = queue.pop().expect("refilled above");
        let batch: Vec<Example> =
            batch_idx.iter().map(|&i| Example { source: &data[i].0 .0, target: &data[i].1 .0 }).collect();
        let mode = Mode::Train {
            dropout: config.dropout,
            seed: config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ step as u64,
        };
        let pass = forward(&params, &batch, mode).expect("encoded with matching vocabularies");
        let tokens = pass.num_tokens() as f64;
        let mut grads = params.zeros_like();
        backward(&params, &pass, &mut grads, T::from_f64_lossy(1.0 / tokens));
        let norm = grads.global_norm();
        if norm > config.clip_norm {
            grads.scale(T::from_f64_lossy(config.clip_norm / norm));
        }
        adam.step(&mut params, &grads);
        let loss = pass.total_nll / tokens;
        history.step_loss.push(loss);
        window.0 += loss;
        window.1 += 1;
        let checkpoint_due = config.checkpoint_every > 0 && step % config.checkpoint_every == 0;
        let eval_due = step == config.steps || (config.eval_every > 0 && step % config.eval_every == 0);
        if (eval_due || checkpoint_due) && !params.is_finite() {
            return Err(TrainError::Diverged(step));
        }
        if eval_due {
            let point = HistoryPoint {
                step,
                train_nll: window.0 / window.1 as f64,
                heldout_log_perplexity: (!held.is_empty()).then(|| log_perplexity(&params, &held)),
            };
            window = (0.0, 0);
            log::info!(
                "step {step}: train nll/char {:.4}, held-out log perplexity {}",
                point.train_nll,
                point.heldout_log_perplexity.map_or("n/a".into(), |v| format!("{v:.4}"))
            );
            if let Some(w) = log.as_mut() {
                let line = serde_json::json!({
                    "step": step,
                    "loss": point.train_nll,
                    "perplexity": point.heldout_log_perplexity,
                });
                writeln!(w, "{line}")?;
                w.flush()?;
            }
            history.points.push(point);
        }
        if checkpoint_due {
            if let Some(path) = &config.checkpoint_path {
                let model = Model { params: params.clone(), vocabs: vocabs.clone(), max_len: config.max_len };
                checkpoint::save(&model, path)?;
            }
        }
    }
    Ok((Model { params, vocabs: vocabs.clone(), max_len: config.max_len }, history))
}
