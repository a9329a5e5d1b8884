//! Batched teacher-forced forward pass and its exact gradient.
//!
//! Encoder tensors are time-major: row `t * batch + b` holds position `t` of
//! example `b`. Padded positions of the forward direction carry the last real
//! state along; the backward direction stays at its zero start until the
//! example's last real position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::{activate_gates, cell_backward, cell_update};
use super::params::{LstmWeights, ModelParams};
use super::ModelError;
use crate::linalg::{self, Real};
use crate::tokenizer::{PAD, SOS};

/// One source/target pair of token ids. Both sequences end with EOS.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub source: &'a [u32],
    pub target: &'a [u32],
}

/// Training mode enables inverted dropout on every layer input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    Train { dropout: f64, seed: u64 },
}

pub(crate) struct Dropout<T> {
    rng: ChaCha8Rng,
    keep: f64,
    scale: T,
}

impl<T: Real> Dropout<T> {
    pub(crate) fn from_mode(mode: Mode) -> Option<Self> {
        match mode {
            Mode::Train { dropout, seed } if dropout > 0.0 => Some(Self {
                rng: ChaCha8Rng::seed_from_u64(seed),
                keep: 1.0 - dropout,
                scale: T::from_f64_lossy(1.0 / (1.0 - dropout)),
            }),
            _ => None,
        }
    }

    fn mask(&mut self, len: usize) -> Vec<T> {
        (0..len)
            .map(|_| if self.rng.gen::<f64>() < self.keep { self.scale } else { T::zero() })
            .collect()
    }
}

fn apply_dropout<T: Real>(x: &mut [T], dropout: &mut Option<Dropout<T>>) -> Option<Vec<T>> {
    let d = dropout.as_mut()?;
    let mask = d.mask(x.len());
    x.iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
    Some(mask)
}

/// Activations of one encoder direction at one layer, time-major.
pub(crate) struct DirectionRun<T> {
    gates: Vec<T>,
    c: Vec<T>,
    tc: Vec<T>,
    h: Vec<T>,
}

pub(crate) struct EncoderCache<T> {
    pub(crate) batch: usize,
    pub(crate) max_len: usize,
    pub(crate) lens: Vec<usize>,
    ids: Vec<u32>,
    inputs: Vec<Vec<T>>,
    masks: Vec<Option<Vec<T>>>,
    fwd: Vec<DirectionRun<T>>,
    bwd: Vec<DirectionRun<T>>,
    /// Top layer outputs `[h_fwd; h_bwd]`, `max_len * batch x 2H`.
    pub(crate) out: Vec<T>,
    /// Attention keys `W_k * out`, `max_len * batch x A`.
    pub(crate) keys: Vec<T>,
    bridge_h: Vec<Vec<T>>,
    bridge_c: Vec<Vec<T>>,
}

/// Decoder recurrent state for a batch: per-layer `c` and `h` (`batch x H`)
/// and the previous attention context (`batch x 2H`).
#[derive(Debug, Clone, PartialEq)]
pub struct DecState<T> {
    pub c: Vec<Vec<T>>,
    pub h: Vec<Vec<T>>,
    pub ctx: Vec<T>,
}

/// Memory the decoder attends over.
pub(crate) struct EncoderView<'a, T> {
    pub(crate) out: &'a [T],
    pub(crate) keys: &'a [T],
    /// Row of position `j` for batch row `b` is `j * stride + cols[b]`.
    pub(crate) stride: usize,
    pub(crate) cols: Vec<usize>,
    pub(crate) lens: Vec<usize>,
    pub(crate) max_len: usize,
}

impl<'a, T> EncoderView<'a, T> {
    fn row(&self, b: usize, j: usize) -> usize {
        j * self.stride + self.cols[b]
    }
}

pub(crate) struct StepCache<T> {
    y_in: Vec<u32>,
    inputs: Vec<Vec<T>>,
    masks: Vec<Option<Vec<T>>>,
    gates: Vec<Vec<T>>,
    tc: Vec<Vec<T>>,
    pub(crate) state: DecState<T>,
    /// `tanh(W_q h + W_k enc_j)`, row `b * max_len + j`.
    scores_tanh: Vec<T>,
    /// Attention weights, row `b * max_len + j`; zero past each source length.
    pub(crate) alpha: Vec<T>,
    /// `[h_top; ctx]`, `batch x 3H`.
    o: Vec<T>,
    pub(crate) logp: Vec<T>,
}

fn check_ids(ids: &[u32], vocab: usize, what: &str) -> Result<(), ModelError> {
    if ids.is_empty() {
        return Err(ModelError::EmptySequence(what.to_string()));
    }
    match ids.iter().find(|&&id| id as usize >= vocab) {
        Some(&id) => Err(ModelError::TokenOutOfRange { id, vocab }),
        None => Ok(()),
    }
}

fn run_direction<T: Real>(
    w: &LstmWeights<T>,
    x: &[T],
    in_dim: usize,
    max_len: usize,
    batch: usize,
    lens: &[usize],
    reverse: bool,
) -> DirectionRun<T> {
    let h = w.hidden_dim();
    let rows = max_len * batch;
    let mut gates = vec![T::zero(); rows * 4 * h];
    linalg::matmul_nt(x, &w.w_ih.data, rows, in_dim, 4 * h, &mut gates, false);
    linalg::add_bias(&mut gates, &w.bias.data);
    let mut c = vec![T::zero(); rows * h];
    let mut tc = vec![T::zero(); rows * h];
    let mut hs = vec![T::zero(); rows * h];
    let zeros = vec![T::zero(); batch * h];
    let mut c_new = vec![T::zero(); batch * h];
    let mut h_new = vec![T::zero(); batch * h];
    for idx in 0..max_len {
        let t = if reverse { max_len - 1 - idx } else { idx };
        let prev = (idx > 0).then(|| if reverse { t + 1 } else { t - 1 });
        let span = t * batch * h..(t + 1) * batch * h;
        let g = &mut gates[t * batch * 4 * h..(t + 1) * batch * 4 * h];
        if let Some(pt) = prev {
            let hp = &hs[pt * batch * h..(pt + 1) * batch * h];
            linalg::matmul_nt(hp, &w.w_hh.data, batch, h, 4 * h, g, true);
        }
        activate_gates(g, h);
        let (c_prev, h_prev) = match prev {
            Some(pt) => (
                c[pt * batch * h..(pt + 1) * batch * h].to_vec(),
                hs[pt * batch * h..(pt + 1) * batch * h].to_vec(),
            ),
            None => (zeros.clone(), zeros.clone()),
        };
        cell_update(g, &c_prev, &mut c_new, &mut tc[span.clone()], &mut h_new, h);
        for b in 0..batch {
            let r = b * h..(b + 1) * h;
            let dst = t * batch * h + b * h..t * batch * h + (b + 1) * h;
            if t < lens[b] {
                c[dst.clone()].copy_from_slice(&c_new[r.clone()]);
                hs[dst].copy_from_slice(&h_new[r]);
            } else {
                c[dst.clone()].copy_from_slice(&c_prev[r.clone()]);
                hs[dst].copy_from_slice(&h_prev[r]);
            }
        }
    }
    DirectionRun { gates, c, tc, h: hs }
}

pub(crate) fn encoder_forward<T: Real>(
    p: &ModelParams<T>,
    sources: &[&[u32]],
    dropout: &mut Option<Dropout<T>>,
) -> EncoderCache<T> {
    let hy = p.hyper;
    let (h, e) = (hy.d_cell, hy.d_emb);
    let batch = sources.len();
    let lens: Vec<usize> = sources.iter().map(|s| s.len()).collect();
    let max_len = lens.iter().copied().max().unwrap_or(0);
    let rows = max_len * batch;
    let mut ids = vec![PAD; rows];
    for (b, s) in sources.iter().enumerate() {
        for (t, &id) in s.iter().enumerate() {
            ids[t * batch + b] = id;
        }
    }
    let mut x = vec![T::zero(); rows * e];
    for (r, &id) in ids.iter().enumerate() {
        x[r * e..(r + 1) * e].copy_from_slice(p.src_emb.row(id as usize));
    }
    let mut cache = EncoderCache {
        batch,
        max_len,
        lens,
        ids,
        inputs: Vec::new(),
        masks: Vec::new(),
        fwd: Vec::new(),
        bwd: Vec::new(),
        out: Vec::new(),
        keys: Vec::new(),
        bridge_h: Vec::new(),
        bridge_c: Vec::new(),
    };
    for l in 0..hy.layers {
        let in_dim = hy.enc_input(l);
        let mask = apply_dropout(&mut x, dropout);
        let f = run_direction(&p.enc_fwd[l], &x, in_dim, max_len, batch, &cache.lens, false);
        let bk = run_direction(&p.enc_bwd[l], &x, in_dim, max_len, batch, &cache.lens, true);
        let mut y = vec![T::zero(); rows * 2 * h];
        for r in 0..rows {
            y[r * 2 * h..r * 2 * h + h].copy_from_slice(&f.h[r * h..(r + 1) * h]);
            y[r * 2 * h + h..(r + 1) * 2 * h].copy_from_slice(&bk.h[r * h..(r + 1) * h]);
        }
        let mut bh = vec![T::zero(); batch * 2 * h];
        let mut bc = vec![T::zero(); batch * 2 * h];
        let last = (max_len - 1) * batch;
        for b in 0..batch {
            let (rf, rb) = ((last + b) * h, b * h);
            bh[b * 2 * h..b * 2 * h + h].copy_from_slice(&f.h[rf..rf + h]);
            bh[b * 2 * h + h..(b + 1) * 2 * h].copy_from_slice(&bk.h[rb..rb + h]);
            bc[b * 2 * h..b * 2 * h + h].copy_from_slice(&f.c[rf..rf + h]);
            bc[b * 2 * h + h..(b + 1) * 2 * h].copy_from_slice(&bk.c[rb..rb + h]);
        }
        cache.inputs.push(std::mem::replace(&mut x, y));
        cache.masks.push(mask);
        cache.fwd.push(f);
        cache.bwd.push(bk);
        cache.bridge_h.push(bh);
        cache.bridge_c.push(bc);
    }
    let mut keys = vec![T::zero(); rows * hy.d_attn];
    linalg::matmul_nt(&x, &p.attn_k.data, rows, 2 * h, hy.d_attn, &mut keys, false);
    cache.out = x;
    cache.keys = keys;
    cache
}

/// Initial decoder state from the final encoder states of every layer.
pub(crate) fn bridge_forward<T: Real>(p: &ModelParams<T>, enc: &EncoderCache<T>) -> DecState<T> {
    let h = p.hyper.d_cell;
    let batch = enc.batch;
    let mut state = DecState { c: Vec::new(), h: Vec::new(), ctx: vec![T::zero(); batch * 2 * h] };
    for (l, br) in p.bridge.iter().enumerate() {
        let mut h0 = vec![T::zero(); batch * h];
        linalg::matmul_nt(&enc.bridge_h[l], &br.w_h.data, batch, 2 * h, h, &mut h0, false);
        linalg::add_bias(&mut h0, &br.b_h.data);
        let mut c0 = vec![T::zero(); batch * h];
        linalg::matmul_nt(&enc.bridge_c[l], &br.w_c.data, batch, 2 * h, h, &mut c0, false);
        linalg::add_bias(&mut c0, &br.b_c.data);
        state.h.push(h0);
        state.c.push(c0);
    }
    state
}

/// One decoder step for a batch of previous tokens.
pub(crate) fn decoder_step<T: Real>(
    p: &ModelParams<T>,
    view: &EncoderView<'_, T>,
    y_in: &[u32],
    prev: &DecState<T>,
    dropout: &mut Option<Dropout<T>>,
) -> StepCache<T> {
    let hy = p.hyper;
    let (h, e, a, v) = (hy.d_cell, hy.d_emb, hy.d_attn, hy.tgt_vocab);
    let batch = y_in.len();
    let m = view.max_len;
    let in0 = hy.dec_input(0);
    let mut x = vec![T::zero(); batch * in0];
    for (b, &y) in y_in.iter().enumerate() {
        x[b * in0..b * in0 + e].copy_from_slice(p.tgt_emb.row(y as usize));
        x[b * in0 + e..(b + 1) * in0].copy_from_slice(&prev.ctx[b * 2 * h..(b + 1) * 2 * h]);
    }
    let mut step = StepCache {
        y_in: y_in.to_vec(),
        inputs: Vec::with_capacity(hy.layers),
        masks: Vec::with_capacity(hy.layers),
        gates: Vec::with_capacity(hy.layers),
        tc: Vec::with_capacity(hy.layers),
        state: DecState { c: Vec::new(), h: Vec::new(), ctx: vec![T::zero(); batch * 2 * h] },
        scores_tanh: vec![T::zero(); batch * m * a],
        alpha: vec![T::zero(); batch * m],
        o: vec![T::zero(); batch * 3 * h],
        logp: vec![T::zero(); batch * v],
    };
    for l in 0..hy.layers {
        let w = &p.dec[l];
        let in_dim = hy.dec_input(l);
        let mask = apply_dropout(&mut x, dropout);
        let mut g = vec![T::zero(); batch * 4 * h];
        linalg::matmul_nt(&x, &w.w_ih.data, batch, in_dim, 4 * h, &mut g, false);
        linalg::matmul_nt(&prev.h[l], &w.w_hh.data, batch, h, 4 * h, &mut g, true);
        linalg::add_bias(&mut g, &w.bias.data);
        activate_gates(&mut g, h);
        let mut c = vec![T::zero(); batch * h];
        let mut tc = vec![T::zero(); batch * h];
        let mut hn = vec![T::zero(); batch * h];
        cell_update(&g, &prev.c[l], &mut c, &mut tc, &mut hn, h);
        step.inputs.push(std::mem::replace(&mut x, hn.clone()));
        step.masks.push(mask);
        step.gates.push(g);
        step.tc.push(tc);
        step.state.c.push(c);
        step.state.h.push(hn);
    }
    let top = &step.state.h[hy.layers - 1];
    let mut q = vec![T::zero(); batch * a];
    linalg::matmul_nt(top, &p.attn_q.data, batch, h, a, &mut q, false);
    for b in 0..batch {
        let len = view.lens[b];
        let qb = &q[b * a..(b + 1) * a];
        let mut scores = vec![T::zero(); len];
        for (j, score) in scores.iter_mut().enumerate() {
            let row = view.row(b, j);
            let s = &mut step.scores_tanh[(b * m + j) * a..(b * m + j + 1) * a];
            for ((sv, &qv), &kv) in s.iter_mut().zip(qb).zip(&view.keys[row * a..(row + 1) * a]) {
                *sv = qv + kv;
            }
            T::tanh_in_place(s);
            *score = linalg::dot(&p.attn_v.data, s);
        }
        let mut weights = vec![T::zero(); len];
        linalg::softmax(&scores, &mut weights);
        let ctx = &mut step.state.ctx[b * 2 * h..(b + 1) * 2 * h];
        for (j, &w) in weights.iter().enumerate() {
            step.alpha[b * m + j] = w;
            let row = view.row(b, j);
            linalg::axpy(w, &view.out[row * 2 * h..(row + 1) * 2 * h], ctx);
        }
        step.o[b * 3 * h..b * 3 * h + h].copy_from_slice(&top[b * h..(b + 1) * h]);
        step.o[b * 3 * h + h..(b + 1) * 3 * h].copy_from_slice(ctx);
    }
    let mut logits = vec![T::zero(); batch * v];
    linalg::matmul_nt(&step.o, &p.out_w.data, batch, 3 * h, v, &mut logits, false);
    linalg::add_bias(&mut logits, &p.out_b.data);
    for b in 0..batch {
        linalg::log_softmax(&logits[b * v..(b + 1) * v], &mut step.logp[b * v..(b + 1) * v]);
    }
    step
}

/// Cached activations of one teacher-forced pass over a batch.
pub struct ForwardPass<T> {
    pub(crate) enc: EncoderCache<T>,
    pub(crate) init: DecState<T>,
    pub(crate) steps: Vec<StepCache<T>>,
    targets: Vec<Vec<u32>>,
    /// Per-example, per-step negative log-likelihood of the gold token.
    pub step_nll: Vec<Vec<f64>>,
    /// Sum of `step_nll` over the batch.
    pub total_nll: f64,
}

impl<T: Real> ForwardPass<T> {
    pub fn batch_size(&self) -> usize {
        self.targets.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.targets.iter().map(|t| t.len()).sum()
    }

    /// Attention rows of example `b`: one row per target step, one column per
    /// source position.
    pub fn alignment(&self, b: usize) -> Vec<Vec<f64>> {
        let m = self.enc.max_len;
        let len = self.enc.lens[b];
        (0..self.targets[b].len())
            .map(|t| {
                self.steps[t].alpha[b * m..b * m + len]
                    .iter()
                    .map(|v| v.to_f64_lossless())
                    .collect()
            })
            .collect()
    }
}

/// Teacher-forced forward pass. The decoder reads SOS then the gold prefix.
pub fn forward<T: Real>(p: &ModelParams<T>, batch: &[Example<'_>], mode: Mode) -> Result<ForwardPass<T>, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptySequence("batch".into()));
    }
    for ex in batch {
        check_ids(ex.source, p.hyper.src_vocab, "source")?;
        check_ids(ex.target, p.hyper.tgt_vocab, "target")?;
    }
    let mut dropout = Dropout::from_mode(mode);
    let sources: Vec<&[u32]> = batch.iter().map(|e| e.source).collect();
    let enc = encoder_forward(p, &sources, &mut dropout);
    let init = bridge_forward(p, &enc);
    let bsz = batch.len();
    let n = batch.iter().map(|e| e.target.len()).max().unwrap_or(0);
    let v = p.hyper.tgt_vocab;
    let view = EncoderView {
        out: &enc.out,
        keys: &enc.keys,
        stride: bsz,
        cols: (0..bsz).collect(),
        lens: enc.lens.clone(),
        max_len: enc.max_len,
    };
    let mut steps: Vec<StepCache<T>> = Vec::with_capacity(n);
    let mut step_nll = vec![Vec::new(); bsz];
    let mut total = 0.0;
    for t in 0..n {
        let y_in: Vec<u32> = batch
            .iter()
            .map(|e| if t == 0 { SOS } else { e.target.get(t - 1).copied().unwrap_or(PAD) })
            .collect();
        let prev = steps.last().map(|s| &s.state).unwrap_or(&init);
        let step = decoder_step(p, &view, &y_in, prev, &mut dropout);
        for (b, ex) in batch.iter().enumerate() {
            if let Some(&gold) = ex.target.get(t) {
                let nll = -step.logp[b * v + gold as usize].to_f64_lossless();
                step_nll[b].push(nll);
                total += nll;
            }
        }
        steps.push(step);
    }
    drop(view);
    Ok(ForwardPass {
        enc,
        init,
        steps,
        targets: batch.iter().map(|e| e.target.to_vec()).collect(),
        step_nll,
        total_nll: total,
    })
}

/// Accumulates `scale * d(total_nll)/d(params)` into `grads`.
pub fn backward<T: Real>(p: &ModelParams<T>, pass: &ForwardPass<T>, grads: &mut ModelParams<T>, scale: T) {
    let hy = p.hyper;
    let (h, e, a, v, layers) = (hy.d_cell, hy.d_emb, hy.d_attn, hy.tgt_vocab, hy.layers);
    let enc = &pass.enc;
    let (bsz, m) = (enc.batch, enc.max_len);
    let rows = m * bsz;
    let zero = T::zero();
    let one = T::one();

    let mut d_out = vec![zero; rows * 2 * h];
    let mut d_keys = vec![zero; rows * a];
    let mut dh_rec = vec![vec![zero; bsz * h]; layers];
    let mut dc_rec = vec![vec![zero; bsz * h]; layers];
    let mut dctx_carry = vec![zero; bsz * 2 * h];
    let mut dlogits = vec![zero; bsz * v];
    let mut d_o = vec![zero; bsz * 3 * h];
    let mut dgates = vec![zero; bsz * 4 * h];

    for t in (0..pass.steps.len()).rev() {
        let st = &pass.steps[t];
        for b in 0..bsz {
            let row = &mut dlogits[b * v..(b + 1) * v];
            match pass.targets[b].get(t) {
                Some(&gold) => {
                    for (d, &lp) in row.iter_mut().zip(&st.logp[b * v..(b + 1) * v]) {
                        *d = scale * lp.exp();
                    }
                    row[gold as usize] -= scale;
                }
                None => row.fill(zero),
            }
        }
        linalg::accumulate_tn(&dlogits, &st.o, bsz, v, 3 * h, &mut grads.out_w.data);
        linalg::add_rows(&dlogits, v, &mut grads.out_b.data);
        linalg::matmul_nn(&dlogits, &p.out_w.data, bsz, v, 3 * h, &mut d_o, false);

        let mut dh = vec![zero; bsz * h];
        let mut dctx = dctx_carry.clone();
        for b in 0..bsz {
            dh[b * h..(b + 1) * h].copy_from_slice(&d_o[b * 3 * h..b * 3 * h + h]);
            for (d, &g) in dctx[b * 2 * h..(b + 1) * 2 * h].iter_mut().zip(&d_o[b * 3 * h + h..(b + 1) * 3 * h]) {
                *d += g;
            }
        }

        let mut dq = vec![zero; bsz * a];
        for b in 0..bsz {
            let len = enc.lens[b];
            let alpha = &st.alpha[b * m..b * m + len];
            let dc_b = &dctx[b * 2 * h..(b + 1) * 2 * h];
            let mut dalpha = vec![zero; len];
            for j in 0..len {
                let row = j * bsz + b;
                dalpha[j] = linalg::dot(dc_b, &enc.out[row * 2 * h..(row + 1) * 2 * h]);
                linalg::axpy(alpha[j], dc_b, &mut d_out[row * 2 * h..(row + 1) * 2 * h]);
            }
            let mean: T = alpha.iter().zip(&dalpha).map(|(&x, &y)| x * y).sum();
            for j in 0..len {
                let de = alpha[j] * (dalpha[j] - mean);
                let s = &st.scores_tanh[(b * m + j) * a..(b * m + j + 1) * a];
                linalg::axpy(de, s, &mut grads.attn_v.data);
                let row = j * bsz + b;
                for k in 0..a {
                    let dpre = de * p.attn_v.data[k] * (one - s[k] * s[k]);
                    dq[b * a + k] += dpre;
                    d_keys[row * a + k] += dpre;
                }
            }
        }
        let top = &st.state.h[layers - 1];
        linalg::accumulate_tn(&dq, top, bsz, a, h, &mut grads.attn_q.data);
        linalg::matmul_nn(&dq, &p.attn_q.data, bsz, a, h, &mut dh, true);

        let prev = if t > 0 { &pass.steps[t - 1].state } else { &pass.init };
        for l in (0..layers).rev() {
            let w = &p.dec[l];
            let in_dim = hy.dec_input(l);
            for (x, &r) in dh.iter_mut().zip(&dh_rec[l]) {
                *x += r;
            }
            cell_backward(&st.gates[l], &prev.c[l], &st.tc[l], &dh, &mut dc_rec[l], &mut dgates, h);
            linalg::accumulate_tn(&dgates, &st.inputs[l], bsz, 4 * h, in_dim, &mut grads.dec[l].w_ih.data);
            linalg::accumulate_tn(&dgates, &prev.h[l], bsz, 4 * h, h, &mut grads.dec[l].w_hh.data);
            linalg::add_rows(&dgates, 4 * h, &mut grads.dec[l].bias.data);
            linalg::matmul_nn(&dgates, &w.w_hh.data, bsz, 4 * h, h, &mut dh_rec[l], false);
            let mut dx = vec![zero; bsz * in_dim];
            linalg::matmul_nn(&dgates, &w.w_ih.data, bsz, 4 * h, in_dim, &mut dx, false);
            if let Some(mask) = &st.masks[l] {
                dx.iter_mut().zip(mask).for_each(|(d, &mk)| *d *= mk);
            }
            if l > 0 {
                dh = dx;
            } else {
                for b in 0..bsz {
                    let src = &dx[b * in_dim..(b + 1) * in_dim];
                    let emb = grads.tgt_emb.row_mut(st.y_in[b] as usize);
                    for (g, &d) in emb.iter_mut().zip(&src[..e]) {
                        *g += d;
                    }
                    dctx_carry[b * 2 * h..(b + 1) * 2 * h].copy_from_slice(&src[e..]);
                }
            }
        }
    }

    let mut final_h = vec![(vec![zero; bsz * h], vec![zero; bsz * h]); layers];
    let mut final_c = vec![(vec![zero; bsz * h], vec![zero; bsz * h]); layers];
    for l in 0..layers {
        let br = &p.bridge[l];
        let gb = &mut grads.bridge[l];
        let split = |d0: &[T], x: &[T], w: &[T], gw: &mut [T], gbias: &mut [T]| {
            linalg::accumulate_tn(d0, x, bsz, h, 2 * h, gw);
            linalg::add_rows(d0, h, gbias);
            let mut dx = vec![zero; bsz * 2 * h];
            linalg::matmul_nn(d0, w, bsz, h, 2 * h, &mut dx, false);
            let mut f = vec![zero; bsz * h];
            let mut bk = vec![zero; bsz * h];
            for b in 0..bsz {
                f[b * h..(b + 1) * h].copy_from_slice(&dx[b * 2 * h..b * 2 * h + h]);
                bk[b * h..(b + 1) * h].copy_from_slice(&dx[b * 2 * h + h..(b + 1) * 2 * h]);
            }
            (f, bk)
        };
        final_h[l] = split(&dh_rec[l], &enc.bridge_h[l], &br.w_h.data, &mut gb.w_h.data, &mut gb.b_h.data);
        final_c[l] = split(&dc_rec[l], &enc.bridge_c[l], &br.w_c.data, &mut gb.w_c.data, &mut gb.b_c.data);
    }

    linalg::accumulate_tn(&d_keys, &enc.out, rows, a, 2 * h, &mut grads.attn_k.data);
    linalg::matmul_nn(&d_keys, &p.attn_k.data, rows, a, 2 * h, &mut d_out, true);

    let mut d_y = d_out;
    for l in (0..layers).rev() {
        let in_dim = hy.enc_input(l);
        let mut dx = vec![zero; rows * in_dim];
        for dir in 0..2 {
            let (w, run, gw) = if dir == 0 {
                (&p.enc_fwd[l], &enc.fwd[l], &mut grads.enc_fwd[l])
            } else {
                (&p.enc_bwd[l], &enc.bwd[l], &mut grads.enc_bwd[l])
            };
            let (mut dh_r, mut dc_r) = if dir == 0 {
                (final_h[l].0.clone(), final_c[l].0.clone())
            } else {
                (final_h[l].1.clone(), final_c[l].1.clone())
            };
            let mut dg_all = vec![zero; rows * 4 * h];
            let zeros = vec![zero; bsz * h];
            let mut dh_t = vec![zero; bsz * h];
            let mut carry_h = vec![zero; bsz * h];
            let mut carry_c = vec![zero; bsz * h];
            for idx in (0..m).rev() {
                let t = if dir == 0 { idx } else { m - 1 - idx };
                let prev = (idx > 0).then(|| if dir == 0 { t - 1 } else { t + 1 });
                for b in 0..bsz {
                    let yrow = (t * bsz + b) * 2 * h + dir * h;
                    let valid = t < enc.lens[b];
                    for k in 0..h {
                        let total = d_y[yrow + k] + dh_r[b * h + k];
                        if valid {
                            dh_t[b * h + k] = total;
                            carry_h[b * h + k] = zero;
                            carry_c[b * h + k] = zero;
                        } else {
                            dh_t[b * h + k] = zero;
                            carry_h[b * h + k] = total;
                            carry_c[b * h + k] = dc_r[b * h + k];
                            dc_r[b * h + k] = zero;
                        }
                    }
                }
                let c_prev = match prev {
                    Some(pt) => &run.c[pt * bsz * h..(pt + 1) * bsz * h],
                    None => &zeros[..],
                };
                let span = t * bsz * h..(t + 1) * bsz * h;
                let dg = &mut dg_all[t * bsz * 4 * h..(t + 1) * bsz * 4 * h];
                cell_backward(
                    &run.gates[t * bsz * 4 * h..(t + 1) * bsz * 4 * h],
                    c_prev,
                    &run.tc[span],
                    &dh_t,
                    &mut dc_r,
                    dg,
                    h,
                );
                if let Some(pt) = prev {
                    let h_prev = &run.h[pt * bsz * h..(pt + 1) * bsz * h];
                    linalg::accumulate_tn(dg, h_prev, bsz, 4 * h, h, &mut gw.w_hh.data);
                }
                linalg::matmul_nn(dg, &w.w_hh.data, bsz, 4 * h, h, &mut dh_r, false);
                for k in 0..bsz * h {
                    dh_r[k] += carry_h[k];
                    dc_r[k] += carry_c[k];
                }
            }
            linalg::accumulate_tn(&dg_all, &enc.inputs[l], rows, 4 * h, in_dim, &mut gw.w_ih.data);
            linalg::add_rows(&dg_all, 4 * h, &mut gw.bias.data);
            linalg::matmul_nn(&dg_all, &w.w_ih.data, rows, 4 * h, in_dim, &mut dx, true);
        }
        if let Some(mask) = &enc.masks[l] {
            dx.iter_mut().zip(mask).for_each(|(d, &mk)| *d *= mk);
        }
        if l > 0 {
            d_y = dx;
        } else {
            for (r, &id) in enc.ids.iter().enumerate() {
                let t = r / bsz;
                if t >= enc.lens[r % bsz] {
                    continue;
                }
                let g = grads.src_emb.row_mut(id as usize);
                for (gv, &d) in g.iter_mut().zip(&dx[r * e..(r + 1) * e]) {
                    *gv += d;
                }
            }
        }
    }
}
