//! Unbatched scalar reference of the encoder-decoder, written directly from
//! the cell and attention equations. Shared by several test targets.
#![allow(dead_code)]

use vizseq::model::params::{LstmWeights, Tensor};
use vizseq::model::ModelParams;
use vizseq::tokenizer::SOS;

pub fn matvec(w: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let cols = w.shape[1];
    assert_eq!(cols, x.len());
    (0..w.shape[0])
        .map(|r| (0..cols).map(|c| w.data[r * cols + c] * x[c]).sum())
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn cell(w: &LstmWeights<f64>, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let a = matvec(&w.w_ih, x);
    let b = matvec(&w.w_hh, h);
    let pre: Vec<f64> = (0..4 * n).map(|k| a[k] + b[k] + w.bias.data[k]).collect();
    let mut h2 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for k in 0..n {
        let i = sigmoid(pre[k]);
        let f = sigmoid(pre[n + k]);
        let g = pre[2 * n + k].tanh();
        let o = sigmoid(pre[3 * n + k]);
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    (h2, c2)
}

pub struct Encoded {
    pub out: Vec<Vec<f64>>,
    pub h0: Vec<Vec<f64>>,
    pub c0: Vec<Vec<f64>>,
}

pub fn encode(p: &ModelParams<f64>, src: &[u32]) -> Encoded {
    let hsz = p.hyper.d_cell;
    let n = src.len();
    let mut xs: Vec<Vec<f64>> = src.iter().map(|&id| p.src_emb.row(id as usize).to_vec()).collect();
    let mut h0 = Vec::new();
    let mut c0 = Vec::new();
    for l in 0..p.hyper.layers {
        let mut hf = vec![vec![0.0; hsz]; n];
        let mut cf = vec![vec![0.0; hsz]; n];
        let (mut h, mut c) = (vec![0.0; hsz], vec![0.0; hsz]);
        for t in 0..n {
            (h, c) = cell(&p.enc_fwd[l], &xs[t], &h, &c);
            hf[t] = h.clone();
            cf[t] = c.clone();
        }
        let mut hb = vec![vec![0.0; hsz]; n];
        let mut cb = vec![vec![0.0; hsz]; n];
        let (mut h, mut c) = (vec![0.0; hsz], vec![0.0; hsz]);
        for t in (0..n).rev() {
            (h, c) = cell(&p.enc_bwd[l], &xs[t], &h, &c);
            hb[t] = h.clone();
            cb[t] = c.clone();
        }
        let hcat = [hf[n - 1].clone(), hb[0].clone()].concat();
        let ccat = [cf[n - 1].clone(), cb[0].clone()].concat();
        let br = &p.bridge[l];
        h0.push(matvec(&br.w_h, &hcat).iter().zip(&br.b_h.data).map(|(a, b)| a + b).collect());
        c0.push(matvec(&br.w_c, &ccat).iter().zip(&br.b_c.data).map(|(a, b)| a + b).collect());
        xs = (0..n).map(|t| [hf[t].clone(), hb[t].clone()].concat()).collect();
    }
    Encoded { out: xs, h0, c0 }
}

pub struct RefState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub ctx: Vec<f64>,
}

impl RefState {
    pub fn initial(p: &ModelParams<f64>, enc: &Encoded) -> Self {
        RefState { h: enc.h0.clone(), c: enc.c0.clone(), ctx: vec![0.0; 2 * p.hyper.d_cell] }
    }
}

/// Returns log-probabilities, attention weights and the next state.
pub fn step(p: &ModelParams<f64>, enc: &Encoded, y_prev: u32, st: &RefState) -> (Vec<f64>, Vec<f64>, RefState) {
    let mut x = [p.tgt_emb.row(y_prev as usize).to_vec(), st.ctx.clone()].concat();
    let mut next = RefState { h: Vec::new(), c: Vec::new(), ctx: Vec::new() };
    for l in 0..p.hyper.layers {
        let (h, c) = cell(&p.dec[l], &x, &st.h[l], &st.c[l]);
        x = h.clone();
        next.h.push(h);
        next.c.push(c);
    }
    let top = x;
    let q = matvec(&p.attn_q, &top);
    let scores: Vec<f64> = enc
        .out
        .iter()
        .map(|o| {
            let k = matvec(&p.attn_k, o);
            (0..q.len()).map(|i| p.attn_v.data[i] * (q[i] + k[i]).tanh()).sum()
        })
        .collect();
    let alpha = softmax(&scores);
    let mut ctx = vec![0.0; 2 * p.hyper.d_cell];
    for (a, o) in alpha.iter().zip(&enc.out) {
        for (c, v) in ctx.iter_mut().zip(o) {
            *c += a * v;
        }
    }
    let feat = [top, ctx.clone()].concat();
    let logits: Vec<f64> = matvec(&p.out_w, &feat).iter().zip(&p.out_b.data).map(|(a, b)| a + b).collect();
    let probs = softmax(&logits);
    next.ctx = ctx;
    (probs.iter().map(|p| p.ln()).collect(), alpha, next)
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Teacher-forced NLL per step and the attention rows.
pub fn score(p: &ModelParams<f64>, src: &[u32], tgt: &[u32]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let enc = encode(p, src);
    let mut st = RefState::initial(p, &enc);
    let mut prev = SOS;
    let mut nll = Vec::new();
    let mut align = Vec::new();
    for &y in tgt {
        let (lp, a, next) = step(p, &enc, prev, &st);
        nll.push(-lp[y as usize]);
        align.push(a);
        st = next;
        prev = y;
    }
    (nll, align)
}

pub fn random_params(src_vocab: usize, tgt_vocab: usize, d: usize, d_attn: usize, seed: u64) -> ModelParams<f64> {
    use rand::{Rng, SeedableRng};
    let mut hyper = vizseq::model::Hyper::new(src_vocab, tgt_vocab, d);
    hyper.d_attn = d_attn;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::<f64>::zeros(hyper);
    p.visit_mut(|_, t| t.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.6..0.6)));
    p
}
