//! Learnable tensors of the encoder-decoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Real;

/// Architecture sizes. Encoder and decoder have the same depth so the
/// bridge can map encoder layer `l` onto decoder layer `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyper {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub d_emb: usize,
    pub d_cell: usize,
    pub d_attn: usize,
    pub layers: usize,
}

impl Hyper {
    /// `d_emb = d_attn = d_cell`, two layers.
    pub fn new(src_vocab: usize, tgt_vocab: usize, d_cell: usize) -> Self {
        Self {
            src_vocab,
            tgt_vocab,
            d_emb: d_cell,
            d_cell,
            d_attn: d_cell,
            layers: 2,
        }
    }

    pub fn enc_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.d_emb
        } else {
            2 * self.d_cell
        }
    }

    /// Layer 0 of the decoder reads the token embedding and the previous context.
    pub fn dec_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.d_emb + 2 * self.d_cell
        } else {
            self.d_cell
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn uniform(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-scale..scale))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a matrix.
    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64_lossy(v.to_f64_lossless())).collect(),
        }
    }
}

/// One LSTM layer. Gate rows are stacked as input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights<T> {
    pub w_ih: Tensor<T>,
    pub w_hh: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LstmWeights<T> {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(&[4 * hidden, input]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.shape[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.shape[1]
    }
}

/// Affine map from the final encoder states of one layer (both directions
/// concatenated) to the initial decoder state of the same layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Bridge<T> {
    pub w_h: Tensor<T>,
    pub b_h: Tensor<T>,
    pub w_c: Tensor<T>,
    pub b_c: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub hyper: Hyper,
    pub src_emb: Tensor<T>,
    pub tgt_emb: Tensor<T>,
    pub enc_fwd: Vec<LstmWeights<T>>,
    pub enc_bwd: Vec<LstmWeights<T>>,
    pub dec: Vec<LstmWeights<T>>,
    pub bridge: Vec<Bridge<T>>,
    /// Query projection, `d_attn x d_cell`.
    pub attn_q: Tensor<T>,
    /// Key projection, `d_attn x 2 d_cell`.
    pub attn_k: Tensor<T>,
    /// Score vector, `d_attn`.
    pub attn_v: Tensor<T>,
    /// Output projection of `[hidden ; context]`, `tgt_vocab x 3 d_cell`.
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

/// Bounds of the uniform initializer.
pub const INIT_SCALE: f64 = 0.08;
pub const FORGET_BIAS: f64 = 1.0;

impl<T: Real> ModelParams<T> {
    pub fn zeros(hyper: Hyper) -> Self {
        let h = hyper.d_cell;
        let a = hyper.d_attn;
        let layers = hyper.layers;
        Self {
            hyper,
            src_emb: Tensor::zeros(&[hyper.src_vocab, hyper.d_emb]),
            tgt_emb: Tensor::zeros(&[hyper.tgt_vocab, hyper.d_emb]),
            enc_fwd: (0..layers).map(|l| LstmWeights::zeros(hyper.enc_input(l), h)).collect(),
            enc_bwd: (0..layers).map(|l| LstmWeights::zeros(hyper.enc_input(l), h)).collect(),
            dec: (0..layers).map(|l| LstmWeights::zeros(hyper.dec_input(l), h)).collect(),
            bridge: (0..layers)
                .map(|_| Bridge {
                    w_h: Tensor::zeros(&[h, 2 * h]),
                    b_h: Tensor::zeros(&[h]),
                    w_c: Tensor::zeros(&[h, 2 * h]),
                    b_c: Tensor::zeros(&[h]),
                })
                .collect(),
            attn_q: Tensor::zeros(&[a, h]),
            attn_k: Tensor::zeros(&[a, 2 * h]),
            attn_v: Tensor::zeros(&[a]),
            out_w: Tensor::zeros(&[hyper.tgt_vocab, 3 * h]),
            out_b: Tensor::zeros(&[hyper.tgt_vocab]),
        }
    }

    /// Weights uniform in ±0.08, biases zero except the forget gate at +1.
    pub fn init(hyper: Hyper, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(hyper);
        p.visit_mut(|name, t| {
            if is_bias(name) {
                return;
            }
            *t = Tensor::uniform(&t.shape, INIT_SCALE, rng);
        });
        let h = hyper.d_cell;
        let one = T::from_f64_lossy(FORGET_BIAS);
        for lstm in p.enc_fwd.iter_mut().chain(p.enc_bwd.iter_mut()).chain(p.dec.iter_mut()) {
            lstm.bias.data[h..2 * h].iter_mut().for_each(|b| *b = one);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.hyper)
    }

    /// Visits every tensor with a stable name, in a fixed order.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(&str, &'a Tensor<T>)) {
        f("src_emb", &self.src_emb);
        f("tgt_emb", &self.tgt_emb);
        for (dir, stack) in [("fwd", &self.enc_fwd), ("bwd", &self.enc_bwd)] {
            for (l, w) in stack.iter().enumerate() {
                f(&format!("encoder.{l}.{dir}.w_ih"), &w.w_ih);
                f(&format!("encoder.{l}.{dir}.w_hh"), &w.w_hh);
                f(&format!("encoder.{l}.{dir}.bias"), &w.bias);
            }
        }
        for (l, w) in self.dec.iter().enumerate() {
            f(&format!("decoder.{l}.w_ih"), &w.w_ih);
            f(&format!("decoder.{l}.w_hh"), &w.w_hh);
            f(&format!("decoder.{l}.bias"), &w.bias);
        }
        for (l, b) in self.bridge.iter().enumerate() {
            f(&format!("bridge.{l}.w_h"), &b.w_h);
            f(&format!("bridge.{l}.b_h"), &b.b_h);
            f(&format!("bridge.{l}.w_c"), &b.w_c);
            f(&format!("bridge.{l}.b_c"), &b.b_c);
        }
        f("attn.w_q", &self.attn_q);
        f("attn.w_k", &self.attn_k);
        f("attn.v", &self.attn_v);
        f("out.w", &self.out_w);
        f("out.b", &self.out_b);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor<T>)) {
        f("src_emb", &mut self.src_emb);
        f("tgt_emb", &mut self.tgt_emb);
        for (dir, stack) in [("fwd", &mut self.enc_fwd), ("bwd", &mut self.enc_bwd)] {
            for (l, w) in stack.iter_mut().enumerate() {
                f(&format!("encoder.{l}.{dir}.w_ih"), &mut w.w_ih);
                f(&format!("encoder.{l}.{dir}.w_hh"), &mut w.w_hh);
                f(&format!("encoder.{l}.{dir}.bias"), &mut w.bias);
            }
        }
        for (l, w) in self.dec.iter_mut().enumerate() {
            f(&format!("decoder.{l}.w_ih"), &mut w.w_ih);
            f(&format!("decoder.{l}.w_hh"), &mut w.w_hh);
            f(&format!("decoder.{l}.bias"), &mut w.bias);
        }
        for (l, b) in self.bridge.iter_mut().enumerate() {
            f(&format!("bridge.{l}.w_h"), &mut b.w_h);
            f(&format!("bridge.{l}.b_h"), &mut b.b_h);
            f(&format!("bridge.{l}.w_c"), &mut b.w_c);
            f(&format!("bridge.{l}.b_c"), &mut b.b_c);
        }
        f("attn.w_q", &mut self.attn_q);
        f("attn.w_k", &mut self.attn_k);
        f("attn.v", &mut self.attn_v);
        f("out.w", &mut self.out_w);
        f("out.b", &mut self.out_b);
    }

    /// Applies `f` to matching tensor pairs of `self` and `other` (same hyper).
    pub fn zip_mut(&mut self, other: &Self, mut f: impl FnMut(&str, &mut Tensor<T>, &Tensor<T>)) {
        let mut others = Vec::new();
        other.visit(|_, t| others.push(t));
        let mut it = others.into_iter();
        self.visit_mut(|name, t| f(name, t, it.next().expect("same layout")));
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(|n, _| out.push(n.to_string()));
        out
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, t| ok &= t.data.iter().all(|v| v.is_finite()));
        ok
    }

    /// Euclidean norm over every tensor.
    pub fn global_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit(|_, t| {
            s += t.data.iter().map(|v| v.to_f64_lossless().powi(2)).sum::<f64>();
        });
        s.sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        self.visit_mut(|_, t| t.data.iter_mut().for_each(|v| *v *= factor));
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.hyper);
        let mut src = Vec::new();
        self.visit(|_, t| src.push(t.cast::<U>()));
        let mut it = src.into_iter();
        out.visit_mut(|_, t| *t = it.next().expect("same layout"));
        out
    }
}

pub fn is_bias(name: &str) -> bool {
    name.ends_with("bias") || name.ends_with(".b_h") || name.ends_with(".b_c") || name == "out.b"
}
