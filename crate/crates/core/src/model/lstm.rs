//! LSTM cell kernels over row-major batches.
//!
//! Gate pre-activations are laid out per row as `[i | f | g | o]`, each
//! `hidden` wide. `i`, `f`, `o` go through a sigmoid, `g` through tanh, and
//! `c' = f*c + i*g`, `h' = o*tanh(c')`.

use super::params::LstmWeights;
use super::ModelError;
use crate::linalg::{self, Real};

/// Applies the gate nonlinearities in place to a `rows x 4*hidden` block.
pub fn activate_gates<T: Real>(gates: &mut [T], hidden: usize) {
    for row in gates.chunks_exact_mut(4 * hidden) {
        let (ifg, o) = row.split_at_mut(3 * hidden);
        let (if_, g) = ifg.split_at_mut(2 * hidden);
        T::sigmoid_in_place(if_);
        T::tanh_in_place(g);
        T::sigmoid_in_place(o);
    }
}

/// Candidate state update for activated gates. Writes `c`, `tanh(c)` and `h`.
pub fn cell_update<T: Real>(gates: &[T], c_prev: &[T], c: &mut [T], tc: &mut [T], h: &mut [T], hidden: usize) {
    for (r, g) in gates.chunks_exact(4 * hidden).enumerate() {
        let span = r * hidden..(r + 1) * hidden;
        let cp = &c_prev[span.clone()];
        let c_row = &mut c[span.clone()];
        for k in 0..hidden {
            c_row[k] = g[hidden + k] * cp[k] + g[k] * g[2 * hidden + k];
        }
        tc[span.clone()].copy_from_slice(c_row);
    }
    T::tanh_in_place(tc);
    for (r, g) in gates.chunks_exact(4 * hidden).enumerate() {
        let span = r * hidden..(r + 1) * hidden;
        let (tc_row, h_row) = (&tc[span.clone()], &mut h[span]);
        for k in 0..hidden {
            h_row[k] = g[3 * hidden + k] * tc_row[k];
        }
    }
}

/// Backpropagates one cell step.
///
/// `dh` is the gradient at `h'`; `dc` enters as the gradient at `c'` and
/// leaves as the gradient at `c_prev`. `dgates` receives gradients of the
/// gate pre-activations.
pub fn cell_backward<T: Real>(
    gates: &[T],
    c_prev: &[T],
    tc: &[T],
    dh: &[T],
    dc: &mut [T],
    dgates: &mut [T],
    hidden: usize,
) {
    let one = T::one();
    for (r, (g, dg)) in gates
        .chunks_exact(4 * hidden)
        .zip(dgates.chunks_exact_mut(4 * hidden))
        .enumerate()
    {
        let base = r * hidden;
        for k in 0..hidden {
            let (i, f, gg, o) = (g[k], g[hidden + k], g[2 * hidden + k], g[3 * hidden + k]);
            let t = tc[base + k];
            let dhk = dh[base + k];
            let dct = dc[base + k] + dhk * o * (one - t * t);
            let d_o = dhk * t;
            let d_i = dct * gg;
            let d_g = dct * i;
            let d_f = dct * c_prev[base + k];
            dg[k] = d_i * i * (one - i);
            dg[hidden + k] = d_f * f * (one - f);
            dg[2 * hidden + k] = d_g * (one - gg * gg);
            dg[3 * hidden + k] = d_o * o * (one - o);
            dc[base + k] = dct * f;
        }
    }
}

/// One step of a single LSTM cell on unbatched vectors.
pub fn lstm_step<T: Real>(
    x: &[T],
    c: &[T],
    h: &[T],
    weights: &LstmWeights<T>,
) -> Result<(Vec<T>, Vec<T>), ModelError> {
    let hidden = weights.hidden_dim();
    let input = weights.input_dim();
    if x.len() != input || c.len() != hidden || h.len() != hidden {
        return Err(ModelError::DimensionMismatch(format!(
            "lstm_step expects x:{input} c:{hidden} h:{hidden}, got x:{} c:{} h:{}",
            x.len(),
            c.len(),
            h.len()
        )));
    }
    let mut gates = weights.bias.data.clone();
    linalg::matmul_nt(x, &weights.w_ih.data, 1, input, 4 * hidden, &mut gates, true);
    linalg::matmul_nt(h, &weights.w_hh.data, 1, hidden, 4 * hidden, &mut gates, true);
    activate_gates(&mut gates, hidden);
    let mut c_new = vec![T::zero(); hidden];
    let mut tc = vec![T::zero(); hidden];
    let mut h_new = vec![T::zero(); hidden];
    cell_update(&gates, c, &mut c_new, &mut tc, &mut h_new, hidden);
    Ok((c_new, h_new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Tensor;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn weights(input: usize, hidden: usize, seed: f64) -> LstmWeights<f64> {
        let mk = |rows: usize, cols: usize, off: f64| Tensor {
            shape: if cols == 0 { vec![rows] } else { vec![rows, cols] },
            data: (0..rows * cols.max(1)).map(|i| ((i as f64 + off) * seed).sin() * 0.7).collect(),
        };
        LstmWeights {
            w_ih: mk(4 * hidden, input, 0.0),
            w_hh: mk(4 * hidden, hidden, 100.0),
            bias: mk(4 * hidden, 0, 200.0),
        }
    }

    #[test]
    fn zero_weights_zero_state_give_zero_state() {
        let w = LstmWeights {
            w_ih: Tensor::zeros(&[12, 2]),
            w_hh: Tensor::zeros(&[12, 3]),
            bias: Tensor::zeros(&[12]),
        };
        let (c, h) = lstm_step(&[5.0, -3.0], &[0.0; 3], &[0.0; 3], &w).unwrap();
        assert!(c.iter().chain(&h).all(|&v| v == 0.0));
    }

    #[test]
    fn matches_scalar_gate_equations() {
        let (input, hidden) = (2, 3);
        let w = weights(input, hidden, 0.37);
        let x = [0.3, -1.2];
        let c0 = [0.1, -0.4, 0.9];
        let h0 = [-0.2, 0.05, 0.6];
        let (c, h) = lstm_step(&x, &c0, &h0, &w).unwrap();
        for k in 0..hidden {
            let pre = |gate: usize| {
                let row = gate * hidden + k;
                let mut s = w.bias.data[row];
                for j in 0..input {
                    s += w.w_ih.data[row * input + j] * x[j];
                }
                for j in 0..hidden {
                    s += w.w_hh.data[row * hidden + j] * h0[j];
                }
                s
            };
            let (i, f, g, o) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
            let ck = f * c0[k] + i * g;
            assert!((c[k] - ck).abs() < 1e-12);
            assert!((h[k] - o * ck.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_output_is_bounded_for_huge_inputs() {
        let w = weights(2, 3, 1.3);
        let (_, h) = lstm_step(&[1e6, -1e7], &[50.0, -50.0, 3.0], &[1.0, -1.0, 1.0], &w).unwrap();
        assert!(h.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let w = weights(2, 3, 0.5);
        assert!(matches!(
            lstm_step(&[1.0], &[0.0; 3], &[0.0; 3], &w),
            Err(ModelError::DimensionMismatch(_))
        ));
    }
}
