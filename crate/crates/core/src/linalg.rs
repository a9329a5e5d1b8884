//! Dense row-major numerics shared by the model code.
//!
//! Everything here works on flat slices. Matrices are row-major and
//! contiguous; shapes are passed explicitly.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of model tensors.
///
/// Training runs in `f32`; gradient checking and scalar references use
/// `f64`. The two differ only in the gemm kernel and in the activation
/// kernels, where `f32` uses a rational approximation of `tanh`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Tag stored in checkpoints.
    const DTYPE: &'static str;

    /// # Safety
    /// Pointers and strides must describe valid matrices of the given sizes.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn tanh_in_place(xs: &mut [Self]);

    fn sigmoid_in_place(xs: &mut [Self]);

    fn from_f64_lossy(v: f64) -> Self;

    fn to_f64_lossless(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    const BYTES: usize;
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn tanh_in_place(xs: &mut [f64]) {
        for x in xs {
            *x = x.tanh();
        }
    }

    fn sigmoid_in_place(xs: &mut [f64]) {
        for x in xs {
            *x = 1.0 / (1.0 + (-*x).exp());
        }
    }

    fn from_f64_lossy(v: f64) -> f64 {
        v
    }

    fn to_f64_lossless(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(buf)
    }
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn tanh_in_place(xs: &mut [f32]) {
        for x in xs {
            *x = fast_tanh(*x);
        }
    }

    fn sigmoid_in_place(xs: &mut [f32]) {
        for x in xs {
            *x = 0.5 + 0.5 * fast_tanh(0.5 * *x);
        }
    }

    fn from_f64_lossy(v: f64) -> f32 {
        v as f32
    }

    fn to_f64_lossless(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&bytes[..4]);
        f32::from_le_bytes(buf)
    }
}

/// Branch-free rational approximation of `tanh` for `f32`.
///
/// Odd polynomial of degree 13 over an even polynomial of degree 6, clamped
/// where the true value rounds to ±1. Absolute error stays below 1e-6.
#[inline(always)]
pub fn fast_tanh(x: f32) -> f32 {
    const CLAMP: f32 = 7.905_311;
    const A1: f32 = 4.893_524_6e-3;
    const A3: f32 = 6.372_619_3e-4;
    const A5: f32 = 1.485_722_4e-5;
    const A7: f32 = 5.122_297e-8;
    const A9: f32 = -8.604_672e-11;
    const A11: f32 = 2.000_188e-13;
    const A13: f32 = -2.760_768_5e-16;
    const B0: f32 = 4.893_525e-3;
    const B2: f32 = 2.268_434_6e-3;
    const B4: f32 = 1.185_347_1e-4;
    const B6: f32 = 1.198_258_4e-6;

    let x = x.clamp(-CLAMP, CLAMP);
    let x2 = x * x;
    let mut p = A13;
    p = p * x2 + A11;
    p = p * x2 + A9;
    p = p * x2 + A7;
    p = p * x2 + A5;
    p = p * x2 + A3;
    p = p * x2 + A1;
    p *= x;
    let mut q = B6;
    q = q * x2 + B4;
    q = q * x2 + B2;
    q = q * x2 + B0;
    p / q
}

/// `C = alpha * op(A) * op(B) + beta * C` where `op(A)` is `m x k` and `op(B)`
/// is `k x n`. With `trans_a`, `a` holds `A^T` as a row-major `k x m`; with
/// `trans_b`, `b` holds `B^T` as a row-major `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: T,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k, "gemm: lhs too short");
    assert!(b.len() >= k * n, "gemm: rhs too short");
    assert!(c.len() >= m * n, "gemm: output too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v = if beta == T::zero() { T::zero() } else { *v * beta };
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths were checked above and strides stay within them.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out (rows x out_dim) = x (rows x in_dim) * w^T`, with `w` stored `out_dim x in_dim`.
pub fn matmul_nt<T: Real>(x: &[T], w: &[T], rows: usize, in_dim: usize, out_dim: usize, out: &mut [T], accumulate: bool) {
    let beta = if accumulate { T::one() } else { T::zero() };
    gemm(false, true, rows, out_dim, in_dim, T::one(), x, w, beta, out);
}

/// `out (rows x in_dim) (+)= dy (rows x out_dim) * w`, with `w` stored `out_dim x in_dim`.
pub fn matmul_nn<T: Real>(dy: &[T], w: &[T], rows: usize, out_dim: usize, in_dim: usize, out: &mut [T], accumulate: bool) {
    let beta = if accumulate { T::one() } else { T::zero() };
    gemm(false, false, rows, in_dim, out_dim, T::one(), dy, w, beta, out);
}

/// `dw (out_dim x in_dim) += dy^T (out_dim x rows) * x (rows x in_dim)`.
pub fn accumulate_tn<T: Real>(dy: &[T], x: &[T], rows: usize, out_dim: usize, in_dim: usize, dw: &mut [T]) {
    gemm(true, false, out_dim, in_dim, rows, T::one(), dy, x, T::one(), dw);
}

/// Adds every row of `m` (rows x cols) into `acc`.
pub fn add_rows<T: Real>(m: &[T], cols: usize, acc: &mut [T]) {
    for row in m.chunks_exact(cols) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

/// Adds `bias` to every row of `m`.
pub fn add_bias<T: Real>(m: &mut [T], bias: &[T]) {
    for row in m.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = acc.iter().copied().sum::<T>();
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `acc += alpha * x`
pub fn axpy<T: Real>(alpha: T, x: &[T], acc: &mut [T]) {
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += alpha * v;
    }
}

/// Softmax of one row, written into `out`. Accumulates in `f64` and rounds
/// each weight once, so rows sum to one within a few `f32` ulps.
pub fn softmax<T: Real>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max).to_f64().unwrap();
    let e: Vec<f64> = logits.iter().map(|l| (l.to_f64().unwrap() - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    for (o, v) in out.iter_mut().zip(e) {
        *o = T::from_f64_lossy(v / sum);
    }
}

/// Numerically stable log-softmax of one row, written into `out`.
pub fn log_softmax<T: Real>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for &l in logits {
        sum += (l - max).exp();
    }
    let lse = max + sum.ln();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = l - lse;
    }
}
