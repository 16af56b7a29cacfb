//! Layer kernels: forward and backward for each layer kind.
//!
//! Every kernel loops over samples independently, so a sample's result does
//! not depend on which batch it was evaluated in.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor4;
use crate::scalar::Scalar;

/// Elementwise `max(0, z)`.
pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes upstream gradient where the forward input was positive.
pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, grad: &Tensor4<T>) -> Tensor4<T> {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::new(grad.dims(), data).expect("dims preserved")
}

/// Row-wise softmax over `k` classes with max-shift.
pub fn softmax<T: Scalar>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut sum = T::zero();
        for &z in row {
            let e = (z - m).exp();
            sum += e;
            out.push(e);
        }
        for p in &mut out[start..] {
            *p /= sum;
        }
    }
    out
}

fn check_conv<T: Scalar>(x: &Tensor4<T>, weights: &[T], bias: &[T]) -> Result<(usize, usize)> {
    let c_in = x.dims()[3];
    let c_out = bias.len();
    if c_out == 0 || weights.len() != 9 * c_in * c_out {
        return Err(Error::ShapeMismatch(format!(
            "conv3x3 weights hold {} values, expected 3x3x{c_in}x{c_out}",
            weights.len()
        )));
    }
    Ok((c_in, c_out))
}

/// Same-padded 3x3 cross-correlation. Weights are laid out `[ky][kx][c_in][c_out]`.
pub fn conv3x3_forward<T: Scalar>(x: &Tensor4<T>, weights: &[T], bias: &[T]) -> Result<Tensor4<T>> {
    let (c_in, c_out) = check_conv(x, weights, bias)?;
    let [n, h, w, _] = x.dims();
    let mut out = Tensor4::zeros([n, h, w, c_out]);
    let in_len = x.sample_len();
    let out_len = h * w * c_out;
    for s in 0..n {
        let xs = &x.data()[s * in_len..(s + 1) * in_len];
        let os = &mut out.data_mut()[s * out_len..(s + 1) * out_len];
        for y in 0..h {
            for xx in 0..w {
                let o = &mut os[(y * w + xx) * c_out..][..c_out];
                o.copy_from_slice(bias);
                for ky in 0..3 {
                    let iy = y + ky;
                    if iy < 1 || iy > h {
                        continue;
                    }
                    let iy = iy - 1;
                    for kx in 0..3 {
                        let ix = xx + kx;
                        if ix < 1 || ix > w {
                            continue;
                        }
                        let ix = ix - 1;
                        let inp = &xs[(iy * w + ix) * c_in..][..c_in];
                        let wbase = (ky * 3 + kx) * c_in * c_out;
                        for (ci, &a) in inp.iter().enumerate() {
                            let wr = &weights[wbase + ci * c_out..][..c_out];
                            for (ov, &wv) in o.iter_mut().zip(wr) {
                                *ov += a * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    /// `None` when the input gradient was not requested.
    pub grad_x: Option<Tensor4<T>>,
    pub grad_w: Vec<T>,
    pub grad_b: Vec<T>,
}

/// Analytic gradients of [`conv3x3_forward`]. Weight and bias gradients are
/// summed over the batch in sample order.
pub fn conv3x3_backward<T: Scalar>(
    x: &Tensor4<T>,
    weights: &[T],
    bias: &[T],
    grad: &Tensor4<T>,
    need_grad_x: bool,
) -> Result<ConvGrads<T>> {
    let (c_in, c_out) = check_conv(x, weights, bias)?;
    let [n, h, w, _] = x.dims();
    if grad.dims() != [n, h, w, c_out] {
        return Err(Error::ShapeMismatch(format!(
            "conv3x3 upstream grad {:?}, expected {:?}",
            grad.dims(),
            [n, h, w, c_out]
        )));
    }
    let mut gw = vec![T::zero(); weights.len()];
    let mut gb = vec![T::zero(); c_out];
    let mut gx = need_grad_x.then(|| Tensor4::zeros(x.dims()));
    let in_len = x.sample_len();
    let out_len = h * w * c_out;
    for s in 0..n {
        let xs = &x.data()[s * in_len..(s + 1) * in_len];
        let gs = &grad.data()[s * out_len..(s + 1) * out_len];
        let mut gxs = gx
            .as_mut()
            .map(|t| &mut t.data_mut()[s * in_len..(s + 1) * in_len]);
        for y in 0..h {
            for xx in 0..w {
                let g = &gs[(y * w + xx) * c_out..][..c_out];
                for (b, &gv) in gb.iter_mut().zip(g) {
                    *b += gv;
                }
                for ky in 0..3 {
                    let iy = y + ky;
                    if iy < 1 || iy > h {
                        continue;
                    }
                    let iy = iy - 1;
                    for kx in 0..3 {
                        let ix = xx + kx;
                        if ix < 1 || ix > w {
                            continue;
                        }
                        let ix = ix - 1;
                        let ibase = (iy * w + ix) * c_in;
                        let wbase = (ky * 3 + kx) * c_in * c_out;
                        for ci in 0..c_in {
                            let a = xs[ibase + ci];
                            let woff = wbase + ci * c_out;
                            let gwr = &mut gw[woff..woff + c_out];
                            for (gwv, &gv) in gwr.iter_mut().zip(g) {
                                *gwv += a * gv;
                            }
                            if let Some(gxs) = gxs.as_deref_mut() {
                                let wr = &weights[woff..woff + c_out];
                                let mut acc = T::zero();
                                for (&wv, &gv) in wr.iter().zip(g) {
                                    acc += wv * gv;
                                }
                                gxs[ibase + ci] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        grad_x: gx,
        grad_w: gw,
        grad_b: gb,
    })
}

/// 2x2 max pooling, stride 2. Returns the pooled tensor and, per output
/// element, the flat input index that won. Ties go to the first cell in
/// row-major window order.
pub fn maxpool2x2<T: Scalar>(x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<usize>)> {
    let [n, h, w, c] = x.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "maxpool2x2 needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(n * oh * ow * c);
    let d = x.data();
    for s in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let idx =
                        |dy: usize, dx: usize| ((s * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch;
                    let mut best = idx(0, 0);
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = idx(dy, dx);
                        if d[i] > d[best] {
                            best = i;
                        }
                    }
                    out.push(d[best]);
                    arg.push(best);
                }
            }
        }
    }
    Ok((Tensor4::new([n, oh, ow, c], out)?, arg))
}

/// Routes each upstream gradient to its window's argmax.
pub fn maxpool2x2_backward<T: Scalar>(
    input_dims: [usize; 4],
    argmax: &[usize],
    grad: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    if argmax.len() != grad.data().len() {
        return Err(Error::ShapeMismatch(format!(
            "{} argmax entries for {} gradients",
            argmax.len(),
            grad.data().len()
        )));
    }
    let mut gx = Tensor4::zeros(input_dims);
    let gxd = gx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad.data()) {
        gxd[i] += g;
    }
    Ok(gx)
}

/// Inverted dropout. Returns the output and the per-unit scale that was
/// applied (`0` or `1/(1-rate)`), which is also the backward multiplier.
pub fn dropout_train<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor4<T>,
    rate: f64,
    rng: &mut R,
) -> (Tensor4<T>, Vec<T>) {
    if rate == 0.0 {
        return (x.clone(), vec![T::one(); x.data().len()]);
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let scale: Vec<T> = (0..x.data().len())
        .map(|_| {
            let u: f64 = rng.random();
            if u < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let data = x.data().iter().zip(&scale).map(|(&v, &s)| v * s).collect();
    (Tensor4::new(x.dims(), data).expect("dims preserved"), scale)
}

fn check_dense<T: Scalar>(x: &[T], n: usize, weights: &[T], bias: &[T]) -> Result<(usize, usize)> {
    let u = bias.len();
    if n == 0 || !x.len().is_multiple_of(n) {
        return Err(Error::ShapeMismatch(format!(
            "{} inputs for batch {n}",
            x.len()
        )));
    }
    let d = x.len() / n;
    if u == 0 || weights.len() != d * u {
        return Err(Error::ShapeMismatch(format!(
            "dense weights hold {} values, expected {d}x{u}",
            weights.len()
        )));
    }
    Ok((d, u))
}

/// `y = x W + b` for `x: n x d`, `W: d x u` (row-major), `b: u`.
pub fn dense_forward<T: Scalar>(x: &[T], n: usize, weights: &[T], bias: &[T]) -> Result<Vec<T>> {
    let (d, u) = check_dense(x, n, weights, bias)?;
    let mut y = Vec::with_capacity(n * u);
    for row in x.chunks_exact(d) {
        let start = y.len();
        y.extend_from_slice(bias);
        let out = &mut y[start..];
        for (i, &a) in row.iter().enumerate() {
            let wr = &weights[i * u..(i + 1) * u];
            for (o, &wv) in out.iter_mut().zip(wr) {
                *o += a * wv;
            }
        }
    }
    Ok(y)
}

pub struct DenseGrads<T> {
    pub grad_x: Vec<T>,
    pub grad_w: Vec<T>,
    pub grad_b: Vec<T>,
}

pub fn dense_backward<T: Scalar>(
    x: &[T],
    n: usize,
    weights: &[T],
    bias: &[T],
    grad: &[T],
) -> Result<DenseGrads<T>> {
    let (d, u) = check_dense(x, n, weights, bias)?;
    if grad.len() != n * u {
        return Err(Error::ShapeMismatch(format!(
            "dense upstream grad holds {}, expected {n}x{u}",
            grad.len()
        )));
    }
    let mut gw = vec![T::zero(); d * u];
    let mut gb = vec![T::zero(); u];
    let mut gx = vec![T::zero(); n * d];
    for s in 0..n {
        let xr = &x[s * d..(s + 1) * d];
        let g = &grad[s * u..(s + 1) * u];
        for (b, &gv) in gb.iter_mut().zip(g) {
            *b += gv;
        }
        for i in 0..d {
            let wr = &weights[i * u..(i + 1) * u];
            let gwr = &mut gw[i * u..(i + 1) * u];
            let a = xr[i];
            let mut acc = T::zero();
            for ((gwv, &wv), &gv) in gwr.iter_mut().zip(wr).zip(g) {
                *gwv += a * gv;
                acc += wv * gv;
            }
            gx[s * d + i] = acc;
        }
    }
    Ok(DenseGrads {
        grad_x: gx,
        grad_w: gw,
        grad_b: gb,
    })
}
