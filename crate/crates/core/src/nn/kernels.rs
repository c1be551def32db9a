//! Per-operation forward and backward kernels over NCHW buffers.
//!
//! Work is split per sample with rayon. Reductions into parameter gradients
//! run over fixed sample chunks and are summed in chunk order, so results do
//! not depend on the thread count.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Samples per partial weight-gradient buffer.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(cin: usize, h: usize, w: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Self {
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Self {
            cin,
            h,
            w,
            cout,
            k,
            stride,
            pad,
            ho,
            wo,
        }
    }

    fn pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.cin {
        let xc = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (oy_lo, oy_hi) = valid_range(ky, g.pad, g.stride, g.h, g.ho);
            for kx in 0..g.k {
                let (lo, hi) = valid_range(kx, g.pad, g.stride, g.w, g.wo);
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut col[row * plane..(row + 1) * plane];
                dst[..oy_lo * g.wo].fill(T::zero());
                dst[oy_hi * g.wo..].fill(T::zero());
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let src = &xc[iy * g.w..(iy + 1) * g.w];
                    let out = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    if g.stride == 1 {
                        out[lo..hi].copy_from_slice(&src[lo + kx - g.pad..hi + kx - g.pad]);
                    } else {
                        for ox in lo..hi {
                            out[ox] = src[ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.cin {
        let dxc = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (oy_lo, oy_hi) = valid_range(ky, g.pad, g.stride, g.h, g.ho);
            for kx in 0..g.k {
                let (lo, hi) = valid_range(kx, g.pad, g.stride, g.w, g.wo);
                let row = (c * g.k + ky) * g.k + kx;
                let src = &col[row * plane..(row + 1) * plane];
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let dst = &mut dxc[iy * g.w..(iy + 1) * g.w];
                    let srow = &src[oy * g.wo..(oy + 1) * g.wo];
                    if g.stride == 1 {
                        for (d, &v) in dst[lo + kx - g.pad..hi + kx - g.pad].iter_mut().zip(&srow[lo..hi]) {
                            *d += v;
                        }
                    } else {
                        for ox in lo..hi {
                            dst[ox * g.stride + kx - g.pad] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Blocked transpose of a row-major `rows x cols` matrix.
fn transpose<T: Scalar>(src: &[T], rows: usize, cols: usize, dst: &mut [T]) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Dense (groups = 1) convolution. `weight` is `cout x cin x k x k`.
pub fn conv_forward<T: Scalar>(x: &Tensor<T>, g: &ConvGeom, weight: &[T], bias: Option<&[T]>) -> Tensor<T> {
    let mut y = Tensor::zeros(x.n, g.cout, g.ho, g.wo);
    let kdim = g.col_rows();
    let plane = g.out_plane();
    let ylen = y.sample_len();
    y.data.par_chunks_mut(ylen).enumerate().for_each(|(i, yn)| {
        let xn = x.sample(i);
        let mut buf = Vec::new();
        let col: &[T] = if g.pointwise() {
            xn
        } else {
            buf.resize(kdim * plane, T::zero());
            im2col(xn, g, &mut buf);
            &buf
        };
        T::gemm(
            g.cout,
            kdim,
            plane,
            T::one(),
            weight,
            kdim as isize,
            1,
            col,
            plane as isize,
            1,
            T::zero(),
            yn,
            plane as isize,
            1,
        );
        if let Some(b) = bias {
            for (o, &bo) in yn.chunks_exact_mut(plane).zip(b) {
                o.iter_mut().for_each(|v| *v += bo);
            }
        }
    });
    y
}

/// Returns `(dx, dweight, dbias)`.
pub fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    g: &ConvGeom,
    weight: &[T],
    dy: &Tensor<T>,
    need_dx: bool,
) -> (Option<Tensor<T>>, Vec<T>, Vec<T>) {
    let kdim = g.col_rows();
    let plane = g.out_plane();
    let partials: Vec<(Vec<T>, Vec<T>)> = (0..x.n)
        .collect::<Vec<_>>()
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut dw = vec![T::zero(); g.cout * kdim];
            let mut db = vec![T::zero(); g.cout];
            let mut buf = vec![T::zero(); if g.pointwise() { 0 } else { kdim * plane }];
            let mut col_t = vec![T::zero(); kdim * plane];
            for &i in chunk {
                let xn = x.sample(i);
                let dyn_ = dy.sample(i);
                let col: &[T] = if g.pointwise() {
                    xn
                } else {
                    im2col(xn, g, &mut buf);
                    &buf
                };
                // gemm is much faster when the reduction operand is row-major in k.
                transpose(col, kdim, plane, &mut col_t);
                // dW += dY (cout x plane) * col^T (plane x kdim)
                T::gemm(
                    g.cout,
                    plane,
                    kdim,
                    T::one(),
                    dyn_,
                    plane as isize,
                    1,
                    &col_t,
                    kdim as isize,
                    1,
                    T::one(),
                    &mut dw,
                    kdim as isize,
                    1,
                );
                for (acc, row) in db.iter_mut().zip(dyn_.chunks_exact(plane)) {
                    *acc += row.iter().copied().sum();
                }
            }
            (dw, db)
        })
        .collect();
    let mut dw = vec![T::zero(); g.cout * kdim];
    let mut db = vec![T::zero(); g.cout];
    for (pw, pb) in partials {
        dw.iter_mut().zip(pw).for_each(|(a, b)| *a += b);
        db.iter_mut().zip(pb).for_each(|(a, b)| *a += b);
    }

    let dx = need_dx.then(|| {
        if g.stride == 1 && !g.pointwise() && g.pad < g.k {
            // Stride-1 input gradient is a convolution of dY with the flipped, transposed kernel.
            let kk = g.k * g.k;
            let mut flipped = vec![T::zero(); weight.len()];
            for co in 0..g.cout {
                for ci in 0..g.cin {
                    for t in 0..kk {
                        flipped[(ci * g.cout + co) * kk + kk - 1 - t] = weight[(co * g.cin + ci) * kk + t];
                    }
                }
            }
            let g2 = ConvGeom::new(g.cout, g.ho, g.wo, g.cin, g.k, 1, g.k - 1 - g.pad);
            debug_assert_eq!((g2.ho, g2.wo), (g.h, g.w));
            return conv_forward(dy, &g2, &flipped, None);
        }
        let mut dx = x.zeros_like();
        let xlen = dx.sample_len();
        dx.data.par_chunks_mut(xlen).enumerate().for_each(|(i, dxn)| {
            let dyn_ = dy.sample(i);
            if g.pointwise() {
                // dX = W^T (cin x cout) * dY (cout x plane)
                T::gemm(
                    kdim,
                    g.cout,
                    plane,
                    T::one(),
                    weight,
                    1,
                    kdim as isize,
                    dyn_,
                    plane as isize,
                    1,
                    T::zero(),
                    dxn,
                    plane as isize,
                    1,
                );
            } else {
                let mut dcol = vec![T::zero(); kdim * plane];
                T::gemm(
                    kdim,
                    g.cout,
                    plane,
                    T::one(),
                    weight,
                    1,
                    kdim as isize,
                    dyn_,
                    plane as isize,
                    1,
                    T::zero(),
                    &mut dcol,
                    plane as isize,
                    1,
                );
                col2im(&dcol, g, dxn);
            }
        });
        dx
    });
    (dx, dw, db)
}

/// Output index range `[lo, hi)` whose input tap `o * stride + off - pad` lands in `[0, n)`.
#[inline]
fn valid_range(off: usize, pad: usize, stride: usize, n: usize, out: usize) -> (usize, usize) {
    let lo = if pad > off { (pad - off).div_ceil(stride) } else { 0 };
    let hi = if n + pad > off {
        ((n - 1 + pad - off) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Depthwise convolution (one filter per channel). `weight` is `c x 1 x k x k`.
pub fn depthwise_forward<T: Scalar>(x: &Tensor<T>, g: &ConvGeom, weight: &[T], bias: Option<&[T]>) -> Tensor<T> {
    let mut y = Tensor::zeros(x.n, g.cout, g.ho, g.wo);
    let ylen = y.sample_len();
    let kk = g.k * g.k;
    y.data.par_chunks_mut(ylen).enumerate().for_each(|(i, yn)| {
        let xn = x.sample(i);
        for c in 0..g.cin {
            let xc = &xn[c * g.h * g.w..(c + 1) * g.h * g.w];
            let wc = &weight[c * kk..(c + 1) * kk];
            let yc = &mut yn[c * g.ho * g.wo..(c + 1) * g.ho * g.wo];
            yc.fill(bias.map_or(T::zero(), |b| b[c]));
            for ky in 0..g.k {
                let (oy_lo, oy_hi) = valid_range(ky, g.pad, g.stride, g.h, g.ho);
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let xrow = &xc[iy * g.w..(iy + 1) * g.w];
                    let yrow = &mut yc[oy * g.wo..(oy + 1) * g.wo];
                    for kx in 0..g.k {
                        let wv = wc[ky * g.k + kx];
                        let (lo, hi) = valid_range(kx, g.pad, g.stride, g.w, g.wo);
                        if g.stride == 1 {
                            let src = &xrow[lo + kx - g.pad..hi + kx - g.pad];
                            for (o, &v) in yrow[lo..hi].iter_mut().zip(src) {
                                *o += wv * v;
                            }
                        } else {
                            for ox in lo..hi {
                                yrow[ox] += wv * xrow[ox * g.stride + kx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    });
    y
}

pub fn depthwise_backward<T: Scalar>(
    x: &Tensor<T>,
    g: &ConvGeom,
    weight: &[T],
    dy: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let kk = g.k * g.k;
    let partials: Vec<(Vec<T>, Vec<T>)> = (0..x.n)
        .collect::<Vec<_>>()
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut dw = vec![T::zero(); g.cin * kk];
            let mut db = vec![T::zero(); g.cin];
            for &i in chunk {
                let xn = x.sample(i);
                let dyn_ = dy.sample(i);
                for c in 0..g.cin {
                    let xc = &xn[c * g.h * g.w..(c + 1) * g.h * g.w];
                    let dyc = &dyn_[c * g.ho * g.wo..(c + 1) * g.ho * g.wo];
                    db[c] += dyc.iter().copied().sum();
                    let dwc = &mut dw[c * kk..(c + 1) * kk];
                    for ky in 0..g.k {
                        let (oy_lo, oy_hi) = valid_range(ky, g.pad, g.stride, g.h, g.ho);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.stride + ky - g.pad;
                            let xrow = &xc[iy * g.w..(iy + 1) * g.w];
                            let drow = &dyc[oy * g.wo..(oy + 1) * g.wo];
                            for kx in 0..g.k {
                                let (lo, hi) = valid_range(kx, g.pad, g.stride, g.w, g.wo);
                                let mut acc = T::zero();
                                if g.stride == 1 {
                                    let src = &xrow[lo + kx - g.pad..hi + kx - g.pad];
                                    for (&d, &v) in drow[lo..hi].iter().zip(src) {
                                        acc += d * v;
                                    }
                                } else {
                                    for ox in lo..hi {
                                        acc += drow[ox] * xrow[ox * g.stride + kx - g.pad];
                                    }
                                }
                                dwc[ky * g.k + kx] += acc;
                            }
                        }
                    }
                }
            }
            (dw, db)
        })
        .collect();
    let mut dw = vec![T::zero(); g.cin * kk];
    let mut db = vec![T::zero(); g.cin];
    for (pw, pb) in partials {
        dw.iter_mut().zip(pw).for_each(|(a, b)| *a += b);
        db.iter_mut().zip(pb).for_each(|(a, b)| *a += b);
    }

    let mut dx = x.zeros_like();
    let xlen = dx.sample_len();
    dx.data.par_chunks_mut(xlen).enumerate().for_each(|(i, dxn)| {
        let dyn_ = dy.sample(i);
        for c in 0..g.cin {
            let wc = &weight[c * kk..(c + 1) * kk];
            let dyc = &dyn_[c * g.ho * g.wo..(c + 1) * g.ho * g.wo];
            let dxc = &mut dxn[c * g.h * g.w..(c + 1) * g.h * g.w];
            for ky in 0..g.k {
                let (oy_lo, oy_hi) = valid_range(ky, g.pad, g.stride, g.h, g.ho);
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let drow = &dyc[oy * g.wo..(oy + 1) * g.wo];
                    let xrow = &mut dxc[iy * g.w..(iy + 1) * g.w];
                    for kx in 0..g.k {
                        let wv = wc[ky * g.k + kx];
                        let (lo, hi) = valid_range(kx, g.pad, g.stride, g.w, g.wo);
                        if g.stride == 1 {
                            let dst = &mut xrow[lo + kx - g.pad..hi + kx - g.pad];
                            for (o, &d) in dst.iter_mut().zip(&drow[lo..hi]) {
                                *o += wv * d;
                            }
                        } else {
                            for ox in lo..hi {
                                xrow[ox * g.stride + kx - g.pad] += wv * drow[ox];
                            }
                        }
                    }
                }
            }
        }
    });
    (dx, dw, db)
}

/// Sum with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn lane_sum<T: Scalar>(xs: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = xs.chunks_exact(8);
    let rem = chunks.remainder();
    for c in chunks {
        for j in 0..8 {
            acc[j] += c[j];
        }
    }
    let mut s = rem.iter().copied().sum::<T>();
    for a in acc {
        s += a;
    }
    s
}

#[inline]
pub fn lane_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let mut s = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x * y)
        .sum::<T>();
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    for v in acc {
        s += v;
    }
    s
}

/// Per-channel mean and biased variance over batch and space.
pub fn channel_moments<T: Scalar>(x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let plane = x.plane();
    let count = T::from_usize_lossy(x.n * plane);
    let mut mean = vec![T::zero(); x.c];
    let mut var = vec![T::zero(); x.c];
    for c in 0..x.c {
        let mut s = T::zero();
        for i in 0..x.n {
            s += lane_sum(&x.sample(i)[c * plane..(c + 1) * plane]);
        }
        let m = s / count;
        let mut v = T::zero();
        let mut buf = vec![T::zero(); plane];
        for i in 0..x.n {
            for (b, &e) in buf.iter_mut().zip(&x.sample(i)[c * plane..(c + 1) * plane]) {
                *b = (e - m) * (e - m);
            }
            v += lane_sum(&buf);
        }
        mean[c] = m;
        var[c] = v / count;
    }
    (mean, var)
}

/// `y = gamma * (x - mean) * inv_std + beta`, per channel.
pub fn affine_normalize<T: Scalar>(x: &Tensor<T>, mean: &[T], inv_std: &[T], gamma: &[T], beta: &[T]) -> Tensor<T> {
    let mut y = x.clone();
    let plane = x.plane();
    let len = y.sample_len();
    y.data.par_chunks_mut(len).for_each(|yn| {
        for c in 0..x.c {
            let scale = gamma[c] * inv_std[c];
            let shift = beta[c] - mean[c] * scale;
            yn[c * plane..(c + 1) * plane]
                .iter_mut()
                .for_each(|v| *v = *v * scale + shift);
        }
    });
    y
}

/// Batch-statistics normalization backward. Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward<T: Scalar>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let plane = x.plane();
    let m = T::from_usize_lossy(x.n * plane);
    let mut dgamma = vec![T::zero(); x.c];
    let mut dbeta = vec![T::zero(); x.c];
    for c in 0..x.c {
        let (mut sxd, mut sb) = (T::zero(), T::zero());
        for i in 0..x.n {
            let xs = &x.sample(i)[c * plane..(c + 1) * plane];
            let ds = &dy.sample(i)[c * plane..(c + 1) * plane];
            sxd += lane_dot(xs, ds);
            sb += lane_sum(ds);
        }
        dgamma[c] = (sxd - mean[c] * sb) * inv_std[c];
        dbeta[c] = sb;
    }
    let mut dx = x.zeros_like();
    let len = dx.sample_len();
    dx.data.par_chunks_mut(len).enumerate().for_each(|(i, dxn)| {
        let xs = x.sample(i);
        let ds = dy.sample(i);
        for c in 0..x.c {
            let k = gamma[c] * inv_std[c] / m;
            let r = c * plane..(c + 1) * plane;
            // dx = a * d + b * x + e
            let a = k * m;
            let b = -k * inv_std[c] * dgamma[c];
            let e = -k * (dbeta[c] - mean[c] * inv_std[c] * dgamma[c]);
            for ((o, &xv), &d) in dxn[r.clone()].iter_mut().zip(&xs[r.clone()]).zip(&ds[r]) {
                *o = a * d + b * xv + e;
            }
        }
    });
    (dx, dgamma, dbeta)
}

/// Max pooling with implicit -inf padding. Returns output and flat argmax per output.
pub fn maxpool_forward<T: Scalar>(x: &Tensor<T>, k: usize, stride: usize, pad: usize) -> (Tensor<T>, Vec<u32>) {
    let ho = (x.h + 2 * pad - k) / stride + 1;
    let wo = (x.w + 2 * pad - k) / stride + 1;
    let mut y = Tensor::zeros(x.n, x.c, ho, wo);
    let mut arg = vec![0u32; y.data.len()];
    let ylen = y.sample_len();
    y.data
        .par_chunks_mut(ylen)
        .zip(arg.par_chunks_mut(ylen))
        .enumerate()
        .for_each(|(i, (yn, an))| {
            let xn = x.sample(i);
            for c in 0..x.c {
                let xc = &xn[c * x.h * x.w..(c + 1) * x.h * x.w];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = T::neg_infinity();
                        let mut at = 0usize;
                        let y0 = (oy * stride).saturating_sub(pad);
                        let y1 = (oy * stride + k).saturating_sub(pad).min(x.h);
                        let x0 = (ox * stride).saturating_sub(pad);
                        let x1 = (ox * stride + k).saturating_sub(pad).min(x.w);
                        for iy in y0..y1 {
                            let row = &xc[iy * x.w..(iy + 1) * x.w];
                            for (ix, &v) in row.iter().enumerate().take(x1).skip(x0) {
                                if v > best {
                                    best = v;
                                    at = iy * x.w + ix;
                                }
                            }
                        }
                        let o = c * ho * wo + oy * wo + ox;
                        yn[o] = best;
                        an[o] = (c * x.h * x.w + at) as u32;
                    }
                }
            }
        });
    (y, arg)
}

pub fn maxpool_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, arg: &[u32]) -> Tensor<T> {
    let mut dx = x.zeros_like();
    let xlen = dx.sample_len();
    let ylen = dy.sample_len();
    dx.data.par_chunks_mut(xlen).enumerate().for_each(|(i, dxn)| {
        let ds = dy.sample(i);
        for (o, &a) in arg[i * ylen..(i + 1) * ylen].iter().enumerate() {
            dxn[a as usize] += ds[o];
        }
    });
    dx
}

/// Non-overlapping `k x k` average pooling (trailing rows/cols dropped).
pub fn avgpool_forward<T: Scalar>(x: &Tensor<T>, k: usize) -> Tensor<T> {
    let (ho, wo) = (x.h / k, x.w / k);
    let mut y = Tensor::zeros(x.n, x.c, ho, wo);
    let inv = T::one() / T::from_usize_lossy(k * k);
    let ylen = y.sample_len();
    y.data.par_chunks_mut(ylen).enumerate().for_each(|(i, yn)| {
        let xn = x.sample(i);
        for c in 0..x.c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = T::zero();
                    for ky in 0..k {
                        for kx in 0..k {
                            s += xn[c * x.h * x.w + (oy * k + ky) * x.w + ox * k + kx];
                        }
                    }
                    yn[c * ho * wo + oy * wo + ox] = s * inv;
                }
            }
        }
    });
    y
}

pub fn avgpool_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, k: usize) -> Tensor<T> {
    let mut dx = x.zeros_like();
    let (ho, wo) = (dy.h, dy.w);
    let inv = T::one() / T::from_usize_lossy(k * k);
    let xlen = dx.sample_len();
    dx.data.par_chunks_mut(xlen).enumerate().for_each(|(i, dxn)| {
        let ds = dy.sample(i);
        for c in 0..x.c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let d = ds[c * ho * wo + oy * wo + ox] * inv;
                    for ky in 0..k {
                        for kx in 0..k {
                            dxn[c * x.h * x.w + (oy * k + ky) * x.w + ox * k + kx] += d;
                        }
                    }
                }
            }
        }
    });
    dx
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    // exp overflow gives 1 / inf = 0, which is the correct limit.
    T::one() / (T::one() + (-x).exp())
}
