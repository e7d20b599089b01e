//! 2-D convolution and its stride-aligned adjoint (transposed convolution).
//!
//! Both operations accept `[C,H,W]` or `[B,C,H,W]` inputs and are lowered to
//! a common im2col / col2im plus three small matmul kernels. All loops run
//! in a fixed order, so results are reproducible bit-for-bit.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{BackCtx, Scalar, Tensor};
use crate::error::{arg_err, shape_err, Result};

/// C[m,n] += A[m,k] * B[k,n]
pub(super) fn matmul_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * *bv;
            }
        }
    }
}

/// C[m,p] += A[m,n] * B[p,n]^T  (rows dotted with rows)
pub(super) fn matmul_nt_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, p: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), p * n);
    debug_assert_eq!(c.len(), m * p);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..p {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = T::zero();
            for (av, bv) in arow.iter().zip(brow) {
                acc = acc + *av * *bv;
            }
            c[i * p + j] = c[i * p + j] + acc;
        }
    }
}

/// C[k,n] += A[m,k]^T * B[m,n]
pub(super) fn matmul_tn_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for p in 0..m {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..k {
            let av = a[p * k + i];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * *bv;
            }
        }
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    ci: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn new(ci: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 {
            return Err(arg_err("conv2d", "stride must be positive"));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(shape_err(
                "conv2d",
                alloc::format!("kernel {k} exceeds padded input {}x{}", h + 2 * pad, w + 2 * pad),
            ));
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Ok(ConvGeom { ci, h, w, k, stride, pad, ho, wo })
    }

    fn cols_rows(&self) -> usize {
        self.ci * self.k * self.k
    }

    fn cols_len(&self) -> usize {
        self.cols_rows() * self.ho * self.wo
    }
}

/// Unfold one image `[ci,h,w]` into `[ci*k*k, ho*wo]` patch columns.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    debug_assert_eq!(cols.len(), g.cols_len());
    let n = g.ho * g.wo;
    for c in 0..g.ci {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &mut cols[((c * g.k + ky) * g.k + kx) * n..][..n];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        for v in dst.iter_mut() {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch columns back into `[ci,h,w]`.
fn col2im_acc<T: Scalar>(cols: &[T], g: &ConvGeom, x: &mut [T]) {
    debug_assert_eq!(cols.len(), g.cols_len());
    debug_assert_eq!(x.len(), g.ci * g.h * g.w);
    let n = g.ho * g.wo;
    for c in 0..g.ci {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &cols[((c * g.k + ky) * g.k + kx) * n..][..n];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &row[oy * g.wo..(oy + 1) * g.wo];
                    let dst_row = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in src.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + *v;
                        }
                    }
                }
            }
        }
    }
}

fn split_batch(shape: &[usize]) -> Result<(usize, usize, usize, usize, bool)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w, false)),
        [b, c, h, w] => Ok((b, c, h, w, true)),
        _ => Err(shape_err("conv2d", alloc::format!("expected [C,H,W] or [B,C,H,W], got {shape:?}"))),
    }
}

/// 2-D convolution with square kernel.
///
/// `input` is `[C_in,H,W]` or `[B,C_in,H,W]`, `weight` is
/// `[C_out,C_in,k,k]`, `bias` is `[C_out]`. Output spatial size is
/// `floor((H + 2*padding - k)/stride) + 1`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (b, ci, h, w, batched) = split_batch(input.shape())?;
    let [co, wci, k, k2]: [usize; 4] = match *weight.shape() {
        [a, b_, c, d] => [a, b_, c, d],
        _ => return Err(shape_err("conv2d", alloc::format!("weight {:?}", weight.shape()))),
    };
    if k != k2 {
        return Err(shape_err("conv2d", "kernel must be square"));
    }
    if wci != ci {
        return Err(shape_err(
            "conv2d",
            alloc::format!("input has {ci} channels, weight expects {wci}"),
        ));
    }
    if bias.shape() != [co] {
        return Err(shape_err("conv2d", alloc::format!("bias {:?}, expected [{co}]", bias.shape())));
    }
    let g = ConvGeom::new(ci, h, w, k, stride, padding)?;
    let n = g.ho * g.wo;
    let ckk = g.cols_rows();

    let mut cols = vec![T::zero(); g.cols_len()];
    let mut out = vec![T::zero(); b * co * n];
    {
        let x = input.data();
        let wv = weight.data();
        let bv = bias.data();
        for bi in 0..b {
            im2col(&x[bi * ci * h * w..(bi + 1) * ci * h * w], &g, &mut cols);
            let ob = &mut out[bi * co * n..(bi + 1) * co * n];
            for c in 0..co {
                let base = bv[c];
                for v in &mut ob[c * n..(c + 1) * n] {
                    *v = base;
                }
            }
            matmul_acc(&wv, &cols, ob, co, ckk, n);
        }
    }

    let out_shape =
        if batched { vec![b, co, g.ho, g.wo] } else { vec![co, g.ho, g.wo] };
    Ok(Tensor::op_node(
        out_shape,
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let input = &ctx.parents[0];
            let weight = &ctx.parents[1];
            let need_x = input.requires_grad();
            let need_w = weight.requires_grad();
            let x = input.data();
            let wv = weight.data();
            let mut gx = if need_x { vec![T::zero(); x.len()] } else { Vec::new() };
            let mut gw = if need_w { vec![T::zero(); wv.len()] } else { Vec::new() };
            let mut gb = vec![T::zero(); co];
            let mut cols = vec![T::zero(); g.cols_len()];
            let mut gcols = vec![T::zero(); g.cols_len()];
            for bi in 0..b {
                let gout = &ctx.grad[bi * co * n..(bi + 1) * co * n];
                // bias: sum over spatial positions
                for c in 0..co {
                    let mut acc = T::zero();
                    for v in &gout[c * n..(c + 1) * n] {
                        acc = acc + *v;
                    }
                    gb[c] = gb[c] + acc;
                }
                // weight: G * cols^T
                if need_w {
                    im2col(&x[bi * ci * h * w..(bi + 1) * ci * h * w], &g, &mut cols);
                    matmul_nt_acc(gout, &cols, &mut gw, co, n, ckk);
                }
                // input: col2im(W^T * G)
                if need_x {
                    for v in gcols.iter_mut() {
                        *v = T::zero();
                    }
                    matmul_tn_acc(&wv, gout, &mut gcols, co, ckk, n);
                    col2im_acc(&gcols, &g, &mut gx[bi * ci * h * w..(bi + 1) * ci * h * w]);
                }
            }
            vec![
                if need_x { Some(gx) } else { None },
                if need_w { Some(gw) } else { None },
                Some(gb),
            ]
        }),
    ))
}

/// Transposed convolution: the adjoint of [`conv2d`] with the same kernel,
/// stride, and implicit padding `(k - stride)/2`, plus a bias.
///
/// `input` is `[C_in,H,W]` or `[B,C_in,H,W]`, `weight` is
/// `[C_in,C_out,k,k]`, `bias` is `[C_out]`. Output spatial size is exactly
/// `stride * H`, which requires `k >= stride` and `k - stride` even.
pub fn deconv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    if stride == 0 {
        return Err(arg_err("deconv2d", "stride must be positive"));
    }
    let (b, ci, h, w, batched) = split_batch(input.shape())?;
    let [wci, co, k, k2]: [usize; 4] = match *weight.shape() {
        [a, b_, c, d] => [a, b_, c, d],
        _ => return Err(shape_err("deconv2d", alloc::format!("weight {:?}", weight.shape()))),
    };
    if k != k2 {
        return Err(shape_err("deconv2d", "kernel must be square"));
    }
    if wci != ci {
        return Err(shape_err(
            "deconv2d",
            alloc::format!("input has {ci} channels, weight expects {wci}"),
        ));
    }
    if bias.shape() != [co] {
        return Err(shape_err("deconv2d", alloc::format!("bias {:?}, expected [{co}]", bias.shape())));
    }
    if k < stride || (k - stride) % 2 != 0 {
        return Err(arg_err(
            "deconv2d",
            alloc::format!("kernel {k} incompatible with stride {stride}: need k >= stride, k - stride even"),
        ));
    }
    let pad = (k - stride) / 2;
    // Geometry of the conv this is the adjoint of: [co, stride*h] -> [ci, h].
    let g = ConvGeom::new(co, stride * h, stride * w, k, stride, pad)?;
    debug_assert_eq!(g.ho, h);
    debug_assert_eq!(g.wo, w);
    let n = h * w;
    let ckk = g.cols_rows();
    let out_plane = co * g.h * g.w;

    let mut out = vec![T::zero(); b * out_plane];
    {
        let x = input.data();
        let wv = weight.data();
        let bv = bias.data();
        let mut cols = vec![T::zero(); g.cols_len()];
        for bi in 0..b {
            for v in cols.iter_mut() {
                *v = T::zero();
            }
            // cols = W^T * X, with W viewed as [ci, co*k*k]
            matmul_tn_acc(&wv, &x[bi * ci * n..(bi + 1) * ci * n], &mut cols, ci, ckk, n);
            let ob = &mut out[bi * out_plane..(bi + 1) * out_plane];
            col2im_acc(&cols, &g, ob);
            for c in 0..co {
                let base = bv[c];
                for v in &mut ob[c * g.h * g.w..(c + 1) * g.h * g.w] {
                    *v = *v + base;
                }
            }
        }
    }

    let out_shape =
        if batched { vec![b, co, g.h, g.w] } else { vec![co, g.h, g.w] };
    Ok(Tensor::op_node(
        out_shape,
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let input = &ctx.parents[0];
            let weight = &ctx.parents[1];
            let need_x = input.requires_grad();
            let need_w = weight.requires_grad();
            let x = input.data();
            let wv = weight.data();
            let mut gx = if need_x { vec![T::zero(); x.len()] } else { Vec::new() };
            let mut gw = if need_w { vec![T::zero(); wv.len()] } else { Vec::new() };
            let mut gb = vec![T::zero(); co];
            let mut gcols = vec![T::zero(); g.cols_len()];
            for bi in 0..b {
                let gout = &ctx.grad[bi * out_plane..(bi + 1) * out_plane];
                for c in 0..co {
                    let mut acc = T::zero();
                    for v in &gout[c * g.h * g.w..(c + 1) * g.h * g.w] {
                        acc = acc + *v;
                    }
                    gb[c] = gb[c] + acc;
                }
                if !need_x && !need_w {
                    continue;
                }
                // grad wrt cols is im2col of the output gradient.
                im2col(gout, &g, &mut gcols);
                // grad X = W * gcols
                if need_x {
                    matmul_acc(&wv, &gcols, &mut gx[bi * ci * n..(bi + 1) * ci * n], ci, ckk, n);
                }
                // grad W = X * gcols^T
                if need_w {
                    matmul_nt_acc(&x[bi * ci * n..(bi + 1) * ci * n], &gcols, &mut gw, ci, n, ckk);
                }
            }
            vec![
                if need_x { Some(gx) } else { None },
                if need_w { Some(gw) } else { None },
                Some(gb),
            ]
        }),
    ))
}
