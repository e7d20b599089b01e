//! Neural-network building blocks: activations, fully connected layers,
//! channel normalization, order-independent feature pooling, and the loss
//! functions used for training.
//!
//! All operations participate in the autodiff graph. Reductions iterate in a
//! fixed order so outputs are reproducible bit-for-bit on the same platform.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::{BackCtx, Scalar, Tensor};
use crate::error::{arg_err, degenerate_err, shape_err, Result};

/// Leaky rectifier: `max(x, slope * x)` elementwise, gradient 1 for
/// `x >= 0` and `slope` below.
pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    let values = x.data().iter().map(|&v| if v >= T::zero() { v } else { slope * v }).collect();
    Tensor::op_node(
        x.shape().to_vec(),
        values,
        vec![x.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let xv = ctx.parents[0].data();
            let g = xv
                .iter()
                .zip(ctx.grad)
                .map(|(&v, &go)| if v >= T::zero() { go } else { slope * go })
                .collect();
            vec![Some(g)]
        }),
    )
}

/// Smooth positive map `ln(1 + e^x)`, evaluated in the overflow-safe form
/// `max(x, 0) + ln(1 + e^{-|x|})`.
pub fn softplus<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let values = x
        .data()
        .iter()
        .map(|&v| v.max(T::zero()) + (-v.abs()).exp().ln_1p())
        .collect();
    Tensor::op_node(
        x.shape().to_vec(),
        values,
        vec![x.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let xv = ctx.parents[0].data();
            let g = xv
                .iter()
                .zip(ctx.grad)
                .map(|(&v, &go)| {
                    // logistic sigmoid, computed without overflow
                    let s = if v >= T::zero() {
                        T::one() / (T::one() + (-v).exp())
                    } else {
                        let e = v.exp();
                        e / (T::one() + e)
                    };
                    s * go
                })
                .collect();
            vec![Some(g)]
        }),
    )
}

/// Fully connected layer `y = x w^T + b` with `x` as `[B,N]`, `w` as
/// `[M,N]`, and `b` as `[M]`, producing `[B,M]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [bs, n]: [usize; 2] = match *x.shape() {
        [a, b_] => [a, b_],
        _ => return Err(shape_err("linear", alloc::format!("input {:?}", x.shape()))),
    };
    let [m, wn]: [usize; 2] = match *w.shape() {
        [a, b_] => [a, b_],
        _ => return Err(shape_err("linear", alloc::format!("weight {:?}", w.shape()))),
    };
    if wn != n {
        return Err(shape_err("linear", alloc::format!("input width {n}, weight width {wn}")));
    }
    if b.shape() != [m] {
        return Err(shape_err("linear", alloc::format!("bias {:?}, expected [{m}]", b.shape())));
    }
    let mut out = vec![T::zero(); bs * m];
    {
        let bv = b.data();
        for row in out.chunks_mut(m) {
            row.copy_from_slice(&bv);
        }
        matmul_nt_acc(&x.data(), &w.data(), &mut out, bs, n, m);
    }
    Ok(Tensor::op_node(
        vec![bs, m],
        out,
        vec![x.clone(), w.clone(), b.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let x = &ctx.parents[0];
            let w = &ctx.parents[1];
            let gx = if x.requires_grad() {
                let mut gx = vec![T::zero(); bs * n];
                matmul_acc(ctx.grad, &w.data(), &mut gx, bs, m, n);
                Some(gx)
            } else {
                None
            };
            let gw = if w.requires_grad() {
                let mut gw = vec![T::zero(); m * n];
                matmul_tn_acc(ctx.grad, &x.data(), &mut gw, bs, m, n);
                Some(gw)
            } else {
                None
            };
            let mut gb = vec![T::zero(); m];
            for row in ctx.grad.chunks(m) {
                for (acc, &g) in gb.iter_mut().zip(row) {
                    *acc = *acc + g;
                }
            }
            vec![gx, gw, Some(gb)]
        }),
    ))
}

fn l2_normalize_groups<T: Scalar>(
    x: &Tensor<T>,
    eps: T,
    groups: usize,
    group_len: usize,
    group_stride_is_one: bool,
) -> Tensor<T> {
    // Two layouts share this kernel: channel vectors strided across planes
    // ([C,H,W]: element c of pixel p sits at c*pixels + p) and contiguous
    // rows ([B,N]).
    let xv = x.data();
    let total = xv.len();
    let mut out = vec![T::zero(); total];
    let idx = move |gi: usize, k: usize| {
        if group_stride_is_one {
            gi * group_len + k
        } else {
            k * groups + gi
        }
    };
    for gi in 0..groups {
        let mut sq = T::zero();
        for k in 0..group_len {
            let v = xv[idx(gi, k)];
            sq = sq + v * v;
        }
        let d = sq.sqrt().max(eps);
        for k in 0..group_len {
            out[idx(gi, k)] = xv[idx(gi, k)] / d;
        }
    }
    drop(xv);
    Tensor::op_node(
        x.shape().to_vec(),
        out,
        vec![x.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let xv = ctx.parents[0].data();
            let mut gx = vec![T::zero(); total];
            for gi in 0..groups {
                let mut sq = T::zero();
                for k in 0..group_len {
                    let v = xv[idx(gi, k)];
                    sq = sq + v * v;
                }
                let norm = sq.sqrt();
                if norm >= eps {
                    let mut ydg = T::zero();
                    for k in 0..group_len {
                        let i = idx(gi, k);
                        ydg = ydg + ctx.out[i] * ctx.grad[i];
                    }
                    for k in 0..group_len {
                        let i = idx(gi, k);
                        gx[i] = (ctx.grad[i] - ctx.out[i] * ydg) / norm;
                    }
                } else {
                    // Below threshold the map is linear: y = x / eps.
                    for k in 0..group_len {
                        let i = idx(gi, k);
                        gx[i] = ctx.grad[i] / eps;
                    }
                }
            }
            vec![Some(gx)]
        }),
    )
}

/// Normalize each pixel's channel vector of a `[C,H,W]` tensor to unit
/// length. Vectors with norm below `eps` are divided by `eps` instead, so
/// the zero vector maps to the zero vector.
pub fn l2_normalize_channels<T: Scalar>(x: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let [c, h, w]: [usize; 3] = match *x.shape() {
        [a, b_, c_] => [a, b_, c_],
        _ => {
            return Err(shape_err(
                "l2_normalize_channels",
                alloc::format!("expected [C,H,W], got {:?}", x.shape()),
            ))
        }
    };
    if eps <= T::zero() {
        return Err(arg_err("l2_normalize_channels", "eps must be positive"));
    }
    Ok(l2_normalize_groups(x, eps, h * w, c, false))
}

/// Normalize each row of a `[B,N]` tensor to unit length, with the same
/// `eps` guard as [`l2_normalize_channels`].
pub fn l2_normalize_rows<T: Scalar>(x: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let [b, n]: [usize; 2] = match *x.shape() {
        [a, b_] => [a, b_],
        _ => {
            return Err(shape_err(
                "l2_normalize_rows",
                alloc::format!("expected [B,N], got {:?}", x.shape()),
            ))
        }
    };
    if eps <= T::zero() {
        return Err(arg_err("l2_normalize_rows", "eps must be positive"));
    }
    Ok(l2_normalize_groups(x, eps, b, n, true))
}

/// Elementwise maximum across any number of same-shaped tensors.
///
/// The scan keeps the earliest input on exact ties, and negative zero is
/// canonicalized to positive zero, so the result is identical bit-for-bit
/// under any permutation of the inputs. The gradient routes each element to
/// the input that supplied it.
pub fn max_fuse<T: Scalar>(inputs: &[Tensor<T>]) -> Result<Tensor<T>> {
    let Some(first) = inputs.first() else {
        return Err(arg_err("max_fuse", "needs at least one input"));
    };
    for t in &inputs[1..] {
        if t.shape() != first.shape() {
            return Err(shape_err(
                "max_fuse",
                alloc::format!("mixed shapes {:?} and {:?}", first.shape(), t.shape()),
            ));
        }
    }
    let n = first.numel();
    let mut values = first.to_vec();
    let mut winners = vec![0u32; n];
    for (ti, t) in inputs.iter().enumerate().skip(1) {
        let tv = t.data();
        for i in 0..n {
            if tv[i] > values[i] {
                values[i] = tv[i];
                winners[i] = ti as u32;
            }
        }
    }
    for v in values.iter_mut() {
        // order-independent sign of zero
        *v = *v + T::zero();
    }
    Ok(Tensor::op_node(
        first.shape().to_vec(),
        values,
        inputs.to_vec(),
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let mut outs: Vec<Option<Vec<T>>> = ctx
                .parents
                .iter()
                .map(|p| if p.requires_grad() { Some(vec![T::zero(); p.numel()]) } else { None })
                .collect();
            for (i, &w) in winners.iter().enumerate() {
                if let Some(buf) = outs[w as usize].as_mut() {
                    buf[i] = buf[i] + ctx.grad[i];
                }
            }
            outs
        }),
    ))
}

/// Mean cross-entropy between row-wise softmax of `logits` (`[B,K]`) and
/// integer class `targets` (one per row).
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
) -> Result<Tensor<T>> {
    let [b, k]: [usize; 2] = match *logits.shape() {
        [a, b_] => [a, b_],
        _ => {
            return Err(shape_err(
                "softmax_cross_entropy",
                alloc::format!("expected [B,K], got {:?}", logits.shape()),
            ))
        }
    };
    if targets.len() != b {
        return Err(arg_err(
            "softmax_cross_entropy",
            alloc::format!("{} targets for {b} rows", targets.len()),
        ));
    }
    if let Some(t) = targets.iter().find(|&&t| t >= k) {
        return Err(arg_err("softmax_cross_entropy", alloc::format!("target {t} out of range 0..{k}")));
    }
    let row_stats = |row: &[T]| {
        let mut m = row[0];
        for &v in &row[1..] {
            m = m.max(v);
        }
        let mut z = T::zero();
        for &v in row {
            z = z + (v - m).exp();
        }
        (m, z)
    };
    let mut total = T::zero();
    {
        let lv = logits.data();
        for (i, row) in lv.chunks(k).enumerate() {
            let (m, z) = row_stats(row);
            total = total + z.ln() - (row[targets[i]] - m);
        }
    }
    let inv_b = T::one() / T::from_usize(b);
    let targets: Vec<usize> = targets.to_vec();
    Ok(Tensor::op_node(
        vec![1],
        vec![total * inv_b],
        vec![logits.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let lv = ctx.parents[0].data();
            let go = ctx.grad[0] * inv_b;
            let mut g = vec![T::zero(); lv.len()];
            for (i, row) in lv.chunks(k).enumerate() {
                let (m, z) = row_stats(row);
                let grow = &mut g[i * k..(i + 1) * k];
                for (j, &v) in row.iter().enumerate() {
                    let p = (v - m).exp() / z;
                    let y = if j == targets[i] { T::one() } else { T::zero() };
                    grow[j] = (p - y) * go;
                }
            }
            vec![Some(g)]
        }),
    ))
}

/// Masked mean of `1 - <pred, gt>` over pixels, with `pred` and `gt` as
/// `[C,H,W]` fields of (ideally unit) vectors and `mask` flagging the
/// pixels that count. Errors if the mask selects nothing.
pub fn cosine_loss<T: Scalar>(
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    mask: &[bool],
) -> Result<Tensor<T>> {
    let [c, h, w]: [usize; 3] = match *pred.shape() {
        [a, b_, c_] => [a, b_, c_],
        _ => {
            return Err(shape_err(
                "cosine_loss",
                alloc::format!("expected [C,H,W], got {:?}", pred.shape()),
            ))
        }
    };
    if gt.shape() != pred.shape() {
        return Err(shape_err(
            "cosine_loss",
            alloc::format!("pred {:?} vs gt {:?}", pred.shape(), gt.shape()),
        ));
    }
    let pixels = h * w;
    if mask.len() != pixels {
        return Err(shape_err(
            "cosine_loss",
            alloc::format!("mask has {} entries for {pixels} pixels", mask.len()),
        ));
    }
    let m_count = mask.iter().filter(|&&b| b).count();
    if m_count == 0 {
        return Err(degenerate_err("cosine_loss", "mask selects no pixels"));
    }
    let inv_m = T::one() / T::from_usize(m_count);
    let mut total = T::zero();
    {
        let pv = pred.data();
        let gv = gt.data();
        for p in 0..pixels {
            if !mask[p] {
                continue;
            }
            let mut dot = T::zero();
            for ch in 0..c {
                dot = dot + pv[ch * pixels + p] * gv[ch * pixels + p];
            }
            total = total + (T::one() - dot);
        }
    }
    let mask: Vec<bool> = mask.to_vec();
    Ok(Tensor::op_node(
        vec![1],
        vec![total * inv_m],
        vec![pred.clone(), gt.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let scale = ctx.grad[0] * inv_m;
            let grad_against = |other: &Tensor<T>| {
                let ov = other.data();
                let mut g = vec![T::zero(); ov.len()];
                for p in 0..pixels {
                    if !mask[p] {
                        continue;
                    }
                    for ch in 0..c {
                        let i = ch * pixels + p;
                        g[i] = -ov[i] * scale;
                    }
                }
                g
            };
            let gp = if ctx.parents[0].requires_grad() {
                Some(grad_against(&ctx.parents[1]))
            } else {
                None
            };
            let gg = if ctx.parents[1].requires_grad() {
                Some(grad_against(&ctx.parents[0]))
            } else {
                None
            };
            vec![gp, gg]
        }),
    ))
}
