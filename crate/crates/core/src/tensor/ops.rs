//! Elementwise, reduction, and shape operations.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{BackCtx, Scalar, Tensor};
use crate::error::{shape_err, Result};

fn check_same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, alloc::format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Elementwise `a + b`.
pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("add", a, b)?;
    let vals = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x + *y).collect();
    Ok(Tensor::op_node(
        a.shape().to_vec(),
        vals,
        vec![a.clone(), b.clone()],
        Box::new(|ctx: &BackCtx<'_, T>| {
            vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]
        }),
    ))
}

/// Elementwise `a - b`.
pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("sub", a, b)?;
    let vals = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x - *y).collect();
    Ok(Tensor::op_node(
        a.shape().to_vec(),
        vals,
        vec![a.clone(), b.clone()],
        Box::new(|ctx: &BackCtx<'_, T>| {
            let neg = ctx.grad.iter().map(|g| T::zero() - *g).collect();
            vec![Some(ctx.grad.to_vec()), Some(neg)]
        }),
    ))
}

/// Elementwise product.
pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("mul", a, b)?;
    let vals = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x * *y).collect();
    Ok(Tensor::op_node(
        a.shape().to_vec(),
        vals,
        vec![a.clone(), b.clone()],
        Box::new(|ctx: &BackCtx<'_, T>| {
            let a = &ctx.parents[0];
            let b = &ctx.parents[1];
            let ga = ctx.grad.iter().zip(b.data().iter()).map(|(g, y)| *g * *y).collect();
            let gb = ctx.grad.iter().zip(a.data().iter()).map(|(g, x)| *g * *x).collect();
            vec![Some(ga), Some(gb)]
        }),
    ))
}

/// Elementwise `scale * x + offset`.
pub fn affine<T: Scalar>(x: &Tensor<T>, scale: T, offset: T) -> Tensor<T> {
    let vals = x.data().iter().map(|v| scale * *v + offset).collect();
    Tensor::op_node(
        x.shape().to_vec(),
        vals,
        vec![x.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            vec![Some(ctx.grad.iter().map(|g| *g * scale).collect())]
        }),
    )
}

/// Elementwise absolute value; derivative at zero is taken as zero.
pub fn abs<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let vals = x.data().iter().map(|v| v.abs()).collect();
    Tensor::op_node(
        x.shape().to_vec(),
        vals,
        vec![x.clone()],
        Box::new(|ctx: &BackCtx<'_, T>| {
            let x = ctx.parents[0].data();
            let g = ctx
                .grad
                .iter()
                .zip(x.iter())
                .map(|(g, v)| {
                    if *v > T::zero() {
                        *g
                    } else if *v < T::zero() {
                        T::zero() - *g
                    } else {
                        T::zero()
                    }
                })
                .collect();
            vec![Some(g)]
        }),
    )
}

/// Sum of all elements, as a scalar tensor.
pub fn sum<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let mut acc = T::zero();
    for v in x.data().iter() {
        acc = acc + *v;
    }
    let n = x.numel();
    Ok(Tensor::op_node(
        vec![1],
        vec![acc],
        vec![x.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let g = ctx.grad[0];
            vec![Some(vec![g; n])]
        }),
    ))
}

/// Mean of all elements, as a scalar tensor.
pub fn mean<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = x.numel();
    if n == 0 {
        return Err(shape_err("mean", "empty tensor"));
    }
    Ok(affine(&sum(x)?, T::one() / T::from_usize(n), T::zero()))
}

/// Reinterpret the value buffer with a new shape of equal element count.
pub fn reshape<T: Scalar>(x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    if shape.iter().product::<usize>() != x.numel() {
        return Err(shape_err(
            "reshape",
            alloc::format!("{:?} -> {:?} changes element count", x.shape(), shape),
        ));
    }
    Ok(Tensor::op_node(
        shape.to_vec(),
        x.to_vec(),
        vec![x.clone()],
        Box::new(|ctx: &BackCtx<'_, T>| vec![Some(ctx.grad.to_vec())]),
    ))
}

/// Concatenate tensors along `axis`; all other dimensions must agree.
pub fn concat<T: Scalar>(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
    let rank = first.shape().len();
    if axis >= rank {
        return Err(shape_err("concat", alloc::format!("axis {axis} out of rank {rank}")));
    }
    let mut out_shape = first.shape().to_vec();
    for p in &parts[1..] {
        if p.shape().len() != rank {
            return Err(shape_err("concat", "rank mismatch"));
        }
        for (d, (a, b)) in first.shape().iter().zip(p.shape()).enumerate() {
            if d != axis && a != b {
                return Err(shape_err(
                    "concat",
                    alloc::format!("dim {d}: {:?} vs {:?}", first.shape(), p.shape()),
                ));
            }
        }
        out_shape[axis] += p.shape()[axis];
    }

    // Treat each tensor as [outer, axis_len * inner] blocks.
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let block_lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
    let out_block: usize = block_lens.iter().sum();

    let mut vals = vec![T::zero(); outer * out_block];
    for o in 0..outer {
        let mut offset = 0;
        for (p, bl) in parts.iter().zip(&block_lens) {
            let data = p.data();
            let src = &data[o * bl..(o + 1) * bl];
            vals[o * out_block + offset..o * out_block + offset + bl].copy_from_slice(src);
            offset += bl;
        }
    }

    let parents: Vec<Tensor<T>> = parts.to_vec();
    Ok(Tensor::op_node(
        out_shape,
        vals,
        parents,
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(ctx.parents.len());
            for (i, bl) in block_lens.iter().enumerate() {
                let mut g = vec![T::zero(); outer * bl];
                let offset: usize = block_lens[..i].iter().sum();
                for o in 0..outer {
                    g[o * bl..(o + 1) * bl]
                        .copy_from_slice(&ctx.grad[o * out_block + offset..o * out_block + offset + bl]);
                }
                grads.push(Some(g));
            }
            grads
        }),
    ))
}

/// Tile a vector `[n]` into `[rows, n]`.
pub fn repeat_rows<T: Scalar>(x: &Tensor<T>, rows: usize) -> Result<Tensor<T>> {
    if x.shape().len() != 1 {
        return Err(shape_err("repeat_rows", alloc::format!("expected [n], got {:?}", x.shape())));
    }
    let n = x.numel();
    let mut vals = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        vals.extend_from_slice(&x.data());
    }
    Ok(Tensor::op_node(
        vec![rows, n],
        vals,
        vec![x.clone()],
        Box::new(move |ctx: &BackCtx<'_, T>| {
            let mut g = vec![T::zero(); n];
            for r in 0..rows {
                for i in 0..n {
                    g[i] = g[i] + ctx.grad[r * n + i];
                }
            }
            vec![Some(g)]
        }),
    ))
}
