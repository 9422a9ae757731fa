//! Forward and backward maps for every layer type.
//!
//! Convolutions go through `im2col` and a dense product. Weights use the
//! `[out, in, k, k]` layout for `conv2d` and `[in, out, k, k]` for
//! `conv_transpose2d`.

use alloc::vec;
use alloc::vec::Vec;

use super::gemm::{matmul, transpose};
use super::Tensor;
use crate::{Error, Real, Result};

/// Negative-side slope of every leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (n + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

fn geometry(op: &'static str, c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<Geometry> {
    if k % 2 == 0 {
        return Err(Error::shape(op, alloc::format!("kernel size {k} is even")));
    }
    if stride == 0 {
        return Err(Error::shape(op, "stride 0"));
    }
    match (conv_out(h, k, stride, pad), conv_out(w, k, stride, pad)) {
        (Some(ho), Some(wo)) if ho > 0 && wo > 0 => Ok(Geometry { c, h, w, k, stride, pad, ho, wo }),
        _ => Err(Error::shape(op, alloc::format!("input {c}x{h}x{w} smaller than kernel {k} with pad {pad}"))),
    }
}

fn im2col<T: Real>(x: &[T], g: &Geometry) -> Vec<T> {
    let p = g.ho * g.wo;
    let mut cols = vec![T::zero(); g.c * g.k * g.k * p];
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * p;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &x[(ci * g.h + iy as usize) * g.w..][..g.w];
                    let dst = &mut cols[row + oy * g.wo..][..g.wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], g: &Geometry) -> Vec<T> {
    let p = g.ho * g.wo;
    let mut x = vec![T::zero(); g.c * g.h * g.w];
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * p;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut x[(ci * g.h + iy as usize) * g.w..][..g.w];
                    let src = &cols[row + oy * g.wo..][..g.wo];
                    for (ox, &s) in src.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
    x
}

fn check_weight<T: Real>(op: &'static str, w: &Tensor<T>, b: Option<&Tensor<T>>, rows: usize, cin_expected: usize) -> Result<(usize, usize, usize)> {
    let (a, c, k) = match *w.shape() {
        [a, c, k1, k2] if k1 == k2 => (a, c, k1),
        _ => return Err(Error::shape(op, alloc::format!("weight shape {:?} is not [a, b, k, k]", w.shape()))),
    };
    let cin = if rows == 0 { c } else { a };
    if cin != cin_expected {
        return Err(Error::shape(op, alloc::format!("weight {:?} does not take {cin_expected} input channels", w.shape())));
    }
    if let Some(b) = b {
        let cout = if rows == 0 { a } else { c };
        if b.shape() != [cout] {
            return Err(Error::shape(op, alloc::format!("bias {:?} for {cout} output channels", b.shape())));
        }
    }
    Ok((a, c, k))
}

pub fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let (c, h, wd) = x.chw("conv2d")?;
    let (cout, _, k) = check_weight("conv2d", w, Some(b), 0, c)?;
    let g = geometry("conv2d", c, h, wd, k, stride, pad)?;
    let p = g.ho * g.wo;
    let cols = im2col(x.data(), &g);
    let mut y = matmul(w.data(), &cols, cout, c * k * k, p);
    for (o, row) in y.chunks_mut(p).enumerate() {
        let bias = b.data()[o];
        row.iter_mut().for_each(|v| *v += bias);
    }
    Tensor::from_vec(&[cout, g.ho, g.wo], y)
}

pub fn conv2d_backward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize, gy: &Tensor<T>) -> Result<ConvGrads<T>> {
    let (c, h, wd) = x.chw("conv2d_backward")?;
    let (cout, _, k) = check_weight("conv2d_backward", w, None, 0, c)?;
    let g = geometry("conv2d_backward", c, h, wd, k, stride, pad)?;
    if gy.shape() != [cout, g.ho, g.wo] {
        return Err(Error::shape("conv2d_backward", alloc::format!("output grad {:?}, expected [{cout}, {}, {}]", gy.shape(), g.ho, g.wo)));
    }
    let p = g.ho * g.wo;
    let q = c * k * k;
    let cols = im2col(x.data(), &g);
    let gw = matmul(gy.data(), &transpose(&cols, q, p), cout, p, q);
    let gcols = matmul(&transpose(w.data(), cout, q), gy.data(), q, cout, p);
    let gb = gy.data().chunks(p).map(|r| r.iter().copied().sum()).collect();
    Ok(ConvGrads {
        input: Tensor::from_vec(&[c, h, wd], col2im(&gcols, &g))?,
        weight: Tensor::from_vec(w.shape(), gw)?,
        bias: Tensor::from_vec(&[cout], gb)?,
    })
}

/// Geometry of the convolution whose adjoint the transposed convolution is.
fn transpose_geometry(op: &'static str, cout: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, output_padding: usize) -> Result<Geometry> {
    if output_padding >= stride {
        return Err(Error::shape(op, alloc::format!("output padding {output_padding} must be below stride {stride}")));
    }
    let grow = |n: usize| ((n - 1) * stride + k + output_padding).checked_sub(2 * pad);
    let (Some(hout), Some(wout)) = (grow(h), grow(w)) else {
        return Err(Error::shape(op, "padding exceeds output"));
    };
    let g = geometry(op, cout, hout, wout, k, stride, pad)?;
    if g.ho != h || g.wo != w {
        return Err(Error::shape(op, alloc::format!("inconsistent geometry for {h}x{w}")));
    }
    Ok(g)
}

pub fn conv_transpose2d<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
    output_padding: usize,
) -> Result<Tensor<T>> {
    let (cin, h, wd) = x.chw("conv_transpose2d")?;
    let (_, cout, k) = check_weight("conv_transpose2d", w, Some(b), 1, cin)?;
    let g = transpose_geometry("conv_transpose2d", cout, h, wd, k, stride, pad, output_padding)?;
    let q = cout * k * k;
    let cols = matmul(&transpose(w.data(), cin, q), x.data(), q, cin, h * wd);
    let mut y = col2im(&cols, &g);
    let plane = g.h * g.w;
    for (o, chunk) in y.chunks_mut(plane).enumerate() {
        let bias = b.data()[o];
        chunk.iter_mut().for_each(|v| *v += bias);
    }
    Tensor::from_vec(&[cout, g.h, g.w], y)
}

pub fn conv_transpose2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    output_padding: usize,
    gy: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (cin, h, wd) = x.chw("conv_transpose2d_backward")?;
    let (_, cout, k) = check_weight("conv_transpose2d_backward", w, None, 1, cin)?;
    let g = transpose_geometry("conv_transpose2d_backward", cout, h, wd, k, stride, pad, output_padding)?;
    if gy.shape() != [cout, g.h, g.w] {
        return Err(Error::shape("conv_transpose2d_backward", alloc::format!("output grad {:?}, expected [{cout}, {}, {}]", gy.shape(), g.h, g.w)));
    }
    let q = cout * k * k;
    let p = h * wd;
    let gcols = im2col(gy.data(), &g);
    let gx = matmul(w.data(), &gcols, cin, q, p);
    let gw = matmul(x.data(), &transpose(&gcols, q, p), cin, p, q);
    let gb = gy.data().chunks(g.h * g.w).map(|r| r.iter().copied().sum()).collect();
    Ok(ConvGrads {
        input: Tensor::from_vec(&[cin, h, wd], gx)?,
        weight: Tensor::from_vec(w.shape(), gw)?,
        bias: Tensor::from_vec(&[cout], gb)?,
    })
}

pub fn leaky_relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let slope = T::of(LEAKY_SLOPE);
    let data = x.data().iter().map(|&v| if v > T::zero() { v } else { v * slope }).collect();
    Tensor { shape: x.shape().to_vec(), data }
}

/// Derivative is 1 for positive inputs and the leak slope otherwise, so the
/// value at exactly zero is the left derivative.
pub fn leaky_relu_backward<T: Real>(x: &Tensor<T>, gy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != gy.shape() {
        return Err(Error::shape("leaky_relu_backward", alloc::format!("{:?} vs {:?}", x.shape(), gy.shape())));
    }
    let slope = T::of(LEAKY_SLOPE);
    let data = x.data().iter().zip(gy.data()).map(|(&v, &g)| if v > T::zero() { g } else { g * slope }).collect();
    Tensor::from_vec(x.shape(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn linear_dims<T: Real>(op: &'static str, x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize)> {
    match (x.shape(), w.shape()) {
        ([n], [o, i]) if n == i => Ok((*o, *i)),
        _ => Err(Error::shape(op, alloc::format!("input {:?} with weight {:?}", x.shape(), w.shape()))),
    }
}

pub fn linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (o, i) = linear_dims("linear", x, w)?;
    if b.shape() != [o] {
        return Err(Error::shape("linear", alloc::format!("bias {:?} for {o} outputs", b.shape())));
    }
    let data = (0..o)
        .map(|r| w.data()[r * i..(r + 1) * i].iter().zip(x.data()).map(|(a, b)| *a * *b).sum::<T>() + b.data()[r])
        .collect();
    Tensor::from_vec(&[o], data)
}

pub fn linear_backward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, gy: &Tensor<T>) -> Result<LinearGrads<T>> {
    let (o, i) = linear_dims("linear_backward", x, w)?;
    if gy.shape() != [o] {
        return Err(Error::shape("linear_backward", alloc::format!("output grad {:?} for {o} outputs", gy.shape())));
    }
    let mut gx = vec![T::zero(); i];
    let mut gw = vec![T::zero(); o * i];
    for r in 0..o {
        let g = gy.data()[r];
        let wrow = &w.data()[r * i..(r + 1) * i];
        for c in 0..i {
            gx[c] += g * wrow[c];
            gw[r * i + c] = g * x.data()[c];
        }
    }
    Ok(LinearGrads {
        input: Tensor::from_vec(&[i], gx)?,
        weight: Tensor::from_vec(&[o, i], gw)?,
        bias: gy.clone(),
    })
}

pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw("global_avg_pool")?;
    let n = T::of((h * w) as f64);
    let data = x.data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() / n).collect();
    Tensor::from_vec(&[c], data)
}

pub fn global_avg_pool_backward<T: Real>(input_shape: &[usize], gy: &Tensor<T>) -> Result<Tensor<T>> {
    let [c, h, w] = *input_shape else {
        return Err(Error::shape("global_avg_pool_backward", alloc::format!("input shape {input_shape:?}")));
    };
    if gy.shape() != [c] {
        return Err(Error::shape("global_avg_pool_backward", alloc::format!("grad {:?} for {c} channels", gy.shape())));
    }
    let n = T::of((h * w) as f64);
    let mut data = Vec::with_capacity(c * h * w);
    for &g in gy.data() {
        data.extend(core::iter::repeat(g / n).take(h * w));
    }
    Tensor::from_vec(input_shape, data)
}

pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ca, h, w) = a.chw("concat_channels")?;
    let (cb, hb, wb) = b.chw("concat_channels")?;
    if (h, w) != (hb, wb) {
        return Err(Error::shape("concat_channels", alloc::format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[ca + cb, h, w], data)
}

/// Split a concatenated gradient back into its first `ca` and remaining channels.
pub fn concat_channels_backward<T: Real>(gy: &Tensor<T>, ca: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c, h, w) = gy.chw("concat_channels_backward")?;
    if ca > c {
        return Err(Error::shape("concat_channels_backward", alloc::format!("split {ca} of {c} channels")));
    }
    let (x, y) = gy.data().split_at(ca * h * w);
    Ok((Tensor::from_vec(&[ca, h, w], x.to_vec())?, Tensor::from_vec(&[c - ca, h, w], y.to_vec())?))
}

pub fn upsample_nearest2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw("upsample_nearest2")?;
    let mut data = Vec::with_capacity(c * h * w * 4);
    for ci in 0..c {
        for y in 0..2 * h {
            let row = &x.data()[(ci * h + y / 2) * w..][..w];
            for v in row {
                data.push(*v);
                data.push(*v);
            }
        }
    }
    Tensor::from_vec(&[c, 2 * h, 2 * w], data)
}

pub fn upsample_nearest2_backward<T: Real>(gy: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h2, w2) = gy.chw("upsample_nearest2_backward")?;
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::shape("upsample_nearest2_backward", alloc::format!("odd grad shape {:?}", gy.shape())));
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let mut data = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                data[(ci * h + y / 2) * w + x / 2] += gy.data()[(ci * h2 + y) * w2 + x];
            }
        }
    }
    Tensor::from_vec(&[c, h, w], data)
}

/// Broadcast a `[d]` vector over an `h x w` grid.
pub fn tile_spatial<T: Real>(v: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let [d] = *v.shape() else {
        return Err(Error::shape("tile_spatial", alloc::format!("expected a vector, got {:?}", v.shape())));
    };
    let mut data = Vec::with_capacity(d * h * w);
    for &x in v.data() {
        data.extend(core::iter::repeat(x).take(h * w));
    }
    Tensor::from_vec(&[d, h, w], data)
}

pub fn tile_spatial_backward<T: Real>(gy: &Tensor<T>) -> Result<Tensor<T>> {
    let (d, h, w) = gy.chw("tile_spatial_backward")?;
    let data = gy.data().chunks(h * w).map(|p| p.iter().copied().sum()).collect();
    Tensor::from_vec(&[d], data)
}
