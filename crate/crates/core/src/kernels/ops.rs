//! Activation, pooling, resampling, dense and structural kernels with their
//! gradients.

use rand::Rng;

use super::gemm::{gemm, MatRef};
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given its input.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut dx = grad_out.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Gradient of the logistic function given its output.
pub fn sigmoid_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut dx = grad_out.clone();
    for (g, &s) in dx.data_mut().iter_mut().zip(y.data()) {
        *g *= s * (1.0 - s);
    }
    dx
}

fn axis1_layout(x: &Tensor) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(shape_err!("softmax needs at least two axes, got {:?}", s));
    }
    Ok((s[0], s[1], s[2..].iter().product()))
}

/// Softmax over axis 1 (the class/channel axis) for every other index.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let (n, c, inner) = axis1_layout(x)?;
    let xd = x.data();
    let mut y = Tensor::zeros(x.shape());
    let yd = y.data_mut();
    for s in 0..n {
        for p in 0..inner {
            let idx = |ch: usize| (s * c + ch) * inner + p;
            let max = (0..c).map(|ch| xd[idx(ch)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for ch in 0..c {
                let e = (xd[idx(ch)] - max).exp();
                yd[idx(ch)] = e;
                total += e;
            }
            for ch in 0..c {
                yd[idx(ch)] /= total;
            }
        }
    }
    Ok(y)
}

/// Gradient of [`softmax`] given its output.
pub fn softmax_backward(y: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (n, c, inner) = axis1_layout(y)?;
    let (yd, gd) = (y.data(), grad_out.data());
    let mut dx = Tensor::zeros(y.shape());
    let dd = dx.data_mut();
    for s in 0..n {
        for p in 0..inner {
            let idx = |ch: usize| (s * c + ch) * inner + p;
            let dot: f64 = (0..c).map(|ch| yd[idx(ch)] * gd[idx(ch)]).sum();
            for ch in 0..c {
                dd[idx(ch)] = yd[idx(ch)] * (gd[idx(ch)] - dot);
            }
        }
    }
    Ok(dx)
}

/// Per-axis interpolation taps `(lower, upper, upper_weight)` for half-pixel
/// bilinear resampling (corners not aligned).
fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

fn check_resize(x: &Tensor, height: usize, width: usize) -> Result<(usize, usize, usize, usize)> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target {height}x{width} must be positive"
        )));
    }
    x.dims4()
}

/// Bilinear resize of every plane to `height x width` (half-pixel centres).
pub fn bilinear_resize(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (n, c, h, w) = check_resize(x, height, width)?;
    let ty = bilinear_taps(h, height);
    let tx = bilinear_taps(w, width);
    let mut y = Tensor::zeros(&[n, c, height, width]);
    let xd = x.data();
    let yd = y.data_mut();
    for plane in 0..n * c {
        let src = &xd[plane * h * w..(plane + 1) * h * w];
        let dst = &mut yd[plane * height * width..(plane + 1) * height * width];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - lx) + src[y0 * w + x1] * lx;
                let bot = src[y1 * w + x0] * (1.0 - lx) + src[y1 * w + x1] * lx;
                dst[oy * width + ox] = top * (1.0 - ly) + bot * ly;
            }
        }
    }
    Ok(y)
}

pub fn bilinear_resize_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let (n, c, height, width) = grad_out.dims4()?;
    let [_, _, h, w] = input_shape[..] else {
        return Err(shape_err!("resize input must be rank 4, got {:?}", input_shape));
    };
    let ty = bilinear_taps(h, height);
    let tx = bilinear_taps(w, width);
    let mut dx = Tensor::zeros(input_shape);
    let gd = grad_out.data();
    let dd = dx.data_mut();
    for plane in 0..n * c {
        let g = &gd[plane * height * width..(plane + 1) * height * width];
        let dst = &mut dd[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let v = g[oy * width + ox];
                dst[y0 * w + x0] += v * (1.0 - ly) * (1.0 - lx);
                dst[y0 * w + x1] += v * (1.0 - ly) * lx;
                dst[y1 * w + x0] += v * ly * (1.0 - lx);
                dst[y1 * w + x1] += v * ly * lx;
            }
        }
    }
    Ok(dx)
}

/// Adaptive pooling bin `[start, end)` for output index `i`.
pub fn adaptive_bin(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = i * input / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end)
}

/// Adaptive average pooling to `height x width`. Output extents may exceed
/// the input extents, in which case bins overlap.
pub fn adaptive_avg_pool(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (n, c, h, w) = check_resize(x, height, width)?;
    if h == 0 || w == 0 {
        return Err(shape_err!("cannot pool an empty {}x{} map", h, w));
    }
    let mut y = Tensor::zeros(&[n, c, height, width]);
    let xd = x.data();
    let yd = y.data_mut();
    for plane in 0..n * c {
        let src = &xd[plane * h * w..(plane + 1) * h * w];
        for oy in 0..height {
            let (y0, y1) = adaptive_bin(oy, h, height);
            for ox in 0..width {
                let (x0, x1) = adaptive_bin(ox, w, width);
                let mut acc = 0.0;
                for iy in y0..y1 {
                    acc += src[iy * w + x0..iy * w + x1].iter().sum::<f64>();
                }
                yd[plane * height * width + oy * width + ox] =
                    acc / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
    }
    Ok(y)
}

pub fn adaptive_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let (n, c, height, width) = grad_out.dims4()?;
    let [_, _, h, w] = input_shape[..] else {
        return Err(shape_err!("pool input must be rank 4, got {:?}", input_shape));
    };
    let mut dx = Tensor::zeros(input_shape);
    let gd = grad_out.data();
    let dd = dx.data_mut();
    for plane in 0..n * c {
        for oy in 0..height {
            let (y0, y1) = adaptive_bin(oy, h, height);
            for ox in 0..width {
                let (x0, x1) = adaptive_bin(ox, w, width);
                let g = gd[plane * height * width + oy * width + ox]
                    / ((y1 - y0) * (x1 - x0)) as f64;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        dd[plane * h * w + iy * w + ix] += g;
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Mean over the spatial extent: `N x C x H x W -> N x C`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let inner = h * w;
    let data = x
        .data()
        .chunks(inner)
        .map(|p| p.iter().sum::<f64>() / inner as f64)
        .collect();
    Tensor::new(vec![n, c], data)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input_shape[..] else {
        return Err(shape_err!("pool input must be rank 4, got {:?}", input_shape));
    };
    if grad_out.shape() != [n, c] {
        return Err(shape_err!("pooled gradient {:?} expected [{n}, {c}]", grad_out.shape()));
    }
    let inner = h * w;
    let mut dx = Tensor::zeros(input_shape);
    for (plane, &g) in grad_out.data().iter().enumerate() {
        dx.data_mut()[plane * inner..(plane + 1) * inner].fill(g / inner as f64);
    }
    Ok(dx)
}

/// `y = x W^T + b` for `x: N x F`, `W: O x F`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (n, f) = x.dims2()?;
    let (o, wf) = weight.dims2()?;
    if wf != f {
        return Err(shape_err!("linear weight {:?} cannot take {} features", weight.shape(), f));
    }
    let mut y = Tensor::zeros(&[n, o]);
    gemm(
        MatRef::new(x.data(), n, f),
        MatRef::new(weight.data(), o, f).t(),
        y.data_mut(),
        0.0,
    );
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(shape_err!("linear bias {:?} expected [{}]", b.shape(), o));
        }
        for row in y.data_mut().chunks_mut(o) {
            row.iter_mut().zip(b.data()).for_each(|(v, b)| *v += b);
        }
    }
    Ok(y)
}

/// Gradients `(input, weight, bias)` of [`linear`].
pub fn linear_backward(
    x: &Tensor,
    weight: &Tensor,
    with_bias: bool,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    let (n, f) = x.dims2()?;
    let (o, _) = weight.dims2()?;
    if grad_out.shape() != [n, o] {
        return Err(shape_err!("linear gradient {:?} expected [{n}, {o}]", grad_out.shape()));
    }
    let dy = MatRef::new(grad_out.data(), n, o);
    let mut dx = Tensor::zeros(&[n, f]);
    gemm(dy, MatRef::new(weight.data(), o, f), dx.data_mut(), 0.0);
    let mut dw = Tensor::zeros(&[o, f]);
    gemm(dy.t(), MatRef::new(x.data(), n, f), dw.data_mut(), 0.0);
    let db = with_bias.then(|| {
        let mut db = Tensor::zeros(&[o]);
        for row in grad_out.data().chunks(o) {
            db.data_mut().iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        db
    });
    Ok((dx, dw, db))
}

/// Inverted dropout mask: each entry is `0` or `1/keep`.
pub fn dropout_mask<R: Rng + ?Sized>(shape: &[usize], keep: f64, rng: &mut R) -> Result<Tensor> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dropout keep-probability {keep} outside (0, 1]"
        )));
    }
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Elementwise product of equally shaped tensors.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_err!("cannot multiply {:?} by {:?}", a.shape(), b.shape()));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}

/// Concatenate along axis 1.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| shape_err!("concat of nothing"))?;
    let (n, _, h, w) = first.dims4()?;
    let mut total_c = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(shape_err!(
                "concat operands {:?} and {:?} disagree outside axis 1",
                first.shape(),
                p.shape()
            ));
        }
        total_c += pc;
    }
    let mut data = Vec::with_capacity(n * total_c * h * w);
    for s in 0..n {
        for p in parts {
            let per = p.len() / n;
            data.extend_from_slice(&p.data()[s * per..(s + 1) * per]);
        }
    }
    Tensor::new(vec![n, total_c, h, w], data)
}

/// Split an axis-1 concatenation gradient back into its parts.
pub fn split_channels(grad: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let (n, c, h, w) = grad.dims4()?;
    if channels.iter().sum::<usize>() != c {
        return Err(shape_err!("split {:?} does not cover {} channels", channels, c));
    }
    let mut out: Vec<Vec<f64>> = channels.iter().map(|&k| Vec::with_capacity(n * k * h * w)).collect();
    let gd = grad.data();
    for s in 0..n {
        let mut offset = s * c * h * w;
        for (k, part) in channels.iter().zip(out.iter_mut()) {
            part.extend_from_slice(&gd[offset..offset + k * h * w]);
            offset += k * h * w;
        }
    }
    out.into_iter()
        .zip(channels)
        .map(|(d, &k)| Tensor::new(vec![n, k, h, w], d))
        .collect()
}

/// Concatenate along axis 0.
pub fn concat_batch(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| shape_err!("concat of nothing"))?;
    let tail = &first.shape()[1..];
    let mut n = 0;
    let mut data = Vec::new();
    for p in parts {
        if &p.shape()[1..] != tail {
            return Err(shape_err!("cannot stack {:?} with {:?}", p.shape(), first.shape()));
        }
        n += p.shape()[0];
        data.extend_from_slice(p.data());
    }
    let mut shape = first.shape().to_vec();
    shape[0] = n;
    Tensor::new(shape, data)
}

/// Part `index` of `parts` equal slices along axis 0.
pub fn slice_batch(x: &Tensor, index: usize, parts: usize) -> Result<Tensor> {
    let n = x.shape()[0];
    if parts == 0 || n % parts != 0 || index >= parts {
        return Err(shape_err!("cannot take part {index} of {parts} from batch {n}"));
    }
    let per = x.len() / parts;
    let mut shape = x.shape().to_vec();
    shape[0] = n / parts;
    Tensor::new(shape, x.data()[index * per..(index + 1) * per].to_vec())
}

/// Per-channel gating: `y[n,c,:,:] = x[n,c,:,:] * gates[n,c]`.
pub fn scale_channels(x: &Tensor, gates: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if gates.shape() != [n, c] {
        return Err(shape_err!("gates {:?} cannot scale {:?}", gates.shape(), x.shape()));
    }
    let mut y = x.clone();
    for (plane, chunk) in y.data_mut().chunks_mut(h * w).enumerate() {
        let g = gates.data()[plane];
        chunk.iter_mut().for_each(|v| *v *= g);
    }
    Ok(y)
}

/// Gradients `(x, gates)` of [`scale_channels`].
pub fn scale_channels_backward(x: &Tensor, gates: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, c, h, w) = x.dims4()?;
    let inner = h * w;
    let dx = scale_channels(grad_out, gates)?;
    let mut dg = Tensor::zeros(&[n, c]);
    for plane in 0..n * c {
        let xs = &x.data()[plane * inner..(plane + 1) * inner];
        let gs = &grad_out.data()[plane * inner..(plane + 1) * inner];
        dg.data_mut()[plane] = xs.iter().zip(gs).map(|(a, b)| a * b).sum();
    }
    Ok((dx, dg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_row_is_uniform() {
        let x = Tensor::full(&[1, 5], 3.7);
        let y = softmax(&x).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn resize_constant_stays_constant() {
        let x = Tensor::full(&[1, 2, 256, 256], 4.25);
        let y = bilinear_resize(&x, 512, 512).unwrap();
        assert_eq!(y.shape(), &[1, 2, 512, 512]);
        assert!(y.data().iter().all(|&v| v == 4.25));
        assert!(bilinear_resize(&x, 0, 4).is_err());
    }

    #[test]
    fn adaptive_bins_cover_and_overlap_when_upsampling() {
        assert_eq!(adaptive_bin(0, 16, 6), (0, 3));
        assert_eq!(adaptive_bin(5, 16, 6), (13, 16));
        assert_eq!(adaptive_bin(0, 2, 3), (0, 1));
        assert_eq!(adaptive_bin(1, 2, 3), (0, 2));
        assert_eq!(adaptive_bin(2, 2, 3), (1, 2));
    }

    #[test]
    fn dropout_keep_one_is_identity_mask() {
        let mut rng = rand::rng();
        let m = dropout_mask(&[3, 4], 1.0, &mut rng).unwrap();
        assert!(m.data().iter().all(|&v| v == 1.0));
        assert!(dropout_mask(&[1], 0.0, &mut rng).is_err());
    }
}
