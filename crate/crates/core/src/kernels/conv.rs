//! 2-D cross-correlation with stride, zero padding and channel groups.

use super::gemm::{gemm, MatRef};
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

/// Hyperparameters of a square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Dense convolution with "same" padding (`kernel / 2`).
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            groups: 1,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::new(in_channels, out_channels, 1, 1)
    }

    /// 3x3 depthwise convolution, one filter per channel.
    pub fn depthwise(channels: usize, stride: usize) -> Self {
        ConvSpec {
            groups: channels,
            ..Self::new(channels, channels, 3, stride)
        }
    }

    pub fn with_padding(self, padding: usize) -> Self {
        ConvSpec { padding, ..self }
    }

    pub fn with_groups(self, groups: usize) -> Self {
        ConvSpec { groups, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.groups == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel, stride and groups must be positive: {self:?}"
            )));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(shape_err!(
                "groups {} must divide in_channels {} and out_channels {}",
                self.groups,
                self.in_channels,
                self.out_channels
            ));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel,
            self.kernel,
        ]
    }

    /// Output extent along one spatial axis.
    pub fn output_extent(&self, extent: usize) -> Result<usize> {
        let padded = extent + 2 * self.padding;
        if padded < self.kernel {
            return Err(shape_err!(
                "extent {} with padding {} is smaller than kernel {}",
                extent,
                self.padding,
                self.kernel
            ));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let [n, c, h, w] = input[..] else {
            return Err(shape_err!("conv expects N x C x H x W, got {:?}", input));
        };
        if c != self.in_channels {
            return Err(shape_err!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                c
            ));
        }
        Ok(vec![
            n,
            self.out_channels,
            self.output_extent(h)?,
            self.output_extent(w)?,
        ])
    }

    /// Multiply-accumulates for one sample producing an `oh x ow` map.
    pub fn macs(&self, oh: usize, ow: usize) -> u64 {
        (self.kernel * self.kernel * self.in_channels / self.groups) as u64
            * self.out_channels as u64
            * (oh * ow) as u64
    }

    fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels && self.groups > 1
    }

    fn is_plain_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

fn check_operands(input: &Tensor, weight: &Tensor, spec: &ConvSpec) -> Result<Vec<usize>> {
    let out = spec.output_shape(input.shape())?;
    if weight.shape() != spec.weight_shape() {
        return Err(shape_err!(
            "conv weight {:?} does not match expected {:?}",
            weight.shape(),
            spec.weight_shape()
        ));
    }
    Ok(out)
}

/// Unfold one group of one sample into a `(cin_g*k*k) x (oh*ow)` matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    col: &mut [f64],
) {
    let k = spec.kernel;
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    let plane = oh * ow;
    for c in 0..channels {
        let xc = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..oh {
                    let iy = oy as isize * s - p + ky as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &xc[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = ox as isize * s - p + kx as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    dx: &mut [f64],
) {
    let k = spec.kernel;
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    let plane = oh * ow;
    for c in 0..channels {
        let dxc = &mut dx[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((c * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..oh {
                    let iy = oy as isize * s - p + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut dxc[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = ox as isize * s - p + kx as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_forward(
    x: &[f64],
    wt: &[f64],
    out: &mut [f64],
    (c, h, w): (usize, usize, usize),
    spec: &ConvSpec,
    (oh, ow): (usize, usize),
) {
    let k = spec.kernel;
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    for ch in 0..c {
        let xc = &x[ch * h * w..(ch + 1) * h * w];
        let wc = &wt[ch * k * k..(ch + 1) * k * k];
        let oc = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ky in 0..k {
                    let iy = oy as isize * s - p + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = &xc[iy as usize * w..];
                    for kx in 0..k {
                        let ix = ox as isize * s - p + kx as isize;
                        if ix >= 0 && ix < w as isize {
                            acc += wc[ky * k + kx] * xrow[ix as usize];
                        }
                    }
                }
                oc[oy * ow + ox] = acc;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn depthwise_backward(
    x: &[f64],
    wt: &[f64],
    dy: &[f64],
    dx: &mut [f64],
    dw: &mut [f64],
    (c, h, w): (usize, usize, usize),
    spec: &ConvSpec,
    (oh, ow): (usize, usize),
) {
    let k = spec.kernel;
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    for ch in 0..c {
        let xc = &x[ch * h * w..(ch + 1) * h * w];
        let wc = &wt[ch * k * k..(ch + 1) * k * k];
        let dyc = &dy[ch * oh * ow..(ch + 1) * oh * ow];
        let dxc = &mut dx[ch * h * w..(ch + 1) * h * w];
        let dwc = &mut dw[ch * k * k..(ch + 1) * k * k];
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dyc[oy * ow + ox];
                if g == 0.0 {
                    continue;
                }
                for ky in 0..k {
                    let iy = oy as isize * s - p + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = iy as usize * w;
                    for kx in 0..k {
                        let ix = ox as isize * s - p + kx as isize;
                        if ix >= 0 && ix < w as isize {
                            let idx = base + ix as usize;
                            dwc[ky * k + kx] += g * xc[idx];
                            dxc[idx] += g * wc[ky * k + kx];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of an `N x C x H x W` input with `O x C/g x K x K` weights.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: &ConvSpec,
) -> Result<Tensor> {
    let out_shape = check_operands(input, weight, spec)?;
    let (n, cin, h, w) = input.dims4()?;
    let (cout, oh, ow) = (out_shape[1], out_shape[2], out_shape[3]);
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(shape_err!("conv bias {:?} expected [{}]", b.shape(), cout));
        }
    }
    let mut out = Tensor::zeros(&out_shape);
    let x = input.data();
    let wt = weight.data();
    let (in_per, out_per) = (cin * h * w, cout * oh * ow);
    let plane = oh * ow;

    if spec.is_depthwise() {
        for s in 0..n {
            depthwise_forward(
                &x[s * in_per..(s + 1) * in_per],
                wt,
                &mut out.data_mut()[s * out_per..(s + 1) * out_per],
                (cin, h, w),
                spec,
                (oh, ow),
            );
        }
    } else {
        let g = spec.groups;
        let (cin_g, cout_g) = (cin / g, cout / g);
        let kk = cin_g * spec.kernel * spec.kernel;
        let mut col = vec![0.0; if spec.is_plain_pointwise() { 0 } else { kk * plane }];
        for s in 0..n {
            for gi in 0..g {
                let xg = &x[s * in_per + gi * cin_g * h * w..][..cin_g * h * w];
                let lhs = MatRef::new(&wt[gi * cout_g * kk..(gi + 1) * cout_g * kk], cout_g, kk);
                let dst = &mut out.data_mut()[s * out_per + gi * cout_g * plane..][..cout_g * plane];
                if spec.is_plain_pointwise() {
                    gemm(lhs, MatRef::new(xg, kk, plane), dst, 0.0);
                } else {
                    im2col(xg, cin_g, h, w, spec, oh, ow, &mut col);
                    gemm(lhs, MatRef::new(&col, kk, plane), dst, 0.0);
                }
            }
        }
    }

    if let Some(b) = bias {
        let bd = b.data();
        for s in 0..n {
            for c in 0..cout {
                let base = s * out_per + c * plane;
                out.data_mut()[base..base + plane]
                    .iter_mut()
                    .for_each(|v| *v += bd[c]);
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to its operands.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    with_bias: bool,
    grad_out: &Tensor,
    spec: &ConvSpec,
) -> Result<ConvGrads> {
    let out_shape = check_operands(input, weight, spec)?;
    if grad_out.shape() != &out_shape[..] {
        return Err(shape_err!(
            "conv output gradient {:?} expected {:?}",
            grad_out.shape(),
            out_shape
        ));
    }
    let (n, cin, h, w) = input.dims4()?;
    let (cout, oh, ow) = (out_shape[1], out_shape[2], out_shape[3]);
    let (in_per, out_per, plane) = (cin * h * w, cout * oh * ow, oh * ow);
    let x = input.data();
    let wt = weight.data();
    let dy = grad_out.data();
    let mut dx = Tensor::zeros(input.shape());
    let mut dw = Tensor::zeros(weight.shape());

    if spec.is_depthwise() {
        for s in 0..n {
            depthwise_backward(
                &x[s * in_per..(s + 1) * in_per],
                wt,
                &dy[s * out_per..(s + 1) * out_per],
                &mut dx.data_mut()[s * in_per..(s + 1) * in_per],
                dw.data_mut(),
                (cin, h, w),
                spec,
                (oh, ow),
            );
        }
    } else {
        let g = spec.groups;
        let (cin_g, cout_g) = (cin / g, cout / g);
        let kk = cin_g * spec.kernel * spec.kernel;
        let pointwise = spec.is_plain_pointwise();
        let mut col = vec![0.0; kk * plane];
        for s in 0..n {
            for gi in 0..g {
                let xg = &x[s * in_per + gi * cin_g * h * w..][..cin_g * h * w];
                let dyg = MatRef::new(&dy[s * out_per + gi * cout_g * plane..][..cout_g * plane], cout_g, plane);
                let wg = MatRef::new(&wt[gi * cout_g * kk..(gi + 1) * cout_g * kk], cout_g, kk);
                let dwg = &mut dw.data_mut()[gi * cout_g * kk..(gi + 1) * cout_g * kk];
                if pointwise {
                    gemm(dyg, MatRef::new(xg, kk, plane).t(), dwg, 1.0);
                    let dxg = &mut dx.data_mut()[s * in_per + gi * cin_g * h * w..][..cin_g * h * w];
                    gemm(wg.t(), dyg, dxg, 1.0);
                } else {
                    im2col(xg, cin_g, h, w, spec, oh, ow, &mut col);
                    gemm(dyg, MatRef::new(&col, kk, plane).t(), dwg, 1.0);
                    gemm(wg.t(), dyg, &mut col, 0.0);
                    let dxg = &mut dx.data_mut()[s * in_per + gi * cin_g * h * w..][..cin_g * h * w];
                    col2im(&col, cin_g, h, w, spec, oh, ow, dxg);
                }
            }
        }
    }

    let bias = with_bias.then(|| {
        let mut db = Tensor::zeros(&[cout]);
        for s in 0..n {
            for c in 0..cout {
                let base = s * out_per + c * plane;
                db.data_mut()[c] += dy[base..base + plane].iter().sum::<f64>();
            }
        }
        db
    });
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias,
    })
}

/// Depthwise 3x3 convolution followed by a 1x1 pointwise projection.
///
/// `dw_weights` is `C x 1 x 3 x 3`; `pw_weights` is `O x C x 1 x 1`. The
/// stride applies to the depthwise stage.
pub fn dsconv_forward(
    input: &Tensor,
    dw_weights: &Tensor,
    pw_weights: &Tensor,
    stride: usize,
) -> Result<Tensor> {
    let (_, c, _, _) = input.dims4()?;
    let out_ch = pw_weights.shape().first().copied().unwrap_or(0);
    let mid = conv2d(input, dw_weights, None, &ConvSpec::depthwise(c, stride))?;
    conv2d(&mid, pw_weights, None, &ConvSpec::pointwise(c, out_ch))
}

/// MACs of a depthwise-separable 3x3 convolution on an `h x w` output map.
pub fn dsconv_macs(in_channels: usize, out_channels: usize, kernel: usize, oh: usize, ow: usize) -> u64 {
    let dw = ConvSpec {
        groups: in_channels,
        ..ConvSpec::new(in_channels, in_channels, kernel, 1)
    };
    dw.macs(oh, ow) + ConvSpec::pointwise(in_channels, out_channels).macs(oh, ow)
}
