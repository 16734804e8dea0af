use super::conv::ConvSpec;
use crate::error::{shape_err, Error, Result};

/// Description of one kernel and its hyperparameters. Every spec maps its
/// input shapes to exactly one output shape without looking at data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Conv(ConvSpec),
    /// 3x3 depthwise (carrying the stride) then 1x1 pointwise.
    DepthwiseSeparable {
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    },
    /// 1x1 expand, 3x3 depthwise (carrying the stride), 1x1 project.
    InvertedResidual {
        in_channels: usize,
        out_channels: usize,
        expansion: usize,
        stride: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    Sigmoid,
    Softmax,
    BilinearResize {
        height: usize,
        width: usize,
    },
    AdaptiveAvgPool {
        height: usize,
        width: usize,
    },
    GlobalAvgPool,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Dropout {
        keep: f64,
    },
    Add,
    /// Concatenation along the channel axis.
    Concat,
    ConcatBatch,
    SliceBatch {
        index: usize,
        parts: usize,
    },
    /// Channel gating of `N x C x H x W` by `N x C`.
    Hadamard,
    /// Inputs `q`, `k`, `v`.
    Attention,
}

fn one<'a>(inputs: &[&'a [usize]]) -> Result<&'a [usize]> {
    match inputs {
        [x] => Ok(x),
        _ => Err(shape_err!("expected one input, got {}", inputs.len())),
    }
}

fn rank4(s: &[usize]) -> Result<[usize; 4]> {
    s.try_into()
        .map_err(|_| shape_err!("expected N x C x H x W, got {:?}", s))
}

impl KernelSpec {
    pub fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        use KernelSpec::*;
        match *self {
            Conv(spec) => spec.output_shape(one(inputs)?),
            DepthwiseSeparable {
                in_channels,
                out_channels,
                stride,
            } => {
                let mid = ConvSpec::depthwise(in_channels, stride).output_shape(one(inputs)?)?;
                ConvSpec::pointwise(in_channels, out_channels).output_shape(&mid)
            }
            InvertedResidual {
                in_channels,
                out_channels,
                expansion,
                stride,
            } => {
                if stride != 1 && stride != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "inverted residual stride must be 1 or 2, got {stride}"
                    )));
                }
                if expansion == 0 {
                    return Err(Error::InvalidArgument("expansion must be positive".into()));
                }
                let hidden = in_channels * expansion;
                let a = ConvSpec::pointwise(in_channels, hidden).output_shape(one(inputs)?)?;
                let b = ConvSpec::depthwise(hidden, stride).output_shape(&a)?;
                ConvSpec::pointwise(hidden, out_channels).output_shape(&b)
            }
            BatchNorm { channels } => {
                let x = one(inputs)?;
                if x.len() < 2 || x[1] != channels {
                    return Err(shape_err!("batch norm over {channels} channels cannot take {:?}", x));
                }
                Ok(x.to_vec())
            }
            Relu | Sigmoid | Dropout { .. } => Ok(one(inputs)?.to_vec()),
            Softmax => {
                let x = one(inputs)?;
                if x.len() < 2 {
                    return Err(shape_err!("softmax needs at least two axes, got {:?}", x));
                }
                Ok(x.to_vec())
            }
            BilinearResize { height, width } | AdaptiveAvgPool { height, width } => {
                if height == 0 || width == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "target size {height}x{width} must be positive"
                    )));
                }
                let [n, c, h, w] = rank4(one(inputs)?)?;
                if h == 0 || w == 0 {
                    return Err(shape_err!("empty {h}x{w} map"));
                }
                Ok(vec![n, c, height, width])
            }
            GlobalAvgPool => {
                let [n, c, _, _] = rank4(one(inputs)?)?;
                Ok(vec![n, c])
            }
            Linear {
                in_features,
                out_features,
            } => match one(inputs)? {
                &[n, f] if f == in_features => Ok(vec![n, out_features]),
                x => Err(shape_err!("linear over {in_features} features cannot take {:?}", x)),
            },
            Add => match inputs {
                [a, b] if a == b => Ok(a.to_vec()),
                _ => Err(shape_err!("add needs two equal shapes, got {:?}", inputs)),
            },
            Concat => {
                let first = rank4(inputs.first().ok_or_else(|| shape_err!("concat of nothing"))?)?;
                let mut c = 0;
                for s in inputs {
                    let [n, k, h, w] = rank4(s)?;
                    if (n, h, w) != (first[0], first[2], first[3]) {
                        return Err(shape_err!("concat operands disagree: {:?}", inputs));
                    }
                    c += k;
                }
                Ok(vec![first[0], c, first[2], first[3]])
            }
            ConcatBatch => {
                let first = inputs.first().ok_or_else(|| shape_err!("concat of nothing"))?;
                let mut n = 0;
                for s in inputs {
                    if s.is_empty() || s[1..] != first[1..] {
                        return Err(shape_err!("batch concat operands disagree: {:?}", inputs));
                    }
                    n += s[0];
                }
                let mut out = first.to_vec();
                out[0] = n;
                Ok(out)
            }
            SliceBatch { index, parts } => {
                let x = one(inputs)?;
                if x.is_empty() || parts == 0 || index >= parts || x[0] % parts != 0 {
                    return Err(shape_err!("cannot take part {index} of {parts} from {:?}", x));
                }
                let mut out = x.to_vec();
                out[0] /= parts;
                Ok(out)
            }
            Hadamard => match inputs {
                [x, g] => {
                    let [n, c, _, _] = rank4(x)?;
                    if g[..] != [n, c] {
                        return Err(shape_err!("gates {:?} cannot scale {:?}", g, x));
                    }
                    Ok(x.to_vec())
                }
                _ => Err(shape_err!("hadamard needs two inputs")),
            },
            Attention => match inputs {
                [q, k, v] => {
                    let [b, d, h, w] = rank4(q)?;
                    let [kb, kd, kh, kw] = rank4(k)?;
                    let [vb, c, vh, vw] = rank4(v)?;
                    if kb != b || vb != b || kd != d || (kh, kw) != (vh, vw) {
                        return Err(shape_err!("attention operands disagree: {:?}", inputs));
                    }
                    Ok(vec![b, c, h, w])
                }
                _ => Err(shape_err!("attention needs q, k and v")),
            },
        }
    }
}
