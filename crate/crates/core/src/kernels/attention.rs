//! Single-head scaled dot-product attention over spatial positions.
//!
//! Queries and keys are `B x d x h x w`, values `B x C x h x w`. Position `i`
//! of the output is `sum_j A[i, j] * V[:, j]` with
//! `A = softmax_j(Q_i . K_j / sqrt(d))`, so every row of `A` is a
//! distribution over key positions.

use super::gemm::{gemm, MatRef};
use super::tensor::Tensor;
use crate::error::{shape_err, Result};

/// Forward result: the attended values plus the attention matrices
/// (`B x N_q x N_k`, row-stochastic).
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub output: Tensor,
    pub weights: Tensor,
}

fn dims(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize, usize, usize, usize, [usize; 2])> {
    let (b, d, h, w) = q.dims4()?;
    let (kb, kd, kh, kw) = k.dims4()?;
    let (vb, c, vh, vw) = v.dims4()?;
    if kb != b || vb != b || kd != d || (kh, kw) != (vh, vw) {
        return Err(shape_err!(
            "attention operands disagree: q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        ));
    }
    if d == 0 {
        return Err(shape_err!("attention key width must be positive"));
    }
    Ok((b, d, c, h * w, kh * kw, [h, w]))
}

pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<AttentionOutput> {
    let (b, d, c, nq, nk, [h, w]) = dims(q, k, v)?;
    let scale = 1.0 / (d as f64).sqrt();
    let mut weights = Tensor::zeros(&[b, nq, nk]);
    let mut output = Tensor::zeros(&[b, c, h, w]);
    for s in 0..b {
        let qm = MatRef::new(&q.data()[s * d * nq..(s + 1) * d * nq], d, nq);
        let km = MatRef::new(&k.data()[s * d * nk..(s + 1) * d * nk], d, nk);
        let a = &mut weights.data_mut()[s * nq * nk..(s + 1) * nq * nk];
        gemm(qm.t(), km, a, 0.0);
        for row in a.chunks_mut(nk) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v * scale));
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v * scale - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let vm = MatRef::new(&v.data()[s * c * nk..(s + 1) * c * nk], c, nk);
        let am = MatRef::new(&weights.data()[s * nq * nk..(s + 1) * nq * nk], nq, nk);
        gemm(vm, am.t(), &mut output.data_mut()[s * c * nq..(s + 1) * c * nq], 0.0);
    }
    Ok(AttentionOutput { output, weights })
}

/// Gradients `(q, k, v)` of [`attention`] given the forward weights.
pub fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, d, c, nq, nk, _) = dims(q, k, v)?;
    if grad_out.len() != b * c * nq || weights.len() != b * nq * nk {
        return Err(shape_err!(
            "attention gradient {:?} or weights {:?} inconsistent with operands",
            grad_out.shape(),
            weights.shape()
        ));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut dq = Tensor::zeros(q.shape());
    let mut dk = Tensor::zeros(k.shape());
    let mut dv = Tensor::zeros(v.shape());
    let mut da = vec![0.0; nq * nk];
    for s in 0..b {
        let a = &weights.data()[s * nq * nk..(s + 1) * nq * nk];
        let am = MatRef::new(a, nq, nk);
        let dom = MatRef::new(&grad_out.data()[s * c * nq..(s + 1) * c * nq], c, nq);
        let vm = MatRef::new(&v.data()[s * c * nk..(s + 1) * c * nk], c, nk);
        gemm(dom, am, &mut dv.data_mut()[s * c * nk..(s + 1) * c * nk], 0.0);
        gemm(dom.t(), vm, &mut da, 0.0);
        for (drow, arow) in da.chunks_mut(nk).zip(a.chunks(nk)) {
            let dot: f64 = drow.iter().zip(arow).map(|(x, y)| x * y).sum();
            for (dv, &av) in drow.iter_mut().zip(arow) {
                *dv = av * (*dv - dot) * scale;
            }
        }
        let dsm = MatRef::new(&da, nq, nk);
        let qm = MatRef::new(&q.data()[s * d * nq..(s + 1) * d * nq], d, nq);
        let km = MatRef::new(&k.data()[s * d * nk..(s + 1) * d * nk], d, nk);
        gemm(km, dsm.t(), &mut dq.data_mut()[s * d * nq..(s + 1) * d * nq], 0.0);
        gemm(qm, dsm, &mut dk.data_mut()[s * d * nk..(s + 1) * d * nk], 0.0);
    }
    Ok((dq, dk, dv))
}

/// `x + gamma * a`.
pub fn gated_residual(x: &Tensor, a: &Tensor, gamma: f64) -> Result<Tensor> {
    if x.shape() != a.shape() {
        return Err(shape_err!("residual {:?} cannot add {:?}", x.shape(), a.shape()));
    }
    let data = x.data().iter().zip(a.data()).map(|(x, a)| x + gamma * a).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Multiply-accumulates of one attention evaluation: scores plus apply.
pub fn attention_macs(key_dim: usize, value_dim: usize, n_query: usize, n_key: usize) -> u64 {
    (n_query * n_key) as u64 * (key_dim + value_dim) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_gives_uniform_rows() {
        let q = Tensor::full(&[1, 2, 2, 2], 0.3);
        let v = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = attention(&q, &q, &v).unwrap();
        assert!(out.weights.data().iter().all(|&a| (a - 0.25).abs() < 1e-15));
        assert!(out.output.data().iter().all(|&o| (o - 2.5).abs() < 1e-12));
    }

    #[test]
    fn zero_gate_is_exact_identity() {
        let x = Tensor::new(vec![1, 1, 1, 3], vec![1.5, -0.0, 7.25]).unwrap();
        let a = Tensor::new(vec![1, 1, 1, 3], vec![1e300, -3.0, 0.1]).unwrap();
        assert_eq!(gated_residual(&x, &a, 0.0).unwrap(), x);
    }
}
