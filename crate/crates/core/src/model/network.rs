//! Dense layers with ReLU trunks and their reverse pass.

use crate::error::Result;
use crate::numerics::{ParamSet, Tensor2};

/// Parameter indices of one affine layer: `(weight, bias)`.
pub(crate) type Layer = (usize, usize);

pub(crate) struct TrunkCache {
    /// Input to each layer.
    inputs: Vec<Tensor2>,
    /// Pre-activation of each layer.
    pre: Vec<Tensor2>,
}

pub(crate) fn dense(params: &ParamSet, (w, b): Layer, x: &Tensor2) -> Result<Tensor2> {
    let mut out = x.matmul(params.get(w))?;
    out.add_row_broadcast(params.get(b))?;
    Ok(out)
}

/// Accumulates weight/bias gradients and optionally returns the input gradient.
pub(crate) fn dense_backward(
    params: &ParamSet,
    (w, b): Layer,
    input: &Tensor2,
    d_out: &Tensor2,
    grads: &mut ParamSet,
    need_input: bool,
) -> Result<Option<Tensor2>> {
    grads.get_mut(w).add_assign(&input.t_matmul(d_out)?)?;
    grads.get_mut(b).add_assign(&d_out.sum_rows())?;
    if need_input {
        Ok(Some(d_out.matmul_t(params.get(w))?))
    } else {
        Ok(None)
    }
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub(crate) fn trunk_forward(
    params: &ParamSet,
    layers: &[Layer],
    x: &Tensor2,
) -> Result<(Tensor2, TrunkCache)> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut h = x.clone();
    for &layer in layers {
        let a = dense(params, layer, &h)?;
        let next = a.map(relu);
        inputs.push(h);
        pre.push(a);
        h = next;
    }
    Ok((h, TrunkCache { inputs, pre }))
}

pub(crate) fn trunk_backward(
    params: &ParamSet,
    layers: &[Layer],
    cache: &TrunkCache,
    d_out: Tensor2,
    grads: &mut ParamSet,
    need_input: bool,
) -> Result<Option<Tensor2>> {
    let mut d = d_out;
    for (l, &layer) in layers.iter().enumerate().rev() {
        for (g, &a) in d.data_mut().iter_mut().zip(cache.pre[l].data()) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        let want = need_input || l > 0;
        match dense_backward(params, layer, &cache.inputs[l], &d, grads, want)? {
            Some(next) => d = next,
            None => return Ok(None),
        }
    }
    Ok(Some(d))
}

#[inline]
pub(crate) fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
