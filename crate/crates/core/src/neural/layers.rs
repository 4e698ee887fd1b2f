//! Elementwise and row-wise kernels shared by the graph ops and the
//! plain-vector helpers.

use super::rng::RngStream;
use super::tensor::Real;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams<T> {
    pub gain: Vec<T>,
    pub bias: Vec<T>,
    pub eps: T,
}

impl<T: Real> LayerNormParams<T> {
    /// Unit gain, zero bias.
    pub fn identity(d: usize) -> Self {
        LayerNormParams {
            gain: vec![T::one(); d],
            bias: vec![T::zero(); d],
            eps: T::lit(LAYER_NORM_EPS),
        }
    }
}

/// Normalizes one row into `out`; returns `1/sqrt(var + eps)` and writes the
/// standardized values into `xhat`.
pub(crate) fn layer_norm_row<T: Real>(
    x: &[T],
    gain: &[T],
    bias: &[T],
    eps: T,
    xhat: &mut [T],
    out: &mut [T],
) -> T {
    let n = T::lit(x.len() as f64);
    let mean = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    let var = x.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
    let inv_std = T::one() / (var + eps).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * inv_std;
        out[i] = gain[i] * xhat[i] + bias[i];
    }
    inv_std
}

/// `gain * (x - mean) / sqrt(var + eps) + bias` with population variance.
pub fn layer_norm<T: Real>(x: &[T], params: &LayerNormParams<T>) -> Result<Vec<T>> {
    let d = x.len();
    if d == 0 {
        return Err(Error::Shape("layer_norm of an empty vector".into()));
    }
    if params.gain.len() != d || params.bias.len() != d {
        return Err(Error::Shape(format!(
            "layer_norm input has width {d}, parameters have {}/{}",
            params.gain.len(),
            params.bias.len()
        )));
    }
    let mut xhat = vec![T::zero(); d];
    let mut out = vec![T::zero(); d];
    layer_norm_row(x, &params.gain, &params.bias, params.eps, &mut xhat, &mut out);
    Ok(out)
}

/// Inverted-dropout mask: zero with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<T: Real>(len: usize, rate: f64, stream: &mut RngStream) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if stream.uniform() < rate { T::zero() } else { keep })
        .collect()
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Identity when `train_mode` is off or `rate` is zero.
pub fn dropout<T: Real>(x: &[T], rate: f64, stream: &mut RngStream, train_mode: bool) -> Result<Vec<T>> {
    check_dropout_rate(rate)?;
    if !train_mode || rate == 0.0 {
        return Ok(x.to_vec());
    }
    let mask = dropout_mask::<T>(x.len(), rate, stream);
    Ok(x.iter().zip(mask).map(|(&v, m)| v * m).collect())
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_row<T: Real>(x: &[T], out: &mut [T]) {
    let max = x.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum = sum + *o;
    }
    out.iter_mut().for_each(|o| *o = *o / sum);
}
