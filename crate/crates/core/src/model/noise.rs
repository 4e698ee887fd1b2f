use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{layer_norm, LayerNormParams, Real, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScope {
    #[default]
    ArtificialOnly,
    AllTraining,
}

/// Gaussian perturbation of the encoder representation, scaled to a fixed
/// fraction `rho` of the representation's norm. Training-time only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub rho: f64,
    pub apply_to: NoiseScope,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            rho: 1.0,
            apply_to: NoiseScope::ArtificialOnly,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() || self.rho < 0.0 {
            return Err(Error::Config(format!("noise rho must be finite and >= 0, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn applies_to(&self, artificial: bool) -> bool {
        artificial || self.apply_to == NoiseScope::AllTraining
    }
}

/// Unit-norm direction with independent standard normal components.
pub fn noise_direction<T: Real>(d: usize, stream: &mut RngStream) -> Vec<T> {
    loop {
        let eps: Vec<f64> = (0..d).map(|_| stream.normal()).collect();
        let norm = eps.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return eps.into_iter().map(|x| T::lit(x / norm)).collect();
        }
    }
}

/// `h + ε` with `‖ε‖ = rho · ‖h‖`, before normalization.
pub fn perturb<T: Real>(h: &[T], rho: f64, stream: &mut RngStream) -> Result<Vec<T>> {
    let norm = h.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
    if rho == 0.0 {
        return Ok(h.to_vec());
    }
    if norm == 0.0 {
        return Err(Error::NonFinite("noise fraction of a zero-norm representation".into()));
    }
    let scale = T::lit(rho * norm);
    let dir = noise_direction::<T>(h.len(), stream);
    Ok(h.iter().zip(dir).map(|(&v, u)| v + scale * u).collect())
}

/// `layer_norm(h + ε, ln)` with `‖ε‖ = rho · ‖h‖`.
pub fn inject_noise<T: Real>(
    h: &[T],
    cfg: &NoiseConfig,
    ln: &LayerNormParams<T>,
    stream: &mut RngStream,
) -> Result<Vec<T>> {
    cfg.validate()?;
    layer_norm(&perturb(h, cfg.rho, stream)?, ln)
}
