//! Tanh-squashed diagonal Gaussian used by the SAC policy.

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Largest magnitude an action can take; keeps squashed actions strictly
/// inside the open box even when `tanh` rounds to 1.
pub const ACTION_LIMIT: f64 = 1.0 - f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// `mean + std * noise`, before the tanh.
    pub pre_tanh: Vec<f64>,
    /// `exp(clamped log_std)`.
    pub std: Vec<f64>,
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
#[inline]
pub fn log_tanh_jacobian(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

pub fn clamp_log_std(log_std: f64) -> f64 {
    log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// `action = tanh(mean + exp(log_std) * noise)` with the log-density of the
/// action including the tanh change of variables.
pub fn squashed_gaussian_sample(
    mean: &[f64],
    log_std: &[f64],
    noise: &[f64],
) -> Result<SquashedSample> {
    if mean.len() != log_std.len() || mean.len() != noise.len() {
        return Err(Error::shape("mean, log_std and noise lengths differ"));
    }
    if !mean
        .iter()
        .chain(log_std)
        .chain(noise)
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite("squashed gaussian inputs"));
    }
    let d = mean.len();
    let mut action = Vec::with_capacity(d);
    let mut pre_tanh = Vec::with_capacity(d);
    let mut std = Vec::with_capacity(d);
    let mut log_prob = 0.0;
    for i in 0..d {
        let ls = clamp_log_std(log_std[i]);
        let s = ls.exp();
        let u = mean[i] + s * noise[i];
        log_prob += -0.5 * noise[i] * noise[i] - ls - HALF_LN_2PI - log_tanh_jacobian(u);
        action.push(u.tanh().clamp(-ACTION_LIMIT, ACTION_LIMIT));
        pre_tanh.push(u);
        std.push(s);
    }
    Ok(SquashedSample {
        action,
        log_prob,
        pre_tanh,
        std,
    })
}

/// Log-density of a given squashed action (inverse of the sampler).
pub fn squashed_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> Result<f64> {
    if mean.len() != log_std.len() || mean.len() != action.len() {
        return Err(Error::shape("mean, log_std and action lengths differ"));
    }
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let a = action[i];
        if !(a > -1.0 && a < 1.0) {
            return Err(Error::invalid("squashed action outside (-1, 1)"));
        }
        let ls = clamp_log_std(log_std[i]);
        let u = a.atanh();
        let z = (u - mean[i]) / ls.exp();
        lp += -0.5 * z * z - ls - HALF_LN_2PI - log_tanh_jacobian(u);
    }
    Ok(lp)
}
