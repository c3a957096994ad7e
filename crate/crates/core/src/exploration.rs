//! Per-step success tracking and the exploration schedules driven by it.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_rates(v: &[f64], what: &str) -> Result<()> {
    match v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        Some(x) => Err(Error::invalid(format!("{what} entry {x} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Latest per-step test success rates and their polyak average.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessTracker {
    latest: Vec<f64>,
    averaged: Vec<f64>,
    tau: f64,
}

impl SuccessTracker {
    pub fn new(num_steps: usize, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid(format!("tau_S {tau} outside [0, 1]")));
        }
        Ok(Self {
            latest: vec![0.0; num_steps],
            averaged: vec![0.0; num_steps],
            tau,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.averaged.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn latest(&self) -> &[f64] {
        &self.latest
    }

    /// The polyak-averaged rates that drive the schedules.
    pub fn averaged(&self) -> &[f64] {
        &self.averaged
    }

    /// `avg <- (1 - tau) * avg + tau * s`.
    pub fn update(&mut self, s: &[f64]) -> Result<()> {
        if s.len() != self.averaged.len() {
            return Err(Error::shape(format!(
                "success vector has {} entries, tracker {}",
                s.len(),
                self.averaged.len()
            )));
        }
        check_rates(s, "success")?;
        for (a, &x) in self.averaged.iter_mut().zip(s) {
            *a = (1.0 - self.tau) * *a + self.tau * x;
        }
        self.latest.copy_from_slice(s);
        Ok(())
    }
}

/// Epsilon-greedy constants for discrete actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgrSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    /// Decay constant of the non-adaptive baseline, in environment steps.
    pub beta: f64,
}

impl Default for EgrSchedule {
    fn default() -> Self {
        Self {
            eps_start: 1.0,
            eps_end: 0.05,
            beta: 1.0,
        }
    }
}

impl EgrSchedule {
    /// `eps_end + (eps_start - eps_end) * (1 - S)` per step.
    pub fn adaptive(&self, success: &[f64]) -> Vec<f64> {
        success
            .iter()
            .map(|s| self.eps_end + (self.eps_start - self.eps_end) * (1.0 - s))
            .collect()
    }

    /// `eps_end + (eps_start - eps_end) * exp(-n / beta)`.
    pub fn baseline(&self, elapsed_steps: u64) -> f64 {
        self.eps_end + (self.eps_start - self.eps_end) * (-(elapsed_steps as f64) / self.beta).exp()
    }
}

/// Epsilon-Gaussian constants for continuous actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgaSchedule {
    pub eps0: f64,
    pub sigma0: f64,
}

impl Default for EgaSchedule {
    fn default() -> Self {
        Self {
            eps0: 0.2,
            sigma0: 0.05,
        }
    }
}

impl EgaSchedule {
    /// `(eps0 * (1 - S), sigma0 * (1 - S))` per step.
    pub fn adaptive(&self, success: &[f64]) -> (Vec<f64>, Vec<f64>) {
        success
            .iter()
            .map(|s| (self.eps0 * (1.0 - s), self.sigma0 * (1.0 - s)))
            .unzip()
    }
}

/// Multiplier on the learnt SAC deviation, `1 - S` per step.
pub fn sigma_scale(success: &[f64]) -> Vec<f64> {
    success.iter().map(|s| 1.0 - s).collect()
}

/// Behaviour-policy parameters for one task step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExploreParams {
    pub eps: f64,
    /// Gaussian noise std (DDPG) or deviation scale (SAC).
    pub sigma: f64,
}

/// Random index with probability `eps`, otherwise the lowest-index argmax.
pub fn select_discrete<R: Rng + ?Sized>(q: &[f64], eps: f64, rng: &mut R) -> usize {
    assert!(!q.is_empty(), "no actions to select from");
    if eps > 0.0 && rng.random::<f64>() < eps {
        return rng.random_range(0..q.len());
    }
    argmax(q)
}

pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Uniform action on `[-1, 1]^d` with probability `eps`, otherwise the policy
/// action plus `N(0, sigma^2)` noise, clamped to the box.
pub fn select_continuous<R: Rng + ?Sized>(
    policy_action: &[f64],
    eps: f64,
    sigma: f64,
    rng: &mut R,
) -> Vec<f64> {
    let delta: f64 = rng.random();
    if delta <= eps && eps > 0.0 {
        return policy_action
            .iter()
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
    }
    if sigma <= 0.0 {
        return policy_action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
    }
    let noise = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    policy_action
        .iter()
        .map(|a| (a + noise.sample(rng)).clamp(-1.0, 1.0))
        .collect()
}
