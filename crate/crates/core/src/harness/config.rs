use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, AgentKind};
use crate::envs::{EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::grl::DEFAULT_CAPACITY;

/// Exploration constants. `beta` is the baseline epsilon decay constant in
/// environment steps; unset means one fifth of the planned total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    pub eps_start: f64,
    pub eps_end: f64,
    pub beta: Option<f64>,
    pub eps0: f64,
    pub sigma0: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            eps_start: 1.0,
            eps_end: 0.05,
            beta: None,
            eps0: 0.2,
            sigma0: 0.05,
        }
    }
}

/// One training run's settings, read from TOML. Every key is optional;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label written to the `setting` column.
    pub setting: String,
    pub env: EnvKind,
    pub agent: AgentKind,
    pub epochs: usize,
    /// Cycles per epoch.
    pub cycles: usize,
    /// Episodes per cycle.
    pub episodes: usize,
    /// Fraction of each cycle's episodes that are demonstrated.
    pub eta: f64,
    /// Polyak rate of the per-step success average.
    pub tau_s: f64,
    /// Test episodes per evaluation.
    pub eval_episodes: usize,
    pub use_demos: bool,
    pub use_adaptive: bool,
    pub updates_per_cycle: usize,
    /// HER future-strategy copies per transition.
    pub her_k: usize,
    pub buffer_capacity: usize,
    pub seeds: Vec<u64>,
    pub exploration: ExplorationConfig,
    pub learner: AgentConfig,
    pub environment: EnvConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            setting: String::new(),
            env: EnvKind::Grid15,
            agent: AgentKind::Dqn,
            epochs: 20,
            cycles: 50,
            episodes: 16,
            eta: 0.75,
            tau_s: 0.3,
            eval_episodes: 20,
            use_demos: true,
            use_adaptive: true,
            updates_per_cycle: 40,
            her_k: 4,
            buffer_capacity: DEFAULT_CAPACITY,
            seeds: (0..5).collect(),
            exploration: ExplorationConfig::default(),
            learner: AgentConfig::default(),
            environment: EnvConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("epochs", self.epochs),
            ("cycles", self.cycles),
            ("episodes", self.episodes),
            ("eval_episodes", self.eval_episodes),
            ("buffer_capacity", self.buffer_capacity),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta {} outside [0, 1]", self.eta));
        }
        if !(0.0..=1.0).contains(&self.tau_s) {
            return bad(format!("tau_s {} outside [0, 1]", self.tau_s));
        }
        if self.environment.horizon == Some(0) {
            return bad("horizon must be positive".into());
        }
        if self.env.is_discrete() != (self.agent == AgentKind::Dqn) {
            return bad(format!(
                "agent {} does not fit environment {}",
                self.agent, self.env
            ));
        }
        let e = &self.exploration;
        if !(0.0..=1.0).contains(&e.eps_end) || !(e.eps_end..=1.0).contains(&e.eps_start) {
            return bad("need 0 <= eps_end <= eps_start <= 1".into());
        }
        if !(0.0..=1.0).contains(&e.eps0) || e.sigma0 < 0.0 || e.beta.is_some_and(|b| b <= 0.0) {
            return bad("eps0 must lie in [0, 1], sigma0 >= 0 and beta > 0".into());
        }
        self.learner.validate()
    }

    /// Demonstrated episodes per cycle; zero when demonstrations are off.
    pub fn demo_episodes(&self) -> usize {
        if self.use_demos {
            ((self.eta * self.episodes as f64 + 0.5).floor() as usize).min(self.episodes)
        } else {
            0
        }
    }

    /// Short condition name: vanilla, ad or adae.
    pub fn condition(&self) -> &'static str {
        match (self.use_demos, self.use_adaptive) {
            (false, false) => "vanilla",
            (true, false) => "ad",
            (true, true) => "adae",
            (false, true) => "ae",
        }
    }

    pub fn label(&self) -> String {
        if self.setting.is_empty() {
            self.condition().to_string()
        } else {
            self.setting.clone()
        }
    }
}
