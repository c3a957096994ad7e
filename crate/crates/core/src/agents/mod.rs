//! Goal-conditioned DQN, DDPG and SAC.
//!
//! Every network reads `concat(norm(state), norm(goal))`, with the action
//! appended for continuous critics. Targets of the sparse 0/-1 reward are
//! clipped to the attainable return range `[-1/(1-gamma), 0]`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demos::Policy;
use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::exploration::ExploreParams;
use crate::grl::Transition;
use crate::nn::checkpoint::{ByteReader, ByteWriter};
use crate::nn::Matrix;

mod ddpg;
mod dqn;
mod normalizer;
mod sac;

pub use ddpg::Ddpg;
pub use dqn::Dqn;
pub use normalizer::Normalizer;
pub use sac::Sac;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Dqn,
    Ddpg,
    Sac,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Ddpg => "ddpg",
            AgentKind::Sac => "sac",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(t: u8) -> Option<Self> {
        [AgentKind::Dqn, AgentKind::Ddpg, AgentKind::Sac]
            .get(t as usize)
            .copied()
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(AgentKind::Dqn),
            "ddpg" => Ok(AgentKind::Ddpg),
            "sac" => Ok(AgentKind::Sac),
            _ => Err(Error::invalid(format!(
                "unknown agent {s:?}; expected dqn|ddpg|sac"
            ))),
        }
    }
}

/// Learner hyperparameters. Unset `hidden` picks the per-algorithm default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: Option<Vec<usize>>,
    pub gamma: f64,
    pub batch_size: usize,
    /// Target-network polyak rate (DDPG, SAC).
    pub polyak: f64,
    /// Hard target sync interval in updates (DQN).
    pub target_sync: usize,
    /// Q-network / critic learning rate.
    pub lr_critic: f64,
    pub lr_actor: f64,
    /// Weight of the squared-action penalty in the DDPG actor loss.
    pub action_l2: f64,
    /// Fixed SAC temperature; `None` tunes it toward entropy `-dim(A)`.
    pub alpha: Option<f64>,
    pub initial_alpha: f64,
    pub lr_alpha: f64,
    pub normalize: bool,
    pub norm_clip: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            gamma: 0.98,
            batch_size: 128,
            polyak: 0.05,
            target_sync: 200,
            lr_critic: 1e-3,
            lr_actor: 1e-4,
            action_l2: 1.0,
            alpha: None,
            initial_alpha: 0.1,
            lr_alpha: 1e-3,
            normalize: true,
            norm_clip: 5.0,
        }
    }
}

impl AgentConfig {
    pub fn hidden_for(&self, kind: AgentKind) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| match kind {
            AgentKind::Dqn => vec![64, 128, 64],
            AgentKind::Ddpg | AgentKind::Sac => vec![256, 256, 256],
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.target_sync == 0 {
            return bad("batch_size and target_sync must be positive");
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return bad("polyak must lie in [0, 1]");
        }
        if self.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            return bad("hidden layer widths must be positive");
        }
        if self.alpha.is_some_and(|a| a < 0.0) || self.initial_alpha <= 0.0 {
            return bad("alpha must be non-negative and initial_alpha positive");
        }
        Ok(())
    }

    /// Most negative attainable discounted return.
    pub fn min_return(&self) -> f64 {
        -1.0 / (1.0 - self.gamma)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub alpha_loss: Option<f64>,
    pub alpha: Option<f64>,
}

/// Running normalizers for the state and goal halves of the network input.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct InputCodec {
    pub obs: Normalizer,
    pub goal: Normalizer,
}

impl InputCodec {
    fn new(obs_dim: usize, goal_dim: usize, cfg: &AgentConfig) -> Self {
        Self {
            obs: Normalizer::new(obs_dim, cfg.norm_clip, cfg.normalize),
            goal: Normalizer::new(goal_dim, cfg.norm_clip, cfg.normalize),
        }
    }

    pub fn width(&self) -> usize {
        self.obs.dim() + self.goal.dim()
    }

    fn check(&self, obs: &[f64], goal: &[f64]) -> Result<()> {
        if obs.len() != self.obs.dim() || goal.len() != self.goal.dim() {
            return Err(Error::shape(format!(
                "state/goal dims {}/{} != {}/{}",
                obs.len(),
                goal.len(),
                self.obs.dim(),
                self.goal.dim()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        self.check(obs, goal)?;
        let mut out = vec![0.0; self.width()];
        let (a, b) = out.split_at_mut(self.obs.dim());
        self.obs.normalize_into(obs, a);
        self.goal.normalize_into(goal, b);
        Ok(out)
    }

    /// Encoded `(state, goal)` and `(next_state, goal)` rows of a batch.
    pub fn encode_batch(&self, batch: &[&Transition]) -> Result<(Matrix, Matrix)> {
        let w = self.width();
        let od = self.obs.dim();
        let mut x = Matrix::zeros(batch.len(), w);
        let mut x_next = Matrix::zeros(batch.len(), w);
        for (i, t) in batch.iter().enumerate() {
            self.check(&t.state, &t.desired_goal)?;
            self.check(&t.next_state, &t.desired_goal)?;
            let row = x.row_mut(i);
            self.obs.normalize_into(&t.state, &mut row[..od]);
            self.goal.normalize_into(&t.desired_goal, &mut row[od..]);
            let row = x_next.row_mut(i);
            self.obs.normalize_into(&t.next_state, &mut row[..od]);
            self.goal.normalize_into(&t.desired_goal, &mut row[od..]);
        }
        Ok((x, x_next))
    }

    /// Folds stored transitions into the running statistics. Goal
    /// statistics also see the achieved goals, since hindsight relabeling
    /// feeds those to the networks as desired goals.
    pub fn observe(&mut self, transitions: &[Transition]) {
        self.obs.update(transitions.iter().map(|t| &t.state[..]));
        self.goal.update(
            transitions
                .iter()
                .flat_map(|t| [&t.desired_goal[..], &t.achieved_goal_next[..]]),
        );
    }

    fn write<W: Write>(&self, w: &mut ByteWriter<W>) -> Result<()> {
        self.obs.write(w)?;
        self.goal.write(w)
    }

    fn read<R: Read>(r: &mut ByteReader<R>) -> Result<Self> {
        Ok(Self {
            obs: Normalizer::read(r)?,
            goal: Normalizer::read(r)?,
        })
    }
}

fn continuous_actions(batch: &[&Transition], dim: usize) -> Result<Matrix> {
    let mut a = Matrix::zeros(batch.len(), dim);
    for (i, t) in batch.iter().enumerate() {
        match &t.action {
            Action::Continuous(v) if v.len() == dim => a.row_mut(i).copy_from_slice(v),
            _ => return Err(Error::shape("batch holds a non-matching action")),
        }
    }
    Ok(a)
}

fn rewards(batch: &[&Transition]) -> Vec<f64> {
    batch.iter().map(|t| t.reward).collect()
}

fn check_batch(batch: &[&Transition]) -> Result<()> {
    if batch.is_empty() {
        Err(Error::invalid("empty batch"))
    } else {
        Ok(())
    }
}

/// Asserts the clipped-target contract in debug builds.
fn debug_check_targets(y: &[f64], lo: f64) {
    debug_assert!(
        y.iter().all(|v| (lo..=0.0).contains(v)),
        "target outside [{lo}, 0]"
    );
}

const AGENT_MAGIC: &[u8; 8] = b"A2AGT001";

// Few agents exist at a time, boxing buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Agent {
    Dqn(Dqn),
    Ddpg(Ddpg),
    Sac(Sac),
}

impl Agent {
    pub fn new(
        kind: AgentKind,
        config: &AgentConfig,
        obs_dim: usize,
        goal_dim: usize,
        action_space: ActionSpace,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        match (kind, action_space) {
            (AgentKind::Dqn, ActionSpace::Discrete(n)) => {
                Ok(Agent::Dqn(Dqn::new(config, obs_dim, goal_dim, n, seed)?))
            }
            (AgentKind::Ddpg, ActionSpace::Continuous(d)) => {
                Ok(Agent::Ddpg(Ddpg::new(config, obs_dim, goal_dim, d, seed)?))
            }
            (AgentKind::Sac, ActionSpace::Continuous(d)) => {
                Ok(Agent::Sac(Sac::new(config, obs_dim, goal_dim, d, seed)?))
            }
            (k, s) => Err(Error::Config(format!(
                "agent {k} cannot act in a {} action space",
                match s {
                    ActionSpace::Discrete(_) => "discrete",
                    ActionSpace::Continuous(_) => "continuous",
                }
            ))),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Dqn(_) => AgentKind::Dqn,
            Agent::Ddpg(_) => AgentKind::Ddpg,
            Agent::Sac(_) => AgentKind::Sac,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        match self {
            Agent::Dqn(a) => &a.config,
            Agent::Ddpg(a) => &a.config,
            Agent::Sac(a) => &a.config,
        }
    }

    fn codec_mut(&mut self) -> &mut InputCodec {
        match self {
            Agent::Dqn(a) => &mut a.codec,
            Agent::Ddpg(a) => &mut a.codec,
            Agent::Sac(a) => &mut a.codec,
        }
    }

    /// Updates input normalization with freshly stored transitions.
    pub fn observe(&mut self, transitions: &[Transition]) {
        self.codec_mut().observe(transitions);
    }

    pub fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        match self {
            Agent::Dqn(a) => a.update(batch).map(|l| UpdateStats {
                critic_loss: l,
                ..UpdateStats::default()
            }),
            Agent::Ddpg(a) => a.update(batch).map(|(c, p)| UpdateStats {
                critic_loss: c,
                actor_loss: Some(p),
                ..UpdateStats::default()
            }),
            Agent::Sac(a) => a.update(batch),
        }
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let mut w = ByteWriter::new(w);
        w.bytes(AGENT_MAGIC)?;
        w.u8(self.kind().tag())?;
        let cfg = toml::to_string(self.config())
            .map_err(|e| Error::Checkpoint(format!("config encoding: {e}")))?;
        w.str(&cfg)?;
        match self {
            Agent::Dqn(a) => a.write(&mut w),
            Agent::Ddpg(a) => a.write(&mut w),
            Agent::Sac(a) => a.write(&mut w),
        }
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let mut r = ByteReader::new(r);
        r.expect_magic(AGENT_MAGIC)?;
        let tag = r.u8()?;
        let kind = AgentKind::from_tag(tag)
            .ok_or_else(|| Error::Checkpoint(format!("unknown agent tag {tag}")))?;
        let config: AgentConfig = toml::from_str(&r.str()?)
            .map_err(|e| Error::Checkpoint(format!("config decoding: {e}")))?;
        Ok(match kind {
            AgentKind::Dqn => Agent::Dqn(Dqn::read(config, &mut r)?),
            AgentKind::Ddpg => Agent::Ddpg(Ddpg::read(config, &mut r)?),
            AgentKind::Sac => Agent::Sac(Sac::read(config, &mut r)?),
        })
    }
}

impl Policy for Agent {
    fn act(
        &mut self,
        obs: &[f64],
        goal: &[f64],
        explore: Option<ExploreParams>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action> {
        match self {
            Agent::Dqn(a) => a.act(obs, goal, explore, rng),
            Agent::Ddpg(a) => a.act(obs, goal, explore, rng),
            Agent::Sac(a) => a.act(obs, goal, explore, rng),
        }
    }
}

fn write_rng<W: Write>(w: &mut ByteWriter<W>, rng: &ChaCha8Rng) -> Result<()> {
    w.bytes(&rng.get_seed())?;
    w.u64(rng.get_stream())?;
    w.bytes(&rng.get_word_pos().to_le_bytes())
}

fn read_rng<R: Read>(r: &mut ByteReader<R>) -> Result<ChaCha8Rng> {
    use rand::SeedableRng;
    let seed = r.bytes::<32>()?;
    let stream = r.u64()?;
    let pos = u128::from_le_bytes(r.bytes::<16>()?);
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(pos);
    Ok(rng)
}
