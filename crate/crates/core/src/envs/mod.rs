//! Goal-conditioned environments with sparse rewards and manual task
//! decompositions.
//!
//! Every environment exposes a goal map `m(s)` ([`Env::achieved_goal`]), a
//! pure reward over goal vectors ([`GoalSpace`]) that HER reuses for
//! relabelling, and an ordered list of subgoal constructors evaluated on the
//! current state ([`Env::subgoal`]).

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod expert;
pub mod grid;
pub mod manip;

pub use grid::{GridAction, GridDoorKey, GridState};
pub use manip::{ManipState, ManipTask, Manipulation};

/// Observation vector shared between transitions without copying.
pub type Obs = Arc<[f64]>;

/// A goal vector; same layout as the environment's achieved goals.
#[derive(Clone, PartialEq)]
pub struct Goal(Arc<[f64]>);

impl Goal {
    pub fn new(v: Vec<f64>) -> Self {
        Goal(v.into())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for Goal {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Goal {
    fn from(v: Vec<f64>) -> Self {
        Goal::new(v)
    }
}

impl From<&[f64]> for Goal {
    fn from(v: &[f64]) -> Self {
        Goal(v.into())
    }
}

impl fmt::Debug for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[-1, 1]^d`.
    Continuous(usize),
}

impl ActionSpace {
    pub fn dim(self) -> usize {
        match self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Obs,
    /// Reward against the environment's own desired goal.
    pub reward: f64,
    pub achieved_goal: Goal,
    /// Number of steps taken so far in the episode (1-based after a step).
    pub timestep: usize,
    /// Set when a continuous action had to be clamped into `[-1, 1]`.
    pub action_clamped: bool,
}

/// One contiguous slice of a goal vector with its success test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalSlice {
    pub start: usize,
    pub len: usize,
    pub tolerance: f64,
}

/// Goal layout and sparse reward: `0` iff every slice of the achieved goal is
/// within its tolerance (Euclidean) of the desired goal, `-1` otherwise.
/// A tolerance of zero means exact equality.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSpace {
    dim: usize,
    slices: Vec<GoalSlice>,
}

pub trait RewardFn {
    fn reward(&self, achieved: &[f64], desired: &[f64]) -> f64;
}

impl GoalSpace {
    pub fn new(dim: usize, slices: Vec<GoalSlice>) -> Result<Self> {
        let covered: usize = slices.iter().map(|s| s.len).sum();
        if covered != dim || slices.iter().any(|s| s.start + s.len > dim) {
            return Err(Error::invalid("goal slices must tile the goal vector"));
        }
        Ok(Self { dim, slices })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slices(&self) -> &[GoalSlice] {
        &self.slices
    }

    pub fn is_achieved(&self, achieved: &[f64], desired: &[f64]) -> bool {
        self.slices.iter().all(|s| {
            let r = s.start..s.start + s.len;
            let d2: f64 = achieved[r.clone()]
                .iter()
                .zip(&desired[r])
                .map(|(a, d)| (a - d) * (a - d))
                .sum();
            if s.tolerance == 0.0 {
                d2 == 0.0
            } else {
                d2.sqrt() <= s.tolerance
            }
        })
    }

    pub fn compute_reward(&self, achieved: &[f64], desired: &[f64]) -> Result<f64> {
        if achieved.len() != self.dim || desired.len() != self.dim {
            return Err(Error::shape(format!(
                "goal dims {} / {} != {}",
                achieved.len(),
                desired.len(),
                self.dim
            )));
        }
        Ok(self.reward(achieved, desired))
    }
}

impl RewardFn for GoalSpace {
    fn reward(&self, achieved: &[f64], desired: &[f64]) -> f64 {
        if self.is_achieved(achieved, desired) {
            0.0
        } else {
            -1.0
        }
    }
}

/// Environment selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvKind {
    #[serde(rename = "grid15")]
    Grid15,
    #[serde(rename = "grid25")]
    Grid25,
    #[serde(rename = "grid35")]
    Grid35,
    #[serde(rename = "chestpush")]
    ChestPush,
    #[serde(rename = "chestpick")]
    ChestPick,
    #[serde(rename = "blockstack")]
    BlockStack,
}

impl EnvKind {
    pub const ALL: [EnvKind; 6] = [
        EnvKind::Grid15,
        EnvKind::Grid25,
        EnvKind::Grid35,
        EnvKind::ChestPush,
        EnvKind::ChestPick,
        EnvKind::BlockStack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Grid15 => "grid15",
            EnvKind::Grid25 => "grid25",
            EnvKind::Grid35 => "grid35",
            EnvKind::ChestPush => "chestpush",
            EnvKind::ChestPick => "chestpick",
            EnvKind::BlockStack => "blockstack",
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, EnvKind::Grid15 | EnvKind::Grid25 | EnvKind::Grid35)
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown environment {s:?}; expected grid15|grid25|grid35|chestpush|chestpick|blockstack"
                ))
            })
    }
}

/// Tunable environment constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Overrides the per-task default horizon.
    pub horizon: Option<usize>,
    /// Success radius for position slices (metres).
    pub position_tolerance: f64,
    /// Success radius for the finger-width slice (metres).
    pub finger_tolerance: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            position_tolerance: 0.05,
            finger_tolerance: 0.01,
        }
    }
}

pub trait Env: Send {
    fn kind(&self) -> EnvKind;
    fn obs_dim(&self) -> usize;
    fn goal_space(&self) -> &GoalSpace;
    fn action_space(&self) -> ActionSpace;
    /// Fixed episode length `T`.
    fn horizon(&self) -> usize;
    /// Number of task steps `N` in the decomposition.
    fn num_steps(&self) -> usize;

    fn reset(&mut self, seed: u64) -> (Obs, Goal);
    fn step(&mut self, action: &Action) -> Result<StepResult>;

    fn observation(&self) -> Obs;
    fn achieved_goal(&self) -> Goal;
    /// The final goal sampled at reset.
    fn desired_goal(&self) -> Goal;
    fn timestep(&self) -> usize;

    /// Subgoal `index` of the decomposition, constructed from the current
    /// state and the final goal. The last index returns `final_goal`.
    fn subgoal(&self, index: usize, final_goal: &Goal) -> Goal;

    /// The whole decomposition evaluated on the current state.
    fn subgoal_sequence(&self, final_goal: &Goal) -> Vec<Goal> {
        (0..self.num_steps())
            .map(|i| self.subgoal(i, final_goal))
            .collect()
    }

    fn compute_reward(&self, achieved: &[f64], desired: &[f64]) -> Result<f64> {
        self.goal_space().compute_reward(achieved, desired)
    }

    /// Human-readable dump of the current state.
    fn render_text(&self) -> String;
}

pub fn make_env(kind: EnvKind, config: &EnvConfig) -> Box<dyn Env> {
    match kind {
        EnvKind::Grid15 => Box::new(GridDoorKey::new(15, config)),
        EnvKind::Grid25 => Box::new(GridDoorKey::new(25, config)),
        EnvKind::Grid35 => Box::new(GridDoorKey::new(35, config)),
        EnvKind::ChestPush => Box::new(Manipulation::new(ManipTask::ChestPush, config)),
        EnvKind::ChestPick => Box::new(Manipulation::new(ManipTask::ChestPick, config)),
        EnvKind::BlockStack => Box::new(Manipulation::new(ManipTask::BlockStack, config)),
    }
}
