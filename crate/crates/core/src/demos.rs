//! Episode rollouts with and without abstract demonstrations.
//!
//! A demonstrated episode presents the subgoals of the task decomposition one
//! at a time. Whenever the current subgoal is achieved the next one is
//! presented and every transition of the episode so far is copied into a new
//! trajectory pursuing the new goal. Earlier trajectories are left untouched.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::expert::Expert;
use crate::envs::{Action, ActionSpace, Env, Goal, RewardFn};
use crate::error::{Error, Result};
use crate::exploration::ExploreParams;
use crate::grl::{Trajectory, Transition};

/// Anything that maps `(observation, goal)` to an action.
pub trait Policy {
    /// `explore: None` asks for the greedy action.
    fn act(
        &mut self,
        obs: &[f64],
        goal: &[f64],
        explore: Option<ExploreParams>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action>;
}

impl Policy for Expert {
    fn act(
        &mut self,
        obs: &[f64],
        goal: &[f64],
        _: Option<ExploreParams>,
        _: &mut ChaCha8Rng,
    ) -> Result<Action> {
        Ok(Expert::act(self, obs, goal))
    }
}

/// Uniformly random actions, for smoke tests and baselines.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy(pub ActionSpace);

impl Policy for RandomPolicy {
    fn act(
        &mut self,
        _: &[f64],
        _: &[f64],
        _: Option<ExploreParams>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action> {
        Ok(match self.0 {
            ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..n)),
            ActionSpace::Continuous(d) => {
                Action::Continuous((0..d).map(|_| rng.random_range(-1.0..=1.0)).collect())
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoSchedule {
    pub eta: f64,
    pub episodes_per_cycle: usize,
}

impl DemoSchedule {
    pub fn new(eta: f64, episodes_per_cycle: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("eta {eta} outside [0, 1]")));
        }
        if episodes_per_cycle == 0 {
            return Err(Error::invalid("episodes per cycle must be positive"));
        }
        Ok(Self {
            eta,
            episodes_per_cycle,
        })
    }

    /// Demonstrated episodes per cycle, `floor(eta * J + 0.5)`. They are the
    /// first episodes of each cycle.
    pub fn demo_count(&self) -> usize {
        ((self.eta * self.episodes_per_cycle as f64 + 0.5).floor() as usize)
            .min(self.episodes_per_cycle)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub trajectories: Vec<Trajectory>,
    pub demonstrated: bool,
    /// Per subgoal index, the step count at which it was first achieved while
    /// being pursued. Plain episodes only fill the last entry.
    pub achieved_at: Vec<Option<usize>>,
    /// Whether the environment's final goal was met at any step.
    pub final_success: bool,
    pub steps: usize,
}

impl EpisodeRecord {
    pub fn subgoals_achieved(&self) -> usize {
        self.achieved_at.iter().filter(|a| a.is_some()).count()
    }
}

/// Copies `transitions` into a fresh trajectory pursuing `new_goal`, with
/// rewards recomputed. The source is not modified.
pub fn split_on_subgoal(
    transitions: &[Transition],
    new_goal: &Goal,
    reward_fn: &dyn RewardFn,
) -> Result<Trajectory> {
    if transitions.is_empty() {
        return Err(Error::invalid("cannot split an empty episode"));
    }
    Trajectory::from_transitions(
        transitions
            .iter()
            .map(|t| t.relabel(new_goal.clone(), reward_fn))
            .collect(),
    )
}

fn rollout(
    policy: &mut dyn Policy,
    env: &mut dyn Env,
    seed: u64,
    demonstrated: bool,
    explore: Option<&[ExploreParams]>,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeRecord> {
    let n = env.num_steps();
    if let Some(e) = explore {
        if e.len() != n {
            return Err(Error::shape(format!(
                "{} exploration entries for {n} task steps",
                e.len()
            )));
        }
    }
    let (mut obs, final_goal) = env.reset(seed);
    let mut idx = if demonstrated { 0 } else { n - 1 };
    let mut goal = if demonstrated {
        env.subgoal(0, &final_goal)
    } else {
        final_goal.clone()
    };
    let mut done = Vec::new();
    let mut current = Trajectory::new();
    let mut achieved_at = vec![None; n];
    let mut final_success = false;
    let horizon = env.horizon();
    for t in 0..horizon {
        let action = policy.act(&obs, &goal, explore.map(|e| e[idx]), rng)?;
        let step = env.step(&action)?;
        let reward = env.goal_space().reward(&step.achieved_goal, &goal);
        final_success |= step.reward == 0.0;
        current.push(Transition {
            state: obs,
            action,
            reward,
            next_state: step.observation.clone(),
            desired_goal: goal.clone(),
            achieved_goal_next: step.achieved_goal,
            timestep: t,
        });
        obs = step.observation;
        if reward == 0.0 && achieved_at[idx].is_none() {
            achieved_at[idx] = Some(t + 1);
            if demonstrated && idx + 1 < n {
                idx += 1;
                goal = env.subgoal(idx, &final_goal);
                let next = split_on_subgoal(current.transitions(), &goal, env.goal_space())?;
                done.push(std::mem::replace(&mut current, next));
            }
        }
    }
    done.push(current);
    Ok(EpisodeRecord {
        trajectories: done,
        demonstrated,
        achieved_at,
        final_success,
        steps: horizon,
    })
}

/// One episode following the task decomposition. Exploration parameters are
/// taken from the entry of the subtask currently pursued.
pub fn run_demonstrated_episode(
    policy: &mut dyn Policy,
    env: &mut dyn Env,
    seed: u64,
    explore: Option<&[ExploreParams]>,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeRecord> {
    rollout(policy, env, seed, true, explore, rng)
}

/// One episode given only the final goal, explored with the last step's
/// parameters.
pub fn run_plain_episode(
    policy: &mut dyn Policy,
    env: &mut dyn Env,
    seed: u64,
    explore: Option<&[ExploreParams]>,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeRecord> {
    rollout(policy, env, seed, false, explore, rng)
}
