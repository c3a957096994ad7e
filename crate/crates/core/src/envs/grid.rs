//! DoorKey gridworld.
//!
//! A `size x size` grid bordered by walls and split by a vertical wall at
//! column `size / 2` containing one locked door. The agent and the key start
//! in the left room, the target cell lies in the right room. The agent turns
//! and moves forward along its heading; the door opens when the agent toggles
//! it from an adjacent cell while carrying the key.
//!
//! Observation: `[agent_x, agent_y, key_x, key_y, door_x, door_y, heading,
//! carrying_key, door_open]`. Goal: `[x, y]` of a cell, achieved goal is the
//! agent's cell, success is an exact match.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Action, ActionSpace, Env, EnvConfig, EnvKind, Goal, GoalSlice, GoalSpace, Obs, RewardFn,
    StepResult,
};
use crate::error::{Error, Result};

pub const OBS_DIM: usize = 9;

/// Headings: 0 = +x (east), 1 = +y (south), 2 = -x (west), 3 = -y (north).
pub(crate) const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Left = 0,
    Right = 1,
    Forward = 2,
    Pickup = 3,
    Toggle = 4,
}

impl GridAction {
    pub const COUNT: usize = 5;

    pub fn from_index(i: usize) -> Option<Self> {
        Some(match i {
            0 => GridAction::Left,
            1 => GridAction::Right,
            2 => GridAction::Forward,
            3 => GridAction::Pickup,
            4 => GridAction::Toggle,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridState {
    pub agent: (i64, i64),
    pub key: (i64, i64),
    pub door: (i64, i64),
    pub heading: u8,
    pub carrying_key: bool,
    pub door_open: bool,
}

impl GridState {
    pub fn to_obs(&self) -> Vec<f64> {
        vec![
            self.agent.0 as f64,
            self.agent.1 as f64,
            self.key.0 as f64,
            self.key.1 as f64,
            self.door.0 as f64,
            self.door.1 as f64,
            f64::from(self.heading),
            f64::from(u8::from(self.carrying_key)),
            f64::from(u8::from(self.door_open)),
        ]
    }

    pub fn from_obs(obs: &[f64]) -> Self {
        let c = |i: usize| obs[i].round() as i64;
        GridState {
            agent: (c(0), c(1)),
            key: (c(2), c(3)),
            door: (c(4), c(5)),
            heading: obs[6].round() as u8,
            carrying_key: obs[7] > 0.5,
            door_open: obs[8] > 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridDoorKey {
    size: i64,
    kind: EnvKind,
    horizon: usize,
    goal_space: GoalSpace,
    state: GridState,
    target: (i64, i64),
    t: usize,
}

impl GridDoorKey {
    pub fn new(size: usize, config: &EnvConfig) -> Self {
        let kind = match size {
            15 => EnvKind::Grid15,
            25 => EnvKind::Grid25,
            35 => EnvKind::Grid35,
            _ => panic!("unsupported grid size {size}"),
        };
        let goal_space = GoalSpace::new(
            2,
            vec![GoalSlice {
                start: 0,
                len: 2,
                tolerance: 0.0,
            }],
        )
        .expect("static layout");
        let mut env = Self {
            size: size as i64,
            kind,
            horizon: config.horizon.unwrap_or(5 * size),
            goal_space,
            state: GridState {
                agent: (1, 1),
                key: (1, 2),
                door: (size as i64 / 2, 1),
                heading: 0,
                carrying_key: false,
                door_open: false,
            },
            target: (size as i64 - 2, 1),
            t: 0,
        };
        env.reset(0);
        env
    }

    pub fn size(&self) -> i64 {
        self.size
    }

    pub fn wall_x(&self) -> i64 {
        self.size / 2
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn target(&self) -> (i64, i64) {
        self.target
    }

    /// Whether a cell can be entered given the door state.
    pub fn passable(&self, cell: (i64, i64), door_open: bool) -> bool {
        passable(self.size, self.state.door, cell, door_open)
    }
}

/// Cell passability for a grid of `size` with the given door.
pub fn passable(size: i64, door: (i64, i64), cell: (i64, i64), door_open: bool) -> bool {
    let (x, y) = cell;
    if x <= 0 || y <= 0 || x >= size - 1 || y >= size - 1 {
        return false;
    }
    if x == size / 2 {
        return cell == door && door_open;
    }
    true
}

impl Env for GridDoorKey {
    fn kind(&self) -> EnvKind {
        self.kind
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn goal_space(&self) -> &GoalSpace {
        &self.goal_space
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(GridAction::COUNT)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_steps(&self) -> usize {
        3
    }

    fn reset(&mut self, seed: u64) -> (Obs, Goal) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.size;
        let wall = self.wall_x();
        let left = |rng: &mut ChaCha8Rng| (rng.random_range(1..wall), rng.random_range(1..n - 1));
        let agent = left(&mut rng);
        let key = loop {
            let c = left(&mut rng);
            if c != agent {
                break c;
            }
        };
        let door = (wall, rng.random_range(1..n - 1));
        let target = (
            rng.random_range(wall + 1..n - 1),
            rng.random_range(1..n - 1),
        );
        let heading = rng.random_range(0..4u8);
        self.state = GridState {
            agent,
            key,
            door,
            heading,
            carrying_key: false,
            door_open: false,
        };
        self.target = target;
        self.t = 0;
        (self.observation(), self.desired_goal())
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let idx = match action {
            Action::Discrete(i) => *i,
            Action::Continuous(_) => {
                return Err(Error::invalid("grid environment takes discrete actions"))
            }
        };
        let act = GridAction::from_index(idx)
            .ok_or_else(|| Error::invalid(format!("grid action index {idx} out of range")))?;
        if self.t >= self.horizon {
            return Err(Error::invalid("episode horizon reached; call reset"));
        }
        let s = &mut self.state;
        match act {
            GridAction::Left => s.heading = (s.heading + 3) % 4,
            GridAction::Right => s.heading = (s.heading + 1) % 4,
            GridAction::Forward => {
                let (dx, dy) = DIRS[s.heading as usize];
                let next = (s.agent.0 + dx, s.agent.1 + dy);
                if passable(self.size, s.door, next, s.door_open) {
                    s.agent = next;
                    if s.carrying_key {
                        s.key = next;
                    }
                }
            }
            GridAction::Pickup => {
                if !s.carrying_key && s.agent == s.key {
                    s.carrying_key = true;
                }
            }
            GridAction::Toggle => {
                let adjacent = (s.agent.0 - s.door.0).abs() + (s.agent.1 - s.door.1).abs() == 1;
                if s.carrying_key && adjacent {
                    s.door_open = true;
                }
            }
        }
        self.t += 1;
        let achieved = self.achieved_goal();
        let reward = self.goal_space.reward(&achieved, &self.desired_goal());
        Ok(StepResult {
            observation: self.observation(),
            reward,
            achieved_goal: achieved,
            timestep: self.t,
            action_clamped: false,
        })
    }

    fn observation(&self) -> Obs {
        self.state.to_obs().into()
    }

    fn achieved_goal(&self) -> Goal {
        Goal::new(vec![self.state.agent.0 as f64, self.state.agent.1 as f64])
    }

    fn desired_goal(&self) -> Goal {
        Goal::new(vec![self.target.0 as f64, self.target.1 as f64])
    }

    fn timestep(&self) -> usize {
        self.t
    }

    fn subgoal(&self, index: usize, final_goal: &Goal) -> Goal {
        let s = &self.state;
        match index {
            0 => Goal::new(vec![s.key.0 as f64, s.key.1 as f64]),
            1 => Goal::new(vec![s.door.0 as f64, s.door.1 as f64]),
            _ => final_goal.clone(),
        }
    }

    fn render_text(&self) -> String {
        let s = &self.state;
        let mut out = String::new();
        for y in 0..self.size {
            for x in 0..self.size {
                let c = (x, y);
                let ch = if c == s.agent {
                    ['>', 'v', '<', '^'][s.heading as usize]
                } else if c == s.door {
                    if s.door_open {
                        '/'
                    } else {
                        'D'
                    }
                } else if c == s.key && !s.carrying_key {
                    'K'
                } else if c == self.target {
                    'G'
                } else if !passable(self.size, s.door, c, true) {
                    '#'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "t={} carrying_key={} door_open={}\n",
            self.t, s.carrying_key, s.door_open
        ));
        out
    }
}
