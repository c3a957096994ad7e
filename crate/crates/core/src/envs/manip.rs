//! Kinematic surrogates of the chest and block-stacking manipulation tasks.
//!
//! There is no dynamics: the gripper moves by the commanded displacement
//! (clamped to the workspace), blocks are carried, pushed or dropped by
//! simple attachment rules, and the chest lid slides open while the gripper
//! drags its handle. Lengths are in metres; block positions are centres.
//!
//! Rules:
//! * A block becomes grasped when the gripper is within [`GRASP_RADIUS`] of its
//!   centre and the finger width is at most [`BLOCK_WIDTH`]; the fingers then
//!   rest on the block. A grasped block follows the gripper. Opening the
//!   fingers past the block width releases it and it drops onto whatever is
//!   below (table, another block, or the closed lid).
//! * ChestPush has no fingers: when the gripper is low and within
//!   [`PUSH_RADIUS`] of the block horizontally, before or after a step, the
//!   block is carried along the table under the gripper.
//! * The lid opening grows by the gripper's `-y` displacement whenever the
//!   gripper starts a step inside the handle box. The handle moves with the
//!   lid. Blocks can only enter the chest once the lid is open
//!   (`opening >= 0.9 * LID_MAX`).
//!
//! Goal layouts:
//! * chest tasks: `[block xyz, gripper xyz, finger width, lid opening]`
//! * BlockStack: `[base xyz, second xyz, gripper xyz, finger width]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Action, ActionSpace, Env, EnvConfig, EnvKind, Goal, GoalSlice, GoalSpace, Obs, RewardFn,
    StepResult,
};
use crate::error::{Error, Result};

pub const WORKSPACE_MIN: [f64; 3] = [-0.25, -0.25, 0.025];
pub const WORKSPACE_MAX: [f64; 3] = [0.25, 0.25, 0.30];
pub const BLOCK_WIDTH: f64 = 0.05;
pub const BLOCK_HALF: f64 = BLOCK_WIDTH / 2.0;
/// Centre height of a block resting on the table.
pub const TABLE_Z: f64 = BLOCK_HALF;
pub const FINGER_MAX: f64 = 0.08;
/// Displacement per unit action, for both gripper and fingers.
pub const MAX_STEP: f64 = 0.05;
pub const GRASP_RADIUS: f64 = 0.03;
pub const PUSH_RADIUS: f64 = 0.04;
pub const PUSH_HEIGHT: f64 = 0.06;

pub const CHEST_CENTER: [f64; 2] = [0.12, 0.05];
pub const CHEST_HALF: f64 = 0.06;
/// Height of the chest rim / closed lid surface.
pub const CHEST_TOP: f64 = 0.05;
pub const LID_MAX: f64 = 0.12;
pub const LID_OPEN_FRACTION: f64 = 0.9;
pub const HANDLE_REST: [f64; 3] = [0.12, -0.03, 0.06];
pub const HANDLE_HALF: f64 = 0.03;
pub const ABOVE_CHEST_Z: f64 = 0.15;

pub const CHEST_HOME: [f64; 3] = [0.12, -0.03, 0.15];
pub const STACK_HOME: [f64; 3] = [0.0, 0.0, 0.15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ManipTask {
    ChestPush,
    ChestPick,
    BlockStack,
}

impl ManipTask {
    pub fn has_lid(self) -> bool {
        !matches!(self, ManipTask::BlockStack)
    }

    pub fn num_blocks(self) -> usize {
        match self {
            ManipTask::BlockStack => 2,
            _ => 1,
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            ManipTask::ChestPush => 8,
            ManipTask::ChestPick => 9,
            ManipTask::BlockStack => 12,
        }
    }

    pub fn goal_dim(self) -> usize {
        match self {
            ManipTask::BlockStack => 10,
            _ => 8,
        }
    }

    /// Offset of the gripper slice in the goal vector.
    pub fn gripper_slot(self) -> usize {
        3 * self.num_blocks()
    }

    pub fn finger_slot(self) -> usize {
        self.gripper_slot() + 3
    }

    pub fn lid_slot(self) -> Option<usize> {
        self.has_lid().then_some(7)
    }

    pub fn default_horizon(self) -> usize {
        match self {
            ManipTask::ChestPush => 75,
            _ => 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipState {
    pub gripper: [f64; 3],
    pub finger: f64,
    pub blocks: Vec<[f64; 3]>,
    /// Lid opening in `[0, LID_MAX]`; `None` when the task has no chest.
    pub lid: Option<f64>,
    pub grasped: Option<usize>,
}

impl ManipState {
    pub fn lid_open(&self) -> bool {
        self.lid.is_some_and(|l| l >= LID_OPEN_FRACTION * LID_MAX)
    }

    /// Rebuilds the state from an observation vector of `task`.
    pub fn from_obs(task: ManipTask, obs: &[f64]) -> Self {
        let nb = task.num_blocks();
        let blocks = (0..nb)
            .map(|i| [obs[4 + 3 * i], obs[5 + 3 * i], obs[6 + 3 * i]])
            .collect();
        let tail = 4 + 3 * nb;
        let (lid, grasped) = match task {
            ManipTask::ChestPush => (Some(obs[tail]), None),
            ManipTask::ChestPick => (Some(obs[tail]), (obs[tail + 1] > 0.5).then_some(0)),
            ManipTask::BlockStack => (None, (0..2).find(|&i| obs[tail + i] > 0.5)),
        };
        Self {
            gripper: [obs[0], obs[1], obs[2]],
            finger: obs[3],
            blocks,
            lid,
            grasped,
        }
    }

    pub fn handle(&self) -> [f64; 3] {
        let l = self.lid.unwrap_or(0.0);
        [HANDLE_REST[0], HANDLE_REST[1] - l, HANDLE_REST[2]]
    }

    pub fn in_handle_box(&self, p: [f64; 3]) -> bool {
        let h = self.handle();
        (0..3).all(|i| (p[i] - h[i]).abs() <= HANDLE_HALF + 1e-12)
    }
}

/// Gripper position of a fully opened lid's handle.
pub fn handle_open() -> [f64; 3] {
    [HANDLE_REST[0], HANDLE_REST[1] - LID_MAX, HANDLE_REST[2]]
}

pub fn in_chest(xy: [f64; 2]) -> bool {
    (xy[0] - CHEST_CENTER[0]).abs() <= CHEST_HALF && (xy[1] - CHEST_CENTER[1]).abs() <= CHEST_HALF
}

/// Whether a block centred at `xy` would overlap the chest footprint.
fn overlaps_chest(xy: [f64; 2]) -> bool {
    (xy[0] - CHEST_CENTER[0]).abs() < CHEST_HALF + BLOCK_HALF
        && (xy[1] - CHEST_CENTER[1]).abs() < CHEST_HALF + BLOCK_HALF
}

#[derive(Debug, Clone)]
pub struct Manipulation {
    task: ManipTask,
    horizon: usize,
    goal_space: GoalSpace,
    state: ManipState,
    goal: Goal,
    t: usize,
}

impl Manipulation {
    pub fn new(task: ManipTask, config: &EnvConfig) -> Self {
        let pos = config.position_tolerance;
        let mut slices: Vec<GoalSlice> = (0..task.num_blocks() + 1)
            .map(|i| GoalSlice {
                start: 3 * i,
                len: 3,
                tolerance: pos,
            })
            .collect();
        slices.push(GoalSlice {
            start: task.finger_slot(),
            len: 1,
            tolerance: config.finger_tolerance,
        });
        if let Some(slot) = task.lid_slot() {
            slices.push(GoalSlice {
                start: slot,
                len: 1,
                tolerance: (1.0 - LID_OPEN_FRACTION) * LID_MAX,
            });
        }
        let goal_space = GoalSpace::new(task.goal_dim(), slices).expect("static layout");
        let mut env = Self {
            task,
            horizon: config.horizon.unwrap_or(task.default_horizon()),
            goal_space,
            state: ManipState {
                gripper: CHEST_HOME,
                finger: 0.0,
                blocks: vec![[0.0, 0.0, TABLE_Z]; task.num_blocks()],
                lid: None,
                grasped: None,
            },
            goal: Goal::new(vec![0.0; task.goal_dim()]),
            t: 0,
        };
        env.reset(0);
        env
    }

    pub fn task(&self) -> ManipTask {
        self.task
    }

    pub fn state(&self) -> &ManipState {
        &self.state
    }

    /// Replaces the state; used by tests and scripted fixtures.
    pub fn set_state(&mut self, state: ManipState) {
        self.state = state;
    }

    /// Centre height a block released at `xy` comes to rest at.
    fn support_z(&self, xy: [f64; 2], exclude: usize) -> f64 {
        let mut z = TABLE_Z;
        if self.task.has_lid() && !self.state.lid_open() && in_chest(xy) {
            z = CHEST_TOP + BLOCK_HALF;
        }
        for (j, b) in self.state.blocks.iter().enumerate() {
            if j != exclude
                && (b[0] - xy[0]).abs() < BLOCK_WIDTH
                && (b[1] - xy[1]).abs() < BLOCK_WIDTH
            {
                z = z.max(b[2] + BLOCK_WIDTH);
            }
        }
        z
    }

    fn goal_from_parts(
        &self,
        blocks: &[[f64; 3]],
        gripper: [f64; 3],
        finger: f64,
        lid: f64,
    ) -> Goal {
        let mut g = Vec::with_capacity(self.task.goal_dim());
        for b in blocks {
            g.extend_from_slice(b);
        }
        g.extend_from_slice(&gripper);
        g.push(finger);
        if self.task.has_lid() {
            g.push(lid);
        }
        Goal::new(g)
    }
}

fn sample_xy(rng: &mut ChaCha8Rng, lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [
        rng.random_range(lo[0]..hi[0]),
        rng.random_range(lo[1]..hi[1]),
    ]
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl Env for Manipulation {
    fn kind(&self) -> EnvKind {
        match self.task {
            ManipTask::ChestPush => EnvKind::ChestPush,
            ManipTask::ChestPick => EnvKind::ChestPick,
            ManipTask::BlockStack => EnvKind::BlockStack,
        }
    }

    fn obs_dim(&self) -> usize {
        self.task.obs_dim()
    }

    fn goal_space(&self) -> &GoalSpace {
        &self.goal_space
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(4)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_steps(&self) -> usize {
        match self.task {
            ManipTask::ChestPush => 3,
            _ => 4,
        }
    }

    fn reset(&mut self, seed: u64) -> (Obs, Goal) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self.task {
            ManipTask::ChestPush | ManipTask::ChestPick => {
                let xy = sample_xy(&mut rng, [-0.2, -0.15], [0.0, 0.15]);
                let pick = self.task == ManipTask::ChestPick;
                self.state = ManipState {
                    gripper: CHEST_HOME,
                    finger: if pick { FINGER_MAX } else { 0.0 },
                    blocks: vec![[xy[0], xy[1], TABLE_Z]],
                    lid: Some(0.0),
                    grasped: None,
                };
                let block_t = [CHEST_CENTER[0], CHEST_CENTER[1], TABLE_Z];
                self.goal = if pick {
                    let grip_t = [CHEST_CENTER[0], CHEST_CENTER[1], ABOVE_CHEST_Z];
                    self.goal_from_parts(&[block_t], grip_t, FINGER_MAX, LID_MAX)
                } else {
                    self.goal_from_parts(&[block_t], block_t, 0.0, LID_MAX)
                };
            }
            ManipTask::BlockStack => {
                let (lo, hi) = ([-0.2, -0.2], [0.2, 0.2]);
                let b0 = sample_xy(&mut rng, lo, hi);
                let b1 = loop {
                    let c = sample_xy(&mut rng, lo, hi);
                    if dist2(c, b0) >= 0.1 {
                        break c;
                    }
                };
                let target = loop {
                    let c = sample_xy(&mut rng, lo, hi);
                    if dist2(c, b0) >= 0.1 && dist2(c, b1) >= 0.1 {
                        break c;
                    }
                };
                self.state = ManipState {
                    gripper: STACK_HOME,
                    finger: FINGER_MAX,
                    blocks: vec![[b0[0], b0[1], TABLE_Z], [b1[0], b1[1], TABLE_Z]],
                    lid: None,
                    grasped: None,
                };
                let base_t = [target[0], target[1], TABLE_Z];
                let top_t = [target[0], target[1], TABLE_Z + BLOCK_WIDTH];
                self.goal = self.goal_from_parts(&[base_t, top_t], top_t, BLOCK_WIDTH, 0.0);
            }
        }
        self.t = 0;
        (self.observation(), self.goal.clone())
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let raw = match action {
            Action::Continuous(a) => a,
            Action::Discrete(_) => {
                return Err(Error::invalid("manipulation takes continuous actions"))
            }
        };
        if raw.len() != 4 {
            return Err(Error::shape(format!(
                "expected 4-d action, got {}",
                raw.len()
            )));
        }
        if !raw.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        if self.t >= self.horizon {
            return Err(Error::invalid("episode horizon reached; call reset"));
        }
        let clamped = raw.iter().any(|v| v.abs() > 1.0);
        let a: Vec<f64> = raw.iter().map(|v| v.clamp(-1.0, 1.0)).collect();

        let g0 = self.state.gripper;
        let mut g = [0.0; 3];
        for i in 0..3 {
            g[i] = (g0[i] + a[i] * MAX_STEP).clamp(WORKSPACE_MIN[i], WORKSPACE_MAX[i]);
        }
        if let Some(i) = self.state.grasped {
            g[2] = g[2]
                .max(self.support_z([g[0], g[1]], i))
                .min(WORKSPACE_MAX[2]);
        }
        if let Some(lid) = self.state.lid {
            if self.state.in_handle_box(g0) && g[1] < g0[1] {
                self.state.lid = Some((lid + (g0[1] - g[1])).min(LID_MAX));
            }
        }
        self.state.gripper = g;

        match self.task {
            ManipTask::ChestPush => {
                let b = self.state.blocks[0];
                let near = |p: [f64; 3]| {
                    p[2] <= PUSH_HEIGHT && dist2([p[0], p[1]], [b[0], b[1]]) <= PUSH_RADIUS
                };
                if near(g0) && g[2] <= PUSH_HEIGHT || near(g) {
                    let xy = [g[0], g[1]];
                    if self.state.lid_open() || !overlaps_chest(xy) {
                        self.state.blocks[0] = [xy[0], xy[1], TABLE_Z];
                    }
                }
            }
            ManipTask::ChestPick | ManipTask::BlockStack => {
                let cmd = (self.state.finger + a[3] * MAX_STEP).clamp(0.0, FINGER_MAX);
                match self.state.grasped {
                    Some(i) if cmd > BLOCK_WIDTH => {
                        self.state.grasped = None;
                        self.state.finger = cmd;
                        let b = self.state.blocks[i];
                        let z = self.support_z([b[0], b[1]], i);
                        self.state.blocks[i][2] = z;
                    }
                    Some(i) => {
                        self.state.finger = BLOCK_WIDTH;
                        self.state.blocks[i] = g;
                    }
                    None => {
                        self.state.finger = cmd;
                        if cmd <= BLOCK_WIDTH {
                            let nearest = self
                                .state
                                .blocks
                                .iter()
                                .enumerate()
                                .map(|(j, b)| (j, dist3(*b, g)))
                                .filter(|&(_, d)| d <= GRASP_RADIUS)
                                .min_by(|x, y| x.1.total_cmp(&y.1));
                            if let Some((j, _)) = nearest {
                                self.state.grasped = Some(j);
                                self.state.finger = BLOCK_WIDTH;
                                self.state.blocks[j] = g;
                            }
                        }
                    }
                }
            }
        }

        self.t += 1;
        let achieved = self.achieved_goal();
        let reward = self.goal_space.reward(&achieved, &self.goal);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            achieved_goal: achieved,
            timestep: self.t,
            action_clamped: clamped,
        })
    }

    fn observation(&self) -> Obs {
        let s = &self.state;
        let mut o = Vec::with_capacity(self.task.obs_dim());
        o.extend_from_slice(&s.gripper);
        o.push(s.finger);
        for b in &s.blocks {
            o.extend_from_slice(b);
        }
        match self.task {
            ManipTask::ChestPush => o.push(s.lid.unwrap_or(0.0)),
            ManipTask::ChestPick => {
                o.push(s.lid.unwrap_or(0.0));
                o.push(f64::from(u8::from(s.grasped == Some(0))));
            }
            ManipTask::BlockStack => {
                o.push(f64::from(u8::from(s.grasped == Some(0))));
                o.push(f64::from(u8::from(s.grasped == Some(1))));
            }
        }
        o.into()
    }

    fn achieved_goal(&self) -> Goal {
        let s = &self.state;
        self.goal_from_parts(&s.blocks, s.gripper, s.finger, s.lid.unwrap_or(0.0))
    }

    fn desired_goal(&self) -> Goal {
        self.goal.clone()
    }

    fn timestep(&self) -> usize {
        self.t
    }

    fn subgoal(&self, index: usize, final_goal: &Goal) -> Goal {
        let s = &self.state;
        let last = self.num_steps() - 1;
        if index >= last {
            return final_goal.clone();
        }
        let block = s.blocks[0];
        match (self.task, index) {
            // open the chest
            (ManipTask::ChestPush, 0) => {
                self.goal_from_parts(&[block], handle_open(), 0.0, LID_MAX)
            }
            // reach the block
            (ManipTask::ChestPush, _) => self.goal_from_parts(&[block], block, 0.0, LID_MAX),
            (ManipTask::ChestPick, 0) => {
                self.goal_from_parts(&[block], handle_open(), FINGER_MAX, LID_MAX)
            }
            // grasp the block
            (ManipTask::ChestPick, 1) => {
                self.goal_from_parts(&[block], block, BLOCK_WIDTH, LID_MAX)
            }
            // hold it above the chest
            (ManipTask::ChestPick, _) => {
                let above = [CHEST_CENTER[0], CHEST_CENTER[1], ABOVE_CHEST_Z];
                self.goal_from_parts(&[above], above, BLOCK_WIDTH, LID_MAX)
            }
            // grasp the base block
            (ManipTask::BlockStack, 0) => {
                self.goal_from_parts(&s.blocks, s.blocks[0], BLOCK_WIDTH, 0.0)
            }
            // base block at the target
            (ManipTask::BlockStack, 1) => {
                let base_t = [final_goal[0], final_goal[1], final_goal[2]];
                self.goal_from_parts(&[base_t, s.blocks[1]], base_t, BLOCK_WIDTH, 0.0)
            }
            // grasp the second block
            (ManipTask::BlockStack, _) => {
                self.goal_from_parts(&s.blocks, s.blocks[1], BLOCK_WIDTH, 0.0)
            }
        }
    }

    fn render_text(&self) -> String {
        let s = &self.state;
        let f = |p: &[f64; 3]| format!("({:+.3}, {:+.3}, {:+.3})", p[0], p[1], p[2]);
        let mut out = format!(
            "t={:3} gripper={} finger={:.3}",
            self.t,
            f(&s.gripper),
            s.finger
        );
        for (i, b) in s.blocks.iter().enumerate() {
            let held = if s.grasped == Some(i) { "*" } else { "" };
            out.push_str(&format!(" block{i}{held}={}", f(b)));
        }
        if let Some(l) = s.lid {
            out.push_str(&format!(" lid={l:.3}"));
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(task: ManipTask) -> Manipulation {
        Manipulation::new(task, &EnvConfig::default())
    }

    fn act(v: [f64; 4]) -> Action {
        Action::Continuous(v.to_vec())
    }

    #[test]
    fn chestpush_resets() {
        let mut e = env(ManipTask::ChestPush);
        for seed in 0..1000 {
            let (obs, goal) = e.reset(seed);
            let s = e.state();
            assert_eq!(s.lid, Some(0.0));
            assert_eq!(s.blocks[0][2], TABLE_Z);
            assert_eq!(obs.len(), 8);
            assert_eq!(e.compute_reward(&e.achieved_goal(), &goal).unwrap(), -1.0);
        }
    }

    #[test]
    fn resets_never_start_solved() {
        for task in [ManipTask::ChestPick, ManipTask::BlockStack] {
            let mut e = env(task);
            for seed in 0..1000 {
                let (_, goal) = e.reset(seed);
                assert_eq!(e.compute_reward(&e.achieved_goal(), &goal).unwrap(), -1.0);
            }
        }
    }

    #[test]
    fn same_seed_same_episode_start() {
        let mut a = env(ManipTask::BlockStack);
        let mut b = env(ManipTask::BlockStack);
        assert_eq!(a.reset(9), b.reset(9));
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn state_round_trips_through_obs() {
        for task in [
            ManipTask::ChestPush,
            ManipTask::ChestPick,
            ManipTask::BlockStack,
        ] {
            let mut e = env(task);
            e.reset(5);
            let mut s = e.state().clone();
            if task != ManipTask::ChestPush {
                s.grasped = Some(task.num_blocks() - 1);
            }
            e.set_state(s.clone());
            assert_eq!(ManipState::from_obs(task, &e.observation()), s);
        }
    }

    #[test]
    fn grasped_block_rises_with_gripper() {
        let mut e = env(ManipTask::ChestPick);
        e.reset(0);
        let mut s = e.state().clone();
        s.gripper = [-0.1, 0.0, 0.1];
        s.blocks[0] = s.gripper;
        s.finger = BLOCK_WIDTH;
        s.grasped = Some(0);
        e.set_state(s);
        let z0 = e.state().blocks[0][2];
        let g0 = e.state().gripper[2];
        e.step(&act([0.0, 0.0, 1.0, 0.0])).unwrap();
        let dz_block = e.state().blocks[0][2] - z0;
        let dz_grip = e.state().gripper[2] - g0;
        assert!((dz_block - MAX_STEP).abs() < 1e-12);
        assert_eq!(dz_block, dz_grip);
    }

    #[test]
    fn closing_near_block_grasps_and_opening_releases() {
        let mut e = env(ManipTask::ChestPick);
        e.reset(0);
        let b = e.state().blocks[0];
        let mut s = e.state().clone();
        s.gripper = [b[0], b[1], b[2] + 0.01];
        e.set_state(s);
        e.step(&act([0.0, 0.0, 0.0, -1.0])).unwrap();
        assert_eq!(e.state().grasped, Some(0));
        assert_eq!(e.state().finger, BLOCK_WIDTH);
        e.step(&act([0.0, 0.0, 1.0, -1.0])).unwrap();
        assert!(e.state().blocks[0][2] > TABLE_Z);
        e.step(&act([0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(e.state().grasped, None);
        assert_eq!(e.state().blocks[0][2], TABLE_Z);
    }

    #[test]
    fn open_fingers_do_not_grasp() {
        let mut e = env(ManipTask::ChestPick);
        e.reset(0);
        let b = e.state().blocks[0];
        let mut s = e.state().clone();
        s.gripper = b;
        e.set_state(s);
        e.step(&act([0.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(e.state().grasped, None);
    }

    #[test]
    fn dragging_handle_opens_lid() {
        let mut e = env(ManipTask::ChestPush);
        e.reset(0);
        let mut s = e.state().clone();
        s.gripper = HANDLE_REST;
        e.set_state(s);
        for _ in 0..3 {
            e.step(&act([0.0, -1.0, 0.0, 0.0])).unwrap();
        }
        let lid = e.state().lid.unwrap();
        assert!((lid - LID_MAX).abs() < 1e-12, "lid {lid}");
        assert!(e.state().lid_open());
        // moving away from the handle does not change it
        e.step(&act([-1.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(e.state().lid, Some(lid));
    }

    #[test]
    fn moving_outside_handle_leaves_lid_closed() {
        let mut e = env(ManipTask::ChestPush);
        e.reset(0);
        for _ in 0..4 {
            e.step(&act([0.0, -1.0, 0.0, 0.0])).unwrap();
        }
        assert_eq!(e.state().lid, Some(0.0));
    }

    #[test]
    fn closed_chest_blocks_pushing_in() {
        let mut e = env(ManipTask::ChestPush);
        e.reset(0);
        let mut s = e.state().clone();
        s.blocks[0] = [0.0, 0.05, TABLE_Z];
        s.gripper = [0.0, 0.05, TABLE_Z];
        e.set_state(s.clone());
        for _ in 0..4 {
            e.step(&act([1.0, 0.0, 0.0, 0.0])).unwrap();
        }
        let bx = e.state().blocks[0][0];
        assert!(
            bx + BLOCK_HALF <= CHEST_CENTER[0] - CHEST_HALF + 1e-9,
            "block x {bx}"
        );

        s.lid = Some(LID_MAX);
        e.set_state(s);
        for _ in 0..3 {
            e.step(&act([1.0, 0.0, 0.0, 0.0])).unwrap();
        }
        let b = e.state().blocks[0];
        assert!(in_chest([b[0], b[1]]));
    }

    #[test]
    fn release_over_closed_lid_rests_on_it() {
        let mut e = env(ManipTask::ChestPick);
        e.reset(0);
        let mut s = e.state().clone();
        s.gripper = [CHEST_CENTER[0], CHEST_CENTER[1], ABOVE_CHEST_Z];
        s.blocks[0] = s.gripper;
        s.finger = BLOCK_WIDTH;
        s.grasped = Some(0);
        e.set_state(s);
        for _ in 0..4 {
            e.step(&act([0.0, 0.0, -1.0, -1.0])).unwrap();
        }
        assert!((e.state().gripper[2] - (CHEST_TOP + BLOCK_HALF)).abs() < 1e-12);
        e.step(&act([0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!((e.state().blocks[0][2] - (CHEST_TOP + BLOCK_HALF)).abs() < 1e-12);
    }

    #[test]
    fn stacking_support() {
        let mut e = env(ManipTask::BlockStack);
        e.reset(0);
        let mut s = e.state().clone();
        let base = s.blocks[0];
        s.gripper = [base[0], base[1], 0.2];
        s.blocks[1] = s.gripper;
        s.finger = BLOCK_WIDTH;
        s.grasped = Some(1);
        e.set_state(s);
        for _ in 0..5 {
            e.step(&act([0.0, 0.0, -1.0, -1.0])).unwrap();
        }
        assert!((e.state().blocks[1][2] - (TABLE_Z + BLOCK_WIDTH)).abs() < 1e-12);
    }

    #[test]
    fn tolerance_boundary() {
        let e = env(ManipTask::ChestPush);
        let desired = e.desired_goal();
        let mut a = desired.to_vec();
        a[0] += 0.04;
        assert_eq!(e.compute_reward(&a, &desired).unwrap(), 0.0);
        a[0] += 0.02;
        assert_eq!(e.compute_reward(&a, &desired).unwrap(), -1.0);
        let mut a = desired.to_vec();
        a[6] += 0.009;
        assert_eq!(e.compute_reward(&a, &desired).unwrap(), 0.0);
        a[6] += 0.002;
        assert_eq!(e.compute_reward(&a, &desired).unwrap(), -1.0);
    }

    #[test]
    fn out_of_range_actions_are_clamped_and_flagged() {
        let mut e = env(ManipTask::ChestPush);
        e.reset(0);
        let g0 = e.state().gripper;
        let r = e.step(&act([3.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(r.action_clamped);
        assert!((e.state().gripper[0] - (g0[0] + MAX_STEP).min(WORKSPACE_MAX[0])).abs() < 1e-12);
        assert!(e.step(&Action::Continuous(vec![0.0; 3])).is_err());
        assert!(e.step(&Action::Continuous(vec![f64::NAN; 4])).is_err());
        assert!(e.step(&Action::Discrete(1)).is_err());
    }

    #[test]
    fn achieved_goal_layout() {
        let mut e = env(ManipTask::BlockStack);
        e.reset(3);
        let s = e.state().clone();
        let g = e.achieved_goal();
        assert_eq!(&g[0..3], &s.blocks[0]);
        assert_eq!(&g[3..6], &s.blocks[1]);
        assert_eq!(&g[6..9], &s.gripper);
        assert_eq!(g[9], s.finger);
        let mut e = env(ManipTask::ChestPick);
        e.reset(3);
        let g = e.achieved_goal();
        assert_eq!(&g[0..3], &e.state().blocks[0]);
        assert_eq!(g[7], 0.0);
    }

    #[test]
    fn decompositions_end_with_final_goal() {
        for (task, n) in [
            (ManipTask::ChestPush, 3),
            (ManipTask::ChestPick, 4),
            (ManipTask::BlockStack, 4),
        ] {
            let mut e = env(task);
            let (_, g) = e.reset(11);
            let subs = e.subgoal_sequence(&g);
            assert_eq!(subs.len(), n);
            assert_eq!(subs[n - 1], g);
            assert!(subs.iter().all(|s| s.len() == task.goal_dim()));
        }
    }
}
