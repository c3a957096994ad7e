//! Scripted goal-driven experts.
//!
//! Experts read the full state back out of the observation and steer toward
//! whatever goal they are handed, so the same expert follows a subgoal
//! sequence or the final goal alone. They are used as test fixtures and as a
//! reference policy for evaluation sanity checks.

use std::collections::VecDeque;

use super::grid::{passable, GridAction, GridState, DIRS};
use super::manip::{
    ManipState, ManipTask, BLOCK_WIDTH, FINGER_MAX, HANDLE_HALF, LID_MAX, LID_OPEN_FRACTION,
    MAX_STEP,
};
use super::{Action, Env, EnvConfig, EnvKind};

/// Positions closer than this count as reached by the manipulation expert.
const REACHED: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expert {
    Grid {
        size: i64,
    },
    /// `placed`: the position tolerance; a block this close to its target is
    /// left where it is.
    Manip {
        task: ManipTask,
        placed: f64,
    },
}

impl Expert {
    /// Expert for the default configuration of `kind`.
    pub fn for_kind(kind: EnvKind) -> Self {
        Self::with_tolerance(kind, EnvConfig::default().position_tolerance)
    }

    pub fn for_env(env: &dyn Env) -> Self {
        let tol = env.goal_space().slices()[0].tolerance;
        Self::with_tolerance(env.kind(), tol)
    }

    fn with_tolerance(kind: EnvKind, tol: f64) -> Self {
        let placed = tol;
        match kind {
            EnvKind::Grid15 => Expert::Grid { size: 15 },
            EnvKind::Grid25 => Expert::Grid { size: 25 },
            EnvKind::Grid35 => Expert::Grid { size: 35 },
            EnvKind::ChestPush => Expert::Manip {
                task: ManipTask::ChestPush,
                placed,
            },
            EnvKind::ChestPick => Expert::Manip {
                task: ManipTask::ChestPick,
                placed,
            },
            EnvKind::BlockStack => Expert::Manip {
                task: ManipTask::BlockStack,
                placed,
            },
        }
    }

    pub fn act(&self, obs: &[f64], goal: &[f64]) -> Action {
        match *self {
            Expert::Grid { size } => {
                let s = GridState::from_obs(obs);
                let target = (goal[0].round() as i64, goal[1].round() as i64);
                Action::Discrete(grid_action(size, &s, target) as usize)
            }
            Expert::Manip { task, placed } => {
                let s = ManipState::from_obs(task, obs);
                Action::Continuous(manip_action(task, placed, &s, goal).to_vec())
            }
        }
    }
}

/// First action of a shortest turn/forward path to any cell in `targets`, or
/// `None` if the agent already stands on one or none is reachable.
fn navigate(size: i64, s: &GridState, targets: &[(i64, i64)]) -> Option<GridAction> {
    if targets.contains(&s.agent) {
        return None;
    }
    let n = size as usize;
    let idx = |c: (i64, i64), h: u8| (c.1 as usize * n + c.0 as usize) * 4 + h as usize;
    let mut first: Vec<Option<GridAction>> = vec![None; n * n * 4];
    let mut seen = vec![false; n * n * 4];
    let mut queue = VecDeque::new();
    seen[idx(s.agent, s.heading)] = true;
    queue.push_back((s.agent, s.heading));
    while let Some((cell, h)) = queue.pop_front() {
        let from = first[idx(cell, h)];
        let (dx, dy) = DIRS[h as usize];
        let ahead = (cell.0 + dx, cell.1 + dy);
        let moves = [
            (GridAction::Forward, ahead, h),
            (GridAction::Left, cell, (h + 3) % 4),
            (GridAction::Right, cell, (h + 1) % 4),
        ];
        for (a, c, nh) in moves {
            if a == GridAction::Forward && !passable(size, s.door, c, s.door_open) {
                continue;
            }
            let k = idx(c, nh);
            if seen[k] {
                continue;
            }
            seen[k] = true;
            let act = from.or(Some(a));
            if targets.contains(&c) {
                return act;
            }
            first[k] = act;
            queue.push_back((c, nh));
        }
    }
    None
}

fn grid_action(size: i64, s: &GridState, target: (i64, i64)) -> GridAction {
    if s.agent == target {
        return GridAction::Left;
    }
    if let Some(a) = navigate(size, s, &[target]) {
        return a;
    }
    // target is behind the locked door
    if !s.carrying_key {
        if s.agent == s.key {
            return GridAction::Pickup;
        }
        return navigate(size, s, &[s.key]).unwrap_or(GridAction::Left);
    }
    let (dx, dy) = (s.door.0, s.door.1);
    let beside = [(dx - 1, dy), (dx + 1, dy), (dx, dy - 1), (dx, dy + 1)];
    if beside.contains(&s.agent) {
        return GridAction::Toggle;
    }
    let open: Vec<_> = beside
        .into_iter()
        .filter(|&c| passable(size, s.door, c, false))
        .collect();
    navigate(size, s, &open).unwrap_or(GridAction::Left)
}

fn toward(from: [f64; 3], to: [f64; 3]) -> [f64; 3] {
    let mut a = [0.0; 3];
    for i in 0..3 {
        a[i] = ((to[i] - from[i]) / MAX_STEP).clamp(-1.0, 1.0);
    }
    a
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn slot3(goal: &[f64], i: usize) -> [f64; 3] {
    [goal[i], goal[i + 1], goal[i + 2]]
}

fn finger_toward(current: f64, target: f64) -> f64 {
    ((target - current) / MAX_STEP).clamp(-1.0, 1.0)
}

fn manip_action(task: ManipTask, placed_tol: f64, s: &ManipState, goal: &[f64]) -> [f64; 4] {
    let pick = task != ManipTask::ChestPush;
    let g = s.gripper;
    let goal_grip = slot3(goal, task.gripper_slot());
    let goal_finger = goal[task.finger_slot()];
    let pack = |xyz: [f64; 3], f: f64| [xyz[0], xyz[1], xyz[2], f];

    // open the chest first when the goal asks for it
    if let (Some(slot), Some(lid)) = (task.lid_slot(), s.lid) {
        if goal[slot] >= LID_OPEN_FRACTION * LID_MAX && lid < LID_MAX - REACHED {
            let f = if s.grasped.is_some() { 1.0 } else { 0.0 };
            let h = s.handle();
            if s.in_handle_box(g) {
                let mut a = toward(g, [h[0], g[1], h[2]]);
                a[1] = -((LID_MAX - lid) / MAX_STEP).min(1.0);
                return pack(a, f);
            }
            // approach from the +y side so the first drag starts inside the box
            let entry = [h[0], h[1] + 0.5 * HANDLE_HALF, h[2]];
            return pack(toward(g, entry), f);
        }
    }

    for i in 0..task.num_blocks() {
        let b = s.blocks[i];
        let target = slot3(goal, 3 * i);
        let placed = dist(b, target) <= placed_tol;
        if placed {
            if s.grasped == Some(i) {
                let hold = dist(goal_grip, b) <= placed_tol && goal_finger <= BLOCK_WIDTH;
                if !hold {
                    return pack([0.0; 3], 1.0);
                }
            }
            continue;
        }
        if !pick {
            // pusher: the block follows the gripper once it is on top of it
            let xy_near = ((b[0] - g[0]).powi(2) + (b[1] - g[1]).powi(2)).sqrt() <= REACHED
                && (g[2] - b[2]).abs() <= REACHED;
            let aim = if xy_near { target } else { b };
            return pack(toward(g, aim), 0.0);
        }
        match s.grasped {
            Some(j) if j == i => return pack(toward(g, target), -1.0),
            Some(_) => return pack([0.0; 3], 1.0),
            None => {
                if dist(g, b) <= REACHED {
                    return pack([0.0; 3], -1.0);
                }
                return pack(toward(g, b), 1.0);
            }
        }
    }

    if !pick {
        return pack(toward(g, goal_grip), 0.0);
    }
    let f = if s.grasped.is_none() && dist(g, goal_grip) > REACHED {
        finger_toward(s.finger, FINGER_MAX)
    } else {
        finger_toward(s.finger, goal_finger)
    };
    pack(toward(g, goal_grip), f)
}
