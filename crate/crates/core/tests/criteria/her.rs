//! Hindsight expansion against a transcription of the `future` strategy
//! that draws from an identically seeded generator.

use a2_core::envs::{Action, Goal, GoalSlice, GoalSpace};
use a2_core::grl::{her_expand, Trajectory, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: usize = 4;

fn slices() -> Vec<(usize, usize, f64)> {
    vec![(0, 2, 0.1), (2, 1, 0.0)]
}

fn oracle_reward(achieved: &[f64], desired: &[f64]) -> f64 {
    for (start, len, tol) in slices() {
        let mut d2 = 0.0;
        for i in start..start + len {
            d2 += (achieved[i] - desired[i]).powi(2);
        }
        let hit = if tol == 0.0 {
            d2 == 0.0
        } else {
            d2.sqrt() <= tol
        };
        if !hit {
            return -1.0;
        }
    }
    0.0
}

fn goal_space() -> GoalSpace {
    let s = slices()
        .into_iter()
        .map(|(start, len, tolerance)| GoalSlice {
            start,
            len,
            tolerance,
        })
        .collect();
    GoalSpace::new(3, s).expect("tiles")
}

fn random_goal(rng: &mut ChaCha8Rng) -> Vec<f64> {
    // coarse values so that exact and within-tolerance matches occur
    (0..3)
        .map(|_| rng.random_range(0..4) as f64 * 0.06)
        .collect()
}

fn synthetic(rng: &mut ChaCha8Rng) -> Trajectory {
    let len = rng.random_range(1..=10);
    let desired = Goal::new(random_goal(rng));
    let mut state: Vec<f64> = vec![rng.random(), rng.random()];
    let transitions = (0..len)
        .map(|t| {
            let next: Vec<f64> = state
                .iter()
                .map(|s| s + rng.random_range(-0.1..0.1))
                .collect();
            let achieved = random_goal(rng);
            let tr = Transition {
                state: state.clone().into(),
                action: Action::Discrete(rng.random_range(0..3)),
                reward: oracle_reward(&achieved, &desired),
                next_state: next.clone().into(),
                desired_goal: desired.clone(),
                achieved_goal_next: Goal::new(achieved),
                timestep: t,
            };
            state = next;
            tr
        })
        .collect();
    Trajectory::from_transitions(transitions).expect("synthetic trajectory is valid")
}

/// Expected output: originals, then for every transition with a future,
/// `K` copies whose goal is the achieved goal at a uniformly drawn later
/// state index.
fn brute_force(traj: &Trajectory, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    let ts = traj.transitions();
    let mut out: Vec<Transition> = ts.to_vec();
    for t in 0..ts.len() {
        if t == ts.len() - 1 {
            break;
        }
        for _ in 0..K {
            let state_index = rng.random_range(t + 1..ts.len());
            let goal = ts[state_index - 1].achieved_goal_next.clone();
            let mut copy = ts[t].clone();
            copy.reward = oracle_reward(&copy.achieved_goal_next, &goal);
            copy.desired_goal = goal;
            out.push(copy);
        }
    }
    out
}

pub struct Report {
    pub trajectories: usize,
    pub transitions: usize,
    pub successes: usize,
}

pub fn run(trajectories: usize, seed: u64) -> Result<Report, String> {
    let space = goal_space();
    let mut gen = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report {
        trajectories,
        transitions: 0,
        successes: 0,
    };
    for n in 0..trajectories {
        let traj = synthetic(&mut gen);
        let stream: u64 = gen.random();
        let got = her_expand(&traj, K, &space, &mut ChaCha8Rng::seed_from_u64(stream));
        let want = brute_force(&traj, &mut ChaCha8Rng::seed_from_u64(stream));
        let expected_len = traj.len() + K * (traj.len() - 1);
        if got.len() != expected_len || want.len() != expected_len {
            return Err(format!(
                "trajectory {n}: {} transitions, oracle {}, expected {expected_len}",
                got.len(),
                want.len()
            ));
        }
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            if g != w {
                return Err(format!(
                    "trajectory {n} transition {i}: {g:?} != oracle {w:?}"
                ));
            }
            if g.reward != oracle_reward(&g.achieved_goal_next, &g.desired_goal) {
                return Err(format!(
                    "trajectory {n} transition {i}: reward not derivable from goals"
                ));
            }
            rep.successes += usize::from(g.reward == 0.0);
        }
        rep.transitions += got.len();
    }
    Ok(rep)
}
