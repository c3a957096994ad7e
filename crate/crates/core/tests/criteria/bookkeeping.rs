//! Demonstrated-episode splitting on GridDoorKey, checked by replaying each
//! episode's actions and redoing the subgoal switching by hand.

use a2_core::demos::{run_demonstrated_episode, split_on_subgoal, Policy};
use a2_core::envs::expert::Expert;
use a2_core::envs::{make_env, Action, EnvConfig, EnvKind};
use a2_core::exploration::ExploreParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The scripted expert, overridden by a random action with probability
/// `slip` so that episodes stop after varying numbers of subgoals.
struct Sloppy {
    expert: Expert,
    slip: f64,
    actions: usize,
}

impl Policy for Sloppy {
    fn act(
        &mut self,
        obs: &[f64],
        goal: &[f64],
        _: Option<ExploreParams>,
        rng: &mut ChaCha8Rng,
    ) -> a2_core::Result<Action> {
        if rng.random::<f64>() < self.slip {
            Ok(Action::Discrete(rng.random_range(0..self.actions)))
        } else {
            Ok(self.expert.act(obs, goal))
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub struct Report {
    pub episodes: usize,
    /// Episodes by number of trajectories produced (1 to 3).
    pub by_count: [usize; 3],
}

pub fn run(episodes: usize, seed: u64) -> Result<Report, String> {
    let mut env = make_env(EnvKind::Grid15, &EnvConfig::default());
    let mut replay = make_env(EnvKind::Grid15, &EnvConfig::default());
    let n = env.num_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report {
        episodes,
        by_count: [0; 3],
    };
    for e in 0..episodes {
        let slip = [0.0, 0.3, 0.6, 0.9][e % 4];
        let mut policy = Sloppy {
            expert: Expert::for_env(env.as_ref()),
            slip,
            actions: env.action_space().dim(),
        };
        let env_seed: u64 = rng.random();
        let rec = run_demonstrated_episode(&mut policy, env.as_mut(), env_seed, None, &mut rng)
            .map_err(|err| err.to_string())?;
        let trajs = &rec.trajectories;
        let last = trajs.last().ok_or("episode produced no trajectories")?;
        let horizon = replay.horizon();
        ensure(last.len() == horizon, || {
            format!(
                "episode {e}: last trajectory has {} of {horizon} steps",
                last.len()
            )
        })?;

        // replay the actions and switch subgoals independently
        let (_, final_goal) = replay.reset(env_seed);
        let mut idx = 0;
        let mut goal = replay.subgoal(0, &final_goal);
        let mut expected = vec![(0usize, goal.clone())];
        for (t, tr) in last.transitions().iter().enumerate() {
            let step = replay.step(&tr.action).map_err(|err| err.to_string())?;
            ensure(step.observation == tr.next_state, || {
                format!("episode {e}: replay diverges at step {t}")
            })?;
            if idx + 1 < n && replay.goal_space().is_achieved(&step.achieved_goal, &goal) {
                expected.last_mut().expect("non-empty").0 = t + 1;
                idx += 1;
                goal = replay.subgoal(idx, &final_goal);
                expected.push((0, goal.clone()));
            }
        }
        expected.last_mut().expect("non-empty").0 = horizon;
        let before_last = expected.len() - 1;

        ensure(trajs.len() == 1 + before_last, || {
            format!(
                "episode {e}: {} trajectories, expected {}",
                trajs.len(),
                1 + before_last
            )
        })?;
        ensure(
            rec.achieved_at[..n - 1]
                .iter()
                .filter(|a| a.is_some())
                .count()
                == before_last,
            || format!("episode {e}: achieved_at disagrees with the replay"),
        )?;
        for (j, (traj, (len, want_goal))) in trajs.iter().zip(&expected).enumerate() {
            ensure(traj.len() == *len, || {
                format!("episode {e} trajectory {j}: length {} != {len}", traj.len())
            })?;
            for (t, tr) in traj.transitions().iter().enumerate() {
                ensure(tr.desired_goal == *want_goal, || {
                    format!("episode {e} trajectory {j} step {t}: mixed desired goals")
                })?;
                let reward = if env
                    .goal_space()
                    .is_achieved(&tr.achieved_goal_next, want_goal)
                {
                    0.0
                } else {
                    -1.0
                };
                ensure(tr.reward == reward, || {
                    format!("episode {e} trajectory {j} step {t}: reward does not match its goal")
                })?;
                let shared = &last.transitions()[t];
                ensure(
                    tr.timestep == t
                        && tr.action == shared.action
                        && tr.state == shared.state
                        && tr.next_state == shared.next_state
                        && tr.achieved_goal_next == shared.achieved_goal_next,
                    || format!("episode {e} trajectory {j} step {t}: prefix not shared"),
                )?;
            }
        }

        // splitting leaves its source intact
        let source = trajs[0].clone();
        let copy = split_on_subgoal(source.transitions(), &final_goal, env.goal_space())
            .map_err(|err| err.to_string())?;
        ensure(source == trajs[0] && copy.len() == source.len(), || {
            format!("episode {e}: splitting changed its source")
        })?;
        rep.by_count[trajs.len() - 1] += 1;
    }
    Ok(rep)
}
