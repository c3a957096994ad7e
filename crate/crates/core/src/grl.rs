//! Transitions, trajectories, hindsight relabelling and the replay buffer.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng;

use crate::envs::{Action, Goal, Obs, RewardFn};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{ByteReader, ByteWriter};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Obs,
    pub action: Action,
    pub reward: f64,
    pub next_state: Obs,
    pub desired_goal: Goal,
    /// `m(next_state)`.
    pub achieved_goal_next: Goal,
    /// Index of `state` within its episode.
    pub timestep: usize,
}

impl Transition {
    /// Copy of this transition pursuing `goal`, with the reward recomputed.
    pub fn relabel(&self, goal: Goal, reward_fn: &dyn RewardFn) -> Transition {
        Transition {
            reward: reward_fn.reward(&self.achieved_goal_next, &goal),
            desired_goal: goal,
            ..self.clone()
        }
    }
}

/// Consecutive transitions sharing one desired goal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks the single-goal and consecutive-timestep invariants.
    pub fn from_transitions(transitions: Vec<Transition>) -> Result<Self> {
        let traj = Self { transitions };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.transitions.first() else {
            return Ok(());
        };
        for (i, t) in self.transitions.iter().enumerate() {
            if t.desired_goal != first.desired_goal {
                return Err(Error::invalid(format!(
                    "transition {i} has a different desired goal"
                )));
            }
            if t.timestep != first.timestep + i {
                return Err(Error::invalid(format!(
                    "transition {i} has timestep {} after start {}",
                    t.timestep, first.timestep
                )));
            }
        }
        Ok(())
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn into_transitions(self) -> Vec<Transition> {
        self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn desired_goal(&self) -> Option<&Goal> {
        self.transitions.first().map(|t| &t.desired_goal)
    }
}

/// Hindsight expansion with the `future` strategy.
///
/// Returns the original transitions followed by `k` relabelled copies of each
/// transition `t` that has a future, in `(t, copy)` order. A copy takes the
/// goal achieved at state index `t'` drawn uniformly from `t+1 ..= L-1`
/// (that is, `transitions[t'-1].achieved_goal_next`), so `t' = t+1` gives the
/// copy its own achieved goal. The last transition gets no copies.
pub fn her_expand<R: Rng + ?Sized>(
    traj: &Trajectory,
    k: usize,
    reward_fn: &dyn RewardFn,
    rng: &mut R,
) -> Vec<Transition> {
    let ts = traj.transitions();
    let len = ts.len();
    let mut out = Vec::with_capacity(len + k * len.saturating_sub(1));
    out.extend_from_slice(ts);
    for (t, tr) in ts.iter().enumerate() {
        if t + 1 >= len {
            break;
        }
        for _ in 0..k {
            let future = rng.random_range(t + 1..len);
            let goal = ts[future - 1].achieved_goal_next.clone();
            out.push(tr.relabel(goal, reward_fn));
        }
    }
    out
}

pub const DEFAULT_CAPACITY: usize = 1_000_000;
const REPLAY_MAGIC: &[u8; 8] = b"A2RPL001";

/// FIFO replay memory; eviction drops whole stored trajectories.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: VecDeque<Transition>,
    /// Number of stored transitions per trajectory, oldest first.
    chunks: VecDeque<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            data: VecDeque::new(),
            chunks: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.data.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.data.get(i)
    }

    /// Expands `traj` with hindsight copies and stores the result as one
    /// chunk, evicting the oldest chunks to stay within capacity.
    pub fn store_trajectory<R: Rng + ?Sized>(
        &mut self,
        traj: &Trajectory,
        k: usize,
        reward_fn: &dyn RewardFn,
        rng: &mut R,
    ) -> Result<usize> {
        traj.validate()?;
        if traj.is_empty() {
            return Ok(0);
        }
        let expanded = her_expand(traj, k, reward_fn, rng);
        self.push_chunk(expanded)
    }

    fn push_chunk(&mut self, chunk: Vec<Transition>) -> Result<usize> {
        let n = chunk.len();
        if n > self.capacity {
            return Err(Error::invalid(format!(
                "trajectory expands to {n} transitions, more than capacity {}",
                self.capacity
            )));
        }
        while self.data.len() + n > self.capacity {
            let old = self
                .chunks
                .pop_front()
                .expect("non-empty when over capacity");
            self.data.drain(..old);
        }
        self.data.extend(chunk);
        self.chunks.push_back(n);
        Ok(n)
    }

    /// Uniform sample with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.data.len() < batch_size {
            return Err(Error::invalid(format!(
                "buffer holds {} transitions, batch needs {batch_size}",
                self.data.len()
            )));
        }
        Ok((0..batch_size)
            .map(|_| &self.data[rng.random_range(0..self.data.len())])
            .collect())
    }

    pub fn dump<W: Write>(&self, w: &mut ByteWriter<W>) -> Result<()> {
        w.bytes(REPLAY_MAGIC)?;
        w.u64(self.capacity as u64)?;
        w.len(self.chunks.len())?;
        for &c in &self.chunks {
            w.len(c)?;
        }
        for t in &self.data {
            w.vec(&t.state)?;
            match &t.action {
                Action::Discrete(a) => {
                    w.u8(0)?;
                    w.u64(*a as u64)?;
                }
                Action::Continuous(v) => {
                    w.u8(1)?;
                    w.vec(v)?;
                }
            }
            w.f64(t.reward)?;
            w.vec(&t.next_state)?;
            w.vec(&t.desired_goal)?;
            w.vec(&t.achieved_goal_next)?;
            w.u64(t.timestep as u64)?;
        }
        Ok(())
    }

    pub fn restore<R: Read>(r: &mut ByteReader<R>) -> Result<Self> {
        r.expect_magic(REPLAY_MAGIC)?;
        let capacity = r.u64()? as usize;
        let mut buf = Self::new(capacity)?;
        let n_chunks = r.length()?;
        let chunks = (0..n_chunks)
            .map(|_| r.length())
            .collect::<Result<Vec<_>>>()?;
        for c in chunks {
            let mut chunk = Vec::with_capacity(c);
            for _ in 0..c {
                let state: Obs = r.vec()?.into();
                let action = match r.u8()? {
                    0 => Action::Discrete(r.u64()? as usize),
                    1 => Action::Continuous(r.vec()?),
                    tag => return Err(Error::Checkpoint(format!("unknown action tag {tag}"))),
                };
                chunk.push(Transition {
                    state,
                    action,
                    reward: r.f64()?,
                    next_state: r.vec()?.into(),
                    desired_goal: r.vec()?.into(),
                    achieved_goal_next: r.vec()?.into(),
                    timestep: r.u64()? as usize,
                });
            }
            buf.push_chunk(chunk)?;
        }
        Ok(buf)
    }
}
