use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;

use super::{check_batch, debug_check_targets, rewards, AgentConfig, InputCodec};
use crate::envs::Action;
use crate::error::{Error, Result};
use crate::exploration::{argmax, select_discrete, ExploreParams};
use crate::grl::Transition;
use crate::nn::checkpoint::{ByteReader, ByteWriter};
use crate::nn::{Activation, AdamConfig, AdamState, Matrix, NetParams};

/// Goal-conditioned DQN with a hard-synced target network.
#[derive(Debug, Clone)]
pub struct Dqn {
    pub(crate) config: AgentConfig,
    pub(crate) codec: InputCodec,
    online: NetParams,
    target: NetParams,
    adam: AdamState,
    updates: u64,
}

impl Dqn {
    pub fn new(
        config: &AgentConfig,
        obs_dim: usize,
        goal_dim: usize,
        num_actions: usize,
        seed: u64,
    ) -> Result<Self> {
        let codec = InputCodec::new(obs_dim, goal_dim, config);
        let hidden = config.hidden_for(super::AgentKind::Dqn);
        let mut sizes = vec![codec.width()];
        sizes.extend(&hidden);
        sizes.push(num_actions);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Linear);
        let online = NetParams::init(&sizes, &acts, seed)?;
        Ok(Self {
            config: config.clone(),
            codec,
            target: online.clone(),
            adam: AdamState::new(&online, AdamConfig::with_lr(config.lr_critic)),
            online,
            updates: 0,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.online.out_dim()
    }

    pub fn online(&self) -> &NetParams {
        &self.online
    }

    pub fn target(&self) -> &NetParams {
        &self.target
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn q_values(&self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(&self.codec.encode(obs, goal)?)
    }

    pub fn act(
        &self,
        obs: &[f64],
        goal: &[f64],
        explore: Option<ExploreParams>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action> {
        let q = self.q_values(obs, goal)?;
        Ok(Action::Discrete(match explore {
            Some(p) => select_discrete(&q, p.eps, rng),
            None => argmax(&q),
        }))
    }

    /// `clamp(r + gamma * max_a' Q_target(s', g, a'), -1/(1-gamma), 0)`.
    pub fn targets(&self, rewards: &[f64], x_next: &Matrix) -> Result<Vec<f64>> {
        let q_next = self.target.forward_batch(x_next)?;
        let lo = self.config.min_return();
        let y: Vec<f64> = rewards
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let row = q_next.output().row(i);
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (r + self.config.gamma * m).clamp(lo, 0.0)
            })
            .collect();
        debug_check_targets(&y, lo);
        Ok(y)
    }

    /// One gradient step on the mean squared TD error; returns the loss
    /// before the step.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        check_batch(batch)?;
        let n = self.num_actions();
        let actions = batch
            .iter()
            .map(|t| match t.action {
                Action::Discrete(a) if a < n => Ok(a),
                _ => Err(Error::shape("batch holds a non-matching action")),
            })
            .collect::<Result<Vec<_>>>()?;
        let (x, x_next) = self.codec.encode_batch(batch)?;
        let y = self.targets(&rewards(batch), &x_next)?;
        let trace = self.online.forward_batch(&x)?;
        let b = batch.len() as f64;
        let mut grad = Matrix::zeros(batch.len(), n);
        let mut loss = 0.0;
        for (i, (&a, &yi)) in actions.iter().zip(&y).enumerate() {
            let err = trace.output().get(i, a) - yi;
            loss += err * err;
            grad.set(i, a, 2.0 * err / b);
        }
        let (grads, _) = self.online.backward_batch(&trace, &grad, false)?;
        self.adam.step(&mut self.online, &grads)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.config.target_sync as u64) {
            self.target = self.online.clone();
        }
        Ok(loss / b)
    }

    pub(crate) fn write<W: Write>(&self, w: &mut ByteWriter<W>) -> Result<()> {
        self.codec.write(w)?;
        w.net(&self.online)?;
        w.net(&self.target)?;
        w.adam(&self.adam)?;
        w.u64(self.updates)
    }

    pub(crate) fn read<R: Read>(config: AgentConfig, r: &mut ByteReader<R>) -> Result<Self> {
        Ok(Self {
            config,
            codec: InputCodec::read(r)?,
            online: r.net()?,
            target: r.net()?,
            adam: r.adam()?,
            updates: r.u64()?,
        })
    }
}
