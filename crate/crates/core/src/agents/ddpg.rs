use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;

use super::{
    check_batch, continuous_actions, debug_check_targets, rewards, AgentConfig, AgentKind,
    InputCodec,
};
use crate::envs::Action;
use crate::error::Result;
use crate::exploration::{select_continuous, ExploreParams};
use crate::grl::Transition;
use crate::nn::checkpoint::{ByteReader, ByteWriter};
use crate::nn::{polyak_update, Activation, AdamConfig, AdamState, GradBundle, Matrix, NetParams};

/// Goal-conditioned DDPG: deterministic tanh actor and a Q critic over
/// `[state, goal, action]`.
#[derive(Debug, Clone)]
pub struct Ddpg {
    pub(crate) config: AgentConfig,
    pub(crate) codec: InputCodec,
    actor: NetParams,
    critic: NetParams,
    actor_target: NetParams,
    critic_target: NetParams,
    actor_adam: AdamState,
    critic_adam: AdamState,
}

pub(crate) fn mlp(
    input: usize,
    hidden: &[usize],
    output: usize,
    head: Activation,
    seed: u64,
) -> Result<NetParams> {
    let mut sizes = vec![input];
    sizes.extend(hidden);
    sizes.push(output);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(head);
    NetParams::init(&sizes, &acts, seed)
}

impl Ddpg {
    pub fn new(
        config: &AgentConfig,
        obs_dim: usize,
        goal_dim: usize,
        action_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let codec = InputCodec::new(obs_dim, goal_dim, config);
        let hidden = config.hidden_for(AgentKind::Ddpg);
        let w = codec.width();
        let actor = mlp(w, &hidden, action_dim, Activation::Tanh, seed)?;
        let critic = mlp(
            w + action_dim,
            &hidden,
            1,
            Activation::Linear,
            seed.wrapping_add(1),
        )?;
        Ok(Self {
            config: config.clone(),
            codec,
            actor_adam: AdamState::new(&actor, AdamConfig::with_lr(config.lr_actor)),
            critic_adam: AdamState::new(&critic, AdamConfig::with_lr(config.lr_critic)),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.actor.out_dim()
    }

    pub fn actor(&self) -> &NetParams {
        &self.actor
    }

    pub fn critic(&self) -> &NetParams {
        &self.critic
    }

    pub fn actor_mut(&mut self) -> &mut NetParams {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut NetParams {
        &mut self.critic
    }

    pub fn policy_action(&self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(&self.codec.encode(obs, goal)?)
    }

    pub fn act(
        &self,
        obs: &[f64],
        goal: &[f64],
        explore: Option<ExploreParams>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action> {
        let a = self.policy_action(obs, goal)?;
        Ok(Action::Continuous(match explore {
            Some(p) => select_continuous(&a, p.eps, p.sigma, rng),
            None => a,
        }))
    }

    /// `clamp(r + gamma * Q_target(s', g, pi_target(s', g)), -1/(1-gamma), 0)`.
    pub fn targets(&self, rewards: &[f64], x_next: &Matrix) -> Result<Vec<f64>> {
        let a_next = self.actor_target.forward_batch(x_next)?;
        let q_next = self
            .critic_target
            .forward_batch(&Matrix::hcat(&[x_next, a_next.output()])?)?;
        let lo = self.config.min_return();
        let y: Vec<f64> = rewards
            .iter()
            .zip(q_next.output().data())
            .map(|(r, q)| (r + self.config.gamma * q).clamp(lo, 0.0))
            .collect();
        debug_check_targets(&y, lo);
        Ok(y)
    }

    /// Actor loss `-mean Q(s, g, pi(s, g)) + action_l2 * mean(pi^2)` and its
    /// gradient with respect to the actor parameters.
    pub fn actor_gradient(&self, x: &Matrix) -> Result<(f64, GradBundle)> {
        let b = x.rows() as f64;
        let d = self.action_dim();
        let pi = self.actor.forward_batch(x)?;
        let xa = Matrix::hcat(&[x, pi.output()])?;
        let q = self.critic.forward_batch(&xa)?;
        let dq = Matrix::from_vec(x.rows(), 1, vec![-1.0 / b; x.rows()])?;
        let dxa = self.critic.input_grad_batch(&q, &dq)?;
        let w = x.cols();
        let l2 = self.config.action_l2;
        let scale = 1.0 / (b * d as f64);
        let mut dpi = dxa.columns(w, d);
        let mut penalty = 0.0;
        for (g, &a) in dpi.data_mut().iter_mut().zip(pi.output().data()) {
            *g += l2 * 2.0 * a * scale;
            penalty += a * a;
        }
        let loss = -q.output().data().iter().sum::<f64>() / b + l2 * penalty * scale;
        let (grads, _) = self.actor.backward_batch(&pi, &dpi, false)?;
        Ok((loss, grads))
    }

    /// One critic step, one actor step, then polyak target updates. Returns
    /// `(critic_loss, actor_loss)` before the steps.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<(f64, f64)> {
        check_batch(batch)?;
        let actions = continuous_actions(batch, self.action_dim())?;
        let (x, x_next) = self.codec.encode_batch(batch)?;
        let y = self.targets(&rewards(batch), &x_next)?;

        let b = batch.len() as f64;
        let trace = self.critic.forward_batch(&Matrix::hcat(&[&x, &actions])?)?;
        let mut dq = Matrix::zeros(batch.len(), 1);
        let mut critic_loss = 0.0;
        for (i, (&q, &yi)) in trace.output().data().iter().zip(&y).enumerate() {
            let err = q - yi;
            critic_loss += err * err;
            dq.set(i, 0, 2.0 * err / b);
        }
        let (grads, _) = self.critic.backward_batch(&trace, &dq, false)?;
        self.critic_adam.step(&mut self.critic, &grads)?;

        let (actor_loss, grads) = self.actor_gradient(&x)?;
        self.actor_adam.step(&mut self.actor, &grads)?;

        polyak_update(&mut self.critic_target, &self.critic, self.config.polyak)?;
        polyak_update(&mut self.actor_target, &self.actor, self.config.polyak)?;
        Ok((critic_loss / b, actor_loss))
    }

    pub(crate) fn write<W: Write>(&self, w: &mut ByteWriter<W>) -> Result<()> {
        self.codec.write(w)?;
        for n in [
            &self.actor,
            &self.critic,
            &self.actor_target,
            &self.critic_target,
        ] {
            w.net(n)?;
        }
        w.adam(&self.actor_adam)?;
        w.adam(&self.critic_adam)
    }

    pub(crate) fn read<R: Read>(config: AgentConfig, r: &mut ByteReader<R>) -> Result<Self> {
        Ok(Self {
            config,
            codec: InputCodec::read(r)?,
            actor: r.net()?,
            critic: r.net()?,
            actor_target: r.net()?,
            critic_target: r.net()?,
            actor_adam: r.adam()?,
            critic_adam: r.adam()?,
        })
    }
}
