use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ddpg::mlp;
use super::{
    check_batch, continuous_actions, read_rng, rewards, write_rng, AgentConfig, AgentKind,
    InputCodec, UpdateStats,
};
use crate::envs::Action;
use crate::error::Result;
use crate::exploration::ExploreParams;
use crate::grl::Transition;
use crate::nn::checkpoint::{ByteReader, ByteWriter};
use crate::nn::{
    clamp_log_std, polyak_update, squashed_gaussian_sample, Activation, AdamConfig, AdamState,
    GradBundle, Matrix, NetParams, ScalarAdam, ACTION_LIMIT, LOG_STD_MAX, LOG_STD_MIN,
};

/// Goal-conditioned soft actor-critic with twin critics and an optionally
/// learned temperature.
#[derive(Debug, Clone)]
pub struct Sac {
    pub(crate) config: AgentConfig,
    pub(crate) codec: InputCodec,
    actor: NetParams,
    q1: NetParams,
    q2: NetParams,
    q1_target: NetParams,
    q2_target: NetParams,
    actor_adam: AdamState,
    q1_adam: AdamState,
    q2_adam: AdamState,
    log_alpha: f64,
    alpha_adam: ScalarAdam,
    /// Reparameterization noise for updates.
    rng: ChaCha8Rng,
}

/// Sampled squashed actions for a batch.
struct PolicyBatch {
    actions: Matrix,
    log_probs: Vec<f64>,
}

impl Sac {
    pub fn new(
        config: &AgentConfig,
        obs_dim: usize,
        goal_dim: usize,
        action_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let codec = InputCodec::new(obs_dim, goal_dim, config);
        let hidden = config.hidden_for(AgentKind::Sac);
        let w = codec.width();
        let actor = mlp(w, &hidden, 2 * action_dim, Activation::Linear, seed)?;
        let q1 = mlp(
            w + action_dim,
            &hidden,
            1,
            Activation::Linear,
            seed.wrapping_add(1),
        )?;
        let q2 = mlp(
            w + action_dim,
            &hidden,
            1,
            Activation::Linear,
            seed.wrapping_add(2),
        )?;
        Ok(Self {
            config: config.clone(),
            codec,
            actor_adam: AdamState::new(&actor, AdamConfig::with_lr(config.lr_actor)),
            q1_adam: AdamState::new(&q1, AdamConfig::with_lr(config.lr_critic)),
            q2_adam: AdamState::new(&q2, AdamConfig::with_lr(config.lr_critic)),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            log_alpha: config.initial_alpha.ln(),
            alpha_adam: ScalarAdam::new(AdamConfig::with_lr(config.lr_alpha)),
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(3)),
        })
    }

    pub fn action_dim(&self) -> usize {
        self.actor.out_dim() / 2
    }

    pub fn actor(&self) -> &NetParams {
        &self.actor
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha.unwrap_or_else(|| self.log_alpha.exp())
    }

    pub fn target_entropy(&self) -> f64 {
        -(self.action_dim() as f64)
    }

    /// Lowest admissible critic target: the most negative return plus the
    /// largest accumulated entropy penalty at the target entropy.
    pub fn target_floor(&self) -> f64 {
        let c_h = self.alpha() * self.action_dim() as f64 / (1.0 - self.config.gamma);
        self.config.min_return() - c_h
    }

    /// `(mean, log_std)` of the pre-squash Gaussian.
    pub fn distribution(&self, obs: &[f64], goal: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut out = self.actor.forward(&self.codec.encode(obs, goal)?)?;
        let log_std = out.split_off(self.action_dim());
        Ok((out, log_std))
    }

    /// Greedy actions are `tanh(mean)`. Exploration samples with the policy's
    /// standard deviation scaled by `explore.sigma`; `eps` is not used.
    pub fn act(
        &self,
        obs: &[f64],
        goal: &[f64],
        explore: Option<ExploreParams>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action> {
        let (mean, log_std) = self.distribution(obs, goal)?;
        let a = match explore {
            None => mean.iter().map(|m| squash(*m)).collect(),
            Some(p) => mean
                .iter()
                .zip(&log_std)
                .map(|(m, ls)| {
                    let e: f64 = StandardNormal.sample(rng);
                    squash(m + p.sigma * clamp_log_std(*ls).exp() * e)
                })
                .collect(),
        };
        Ok(Action::Continuous(a))
    }

    fn sample(&self, trace_out: &Matrix, noise: &Matrix) -> Result<PolicyBatch> {
        let d = self.action_dim();
        let mut actions = Matrix::zeros(noise.rows(), d);
        let mut log_probs = Vec::with_capacity(noise.rows());
        for i in 0..noise.rows() {
            let row = trace_out.row(i);
            let s = squashed_gaussian_sample(&row[..d], &row[d..], noise.row(i))?;
            actions.row_mut(i).copy_from_slice(&s.action);
            log_probs.push(s.log_prob);
        }
        Ok(PolicyBatch { actions, log_probs })
    }

    fn noise(&mut self, rows: usize) -> Matrix {
        let d = self.action_dim();
        let data = (0..rows * d)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect();
        Matrix::from_vec(rows, d, data).expect("noise shape")
    }

    /// Soft targets `r + gamma * (min Q_target(s', a') - alpha * log pi(a'|s'))`
    /// with `a' = tanh(mean + std * noise)`, clipped to
    /// `[target_floor, 0]`.
    pub fn targets(&self, rewards: &[f64], x_next: &Matrix, noise: &Matrix) -> Result<Vec<f64>> {
        let out = self.actor.forward_batch(x_next)?;
        let pb = self.sample(out.output(), noise)?;
        let xa = Matrix::hcat(&[x_next, &pb.actions])?;
        let t1 = self.q1_target.forward_batch(&xa)?;
        let t2 = self.q2_target.forward_batch(&xa)?;
        let alpha = self.alpha();
        let lo = self.target_floor();
        let y: Vec<f64> = (0..rewards.len())
            .map(|i| {
                let q = t1.output().get(i, 0).min(t2.output().get(i, 0));
                (rewards[i] + self.config.gamma * (q - alpha * pb.log_probs[i])).clamp(lo, 0.0)
            })
            .collect();
        debug_assert!(y.iter().all(|v| (lo..=0.0).contains(v)));
        Ok(y)
    }

    /// Actor loss `mean(alpha * log pi(a|s) - min Q(s, a))` under fixed noise,
    /// its parameter gradient and the batch's log-probabilities.
    pub fn actor_gradient(
        &self,
        x: &Matrix,
        noise: &Matrix,
    ) -> Result<(f64, GradBundle, Vec<f64>)> {
        let rows = x.rows();
        let b = rows as f64;
        let d = self.action_dim();
        let w = x.cols();
        let alpha = self.alpha();
        let trace = self.actor.forward_batch(x)?;
        let pb = self.sample(trace.output(), noise)?;
        let xa = Matrix::hcat(&[x, &pb.actions])?;
        let t1 = self.q1.forward_batch(&xa)?;
        let t2 = self.q2.forward_batch(&xa)?;

        // route -1/b through whichever critic attains the minimum
        let mut g1 = Matrix::zeros(rows, 1);
        let mut g2 = Matrix::zeros(rows, 1);
        let mut loss = 0.0;
        for i in 0..rows {
            let (a, c) = (t1.output().get(i, 0), t2.output().get(i, 0));
            if a <= c {
                g1.set(i, 0, -1.0 / b);
            } else {
                g2.set(i, 0, -1.0 / b);
            }
            loss += alpha * pb.log_probs[i] - a.min(c);
        }
        let dq1 = self.q1.input_grad_batch(&t1, &g1)?;
        let dq2 = self.q2.input_grad_batch(&t2, &g2)?;

        let mut dout = Matrix::zeros(rows, 2 * d);
        for i in 0..rows {
            let out = trace.output().row(i);
            for j in 0..d {
                let a = pb.actions.get(i, j);
                // dQ terms already carry the -1/b factor
                let dq_da = dq1.get(i, w + j) + dq2.get(i, w + j);
                let du = alpha * 2.0 * a / b + dq_da * (1.0 - a * a);
                let ls = out[d + j];
                let dls = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&ls) {
                    du * ls.exp() * noise.get(i, j) - alpha / b
                } else {
                    0.0
                };
                dout.set(i, j, du);
                dout.set(i, d + j, dls);
            }
        }
        let (grads, _) = self.actor.backward_batch(&trace, &dout, false)?;
        Ok((loss / b, grads, pb.log_probs))
    }

    fn critic_step(
        net: &mut NetParams,
        adam: &mut AdamState,
        xa: &Matrix,
        y: &[f64],
    ) -> Result<f64> {
        let b = y.len() as f64;
        let trace = net.forward_batch(xa)?;
        let mut dq = Matrix::zeros(y.len(), 1);
        let mut loss = 0.0;
        for (i, (&q, &yi)) in trace.output().data().iter().zip(y).enumerate() {
            let err = q - yi;
            loss += err * err;
            dq.set(i, 0, 2.0 * err / b);
        }
        let (grads, _) = net.backward_batch(&trace, &dq, false)?;
        adam.step(net, &grads)?;
        Ok(loss / b)
    }

    pub fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        check_batch(batch)?;
        let actions = continuous_actions(batch, self.action_dim())?;
        let (x, x_next) = self.codec.encode_batch(batch)?;
        let noise = self.noise(batch.len());
        let y = self.targets(&rewards(batch), &x_next, &noise)?;

        let xa = Matrix::hcat(&[&x, &actions])?;
        let l1 = Self::critic_step(&mut self.q1, &mut self.q1_adam, &xa, &y)?;
        let l2 = Self::critic_step(&mut self.q2, &mut self.q2_adam, &xa, &y)?;

        let noise = self.noise(batch.len());
        let (actor_loss, grads, log_probs) = self.actor_gradient(&x, &noise)?;
        self.actor_adam.step(&mut self.actor, &grads)?;

        let mut alpha_loss = None;
        if self.config.alpha.is_none() {
            let h = self.target_entropy();
            let m = log_probs.iter().map(|lp| lp + h).sum::<f64>() / log_probs.len() as f64;
            alpha_loss = Some(-self.log_alpha * m);
            self.alpha_adam.step(&mut self.log_alpha, -m)?;
        }

        polyak_update(&mut self.q1_target, &self.q1, self.config.polyak)?;
        polyak_update(&mut self.q2_target, &self.q2, self.config.polyak)?;
        Ok(UpdateStats {
            critic_loss: 0.5 * (l1 + l2),
            actor_loss: Some(actor_loss),
            alpha_loss,
            alpha: Some(self.alpha()),
        })
    }

    pub(crate) fn write<W: Write>(&self, w: &mut ByteWriter<W>) -> Result<()> {
        self.codec.write(w)?;
        for n in [
            &self.actor,
            &self.q1,
            &self.q2,
            &self.q1_target,
            &self.q2_target,
        ] {
            w.net(n)?;
        }
        for a in [&self.actor_adam, &self.q1_adam, &self.q2_adam] {
            w.adam(a)?;
        }
        w.f64(self.log_alpha)?;
        let s = &self.alpha_adam;
        w.f64s(&[
            s.config.lr,
            s.config.beta1,
            s.config.beta2,
            s.config.eps,
            s.m,
            s.v,
        ])?;
        w.u64(s.step)?;
        write_rng(w, &self.rng)
    }

    pub(crate) fn read<R: Read>(config: AgentConfig, r: &mut ByteReader<R>) -> Result<Self> {
        let codec = InputCodec::read(r)?;
        let actor = r.net()?;
        let q1 = r.net()?;
        let q2 = r.net()?;
        let q1_target = r.net()?;
        let q2_target = r.net()?;
        let actor_adam = r.adam()?;
        let q1_adam = r.adam()?;
        let q2_adam = r.adam()?;
        let log_alpha = r.f64()?;
        let v = r.f64s(6)?;
        let alpha_adam = ScalarAdam {
            config: AdamConfig {
                lr: v[0],
                beta1: v[1],
                beta2: v[2],
                eps: v[3],
            },
            m: v[4],
            v: v[5],
            step: r.u64()?,
        };
        Ok(Self {
            config,
            codec,
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            actor_adam,
            q1_adam,
            q2_adam,
            log_alpha,
            alpha_adam,
            rng: read_rng(r)?,
        })
    }
}

fn squash(u: f64) -> f64 {
    u.tanh().clamp(-ACTION_LIMIT, ACTION_LIMIT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Goal;
    use rand::Rng;

    fn small() -> AgentConfig {
        AgentConfig {
            hidden: Some(vec![16, 16]),
            normalize: false,
            ..AgentConfig::default()
        }
    }

    fn batch_data(n: usize, seed: u64) -> Vec<Transition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s: f64 = rng.random_range(-1.0..1.0);
                Transition {
                    state: vec![s].into(),
                    action: Action::Continuous(vec![rng.random_range(-0.9..0.9)]),
                    reward: if s > 0.4 { 0.0 } else { -1.0 },
                    next_state: vec![s + 0.05].into(),
                    desired_goal: Goal::new(vec![0.5]),
                    achieved_goal_next: Goal::new(vec![s + 0.05]),
                    timestep: 0,
                }
            })
            .collect()
    }

    #[test]
    fn network_shapes() {
        let s = Sac::new(&AgentConfig::default(), 12, 10, 4, 0).unwrap();
        let dims: Vec<_> = s.actor().layers().iter().map(|l| l.out_dim()).collect();
        assert_eq!(dims, vec![256, 256, 256, 8]);
        assert_eq!(s.q1.in_dim(), 26);
        assert_eq!(s.target_entropy(), -4.0);
        assert!((s.alpha() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_temperature_targets_are_plain_twin_minimum() {
        let cfg = AgentConfig {
            alpha: Some(0.0),
            ..small()
        };
        let s = Sac::new(&cfg, 1, 1, 2, 4).unwrap();
        assert!((s.target_floor() - -50.0).abs() < 1e-9);
        let x_next = Matrix::from_rows(&[[0.2, 0.5], [-0.4, 0.1]]).unwrap();
        let noise = Matrix::from_rows(&[[0.3, -1.2], [0.0, 0.7]]).unwrap();
        let r = [-1.0, 0.0];
        let y = s.targets(&r, &x_next, &noise).unwrap();
        for i in 0..2 {
            let out = s.actor.forward(x_next.row(i)).unwrap();
            let a: Vec<f64> = (0..2)
                .map(|j| (out[j] + out[2 + j].clamp(-20.0, 2.0).exp() * noise.get(i, j)).tanh())
                .collect();
            let mut xa = x_next.row(i).to_vec();
            xa.extend(&a);
            let q = s.q1_target.forward(&xa).unwrap()[0].min(s.q2_target.forward(&xa).unwrap()[0]);
            let want = (r[i] + 0.98 * q).clamp(-50.0, 0.0);
            assert!((y[i] - want).abs() < 1e-12, "{} vs {want}", y[i]);
        }
    }

    #[test]
    fn floor_includes_entropy_allowance() {
        let cfg = AgentConfig {
            alpha: Some(0.2),
            ..small()
        };
        let s = Sac::new(&cfg, 1, 1, 3, 0).unwrap();
        // -50 - 0.2 * 3 / 0.02
        assert!((s.target_floor() - -80.0).abs() < 1e-9);
    }

    #[test]
    fn unit_gaussian_squashed_entropy() {
        // E[-log p] for a = tanh(u), u ~ N(0, 1), by quadrature
        let n = 20_000;
        let (lo, hi) = (-10.0f64, 10.0f64);
        let h = (hi - lo) / n as f64;
        let mut jac = 0.0;
        for k in 0..=n {
            let u = lo + k as f64 * h;
            let wgt = if k == 0 || k == n { 0.5 } else { 1.0 };
            let pdf = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
            jac += wgt * h * pdf * (1.0 - u.tanh().powi(2)).ln();
        }
        let exact = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + jac;

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 200_000;
        let mut acc = 0.0;
        for _ in 0..m {
            let e: f64 = StandardNormal.sample(&mut rng);
            acc -= squashed_gaussian_sample(&[0.0], &[0.0], &[e])
                .unwrap()
                .log_prob;
        }
        let mc = acc / m as f64;
        assert!(
            (mc - exact).abs() <= 0.01 * exact.abs(),
            "mc {mc} exact {exact}"
        );
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let s = Sac::new(&small(), 1, 1, 2, 9).unwrap();
        let x = Matrix::from_rows(&[[0.3, 0.5], [-0.7, 0.5], [0.1, -0.2]]).unwrap();
        let noise = Matrix::from_rows(&[[0.4, -0.3], [1.1, 0.2], [-0.8, -1.5]]).unwrap();
        let (_, grads, _) = s.actor_gradient(&x, &noise).unwrap();
        let loss = |actor: &NetParams| {
            let mut probe = s.clone();
            probe.actor = actor.clone();
            probe.actor_gradient(&x, &noise).unwrap().0
        };
        let h = 1e-6;
        for (li, layer) in s.actor().layers().iter().enumerate() {
            for k in (0..layer.weights().len()).step_by(3) {
                let mut p = s.actor().clone();
                p.layers_mut()[li].weights_mut()[k] += h;
                let up = loss(&p);
                p.layers_mut()[li].weights_mut()[k] -= 2.0 * h;
                let fd = (up - loss(&p)) / (2.0 * h);
                let an = grads.layers[li].weights[k];
                assert!(
                    (fd - an).abs() <= 1e-6 + 1e-4 * fd.abs().max(an.abs()),
                    "layer {li} weight {k}: fd {fd} analytic {an}"
                );
            }
            for k in 0..layer.bias().len() {
                let mut p = s.actor().clone();
                p.layers_mut()[li].bias_mut()[k] += h;
                let up = loss(&p);
                p.layers_mut()[li].bias_mut()[k] -= 2.0 * h;
                let fd = (up - loss(&p)) / (2.0 * h);
                let an = grads.layers[li].bias[k];
                assert!((fd - an).abs() <= 1e-6 + 1e-4 * fd.abs().max(an.abs()));
            }
        }
    }

    #[test]
    fn critics_overfit_fixed_batch() {
        let cfg = AgentConfig {
            lr_critic: 1e-2,
            ..small()
        };
        let mut s = Sac::new(&cfg, 1, 1, 1, 1).unwrap();
        let data = batch_data(32, 1);
        let batch: Vec<&Transition> = data.iter().collect();
        let first = s.update(&batch).unwrap().critic_loss;
        let mut last = first;
        for _ in 0..199 {
            last = s.update(&batch).unwrap().critic_loss;
        }
        assert!(last * 10.0 <= first, "critic loss {first} -> {last}");
    }

    #[test]
    fn temperature_follows_entropy_gap() {
        let mut s = Sac::new(&small(), 1, 1, 1, 2).unwrap();
        let data = batch_data(64, 2);
        let batch: Vec<&Transition> = data.iter().collect();
        // a fresh policy has std near 1, well above the -1 nats target
        let before = s.alpha();
        let stats = s.update(&batch).unwrap();
        assert!(stats.alpha.unwrap() < before);
        assert!(stats.alpha_loss.is_some());

        let mut fixed = Sac::new(
            &AgentConfig {
                alpha: Some(0.3),
                ..small()
            },
            1,
            1,
            1,
            2,
        )
        .unwrap();
        let stats = fixed.update(&batch).unwrap();
        assert_eq!(stats.alpha, Some(0.3));
        assert_eq!(stats.alpha_loss, None);
    }

    #[test]
    fn zero_scale_exploration_is_greedy() {
        let s = Sac::new(&small(), 1, 1, 3, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = s.act(&[0.2], &[0.1], None, &mut rng).unwrap();
        let e = s
            .act(
                &[0.2],
                &[0.1],
                Some(ExploreParams {
                    eps: 0.0,
                    sigma: 0.0,
                }),
                &mut rng,
            )
            .unwrap();
        assert_eq!(g, e);
        let noisy = s
            .act(
                &[0.2],
                &[0.1],
                Some(ExploreParams {
                    eps: 0.0,
                    sigma: 1.0,
                }),
                &mut rng,
            )
            .unwrap();
        assert_ne!(g, noisy);
        match noisy {
            Action::Continuous(v) => assert!(v.iter().all(|a| a.abs() < 1.0)),
            _ => panic!("discrete action from sac"),
        }
    }
}
