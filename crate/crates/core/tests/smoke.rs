//! Untrained and random policies run through the evaluation paths without
//! error and score near zero.

use a2_core::demos::{run_plain_episode, RandomPolicy};
use a2_core::envs::{make_env, EnvConfig, EnvKind};
use a2_core::harness::{build_agent, evaluate_final, evaluate_steps, ExperimentConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_policy_on_grid15() {
    let mut env = make_env(EnvKind::Grid15, &EnvConfig::default());
    let mut policy = RandomPolicy(env.action_space());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut successes = 0;
    for seed in 0..100 {
        let rec = run_plain_episode(&mut policy, env.as_mut(), seed, None, &mut rng).unwrap();
        assert_eq!(rec.steps, env.horizon());
        successes += usize::from(rec.final_success);
    }
    assert!(successes <= 10, "{successes} random successes");
}

#[test]
fn random_policy_rarely_gets_past_the_door_on_grid35() {
    let mut env = make_env(EnvKind::Grid35, &EnvConfig::default());
    let mut policy = RandomPolicy(env.action_space());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = evaluate_steps(&mut policy, env.as_mut(), 50, &mut rng).unwrap();
    assert_eq!(s.len(), 3);
    assert!(s[1] <= 0.1 && s[2] <= 0.1, "{s:?}");
}

#[test]
fn untrained_agent_on_grid25() {
    let cfg = ExperimentConfig {
        env: EnvKind::Grid25,
        ..ExperimentConfig::default()
    };
    let mut env = make_env(cfg.env, &cfg.environment);
    let mut agent = build_agent(&cfg, env.as_ref(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert!(evaluate_final(&mut agent, env.as_mut(), 20, &mut rng).unwrap() <= 0.1);
}
