use oranguide_core::numerics::{squashed_log_prob, Adam, AdamConfig, Graph, Mlp, Tensor};
use oranguide_core::sac::{update_prompts, Batch, CentralCritic, ReplayBuffer, SacAgent, SacConfig, Transition};
use oranguide_core::srm::{DomainTelemetry, EncoderConfig, Srm, SrmConfig, SrmWiring};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SD: usize = 4;
const AD: usize = 3;
const N: usize = 2;

fn cfg() -> SacConfig {
    SacConfig {
        actor_hidden: vec![12, 12],
        critic_hidden: vec![12, 12],
        ..SacConfig::default()
    }
}

fn batch(rng: &mut ChaCha8Rng, b: usize) -> Batch {
    let mut t = |r, c| Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    Batch {
        states: t(b, N * SD),
        actions: t(b, N * AD),
        rewards: vec![0.0; b],
        next_states: t(b, N * SD),
        dones: vec![false; b],
    }
}

fn zero_critic(c: &SacConfig) -> CentralCritic {
    let mut critic = CentralCritic::new(N * SD, N * AD, c, &mut ChaCha8Rng::seed_from_u64(0));
    critic.q = Mlp::zeros("critic", &critic.q.widths());
    critic.target = critic.q.duplicate();
    critic
}

fn local(t: &Tensor, i: usize) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..t.rows()).map(|r| t.row_slice(r)[i * SD..(i + 1) * SD].to_vec()).collect();
    Tensor::from_rows(&rows).unwrap()
}

fn noise(rng: &mut ChaCha8Rng, b: usize) -> Tensor {
    Tensor::new(vec![b, AD], (0..b * AD).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// `mean(w·log π)` evaluated without the tape, for a fixed noise draw.
fn entropy_loss(agent: &SacAgent, states: &Tensor, eps: &Tensor, w: f64) -> f64 {
    let (mean, log_std) = agent.head(states).unwrap();
    let mut total = 0.0;
    for r in 0..states.rows() {
        let u: Vec<f64> = (0..AD)
            .map(|c| mean.get(r, c) + log_std.get(r, c).exp() * eps.get(r, c))
            .collect();
        total += w * squashed_log_prob(&u, mean.row_slice(r), log_std.row_slice(r), agent.action_scale());
    }
    total / states.rows() as f64
}

#[test]
fn constant_critic_leaves_only_the_entropy_gradient() {
    let c = cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let critic = zero_critic(&c);
    let b = batch(&mut rng, 6);
    let mut agent = SacAgent::new(0, SD, AD, &c, &mut rng);
    let states = local(&b.states, 0);
    let eps = noise(&mut rng, 6);
    let w = oranguide_core::sac::entropy_weight(&c, AD);

    let mut g = Graph::new();
    let s = g.constant(states.clone());
    let (act, logp) = agent
        .policy_on_tape(&mut g, s, &eps, oranguide_core::numerics::Binding::Trainable)
        .unwrap();
    let other = g.constant(Tensor::zeros(&[6, AD]));
    let joint = g.concat_cols(&[act, other]).unwrap();
    let all = g.constant(b.states.clone());
    let q = critic
        .q_on_tape(&mut g, all, joint, oranguide_core::numerics::Binding::Frozen)
        .unwrap();
    let ent = g.scale(logp, w);
    let per = g.sub(ent, q).unwrap();
    let loss = g.mean(per);
    g.backward(loss).unwrap();
    let grads: Vec<Tensor> = agent.actor.params().map(|p| g.param_grad(p).unwrap().clone()).collect();

    for _ in 0..30 {
        let pi = rng.random_range(0..grads.len());
        let j = rng.random_range(0..grads[pi].len());
        let orig = agent.actor.params_mut()[pi].value.data()[j];
        agent.actor.params_mut()[pi].value.data_mut()[j] = orig + 1e-5;
        let up = entropy_loss(&agent, &states, &eps, w);
        agent.actor.params_mut()[pi].value.data_mut()[j] = orig - 1e-5;
        let down = entropy_loss(&agent, &states, &eps, w);
        agent.actor.params_mut()[pi].value.data_mut()[j] = orig;
        let fd = (up - down) / 2e-5;
        let an = grads[pi].data()[j];
        assert!((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6) < 1e-4, "{} vs {}", an, fd);
    }
}

#[test]
fn large_entropy_weight_widens_the_policy() {
    let c = SacConfig {
        beta: 1e3,
        entropy_per_dim: false,
        lr_actor: 1e-2,
        ..cfg()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let critic = CentralCritic::new(N * SD, N * AD, &c, &mut rng);
    let mut agent = SacAgent::new(0, SD, AD, &c, &mut rng);
    {
        let mut params = agent.actor.params_mut();
        let bias = params.last_mut().unwrap();
        for v in &mut bias.value.data_mut()[AD..] {
            *v = -2.0;
        }
    }
    let b = batch(&mut rng, 32);
    let probe = Tensor::row(&[0.1, -0.2, 0.3, 0.0]);
    let before = agent.head(&probe).unwrap().1.sum();
    for _ in 0..5 {
        agent.update_actor(0, &critic, &b, &c, &mut rng).unwrap();
    }
    let after = agent.head(&probe).unwrap().1.sum();
    assert!(after > before, "{} -> {}", before, after);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let c = SacConfig { lr_actor: 0.0, ..cfg() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let critic = CentralCritic::new(N * SD, N * AD, &c, &mut rng);
    let mut agent = SacAgent::new(1, SD, AD, &c, &mut rng);
    let before: Vec<Tensor> = agent.actor.params().map(|p| p.value.clone()).collect();
    let b = batch(&mut rng, 8);
    agent.update_actor(1, &critic, &b, &c, &mut rng).unwrap();
    assert!(agent.actor.params().zip(&before).all(|(p, v)| p.value == *v));
}

#[test]
fn larger_entropy_weight_never_lowers_entropy_after_one_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let b = batch(&mut rng, 64);
    let states = local(&b.states, 0);
    let eps = noise(&mut rng, 64);
    let entropy_after = |beta: f64| {
        let c = SacConfig {
            beta,
            entropy_per_dim: false,
            lr_actor: 1e-3,
            ..cfg()
        };
        let mut init = ChaCha8Rng::seed_from_u64(40);
        let critic = CentralCritic::new(N * SD, N * AD, &c, &mut init);
        let mut agent = SacAgent::new(0, SD, AD, &c, &mut init);
        agent
            .update_actor(0, &critic, &b, &c, &mut ChaCha8Rng::seed_from_u64(41))
            .unwrap();
        -entropy_loss(&agent, &states, &eps, 1.0)
    };
    let betas = [0.01, 0.1, 1.0, 10.0, 100.0];
    let h: Vec<f64> = betas.iter().map(|b| entropy_after(*b)).collect();
    for w in h.windows(2) {
        assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{:?}", h);
    }
}

#[test]
fn actors_only_see_their_own_state_block() {
    let c = cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let critic = zero_critic(&c);
    let agent = SacAgent::new(0, SD, AD, &c, &mut rng);
    assert_eq!(agent.actor.input_dim(), SD);
    assert_eq!(critic.q.input_dim(), N * (SD + AD));
    let b = batch(&mut rng, 8);
    let mut perturbed = b.clone();
    for r in 0..8 {
        for col in SD..2 * SD {
            perturbed.states.set(r, col, 100.0);
        }
    }
    let loss = |batch: &Batch| {
        let mut a = SacAgent::new(0, SD, AD, &c, &mut ChaCha8Rng::seed_from_u64(50));
        a.update_actor(0, &critic, batch, &c, &mut ChaCha8Rng::seed_from_u64(51)).unwrap()
    };
    assert_eq!(loss(&b), loss(&perturbed));
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(10);
    for i in 0..10 {
        buf.push(Transition {
            state: vec![i as f64],
            action: vec![0.0],
            reward: 0.0,
            next_state: vec![0.0],
            done: false,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws = 100_000;
    let mut counts = [0usize; 10];
    for _ in 0..draws / 10 {
        for i in buf.sample_indices(10, &mut rng).unwrap() {
            counts[i] += 1;
        }
    }
    let expected = draws as f64 / 10.0;
    let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
    for c in counts {
        assert!((c as f64 - expected).abs() < 3.0 * sigma, "{:?}", counts);
    }
}

struct PromptSetup {
    srm: Srm,
    features: Vec<f64>,
    tokens: Vec<usize>,
    weights: Tensor,
}

fn prompt_setup() -> PromptSetup {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = SrmConfig {
        n_learnable: 3,
        encoder: EncoderConfig {
            d_model: 16,
            ..EncoderConfig::default()
        },
        ..SrmConfig::default()
    };
    let srm = Srm::new(SrmWiring::DualPromptKd, cfg, 5, &mut rng);
    let tokens = srm
        .domain_tokens(&DomainTelemetry {
            q_bar: [1e6, 8e6, 0.0],
            prev_q_bar: [2e6, 8e6, 0.01],
            rb_utilization: 0.9,
            backlog_s: [0.2, 0.0, 0.0],
        })
        .unwrap();
    let weights = Tensor::new(vec![1, srm.aligned_dim()], (0..srm.aligned_dim()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    PromptSetup {
        srm,
        features: vec![0.3, -0.4, 0.1, 0.9, 0.0],
        tokens,
        weights,
    }
}

/// Prompt gradient with the RL term live or detached, and KD on or off.
fn prompt_grad(setup: &mut PromptSetup, rl_live: bool, kd: bool, lambda: f64) -> (Tensor, f64, f64, Option<f64>) {
    let mut g = Graph::new();
    let rep = setup.srm.represent(&mut g, &setup.features, &setup.tokens).unwrap();
    let w = g.constant(setup.weights.clone());
    let prod = g.mul(rep.aligned, w).unwrap();
    let rl = if rl_live {
        g.sum(prod)
    } else {
        let value = g.value(prod).sum();
        g.constant(Tensor::scalar(value))
    };
    let mut opt = Adam::new(AdamConfig { lr: 0.0, ..AdamConfig::default() });
    let kd_var = if kd { rep.kd } else { None };
    let u = update_prompts(&mut g, &mut setup.srm.prompts, &mut opt, rl, kd_var, lambda).unwrap();
    (u.grad, u.total, u.rl, u.kd)
}

#[test]
fn disabled_distillation_leaves_the_rl_gradient() {
    let mut s = prompt_setup();
    let (with_zero, ..) = prompt_grad(&mut s, true, true, 0.0);
    let (pure, ..) = prompt_grad(&mut s, true, false, 0.3);
    let diff = with_zero.zip_map(&pure, |a, b| (a - b).abs());
    assert!(diff.data().iter().all(|d| *d < 1e-10));
}

#[test]
fn detached_rl_gives_the_distillation_direction() {
    let mut s = prompt_setup();
    let (kd_only, ..) = prompt_grad(&mut s, false, true, 0.7);
    let mut g = Graph::new();
    let rep = s.srm.represent(&mut g, &s.features, &s.tokens).unwrap();
    g.backward(rep.kd.unwrap()).unwrap();
    let pure = g.param_grad(&s.srm.prompts.param).unwrap().clone();
    let dot: f64 = kd_only.data().iter().zip(pure.data()).map(|(a, b)| a * b).sum();
    let cos = dot / (kd_only.norm() * pure.norm());
    assert!((cos - 1.0).abs() < 1e-12);
    assert!((kd_only.norm() / pure.norm() - 0.7).abs() < 1e-12);
}

#[test]
fn total_prompt_loss_is_the_weighted_sum() {
    let mut s = prompt_setup();
    let (_, total, rl, kd) = prompt_grad(&mut s, true, true, 0.25);
    assert_eq!(total, rl + 0.25 * kd.unwrap());
}
