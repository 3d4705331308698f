//! Central finite-difference audit of every trainable path: actor, critic,
//! adapters, learnable prompts and the distillation loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{Binding, Graph, Param, Tensor, Var};
use crate::sac::{entropy_weight, CentralCritic, SacAgent, SacConfig, SacError};
use crate::srm::{distill_loss, AdapterConfig, DomainTelemetry, EncoderConfig, Srm, SrmConfig, SrmWiring};

pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradProbe {
    pub path: &'static str,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradProbe {
    /// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub fn rel_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(1e-6)
    }
}

/// Checks `per_path` random parameter entries on each path against the tape.
fn probe_path<S>(
    path: &'static str,
    state: &mut S,
    per_path: usize,
    rng: &mut ChaCha8Rng,
    loss: impl Fn(&S, &mut Graph) -> Result<Var, SacError>,
    params: impl Fn(&mut S) -> Vec<&mut Param>,
) -> Result<Vec<GradProbe>, SacError> {
    let mut g = Graph::new();
    let l = loss(state, &mut g)?;
    g.backward(l)?;
    let grads: Vec<(String, Tensor)> = params(state)
        .into_iter()
        .map(|p| {
            let grad = g
                .param_grad(p)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.value.shape()));
            (p.name().to_string(), grad)
        })
        .collect();
    let value = |state: &S| -> Result<f64, SacError> {
        let mut g = Graph::new();
        let l = loss(state, &mut g)?;
        Ok(g.value(l).item())
    };
    let mut out = Vec::with_capacity(per_path);
    for _ in 0..per_path {
        let pi = rng.random_range(0..grads.len());
        let j = rng.random_range(0..grads[pi].1.len());
        let original = params(state)[pi].value.data()[j];
        params(state)[pi].value.data_mut()[j] = original + FD_STEP;
        let up = value(state)?;
        params(state)[pi].value.data_mut()[j] = original - FD_STEP;
        let down = value(state)?;
        params(state)[pi].value.data_mut()[j] = original;
        out.push(GradProbe {
            path,
            param: grads[pi].0.clone(),
            index: j,
            analytic: grads[pi].1.data()[j],
            numeric: (up - down) / (2.0 * FD_STEP),
        });
    }
    Ok(out)
}

fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape")
}

fn small_srm(rng: &mut ChaCha8Rng, state_dim: usize) -> Srm {
    let cfg = SrmConfig {
        n_learnable: 3,
        encoder: EncoderConfig {
            d_model: 16,
            ..EncoderConfig::default()
        },
        adapter: AdapterConfig {
            d_align: 6,
            hidden: vec![12],
        },
        ..SrmConfig::default()
    };
    Srm::new(SrmWiring::DualPromptKd, cfg, state_dim, rng)
}

fn telemetry() -> DomainTelemetry {
    DomainTelemetry {
        q_bar: [3e6, 7e6, 0.01],
        prev_q_bar: [3.5e6, 6e6, 0.02],
        rb_utilization: 0.6,
        backlog_s: [0.08, 0.0, 0.01],
    }
}

/// Runs `per_path` probes on each of the five trainable paths.
pub fn gradient_probes(per_path: usize, seed: u64) -> Result<Vec<GradProbe>, SacError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let cfg = SacConfig {
        actor_hidden: vec![10, 10],
        critic_hidden: vec![10, 10],
        ..SacConfig::default()
    };
    let (b, sd, ad, n) = (4, 5, 3, 2);

    let states = random_tensor(b, n * sd, &mut rng);
    let actions = random_tensor(b, n * ad, &mut rng);
    let eps = random_tensor(b, ad, &mut rng);
    let critic = CentralCritic::new(n * sd, n * ad, &cfg, &mut rng);
    let mut agent = SacAgent::new(0, sd, ad, &cfg, &mut rng);
    let w = entropy_weight(&cfg, ad);
    out.extend(probe_path(
        "actor",
        &mut agent,
        per_path,
        &mut rng,
        |a, g| {
            let local = g.constant(crate::sac::column_block(&states, 0, sd));
            let (act, logp) = a.policy_on_tape(g, local, &eps, Binding::Trainable)?;
            let other = g.constant(crate::sac::column_block(&actions, ad, 2 * ad));
            let joint = g.concat_cols(&[act, other])?;
            let s = g.constant(states.clone());
            let q = critic.q_on_tape(g, s, joint, Binding::Frozen)?;
            let ent = g.scale(logp, w);
            let per = g.sub(ent, q)?;
            Ok(g.mean(per))
        },
        |a| a.actor.params_mut(),
    )?);

    let mut critic = critic;
    let targets = random_tensor(b, 1, &mut rng);
    out.extend(probe_path(
        "critic",
        &mut critic,
        per_path,
        &mut rng,
        |c, g| {
            let s = g.constant(states.clone());
            let a = g.constant(actions.clone());
            let q = c.q_on_tape(g, s, a, Binding::Trainable)?;
            let y = g.constant(targets.clone());
            let d = g.sub(q, y)?;
            let sq = g.square(d);
            Ok(g.mean(sq))
        },
        |c| c.q.params_mut(),
    )?);

    let features: Vec<f64> = (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut srm = small_srm(&mut rng, sd);
    let tokens = srm.domain_tokens(&telemetry())?;
    let weights = random_tensor(1, srm.aligned_dim(), &mut rng);
    let srm_loss = |s: &Srm, g: &mut Graph| -> Result<Var, SacError> {
        let rep = s.represent(g, &features, &tokens)?;
        let wv = g.constant(weights.clone());
        let prod = g.mul(rep.aligned, wv)?;
        let rl = g.sum(prod);
        let kd = g.scale(rep.kd.expect("dual wiring distils"), 0.5);
        Ok(g.add(rl, kd)?)
    };
    out.extend(probe_path("adapters", &mut srm, per_path, &mut rng, srm_loss, |s| {
        s.adapters.params_mut()
    })?);
    out.extend(probe_path("prompts", &mut srm, per_path, &mut rng, srm_loss, |s| {
        vec![&mut s.prompts.param]
    })?);

    let teacher: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut h = Param::new("h_general", random_tensor(1, 8, &mut rng));
    out.extend(probe_path(
        "distill",
        &mut h,
        per_path,
        &mut rng,
        |p, g| {
            let v = g.param(p);
            Ok(distill_loss(g, v, &teacher, 2.0)?)
        },
        |p| vec![p],
    )?);
    Ok(out)
}
