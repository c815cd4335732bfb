//! Fixtures shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavroute::config::{DirichletConfig, TrainConfig};
use uavroute::ippo::{actor_loss, critic_loss, Batch, RolloutBuffer, Transition};
use uavroute::nn::{Encoder, EncoderDims};
use uavroute::simplex::{build_concentration, log_prob, sample};

pub struct ToyRollout {
    pub actor: Encoder,
    pub critic: Encoder,
    pub actor_params: Vec<f64>,
    pub critic_params: Vec<f64>,
    pub buffer: RolloutBuffer,
    pub logp_old: Vec<f64>,
    pub adv: Vec<f64>,
    pub targets: Vec<f64>,
    pub cfg: TrainConfig,
}

/// Two agents over four slots with N = 3; agent 1 skips slot 1, so its GRU
/// carries state across a gap. Old log-probabilities are offset so some
/// ratios sit inside the clip band and some outside it.
pub fn toy_rollout(seed: u64) -> ToyRollout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = |out_dim| EncoderDims {
        max_neighbors: 3,
        own_hidden: 5,
        neigh_hidden: 6,
        gru_hidden: 4,
        fusion_hidden: 5,
        out_dim,
    };
    let actor = Encoder::new(dims(4));
    let critic = Encoder::new(dims(1));
    let actor_params = actor.init_params(1.0, &mut rng);
    let critic_params = critic.init_params(1.0, &mut rng);
    let cfg = TrainConfig {
        dirichlet: DirichletConfig::default(),
        ..TrainConfig::default()
    };
    let steps: [(usize, u32, usize); 7] = [(0, 0, 4), (1, 0, 3), (0, 1, 4), (0, 2, 2), (1, 2, 4), (0, 3, 3), (1, 3, 3)];
    let offsets = [0.02, -0.3, 0.01, 0.25, -0.03, 0.0, 0.4];
    let mut buffer = RolloutBuffer::new(2);
    let mut h = vec![vec![0.0; 4]; 2];
    let mut logp_old = Vec::new();
    for (k, &(agent, slot, valid)) in steps.iter().enumerate() {
        let obs: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let o = ndarray::Array2::from_shape_vec((1, 12), obs.clone()).unwrap();
        let hp = ndarray::Array2::from_shape_vec((1, 4), h[agent].clone()).unwrap();
        let (beta, hn) = actor.step(&actor_params, o.view(), hp.view());
        h[agent] = hn.row(0).to_vec();
        let conc = build_concentration(&beta.row(0).to_vec(), valid, &cfg.dirichlet).unwrap();
        let action = sample(&conc.alpha, &mut rng);
        let lp = log_prob(&action, &conc.alpha).unwrap();
        logp_old.push(lp + offsets[k]);
        buffer.push(Transition {
            agent,
            slot,
            obs,
            alpha: conc.alpha,
            valid,
            action,
            log_prob: lp,
            reward: rng.random_range(-1.0..1.0),
            value: rng.random_range(-0.5..0.5),
            next: None,
        });
    }
    let adv = (0..steps.len()).map(|_| rng.random_range(-1.5..1.5)).collect();
    let targets = (0..steps.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    ToyRollout {
        actor,
        critic,
        actor_params,
        critic_params,
        buffer,
        logp_old,
        adv,
        targets,
        cfg,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|analytic - numeric| / max(|analytic|, |numeric|)` over the whole
/// parameter vector, with central differences of step `h`.
pub fn relative_error(analytic: &[f64], f: impl Fn(&[f64]) -> f64, params: &[f64], h: f64) -> f64 {
    let mut p = params.to_vec();
    let numeric: Vec<f64> = (0..params.len())
        .map(|i| {
            let x = p[i];
            p[i] = x + h;
            let fp = f(&p);
            p[i] = x - h;
            let fm = f(&p);
            p[i] = x;
            (fp - fm) / (2.0 * h)
        })
        .collect();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(&numeric)).max(1e-300)
}

/// Relative gradient errors of the actor and critic losses on the toy rollout.
pub fn composite_gradient_errors(seed: u64) -> (f64, f64) {
    let t = toy_rollout(seed);
    let obs = t.buffer.obs_matrix();
    let schedule = t.buffer.schedule();
    let batch = Batch {
        transitions: t.buffer.transitions(),
        obs: obs.view(),
        schedule: &schedule,
    };
    let a = actor_loss(&t.actor, &t.actor_params, &batch, &t.logp_old, &t.adv, &t.cfg).unwrap();
    assert!(norm(&a.grad) > 1e-6, "degenerate actor gradient");
    let actor_err = relative_error(
        &a.grad,
        |p| actor_loss(&t.actor, p, &batch, &t.logp_old, &t.adv, &t.cfg).unwrap().loss,
        &t.actor_params,
        1e-6,
    );
    let c = critic_loss(&t.critic, &t.critic_params, &batch, &t.targets, &t.cfg);
    assert!(norm(&c.grad) > 1e-6, "degenerate critic gradient");
    let critic_err = relative_error(
        &c.grad,
        |p| critic_loss(&t.critic, p, &batch, &t.targets, &t.cfg).loss,
        &t.critic_params,
        1e-6,
    );
    (actor_err, critic_err)
}
