//! Rollout collection, batched actor/critic losses and the update loop.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::buffer::{RolloutBuffer, Transition};
use super::gae::{compute_gae, normalize};
use super::loss::{clipped_objective, clipped_objective_dlogp, value_loss};
use super::policy::{act, actor_encoder, critic_encoder, partition_agents, step_agents, IppoPolicy, ACTOR_HEAD_GAIN};
use crate::config::{EntropySign, SimConfig, TrainConfig};
use crate::env;
use crate::error::{Error, Result};
use crate::forwarding::{EpisodeMetrics, SplitDecision};
use crate::nn::{AdamW, Encoder, Schedule};
use crate::rng::{derive_seed, RngStreams, Stream};
use crate::sim::Simulation;
use crate::simplex::{build_concentration, entropy, entropy_grad, log_prob, log_prob_grad};

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub mean_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    /// Mean Dirichlet entropy over the unmasked dims.
    pub entropy: f64,
    pub transitions: usize,
    pub on_time_ratio: f64,
    pub loss_ratio: f64,
}

pub const CURVE_HEADER: [&str; 8] = [
    "episode",
    "mean_reward",
    "actor_loss",
    "critic_loss",
    "entropy",
    "transitions",
    "on_time_ratio",
    "loss_ratio",
];

/// A loss value, an auxiliary statistic and the parameter gradient.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// Mean valid-dim entropy for the actor, mean value for the critic.
    pub aux: f64,
    pub grad: Vec<f64>,
}

/// Whole-buffer inputs shared by both losses.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub transitions: &'a [Transition],
    pub obs: ArrayView2<'a, f64>,
    pub schedule: &'a Schedule,
}

/// Clipped surrogate with entropy term over the batch, and its gradient.
pub fn actor_loss(
    actor: &Encoder,
    params: &[f64],
    batch: &Batch<'_>,
    logp_old: &[f64],
    adv: &[f64],
    cfg: &TrainConfig,
) -> Result<LossOutput> {
    let n = batch.transitions.len();
    let trace = actor.forward_seq(params, batch.obs, batch.schedule);
    let beta = trace.output();
    let scale = 1.0 / n as f64;
    let sign = match cfg.entropy_sign {
        EntropySign::Bonus => 1.0,
        EntropySign::Literal => -1.0,
    };
    let coef = sign * cfg.entropy_coef;
    let mut d_beta = Array2::zeros(beta.raw_dim());
    let mut loss = 0.0;
    let mut ent_sum = 0.0;
    for (i, t) in batch.transitions.iter().enumerate() {
        let row = beta.row(i).to_vec();
        let conc = build_concentration(&row, t.valid, &cfg.dirichlet)?;
        let lp = log_prob(&t.action, &conc.alpha)
            .ok()
            .filter(|v| v.is_finite())
            .ok_or(Error::NonFiniteLogProb {
                agent: t.agent,
                slot: t.slot as usize,
            })?;
        let ratio = (lp - logp_old[i]).exp();
        let valid_alpha = &conc.alpha[..t.valid];
        let h = entropy(valid_alpha);
        loss -= scale * (clipped_objective(ratio, adv[i], cfg.actor_clip) + coef * h);
        ent_sum += h;

        let d_lp = -scale * clipped_objective_dlogp(ratio, adv[i], cfg.actor_clip);
        let mut d_alpha: Vec<f64> = log_prob_grad(&t.action, &conc.alpha)
            .into_iter()
            .map(|g| d_lp * g)
            .collect();
        for (d, g) in d_alpha.iter_mut().zip(entropy_grad(valid_alpha)) {
            *d -= scale * coef * g;
        }
        let g = conc.backward(&d_alpha, cfg.dirichlet.rho);
        for (d, v) in d_beta.row_mut(i).iter_mut().zip(g) {
            *d = v;
        }
    }
    let mut grad = vec![0.0; params.len()];
    actor.backward_seq(params, &mut grad, &trace, d_beta.view());
    Ok(LossOutput {
        loss,
        aux: ent_sum * scale,
        grad,
    })
}

/// Value-clipped critic loss over the batch, and its gradient.
pub fn critic_loss(
    critic: &Encoder,
    params: &[f64],
    batch: &Batch<'_>,
    targets: &[f64],
    cfg: &TrainConfig,
) -> LossOutput {
    let n = batch.transitions.len();
    let trace = critic.forward_seq(params, batch.obs, batch.schedule);
    let v = trace.output();
    let scale = 1.0 / n as f64;
    let mut d_v = Array2::zeros(v.raw_dim());
    let mut loss = 0.0;
    let mut v_sum = 0.0;
    for (i, t) in batch.transitions.iter().enumerate() {
        let (l, g) = value_loss(v[[i, 0]], t.value, targets[i], cfg.value_clip, cfg.critic_loss_sign);
        loss += scale * l;
        d_v[[i, 0]] = scale * g;
        v_sum += v[[i, 0]];
    }
    let mut grad = vec![0.0; params.len()];
    critic.backward_seq(params, &mut grad, &trace, d_v.view());
    LossOutput {
        loss,
        aux: v_sum * scale,
        grad,
    }
}

/// Per-transition advantages and value targets, one GAE pass per agent.
pub fn advantages(buf: &RolloutBuffer, cfg: &TrainConfig) -> (Vec<f64>, Vec<f64>) {
    let tr = buf.transitions();
    let mut adv = vec![0.0; tr.len()];
    let mut targets = vec![0.0; tr.len()];
    for idx in buf.trajectories() {
        let r: Vec<f64> = idx.iter().map(|&i| tr[i].reward).collect();
        let v: Vec<f64> = idx.iter().map(|&i| tr[i].value).collect();
        let (a, t) = compute_gae(&r, &v, cfg.gamma, cfg.gae_lambda);
        for (k, &i) in idx.iter().enumerate() {
            adv[i] = a[k];
            targets[i] = t[k];
        }
    }
    if cfg.normalize_advantages {
        normalize(&mut adv);
    }
    (adv, targets)
}

/// Shared-parameter actor and critic with their optimizers.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub(crate) sim: SimConfig,
    pub(crate) cfg: TrainConfig,
    pub(crate) master_seed: u64,
    pub(crate) actor: Encoder,
    pub(crate) critic: Encoder,
    pub(crate) actor_params: Vec<f64>,
    pub(crate) critic_params: Vec<f64>,
    pub(crate) actor_opt: AdamW,
    pub(crate) critic_opt: AdamW,
    /// Index of the next episode; every episode's randomness derives from
    /// `(master_seed, episode)`, so this is the whole sampling state.
    pub(crate) episode: usize,
    pub(crate) curve: Vec<CurveRow>,
}

impl Trainer {
    pub fn new(sim: &SimConfig, cfg: &TrainConfig, master_seed: u64) -> Result<Self> {
        sim.validate()?;
        cfg.validate()?;
        let actor = actor_encoder(sim, cfg);
        let critic = critic_encoder(sim, cfg);
        let mut rng = RngStreams::new(master_seed).stream(Stream::PolicySampling);
        let actor_params = actor.init_params(ACTOR_HEAD_GAIN, &mut rng);
        let critic_params = critic.init_params(1.0, &mut rng);
        let opt = |n| {
            AdamW::new(
                n,
                cfg.learning_rate,
                [cfg.adam_beta1, cfg.adam_beta2],
                cfg.adam_eps,
                cfg.weight_decay,
            )
        };
        Ok(Self {
            sim: sim.clone(),
            cfg: cfg.clone(),
            master_seed,
            actor_opt: opt(actor_params.len()),
            critic_opt: opt(critic_params.len()),
            actor,
            critic,
            actor_params,
            critic_params,
            episode: 0,
            curve: Vec::new(),
        })
    }

    pub fn sim_config(&self) -> &SimConfig {
        &self.sim
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn curve(&self) -> &[CurveRow] {
        &self.curve
    }

    pub fn actor_params(&self) -> &[f64] {
        &self.actor_params
    }

    pub fn critic_params(&self) -> &[f64] {
        &self.critic_params
    }

    pub fn actor(&self) -> &Encoder {
        &self.actor
    }

    pub fn critic(&self) -> &Encoder {
        &self.critic
    }

    pub fn policy(&self) -> IppoPolicy {
        IppoPolicy::new(self.actor.clone(), self.actor_params.clone(), self.cfg.dirichlet.clone())
    }

    /// Roll out one episode with the current networks.
    pub fn rollout(&self, episode: usize) -> Result<(RolloutBuffer, EpisodeMetrics)> {
        let seed = derive_seed(self.master_seed, episode as u64);
        let m = self.sim.num_uavs;
        let mut sim = Simulation::new(&self.sim, seed)?;
        let mut rng = RngStreams::new(seed).stream(Stream::PolicySampling);
        let mut h_actor = Array2::zeros((m, self.cfg.gru_hidden));
        let mut h_critic = Array2::zeros((m, self.cfg.gru_hidden));
        let mut buf = RolloutBuffer::new(m);
        while !sim.is_done() {
            let mut decisions = vec![None; m];
            {
                let view = sim.begin_slot()?;
                let agents = view.decision_agents();
                let (acting, _) = partition_agents(&view, &agents);
                let steps = act(
                    &self.actor,
                    &self.actor_params,
                    &mut h_actor,
                    &view,
                    &acting,
                    &self.cfg.dirichlet,
                    &mut rng,
                )?;
                if !steps.is_empty() {
                    let obs = Array2::from_shape_fn((steps.len(), steps[0].obs.len()), |(i, j)| steps[i].obs[j]);
                    let values = step_agents(&self.critic, &self.critic_params, &mut h_critic, &obs, &acting);
                    for (k, s) in steps.into_iter().enumerate() {
                        let reward = env::reward(&view, s.agent, &s.executed).total;
                        decisions[s.agent] = Some(SplitDecision {
                            owner: s.agent,
                            ratios: s.executed,
                        });
                        buf.push(Transition {
                            agent: s.agent,
                            slot: view.slot,
                            obs: s.obs,
                            alpha: s.alpha,
                            valid: s.valid,
                            action: s.action,
                            log_prob: s.log_prob,
                            reward,
                            value: values[[k, 0]],
                            next: None,
                        });
                    }
                }
            }
            sim.end_slot(&decisions)?;
        }
        Ok((buf, sim.finish().metrics))
    }

    /// `N_upd` rounds of actor then critic updates on one episode's buffer.
    /// Returns the round-averaged actor loss, critic loss and entropy.
    pub fn update(&mut self, buf: &RolloutBuffer) -> Result<(f64, f64, f64)> {
        if buf.is_empty() {
            return Ok((0.0, 0.0, 0.0));
        }
        let obs = buf.obs_matrix();
        let schedule = buf.schedule();
        let batch = Batch {
            transitions: buf.transitions(),
            obs: obs.view(),
            schedule: &schedule,
        };
        let (adv, targets) = advantages(buf, &self.cfg);
        let logp_old: Vec<f64> = buf.transitions().iter().map(|t| t.log_prob).collect();
        let (mut la, mut lc, mut ent) = (0.0, 0.0, 0.0);
        for _ in 0..self.cfg.update_rounds {
            let a = actor_loss(&self.actor, &self.actor_params, &batch, &logp_old, &adv, &self.cfg)?;
            self.actor_opt.update(&mut self.actor_params, &a.grad);
            let c = critic_loss(&self.critic, &self.critic_params, &batch, &targets, &self.cfg);
            self.critic_opt.update(&mut self.critic_params, &c.grad);
            la += a.loss;
            lc += c.loss;
            ent += a.aux;
        }
        let k = self.cfg.update_rounds as f64;
        Ok((la / k, lc / k, ent / k))
    }

    pub fn train_episode(&mut self) -> Result<CurveRow> {
        let (buf, metrics) = self.rollout(self.episode)?;
        let mean_reward = if buf.is_empty() {
            0.0
        } else {
            buf.transitions().iter().map(|t| t.reward).sum::<f64>() / buf.len() as f64
        };
        let (actor_loss, critic_loss, entropy) = self.update(&buf)?;
        let row = CurveRow {
            episode: self.episode,
            mean_reward,
            actor_loss,
            critic_loss,
            entropy,
            transitions: buf.len(),
            on_time_ratio: metrics.on_time_ratio,
            loss_ratio: metrics.loss_ratio,
        };
        self.episode += 1;
        self.curve.push(row.clone());
        Ok(row)
    }

    /// Train until `episodes` episodes have been completed in total.
    pub fn train_until(&mut self, episodes: usize, mut on_row: impl FnMut(&CurveRow)) -> Result<()> {
        while self.episode < episodes {
            let row = self.train_episode()?;
            on_row(&row);
        }
        Ok(())
    }
}

pub fn write_curve_csv<W: std::io::Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.mean_reward.to_string(),
            r.actor_loss.to_string(),
            r.critic_loss.to_string(),
            r.entropy.to_string(),
            r.transitions.to_string(),
            r.on_time_ratio.to_string(),
            r.loss_ratio.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("training curve", e))?;
    Ok(())
}
