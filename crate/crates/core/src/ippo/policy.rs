//! Actor and critic networks and the sampling path shared by training
//! rollouts and evaluation.

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;

use crate::config::{DirichletConfig, SimConfig, TrainConfig};
use crate::env::build_observation;
use crate::error::{Error, Result};
use crate::forwarding::SplitDecision;
use crate::nn::{Encoder, EncoderDims};
use crate::rng::{RngStreams, SimRng, Stream};
use crate::sim::{RoutingPolicy, SlotView};
use crate::simplex::{build_concentration, forwarding_count, log_prob, resample, sample};
use crate::types::NodeId;

/// Gain of the actor's output layer; keeps initial logits near zero so the
/// first policy is close to the uniform concentration.
pub const ACTOR_HEAD_GAIN: f64 = 0.01;

pub fn encoder_dims(sim: &SimConfig, train: &TrainConfig, out_dim: usize) -> EncoderDims {
    EncoderDims {
        max_neighbors: sim.max_neighbors,
        own_hidden: train.own_hidden,
        neigh_hidden: train.neigh_hidden,
        gru_hidden: train.gru_hidden,
        fusion_hidden: train.fusion_hidden,
        out_dim,
    }
}

pub fn actor_encoder(sim: &SimConfig, train: &TrainConfig) -> Encoder {
    Encoder::new(encoder_dims(sim, train, sim.max_neighbors + 1))
}

pub fn critic_encoder(sim: &SimConfig, train: &TrainConfig) -> Encoder {
    Encoder::new(encoder_dims(sim, train, 1))
}

/// One sampled decision.
#[derive(Debug, Clone)]
pub struct AgentStep {
    pub agent: NodeId,
    pub obs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub valid: usize,
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// The split actually executed after resampling.
    pub executed: Vec<f64>,
}

/// Stack observations of `agents` into a batch.
pub fn observation_batch(view: &SlotView<'_>, agents: &[NodeId]) -> Array2<f64> {
    let dim = crate::env::observation_dim(view.cfg.max_neighbors);
    let mut obs = Array2::zeros((agents.len(), dim));
    for (mut row, &m) in obs.rows_mut().into_iter().zip(agents) {
        row.assign(&ArrayView1::from(&build_observation(view, m)));
    }
    obs
}

/// Advance the recurrent state of `agents` (rows of `hidden`) by one step
/// and return the network outputs.
pub fn step_agents(
    net: &Encoder,
    params: &[f64],
    hidden: &mut Array2<f64>,
    obs: &Array2<f64>,
    agents: &[NodeId],
) -> Array2<f64> {
    let h = hidden.select(Axis(0), agents);
    let (out, h_new) = net.step(params, obs.view(), h.view());
    for (k, &m) in agents.iter().enumerate() {
        hidden.row_mut(m).assign(&h_new.row(k));
    }
    out
}

/// Sample a split for every agent in `agents`; each must have at least one
/// candidate neighbor.
pub fn act(
    actor: &Encoder,
    params: &[f64],
    hidden: &mut Array2<f64>,
    view: &SlotView<'_>,
    agents: &[NodeId],
    dirichlet: &DirichletConfig,
    rng: &mut impl Rng,
) -> Result<Vec<AgentStep>> {
    if agents.is_empty() {
        return Ok(Vec::new());
    }
    let obs = observation_batch(view, agents);
    let beta = step_agents(actor, params, hidden, &obs, agents);
    let n = view.cfg.max_neighbors;
    let mut steps = Vec::with_capacity(agents.len());
    for (k, &m) in agents.iter().enumerate() {
        let cands = view.links.candidates[m].len();
        debug_assert!(cands > 0);
        let valid = 1 + cands;
        let beta_row: Vec<f64> = beta.row(k).to_vec();
        let conc = build_concentration(&beta_row, valid, dirichlet)?;
        let action = sample(&conc.alpha, rng);
        let lp = log_prob(&action, &conc.alpha).map_err(|_| Error::NonFiniteLogProb {
            agent: m,
            slot: view.slot as usize,
        })?;
        if !lp.is_finite() {
            return Err(Error::NonFiniteLogProb {
                agent: m,
                slot: view.slot as usize,
            });
        }
        let omega = forwarding_count(view.queues[m].selected_len(), view.cfg.q_step, n, cands);
        let executed = resample(&action, omega, valid);
        steps.push(AgentStep {
            agent: m,
            obs: obs.row(k).to_vec(),
            alpha: conc.alpha,
            valid,
            action,
            log_prob: lp,
            executed,
        });
    }
    Ok(steps)
}

/// Split `agents` into those with candidates (who sample) and the rest (who
/// retain everything).
pub fn partition_agents(view: &SlotView<'_>, agents: &[NodeId]) -> (Vec<NodeId>, Vec<NodeId>) {
    agents
        .iter()
        .partition(|&&m| !view.links.candidates[m].is_empty())
}

/// A trained actor used as a routing policy. Actions are sampled, as during
/// training.
#[derive(Debug, Clone)]
pub struct IppoPolicy {
    actor: Encoder,
    params: Vec<f64>,
    dirichlet: DirichletConfig,
    hidden: Array2<f64>,
    rng: SimRng,
}

impl IppoPolicy {
    pub fn new(actor: Encoder, params: Vec<f64>, dirichlet: DirichletConfig) -> Self {
        let gru = actor.dims.gru_hidden;
        Self {
            actor,
            params,
            dirichlet,
            hidden: Array2::zeros((0, gru)),
            rng: RngStreams::new(0).stream(Stream::PolicySampling),
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }
}

impl RoutingPolicy for IppoPolicy {
    fn name(&self) -> &str {
        "ippo-dm"
    }

    fn begin_episode(&mut self, num_uavs: usize, seed: u64) {
        self.hidden = Array2::zeros((num_uavs, self.actor.dims.gru_hidden));
        self.rng = RngStreams::new(seed).stream(Stream::PolicySampling);
    }

    fn decide(&mut self, view: &SlotView<'_>, agents: &[NodeId]) -> Result<Vec<SplitDecision>> {
        if self.hidden.nrows() != view.num_uavs() {
            self.hidden = Array2::zeros((view.num_uavs(), self.actor.dims.gru_hidden));
        }
        let (acting, _) = partition_agents(view, agents);
        let steps = act(
            &self.actor,
            &self.params,
            &mut self.hidden,
            view,
            &acting,
            &self.dirichlet,
            &mut self.rng,
        )?;
        let n = view.cfg.max_neighbors;
        let mut by_agent = steps.into_iter().map(|s| (s.agent, s.executed)).peekable();
        let mut out = Vec::with_capacity(agents.len());
        for &m in agents {
            match by_agent.peek() {
                Some((a, _)) if *a == m => {
                    let (_, ratios) = by_agent.next().expect("peeked");
                    out.push(SplitDecision { owner: m, ratios });
                }
                _ => out.push(SplitDecision::retain_all(m, n)),
            }
        }
        Ok(out)
    }
}
