//! The three-stage encoder shared by actor and critic: an own-state MLP, a
//! neighbor MLP feeding a GRU that advances once per acting slot, and a
//! fusion MLP over both.

use std::ops::Range;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::layers::{Gru, GruStep, Mlp, MlpCache};
use super::ParamLayout;
use crate::env::{OWN_FEATURES, NEIGHBOR_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub max_neighbors: usize,
    pub own_hidden: usize,
    pub neigh_hidden: usize,
    pub gru_hidden: usize,
    pub fusion_hidden: usize,
    pub out_dim: usize,
}

impl EncoderDims {
    pub fn obs_dim(&self) -> usize {
        OWN_FEATURES + NEIGHBOR_FEATURES * self.max_neighbors
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub dims: EncoderDims,
    pub layout: ParamLayout,
    f1: Mlp,
    f2: Mlp,
    gru: Gru,
    f3: Mlp,
}

/// Order in which a flat batch of transitions is fed through the GRU.
///
/// Rows are grouped by slot; `groups` are consecutive row ranges and every
/// row's `prev` (the same agent's previous transition, whose hidden state it
/// continues) lies in an earlier group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schedule {
    pub groups: Vec<Range<usize>>,
    pub prev: Vec<Option<usize>>,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.prev.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prev.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        let mut next = 0;
        for g in &self.groups {
            if g.start != next || g.end < g.start {
                return false;
            }
            if self.prev[g.clone()].iter().any(|p| p.is_some_and(|j| j >= g.start)) {
                return false;
            }
            next = g.end;
        }
        next == self.prev.len()
    }
}

/// Everything the backward pass needs from a sequence forward.
#[derive(Debug, Clone)]
pub struct SeqTrace {
    obs: Array2<f64>,
    own: MlpCache,
    neigh: MlpCache,
    h_prev: Array2<f64>,
    steps: Vec<GruStep>,
    fused: Array2<f64>,
    head: MlpCache,
    schedule: Schedule,
}

impl SeqTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.head.out
    }
}

impl Encoder {
    pub fn new(dims: EncoderDims) -> Self {
        let mut layout = ParamLayout::default();
        let f1 = Mlp::new(&mut layout, "f1", [OWN_FEATURES, dims.own_hidden, dims.own_hidden], true);
        let f2 = Mlp::new(
            &mut layout,
            "f2",
            [dims.obs_dim() - OWN_FEATURES, dims.neigh_hidden, dims.neigh_hidden],
            true,
        );
        let gru = Gru::new(&mut layout, "gru", dims.neigh_hidden, dims.gru_hidden);
        let f3 = Mlp::new(
            &mut layout,
            "f3",
            [dims.own_hidden + dims.gru_hidden, dims.fusion_hidden, dims.out_dim],
            false,
        );
        Self {
            dims,
            layout,
            f1,
            f2,
            gru,
            f3,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    /// Fresh parameters; the output layer is scaled by `head_gain`.
    pub fn init_params(&self, head_gain: f64, rng: &mut impl Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.num_params()];
        self.f1.l1.init(&mut p, 1.0, rng);
        self.f1.l2.init(&mut p, 1.0, rng);
        self.f2.l1.init(&mut p, 1.0, rng);
        self.f2.l2.init(&mut p, 1.0, rng);
        self.gru.init(&mut p, rng);
        self.f3.l1.init(&mut p, 1.0, rng);
        self.f3.l2.init(&mut p, head_gain, rng);
        p
    }

    fn split_obs<'a>(&self, obs: ArrayView2<'a, f64>) -> (ArrayView2<'a, f64>, ArrayView2<'a, f64>) {
        (obs.slice_move(s![.., ..OWN_FEATURES]), obs.slice_move(s![.., OWN_FEATURES..]))
    }

    /// One batched step: `(outputs, next hidden states)`.
    pub fn step(
        &self,
        p: &[f64],
        obs: ArrayView2<'_, f64>,
        h: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let (own_x, neigh_x) = self.split_obs(obs);
        let own = self.f1.forward(p, own_x);
        let neigh = self.f2.forward(p, neigh_x);
        let gi = self.gru.input.forward(p, neigh.out.view());
        let (h_new, _) = self.gru.step(p, gi.view(), h);
        let fused = concatenate![Axis(1), own.out, h_new];
        let head = self.f3.forward(p, fused.view());
        (head.out, h_new)
    }

    pub fn forward_seq(&self, p: &[f64], obs: ArrayView2<'_, f64>, schedule: &Schedule) -> SeqTrace {
        debug_assert!(schedule.is_consistent());
        let hs = self.dims.gru_hidden;
        let t = obs.nrows();
        let (own_x, neigh_x) = self.split_obs(obs);
        let own = self.f1.forward(p, own_x);
        let neigh = self.f2.forward(p, neigh_x);
        let gi = self.gru.input.forward(p, neigh.out.view());
        let mut h_all = Array2::<f64>::zeros((t, hs));
        let mut h_prev = Array2::<f64>::zeros((t, hs));
        let mut steps = Vec::with_capacity(schedule.groups.len());
        for g in &schedule.groups {
            for i in g.clone() {
                if let Some(j) = schedule.prev[i] {
                    let src = h_all.row(j).to_owned();
                    h_prev.row_mut(i).assign(&src);
                }
            }
            let (h_new, st) = self.gru.step(
                p,
                gi.slice(s![g.clone(), ..]),
                h_prev.slice(s![g.clone(), ..]),
            );
            h_all.slice_mut(s![g.clone(), ..]).assign(&h_new);
            steps.push(st);
        }
        let fused = concatenate![Axis(1), own.out, h_all];
        let head = self.f3.forward(p, fused.view());
        SeqTrace {
            obs: obs.to_owned(),
            own,
            neigh,
            h_prev,
            steps,
            fused,
            head,
            schedule: schedule.clone(),
        }
    }

    /// Accumulate `d loss / d params` into `g` given `d loss / d outputs`.
    pub fn backward_seq(&self, p: &[f64], g: &mut [f64], trace: &SeqTrace, d_out: ArrayView2<'_, f64>) {
        let oh = self.dims.own_hidden;
        let hs = self.dims.gru_hidden;
        let t = trace.obs.nrows();
        let d_fused = self
            .f3
            .backward(p, g, trace.fused.view(), &trace.head, d_out, true)
            .expect("dx requested");
        let d_own = d_fused.slice(s![.., ..oh]);
        let mut d_h = d_fused.slice(s![.., oh..]).to_owned();
        let mut d_gi = Array2::<f64>::zeros((t, 3 * hs));
        let mut d_gh = Array2::<f64>::zeros((t, 3 * hs));
        let sched = &trace.schedule;
        for (gi, grp) in sched.groups.iter().enumerate().rev() {
            let (dgi, dgh, dh_prev) = self.gru.step_backward(
                p,
                trace.h_prev.slice(s![grp.clone(), ..]),
                &trace.steps[gi],
                d_h.slice(s![grp.clone(), ..]),
            );
            d_gi.slice_mut(s![grp.clone(), ..]).assign(&dgi);
            d_gh.slice_mut(s![grp.clone(), ..]).assign(&dgh);
            for (k, i) in grp.clone().enumerate() {
                if let Some(j) = sched.prev[i] {
                    let mut row = d_h.row_mut(j);
                    row += &dh_prev.row(k);
                }
            }
        }
        // one batched weight-gradient product instead of one per slot
        self.gru
            .recurrent
            .backward_params(g, trace.h_prev.view(), d_gh.view());
        self.gru
            .input
            .backward_params(g, trace.neigh.out.view(), d_gi.view());
        let d_neigh = self.gru.input.backward_input(p, d_gi.view());
        let (own_x, neigh_x) = self.split_obs(trace.obs.view());
        self.f2.backward(p, g, neigh_x, &trace.neigh, d_neigh.view(), false);
        self.f1.backward(p, g, own_x, &trace.own, d_own, false);
    }
}
