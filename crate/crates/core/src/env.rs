//! Per-agent observations and rewards over a slot snapshot.
//!
//! Observation layout, all features in `[0, 1]`:
//! own block `[d_mk / diag, (priority - 1) / 2, q_sel / q_norm]` followed by
//! `max_neighbors` blocks `[(id + 1) / M, d_m'k / diag, c / q_norm]` in
//! ascending candidate id, zero-padded past the real candidates. `c` is the
//! lesser of the link capacity and the candidate's free buffer.

use crate::config::{RewardConfig, SimConfig, TolSign};
use crate::sim::SlotView;
use crate::types::{NodeId, Priority};

pub const OWN_FEATURES: usize = 3;
pub const NEIGHBOR_FEATURES: usize = 3;

pub fn observation_dim(max_neighbors: usize) -> usize {
    OWN_FEATURES + NEIGHBOR_FEATURES * max_neighbors
}

/// Packets UAV `m` could hand to `rx` this slot.
pub fn neighbor_capacity(view: &SlotView<'_>, m: NodeId, rx: NodeId) -> u64 {
    view.links.link(m, rx).capacity.min(view.queues[rx].free())
}

pub fn build_observation(view: &SlotView<'_>, m: NodeId) -> Vec<f64> {
    let cfg = view.cfg;
    let diag = cfg.arena_diagonal();
    let q_norm = cfg.obs_queue_norm;
    let mut obs = vec![0.0; observation_dim(cfg.max_neighbors)];
    let q = &view.queues[m];
    obs[0] = (view.gbs_distance(m) / diag).min(1.0);
    obs[1] = q.selected().map_or(0.0, |p| f64::from(p.level() - 1) / 2.0);
    obs[2] = (q.selected_len() as f64 / q_norm).min(1.0);
    for (k, &rx) in view.links.candidates[m].iter().enumerate() {
        let b = OWN_FEATURES + NEIGHBOR_FEATURES * k;
        obs[b] = (rx + 1) as f64 / cfg.num_uavs as f64;
        obs[b + 1] = (view.gbs_distance(rx) / diag).min(1.0);
        obs[b + 2] = (neighbor_capacity(view, m, rx) as f64 / q_norm).min(1.0);
    }
    obs
}

/// Linear map from queue length to the path-reward weight: `w_max` at
/// `reward_q_min`, `w_min` at `reward_q_max`, clamped outside.
pub fn compute_weight(q_sel: f64, r: &RewardConfig) -> f64 {
    let k = (r.w_min - r.w_max) / (r.reward_q_max - r.reward_q_min);
    let b = r.w_max - k * r.reward_q_min;
    k * q_sel.clamp(r.reward_q_min, r.reward_q_max) + b
}

/// Distance progress towards the GBS normalized by the arena diagonal, or
/// the priority penalty when retaining or not progressing.
pub fn path_reward(
    d_own: f64,
    d_next: Option<f64>,
    priority: Priority,
    cfg: &SimConfig,
) -> f64 {
    match d_next {
        Some(d) if d_own > d => (d_own - d) / cfg.arena_diagonal(),
        _ => -cfg.reward.priority_penalty[priority.index()],
    }
}

/// `None` for the retain slot, else the planned volume and capability.
pub fn tolerance_reward(share: Option<(f64, f64)>, r: &RewardConfig) -> f64 {
    let Some((planned, c)) = share else {
        return -r.r0_tol;
    };
    let excess = match r.tol_sign {
        TolSign::AsWritten => planned - c,
        TolSign::Negated => c - planned,
    };
    (r.k1 * excess / r.tol_q_scale + r.k2).tanh()
}

pub fn total_reward(action: &[f64], per_slot: &[f64]) -> f64 {
    action.iter().zip(per_slot).map(|(a, r)| a * r).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub weight: f64,
    pub path: Vec<f64>,
    pub tolerance: Vec<f64>,
    /// `weight * path + (1 - weight) * tolerance`, per action slot.
    pub combined: Vec<f64>,
    pub total: f64,
}

/// Reward of UAV `m` for executing split `action` in the given slot.
/// Padded slots get zero reward; the action carries no mass there.
pub fn reward(view: &SlotView<'_>, m: NodeId, action: &[f64]) -> RewardBreakdown {
    let cfg = view.cfg;
    let q = &view.queues[m];
    let priority = q.selected().unwrap_or(Priority::Low);
    let q_sel = q.selected_len() as f64;
    let weight = compute_weight(q_sel, &cfg.reward);
    let d_own = view.gbs_distance(m);
    let cands = &view.links.candidates[m];
    let n = action.len();
    let mut path = vec![0.0; n];
    let mut tolerance = vec![0.0; n];
    let mut combined = vec![0.0; n];
    for i in 0..n.min(cands.len() + 1) {
        let (d_next, share) = if i == 0 {
            (None, None)
        } else {
            let rx = cands[i - 1];
            let c = neighbor_capacity(view, m, rx) as f64;
            (Some(view.gbs_distance(rx)), Some((action[i] * q_sel, c)))
        };
        path[i] = path_reward(d_own, d_next, priority, cfg);
        tolerance[i] = tolerance_reward(share, &cfg.reward);
        combined[i] = weight * path[i] + (1.0 - weight) * tolerance[i];
    }
    let total = total_reward(action, &combined);
    RewardBreakdown {
        weight,
        path,
        tolerance,
        combined,
        total,
    }
}
