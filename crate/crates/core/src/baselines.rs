//! Comparison policies: uniform split over progress neighbors, and single
//! path to the neighbor closest to the GBS.

use crate::error::Result;
use crate::forwarding::SplitDecision;
use crate::sim::{RoutingPolicy, SlotView};
use crate::simplex::{forwarding_count, resample};
use crate::types::NodeId;

/// Uniform shares over the candidates closer to the GBS than `m`, before
/// resampling; all mass on retain when there are none.
pub fn heuristic_shares(view: &SlotView<'_>, m: NodeId) -> Vec<f64> {
    let n = view.cfg.max_neighbors;
    let d_own = view.gbs_distance(m);
    let progress: Vec<usize> = view.links.candidates[m]
        .iter()
        .enumerate()
        .filter(|(_, &rx)| view.gbs_distance(rx) < d_own)
        .map(|(k, _)| k + 1)
        .collect();
    let mut a = vec![0.0; n + 1];
    if progress.is_empty() {
        a[0] = 1.0;
    } else {
        let share = 1.0 / progress.len() as f64;
        for i in progress {
            a[i] = share;
        }
    }
    a
}

pub fn heuristic_split(view: &SlotView<'_>, m: NodeId) -> SplitDecision {
    let cands = view.links.candidates[m].len();
    let a = heuristic_shares(view, m);
    let omega = forwarding_count(
        view.queues[m].selected_len(),
        view.cfg.q_step,
        view.cfg.max_neighbors,
        cands,
    );
    SplitDecision {
        owner: m,
        ratios: resample(&a, omega, cands + 1),
    }
}

/// Everything to the candidate closest to the GBS, lower id on ties. With
/// `progress_gate` set, retain instead when that candidate is no closer
/// than `m` itself.
pub fn greedy_shortest(view: &SlotView<'_>, m: NodeId, progress_gate: bool) -> SplitDecision {
    let n = view.cfg.max_neighbors;
    // candidates are in ascending id, so the first minimum is the lowest id
    let best = view.links.candidates[m]
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (k, &rx)| {
            let d = view.gbs_distance(rx);
            match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((k, d)),
            }
        });
    match best {
        Some((k, d)) if !progress_gate || d < view.gbs_distance(m) => {
            let mut ratios = vec![0.0; n + 1];
            ratios[k + 1] = 1.0;
            SplitDecision { owner: m, ratios }
        }
        _ => SplitDecision::retain_all(m, n),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicPolicy;

impl RoutingPolicy for HeuristicPolicy {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn decide(&mut self, view: &SlotView<'_>, agents: &[NodeId]) -> Result<Vec<SplitDecision>> {
        Ok(agents.iter().map(|&m| heuristic_split(view, m)).collect())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyPolicy;

impl RoutingPolicy for GreedyPolicy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn decide(&mut self, view: &SlotView<'_>, agents: &[NodeId]) -> Result<Vec<SplitDecision>> {
        let gate = view.cfg.greedy_progress_gate;
        Ok(agents.iter().map(|&m| greedy_shortest(view, m, gate)).collect())
    }
}
