use ndarray::Array2;

use crate::nn::Schedule;
use crate::types::NodeId;

/// One acting step of one agent, stored exactly as sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub agent: NodeId,
    pub slot: u32,
    pub obs: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Leading unmasked entries of `alpha` and `action`.
    pub valid: usize,
    /// The sampled action; training uses this, not the resampled split.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// Index of the same agent's next transition, `None` at its episode end.
    pub next: Option<usize>,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.next.is_none()
    }
}

/// Transitions of one episode in slot order.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    transitions: Vec<Transition>,
    last: Vec<Option<usize>>,
}

impl RolloutBuffer {
    pub fn new(num_agents: usize) -> Self {
        Self {
            transitions: Vec::new(),
            last: vec![None; num_agents],
        }
    }

    /// Append a transition; slots must not decrease.
    pub fn push(&mut self, mut t: Transition) {
        if let Some(prev) = self.transitions.last() {
            assert!(prev.slot <= t.slot, "transitions must arrive in slot order");
        }
        t.next = None;
        let idx = self.transitions.len();
        if let Some(p) = self.last[t.agent] {
            self.transitions[p].next = Some(idx);
        }
        self.last[t.agent] = Some(idx);
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.last.iter_mut().for_each(|l| *l = None);
    }

    /// Observation of the agent's next acting step.
    pub fn next_obs(&self, i: usize) -> Option<&[f64]> {
        self.transitions[i].next.map(|j| self.transitions[j].obs.as_slice())
    }

    pub fn obs_matrix(&self) -> Array2<f64> {
        let dim = self.transitions.first().map_or(0, |t| t.obs.len());
        let mut m = Array2::zeros((self.len(), dim));
        for (mut row, t) in m.rows_mut().into_iter().zip(&self.transitions) {
            row.assign(&ndarray::ArrayView1::from(&t.obs));
        }
        m
    }

    /// GRU feed order: one group per slot, each row continuing its agent's
    /// previous transition.
    pub fn schedule(&self) -> Schedule {
        let mut groups = Vec::new();
        let mut prev = vec![None; self.len()];
        let mut start = 0;
        for i in 0..self.len() {
            if let Some(j) = self.transitions[i].next {
                prev[j] = Some(i);
            }
            if i + 1 == self.len() || self.transitions[i + 1].slot != self.transitions[i].slot {
                groups.push(start..i + 1);
                start = i + 1;
            }
        }
        Schedule { groups, prev }
    }

    /// Transition indices of each agent in slot order.
    pub fn trajectories(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.last.len()];
        for (i, t) in self.transitions.iter().enumerate() {
            out[t.agent].push(i);
        }
        out
    }
}
