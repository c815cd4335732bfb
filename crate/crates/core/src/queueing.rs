//! Traffic generation and the three-class deadline-priority buffer.

use std::collections::VecDeque;

use rand::Rng;

use crate::config::SimConfig;
use crate::types::{packet_count, NodeId, Packet, Priority, TrafficFlow};

/// Slack thresholds (seconds) separating priorities 1|2 and 2|3.
pub const HIGH_SLACK: f64 = 0.5;
pub const MEDIUM_SLACK: f64 = 1.0;

const BITS_PER_MB: f64 = 8e6;

pub fn classify_priority(deadline: f64, now: f64) -> Priority {
    let slack = deadline - now;
    if slack <= HIGH_SLACK {
        Priority::High
    } else if slack <= MEDIUM_SLACK {
        Priority::Medium
    } else {
        Priority::Low
    }
}

#[derive(Debug, Clone)]
pub struct TrafficGenerator {
    prob: f64,
    size_mb: [f64; 2],
    payload_bits: u64,
    slot_len: f64,
    next_flow: u64,
    deadline_anchor_mb: [f64; 2],
    deadline_range_s: [f64; 2],
}

impl TrafficGenerator {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            prob: cfg.traffic_prob,
            size_mb: cfg.traffic_size_range_mb,
            payload_bits: cfg.packet_payload_bits,
            slot_len: cfg.slot_len,
            next_flow: 0,
            deadline_anchor_mb: cfg.deadline_anchor_mb,
            deadline_range_s: cfg.deadline_range_s,
        }
    }

    fn relative_deadline(&self, size_mb: f64) -> f64 {
        let [s0, s1] = self.deadline_anchor_mb;
        let [d0, d1] = self.deadline_range_s;
        d0 + (size_mb - s0) * (d1 - d0) / (s1 - s0)
    }

    pub fn flows_issued(&self) -> u64 {
        self.next_flow
    }

    /// Each UAV independently starts a flow with the configured probability.
    pub fn generate(&mut self, slot: u32, num_uavs: usize, rng: &mut impl Rng) -> Vec<TrafficFlow> {
        let mut flows = Vec::new();
        for source in 0..num_uavs as NodeId {
            if !rng.random_bool(self.prob) {
                continue;
            }
            let size_mb = rng.random_range(self.size_mb[0]..=self.size_mb[1]);
            let size_bits = (size_mb * BITS_PER_MB).round().max(1.0) as u64;
            let deadline = slot as f64 * self.slot_len + self.relative_deadline(size_mb);
            flows.push(TrafficFlow {
                id: self.next_flow,
                source,
                gen_slot: slot,
                size_bits,
                deadline,
                packet_count: packet_count(size_bits, self.payload_bits),
            });
            self.next_flow += 1;
        }
        flows
    }
}

#[derive(Debug)]
pub struct Admission {
    pub accepted: u64,
    pub rejected: Vec<Packet>,
}

impl Admission {
    pub fn overflow(&self) -> u64 {
        self.rejected.len() as u64
    }
}

/// A UAV buffer split into high/medium/low priority FIFO sub-queues.
#[derive(Debug, Clone)]
pub struct PriorityQueues {
    queues: [VecDeque<Packet>; 3],
    capacity: u64,
}

impl PriorityQueues {
    pub fn new(capacity: u64) -> Self {
        Self {
            queues: Default::default(),
            capacity,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn len(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }

    pub fn free(&self) -> u64 {
        self.capacity - self.len()
    }

    pub fn sub_len(&self, p: Priority) -> u64 {
        self.queues[p.index()].len() as u64
    }

    pub fn sub_queue(&self, p: Priority) -> &VecDeque<Packet> {
        &self.queues[p.index()]
    }

    /// Highest-priority non-empty sub-queue.
    pub fn selected(&self) -> Option<Priority> {
        Priority::ALL
            .into_iter()
            .find(|p| !self.queues[p.index()].is_empty())
    }

    pub fn selected_len(&self) -> u64 {
        self.selected().map_or(0, |p| self.sub_len(p))
    }

    /// Admit packets in order into the sub-queue matching their slack at
    /// `now`; whatever does not fit is returned as overflow.
    pub fn enqueue(&mut self, packets: Vec<Packet>, now: f64) -> Admission {
        let mut accepted = 0;
        let mut rejected = Vec::new();
        for mut p in packets {
            if self.len() >= self.capacity {
                rejected.push(p);
                continue;
            }
            p.priority = classify_priority(p.deadline, now);
            self.queues[p.priority.index()].push_back(p);
            accepted += 1;
        }
        Admission { accepted, rejected }
    }

    /// Re-bin every queued packet by its slack at `now`. Movers are appended
    /// to their destination queue in their original relative order.
    pub fn reclassify(&mut self, now: f64) -> u64 {
        let mut moved = 0;
        for src in [Priority::Medium, Priority::Low] {
            let old = std::mem::take(&mut self.queues[src.index()]);
            for mut p in old {
                let p_now = classify_priority(p.deadline, now).min(src);
                p.priority = p_now;
                if p_now != src {
                    moved += 1;
                }
                self.queues[p_now.index()].push_back(p);
            }
        }
        moved
    }

    /// Remove up to `count` packets from the head of sub-queue `p`.
    pub fn take_front(&mut self, p: Priority, count: u64) -> Vec<Packet> {
        let q = &mut self.queues[p.index()];
        let n = (count as usize).min(q.len());
        q.drain(..n).collect()
    }

    /// Put packets back at the head of sub-queue `p`, keeping their order.
    pub fn restore_front(&mut self, p: Priority, packets: Vec<Packet>) {
        let q = &mut self.queues[p.index()];
        for pkt in packets.into_iter().rev() {
            q.push_front(pkt);
        }
    }

    /// Drop packets whose deadline is strictly before `now`.
    pub fn purge_expired(&mut self, now: f64) -> Vec<Packet> {
        let mut expired = Vec::new();
        for q in &mut self.queues {
            let (keep, gone): (VecDeque<_>, VecDeque<_>) = q.drain(..).partition(|p| p.deadline >= now);
            *q = keep;
            expired.extend(gone);
        }
        expired
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.queues.iter().flatten()
    }
}
