//! Traffic flows, packets and their priority classes.

use serde::{Deserialize, Serialize};

pub type NodeId = usize;

/// Deadline-urgency class of a packet; lower is more urgent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Priority {
    High = 1,
    Medium = 2,
    Low = 3,
}

impl Priority {
    pub const ALL: [Priority; 3] = [Priority::High, Priority::Medium, Priority::Low];

    /// 1, 2 or 3.
    pub fn level(self) -> u8 {
        self as u8
    }

    /// 0-based sub-queue index.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficFlow {
    pub id: u64,
    pub source: NodeId,
    pub gen_slot: u32,
    pub size_bits: u64,
    /// Absolute deadline in seconds.
    pub deadline: f64,
    pub packet_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub flow_id: u64,
    /// Absolute deadline in seconds, inherited from the flow.
    pub deadline: f64,
    pub gen_slot: u32,
    /// Nodes visited, starting at the source.
    pub hops: Vec<NodeId>,
    pub arrival_slot: Option<u32>,
    pub priority: Priority,
}

pub fn packet_count(size_bits: u64, payload_bits: u64) -> u64 {
    size_bits.div_ceil(payload_bits)
}

/// Hands out episode-unique packet ids.
#[derive(Debug, Default, Clone)]
pub struct PacketIds {
    next: u64,
}

impl PacketIds {
    pub fn issued(&self) -> u64 {
        self.next
    }

    fn take(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }
}

/// Split a flow into `ceil(size / payload)` packets; the last one is padded.
pub fn segment_flow(
    flow: &TrafficFlow,
    payload_bits: u64,
    priority: Priority,
    ids: &mut PacketIds,
) -> Vec<Packet> {
    (0..packet_count(flow.size_bits, payload_bits))
        .map(|_| Packet {
            id: ids.take(),
            flow_id: flow.id,
            deadline: flow.deadline,
            gen_slot: flow.gen_slot,
            hops: vec![flow.source],
            arrival_slot: None,
            priority,
        })
        .collect()
}
