//! Episode metrics, the optional event log and a replay that recomputes the
//! metrics from the log alone.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::SlotLedger;
use crate::error::{Error, Result};
use crate::types::{NodeId, Packet, TrafficFlow};

/// Slack absorbed when comparing an arrival against its deadline; both are
/// sums of multiples of the slot length and differ by rounding only.
const ON_TIME_TOL: f64 = 1e-9;

pub const EVENT_LOG_HEADER: &str = "slot,event_kind,src,dst,pkt_id";

/// Elapsed time from generation to arrival minus the relative deadline.
/// Non-positive means on time.
pub fn packet_deviation(arrival_slot: u32, gen_slot: u32, deadline: f64, slot_len: f64) -> f64 {
    let elapsed = f64::from(arrival_slot - gen_slot + 1) * slot_len;
    elapsed - (deadline - f64::from(gen_slot) * slot_len)
}

fn is_on_time(deviation: f64) -> bool {
    deviation <= ON_TIME_TOL
}

/// Deviation grid `[-3, 3]` s in 0.1 s steps (61 points).
pub fn deviation_grid() -> Vec<f64> {
    (-30..=30).map(|i| f64::from(i) / 10.0).collect()
}

fn cumulative(deviations: &[f64], total: u64, grid: &[f64]) -> Vec<f64> {
    let mut sorted = deviations.to_vec();
    sorted.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&x| {
            if total == 0 {
                return 0.0;
            }
            let n = sorted.partition_point(|&d| d <= x + ON_TIME_TOL);
            n as f64 / total as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub generated: u64,
    pub delivered: u64,
    pub on_time: u64,
    pub forward_loss: u64,
    pub overflow_loss: u64,
    pub expired: u64,
    pub queued: u64,
    pub flows: u64,
    pub flows_completed: u64,
    pub flows_on_time: u64,
    /// Forwarding loss over generated packets.
    pub loss_ratio: f64,
    /// On-time deliveries over generated packets.
    pub on_time_ratio: f64,
    /// Forwarding plus admission-overflow loss over generated packets.
    pub total_loss_ratio: f64,
    pub loss_cap_ok: bool,
    /// Deviation of every delivered packet, seconds.
    pub packet_deviations: Vec<f64>,
    /// Deviation of the last packet of every fully delivered flow, seconds.
    pub flow_deviations: Vec<f64>,
}

impl EpisodeMetrics {
    /// `generated == delivered + forward_loss + overflow_loss + expired + queued`.
    pub fn is_conserved(&self) -> bool {
        self.generated
            == self.delivered + self.forward_loss + self.overflow_loss + self.expired + self.queued
    }

    /// Fraction of generated packets delivered with deviation `<= x`, per grid point.
    pub fn packet_curve(&self, grid: &[f64]) -> Vec<f64> {
        cumulative(&self.packet_deviations, self.generated, grid)
    }

    /// Fraction of flows fully delivered with deviation `<= x`, per grid point.
    pub fn task_curve(&self, grid: &[f64]) -> Vec<f64> {
        cumulative(&self.flow_deviations, self.flows, grid)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Generated,
    Overflow,
    Forward,
    Deliver,
    Loss,
    Expire,
}

impl EventKind {
    fn as_str(self) -> &'static str {
        match self {
            EventKind::Generated => "generated",
            EventKind::Overflow => "overflow",
            EventKind::Forward => "forward",
            EventKind::Deliver => "deliver",
            EventKind::Loss => "loss",
            EventKind::Expire => "expire",
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "generated" => EventKind::Generated,
            "overflow" => EventKind::Overflow,
            "forward" => EventKind::Forward,
            "deliver" => EventKind::Deliver,
            "loss" => EventKind::Loss,
            "expire" => EventKind::Expire,
            other => return Err(Error::Experiment(format!("unknown event kind {other:?}"))),
        })
    }
}

/// One event-log line. `dst` equals `src` for events without a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub slot: u32,
    pub kind: EventKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub pkt_id: u64,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.slot,
            self.kind.as_str(),
            self.src,
            self.dst,
            self.pkt_id
        )
    }
}

impl FromStr for EventRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = || Error::Experiment(format!("malformed event line {line:?}"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        Ok(Self {
            slot: f[0].parse().map_err(|_| bad())?,
            kind: f[1].parse()?,
            src: f[2].parse().map_err(|_| bad())?,
            dst: f[3].parse().map_err(|_| bad())?,
            pkt_id: f[4].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Default)]
struct FlowProgress {
    gen_slot: u32,
    deadline: f64,
    packets: u64,
    delivered: u64,
    last_arrival: u32,
}

impl FlowProgress {
    fn new(flow: &TrafficFlow) -> Self {
        Self {
            gen_slot: flow.gen_slot,
            deadline: flow.deadline,
            packets: flow.packet_count,
            ..Default::default()
        }
    }
}

#[derive(Debug, Default)]
struct Tally {
    generated: u64,
    delivered: u64,
    on_time: u64,
    forward_loss: u64,
    overflow_loss: u64,
    expired: u64,
    packet_deviations: Vec<f64>,
    flows: Vec<FlowProgress>,
    flow_index: HashMap<u64, usize>,
}

impl Tally {
    fn add_flow(&mut self, flow: &TrafficFlow) {
        self.flow_index.insert(flow.id, self.flows.len());
        self.flows.push(FlowProgress::new(flow));
    }

    fn deliver(&mut self, flow_id: u64, arrival_slot: u32, slot_len: f64) {
        let f = &mut self.flows[self.flow_index[&flow_id]];
        let dev = packet_deviation(arrival_slot, f.gen_slot, f.deadline, slot_len);
        f.delivered += 1;
        f.last_arrival = f.last_arrival.max(arrival_slot);
        self.delivered += 1;
        if is_on_time(dev) {
            self.on_time += 1;
        }
        self.packet_deviations.push(dev);
    }

    /// `queued` is counted from the queues, not inferred, so that
    /// conservation is a real check.
    fn finish(self, queued: u64, slot_len: f64, loss_cap: f64) -> EpisodeMetrics {
        let mut flow_deviations = Vec::new();
        let mut flows_on_time = 0;
        for f in self.flows.iter().filter(|f| f.delivered == f.packets) {
            let dev = packet_deviation(f.last_arrival, f.gen_slot, f.deadline, slot_len);
            if is_on_time(dev) {
                flows_on_time += 1;
            }
            flow_deviations.push(dev);
        }
        let loss_ratio = ratio(self.forward_loss, self.generated);
        EpisodeMetrics {
            generated: self.generated,
            delivered: self.delivered,
            on_time: self.on_time,
            forward_loss: self.forward_loss,
            overflow_loss: self.overflow_loss,
            expired: self.expired,
            queued,
            flows: self.flows.len() as u64,
            flows_completed: flow_deviations.len() as u64,
            flows_on_time,
            loss_ratio,
            on_time_ratio: ratio(self.on_time, self.generated),
            total_loss_ratio: ratio(self.forward_loss + self.overflow_loss, self.generated),
            loss_cap_ok: loss_ratio <= loss_cap,
            packet_deviations: self.packet_deviations,
            flow_deviations,
        }
    }
}

/// Running packet counts of an episode in progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub generated: u64,
    pub delivered: u64,
    pub forward_loss: u64,
    pub overflow_loss: u64,
    pub expired: u64,
}

impl Counts {
    /// Packets that must still be sitting in some queue.
    pub fn in_network(&self) -> u64 {
        self.generated - self.delivered - self.forward_loss - self.overflow_loss - self.expired
    }
}

/// Streaming metric accumulation over one episode, with an optional event log.
#[derive(Debug)]
pub struct MetricsRecorder {
    tally: Tally,
    slot_len: f64,
    loss_cap: f64,
    /// Parent flow of every packet, indexed by packet id.
    packet_flow: Vec<u64>,
    events: Option<Vec<EventRecord>>,
}

impl MetricsRecorder {
    pub fn new(slot_len: f64, loss_cap: f64, log_events: bool) -> Self {
        Self {
            tally: Tally::default(),
            slot_len,
            loss_cap,
            packet_flow: Vec::new(),
            events: log_events.then(Vec::new),
        }
    }

    fn log(&mut self, slot: u32, kind: EventKind, src: NodeId, dst: NodeId, pkt_id: u64) {
        if let Some(ev) = &mut self.events {
            ev.push(EventRecord {
                slot,
                kind,
                src,
                dst,
                pkt_id,
            });
        }
    }

    /// Register a new flow and its packets; ids must be issued sequentially.
    pub fn on_generated(&mut self, flow: &TrafficFlow, packets: &[Packet]) {
        self.tally.add_flow(flow);
        for p in packets {
            debug_assert_eq!(p.id as usize, self.packet_flow.len());
            self.packet_flow.push(p.flow_id);
            self.log(flow.gen_slot, EventKind::Generated, flow.source, flow.source, p.id);
        }
        self.tally.generated += packets.len() as u64;
    }

    pub fn on_overflow(&mut self, slot: u32, node: NodeId, rejected: &[Packet]) {
        self.tally.overflow_loss += rejected.len() as u64;
        for p in rejected {
            self.log(slot, EventKind::Overflow, node, node, p.id);
        }
    }

    pub fn on_expired(&mut self, slot: u32, node: NodeId, expired: &[Packet]) {
        self.tally.expired += expired.len() as u64;
        for p in expired {
            self.log(slot, EventKind::Expire, node, node, p.id);
        }
    }

    pub fn on_slot(&mut self, slot: u32, ledger: &SlotLedger) {
        for &(src, dst, id) in &ledger.forwarded {
            self.log(slot, EventKind::Forward, src, dst, id);
        }
        for (dst, p) in &ledger.lost {
            let src = *p.hops.last().expect("hop trace starts at the source");
            self.log(slot, EventKind::Loss, src, *dst, p.id);
        }
        self.tally.forward_loss += ledger.lost.len() as u64;
        for p in &ledger.delivered {
            let n = p.hops.len();
            self.log(slot, EventKind::Deliver, p.hops[n - 2], p.hops[n - 1], p.id);
            self.tally
                .deliver(p.flow_id, p.arrival_slot.expect("delivered packet"), self.slot_len);
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            generated: self.tally.generated,
            delivered: self.tally.delivered,
            forward_loss: self.tally.forward_loss,
            overflow_loss: self.tally.overflow_loss,
            expired: self.tally.expired,
        }
    }

    pub fn packet_flow(&self) -> &[u64] {
        &self.packet_flow
    }

    pub fn events(&self) -> Option<&[EventRecord]> {
        self.events.as_deref()
    }

    pub fn take_events(&mut self) -> Option<Vec<EventRecord>> {
        self.events.take()
    }

    /// Close the episode; `queued` is the number of packets still buffered.
    pub fn finish(self, queued: u64) -> EpisodeMetrics {
        self.tally.finish(queued, self.slot_len, self.loss_cap)
    }
}

/// Recompute episode metrics from an event log by replaying every packet
/// slot by slot. Fails if the log describes an impossible history: a packet
/// moved from a node it is not at, moved twice in one slot, or touched after
/// leaving the network.
pub fn replay_metrics(
    events: &[EventRecord],
    flows: &[TrafficFlow],
    packet_flow: &[u64],
    gbs_id: NodeId,
    slot_len: f64,
    loss_cap: f64,
) -> Result<EpisodeMetrics> {
    #[derive(Clone, Copy, PartialEq)]
    enum Where {
        Unborn,
        At(NodeId, Option<u32>),
        Gone,
    }
    let fail = |e: &EventRecord, why: &str| Error::Experiment(format!("replay: {why} at event {e}"));

    let mut tally = Tally::default();
    for f in flows {
        tally.add_flow(f);
    }
    let mut loc = vec![Where::Unborn; packet_flow.len()];
    for e in events {
        let id = e.pkt_id as usize;
        let Some(state) = loc.get_mut(id) else {
            return Err(fail(e, "unknown packet"));
        };
        match (e.kind, *state) {
            (EventKind::Generated, Where::Unborn) => {
                tally.generated += 1;
                *state = Where::At(e.src, None);
            }
            (EventKind::Generated, _) => return Err(fail(e, "duplicate generation")),
            (_, Where::At(node, _)) if node != e.src => {
                return Err(fail(e, "packet is elsewhere"))
            }
            (_, Where::At(_, Some(moved))) if moved == e.slot => {
                return Err(fail(e, "packet moved twice in one slot"))
            }
            (EventKind::Overflow, Where::At(..)) => {
                tally.overflow_loss += 1;
                *state = Where::Gone;
            }
            (EventKind::Expire, Where::At(..)) => {
                tally.expired += 1;
                *state = Where::Gone;
            }
            (EventKind::Loss, Where::At(..)) => {
                tally.forward_loss += 1;
                *state = Where::Gone;
            }
            (EventKind::Forward, Where::At(..)) => *state = Where::At(e.dst, Some(e.slot)),
            (EventKind::Deliver, Where::At(..)) => {
                if e.dst != gbs_id {
                    return Err(fail(e, "delivery not addressed to the GBS"));
                }
                tally.deliver(packet_flow[id], e.slot, slot_len);
                *state = Where::Gone;
            }
            _ => return Err(fail(e, "packet not in the network")),
        }
    }
    let queued = loc.iter().filter(|w| matches!(w, Where::At(..))).count() as u64;
    Ok(tally.finish(queued, slot_len, loss_cap))
}
