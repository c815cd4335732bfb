//! One slot of split-and-forward execution.
//!
//! A slot is a strict pipeline: every sender's plan is computed from the
//! start-of-slot state, receiver buffers are arbitrated, and only then are
//! queues mutated. Forwarded packets land in the receiver's buffer at the end
//! of the slot and can move again from the next slot on.

mod metrics;

pub use metrics::{
    deviation_grid, packet_deviation, replay_metrics, Counts, EpisodeMetrics, EventKind, EventRecord, MetricsRecorder,
    EVENT_LOG_HEADER,
};

use crate::channel::LinkTable;
use crate::error::{Error, Result};
use crate::queueing::PriorityQueues;
use crate::types::{NodeId, Packet, Priority};

const SIMPLEX_TOL: f64 = 1e-9;

/// Split ratios of one UAV over `[retain, candidate 1, ..., candidate N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDecision {
    pub owner: NodeId,
    pub ratios: Vec<f64>,
}

impl SplitDecision {
    pub fn retain_all(owner: NodeId, max_neighbors: usize) -> Self {
        let mut ratios = vec![0.0; max_neighbors + 1];
        ratios[0] = 1.0;
        Self { owner, ratios }
    }

    /// Check simplex membership and that entries past the real candidates
    /// are exactly zero.
    pub fn validate(&self, num_candidates: usize, max_neighbors: usize) -> Result<()> {
        if self.ratios.len() != max_neighbors + 1 {
            return Err(Error::InvalidSplit(format!(
                "expected {} ratios, got {}",
                max_neighbors + 1,
                self.ratios.len()
            )));
        }
        if let Some((i, v)) = self
            .ratios
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidSplit(format!("ratio {i} = {v} outside [0, 1]")));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidSplit(format!("ratios sum to {sum}")));
        }
        if let Some(i) = (num_candidates + 1..self.ratios.len()).find(|&i| self.ratios[i] != 0.0) {
            return Err(Error::InvalidSplit(format!(
                "ratio {i} is non-zero but only {num_candidates} candidates exist"
            )));
        }
        Ok(())
    }
}

/// Quantize `weights * total` to integers summing to `total`: floors first,
/// then one unit each to the largest fractional parts (lower index on ties).
pub fn largest_remainder(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || total == 0 || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut shares: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = shares.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        shares[i] += 1;
    }
    shares
}

/// Share a receiver's free buffer among competing senders.
///
/// `demands` are `(sender, packets)` pairs. If everything fits, every demand
/// is granted; otherwise each sender gets `floor(free * d / sum)` and the
/// leftover units go one by one to the largest remainders, lower sender id
/// first on ties. Grants are returned in input order.
pub fn arbitrate_receivers(demands: &[(NodeId, u64)], free: u64) -> Vec<u64> {
    let total: u64 = demands.iter().map(|d| d.1).sum();
    if total <= free {
        return demands.iter().map(|d| d.1).collect();
    }
    let num: Vec<u128> = demands
        .iter()
        .map(|d| free as u128 * d.1 as u128)
        .collect();
    let mut grants: Vec<u64> = num.iter().map(|n| (n / total as u128) as u64).collect();
    let mut left = free - grants.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = num[a] % total as u128;
        let rb = num[b] % total as u128;
        rb.cmp(&ra).then(demands[a].0.cmp(&demands[b].0))
    });
    for i in order {
        if left == 0 {
            break;
        }
        grants[i] += 1;
        left -= 1;
    }
    grants
}

/// One sender-to-receiver transfer and the limits it was audited against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub from: NodeId,
    pub to: NodeId,
    pub planned: u64,
    pub capacity: u64,
    pub grant: u64,
    pub sent: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SlotLedger {
    pub transfers: Vec<Transfer>,
    /// Packets delivered to the GBS this slot, per sender.
    pub direct: Vec<u64>,
    pub forward_loss: Vec<u64>,
    pub retained: Vec<u64>,
    pub dequeued: Vec<u64>,
    pub delivered: Vec<Packet>,
    /// Destroyed packets with their intended receiver.
    pub lost: Vec<(NodeId, Packet)>,
    /// `(sender, receiver, packet id)` of every relayed packet.
    pub forwarded: Vec<(NodeId, NodeId, u64)>,
}

impl SlotLedger {
    fn new(m: usize) -> Self {
        Self {
            direct: vec![0; m],
            forward_loss: vec![0; m],
            retained: vec![0; m],
            dequeued: vec![0; m],
            ..Default::default()
        }
    }

    pub fn sent_by(&self, m: NodeId) -> u64 {
        self.transfers
            .iter()
            .filter(|t| t.from == m)
            .map(|t| t.sent)
            .sum()
    }

    /// `retained + sent + lost + direct == dequeued` for every UAV.
    pub fn is_conserved(&self) -> bool {
        (0..self.dequeued.len()).all(|m| {
            self.retained[m] + self.sent_by(m) + self.forward_loss[m] + self.direct[m]
                == self.dequeued[m]
        })
    }
}

enum Plan {
    Idle,
    Direct { priority: Priority, count: u64 },
    Split {
        priority: Priority,
        q_sel: u64,
        planned: Vec<u64>,
    },
}

/// Run the forwarding phase of slot `slot` over every UAV's queues.
///
/// `decisions[m]` is consulted only for UAVs that hold traffic and cannot
/// reach the GBS; `None` there means retain everything.
pub fn execute_slot(
    queues: &mut [PriorityQueues],
    links: &LinkTable,
    decisions: &[Option<SplitDecision>],
    max_neighbors: usize,
    slot: u32,
    now: f64,
    gbs_id: NodeId,
) -> Result<SlotLedger> {
    let m = queues.len();
    let mut ledger = SlotLedger::new(m);

    // Phase 1: plans from start-of-slot state.
    let mut plans = Vec::with_capacity(m);
    for node in 0..m {
        let Some(priority) = queues[node].selected() else {
            plans.push(Plan::Idle);
            continue;
        };
        let q_sel = queues[node].sub_len(priority);
        if links.gbs_reachable[node] {
            let count = q_sel.min(links.gbs_link(node).capacity);
            plans.push(Plan::Direct { priority, count });
            continue;
        }
        let planned = match decisions.get(node).and_then(Option::as_ref) {
            Some(d) => {
                d.validate(links.candidates[node].len(), max_neighbors)?;
                largest_remainder(&d.ratios, q_sel)
            }
            None => {
                let mut p = vec![0; max_neighbors + 1];
                p[0] = q_sel;
                p
            }
        };
        plans.push(Plan::Split {
            priority,
            q_sel,
            planned,
        });
    }

    // Phase 2: aggregate link-limited demand per receiver and arbitrate.
    let mut demands: Vec<Vec<(NodeId, u64)>> = vec![Vec::new(); m];
    for (node, plan) in plans.iter().enumerate() {
        if let Plan::Split { planned, .. } = plan {
            for (k, &rx) in links.candidates[node].iter().enumerate() {
                let want = planned[k + 1].min(links.link(node, rx).capacity);
                if want > 0 {
                    demands[rx].push((node, want));
                }
            }
        }
    }
    let mut grant_of = vec![Vec::<(NodeId, u64)>::new(); m];
    for rx in 0..m {
        if demands[rx].is_empty() {
            continue;
        }
        let grants = arbitrate_receivers(&demands[rx], queues[rx].free());
        for (&(sender, _), g) in demands[rx].iter().zip(grants) {
            grant_of[sender].push((rx, g));
        }
    }

    // Phase 3: mutate queues.
    let mut inbox: Vec<Vec<Packet>> = vec![Vec::new(); m];
    for (node, plan) in plans.into_iter().enumerate() {
        match plan {
            Plan::Idle => {}
            Plan::Direct { priority, count } => {
                let pkts = queues[node].take_front(priority, count);
                ledger.dequeued[node] = count;
                ledger.direct[node] = count;
                for mut p in pkts {
                    p.hops.push(gbs_id);
                    p.arrival_slot = Some(slot);
                    ledger.delivered.push(p);
                }
            }
            Plan::Split {
                priority,
                q_sel,
                planned,
            } => {
                let mut batch = queues[node].take_front(priority, q_sel).into_iter();
                ledger.dequeued[node] = q_sel;
                for (k, &rx) in links.candidates[node].iter().enumerate() {
                    let share = planned[k + 1];
                    if share == 0 {
                        continue;
                    }
                    let capacity = links.link(node, rx).capacity;
                    let grant = grant_of[node]
                        .iter()
                        .find(|(r, _)| *r == rx)
                        .map_or(0, |&(_, g)| g);
                    let sent = share.min(capacity).min(grant);
                    for _ in 0..sent {
                        let mut p = batch.next().expect("batch holds q_sel packets");
                        ledger.forwarded.push((node, rx, p.id));
                        p.hops.push(rx);
                        inbox[rx].push(p);
                    }
                    for _ in sent..share {
                        let p = batch.next().expect("batch holds q_sel packets");
                        ledger.lost.push((rx, p));
                    }
                    ledger.forward_loss[node] += share - sent;
                    ledger.transfers.push(Transfer {
                        from: node,
                        to: rx,
                        planned: share,
                        capacity,
                        grant,
                        sent,
                    });
                }
                let rest: Vec<Packet> = batch.collect();
                ledger.retained[node] = rest.len() as u64;
                debug_assert_eq!(rest.len() as u64, planned[0]);
                queues[node].restore_front(priority, rest);
            }
        }
    }

    // Phase 4: arrivals.
    for (rx, pkts) in inbox.into_iter().enumerate() {
        if pkts.is_empty() {
            continue;
        }
        let admission = queues[rx].enqueue(pkts, now);
        debug_assert!(admission.rejected.is_empty(), "grant exceeded free buffer");
    }
    Ok(ledger)
}
