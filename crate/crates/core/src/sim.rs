//! Episode driver tying mobility, traffic, channel and forwarding together.
//!
//! Slot `t` covers `[t*dt, (t+1)*dt)` and runs in a fixed order: move UAVs
//! (from slot 1 on), re-bin queued packets, optionally purge expired ones,
//! generate and admit traffic, build the link table and neighbor sets, then
//! collect decisions and forward.

use crate::channel::{assign_subchannels, ChannelModel, LinkTable};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::forwarding::{
    execute_slot, Counts, EpisodeMetrics, EventRecord, MetricsRecorder, SlotLedger, SplitDecision,
};
use crate::mobility::{MobilityModel, UavKinematics, Vec3};
use crate::queueing::{classify_priority, PriorityQueues, TrafficGenerator};
use crate::rng::{RngStreams, SimRng, Stream};
use crate::types::{segment_flow, NodeId, PacketIds, TrafficFlow};

use rand::Rng;

/// Read-only snapshot handed to policies once the link table is built.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub slot: u32,
    pub cfg: &'a SimConfig,
    pub links: &'a LinkTable,
    pub kinematics: &'a [UavKinematics],
    pub queues: &'a [PriorityQueues],
}

impl SlotView<'_> {
    pub fn num_uavs(&self) -> usize {
        self.queues.len()
    }

    pub fn position(&self, m: NodeId) -> Vec3 {
        self.kinematics[m].position
    }

    pub fn gbs_distance(&self, m: NodeId) -> f64 {
        self.links.gbs_distance[m]
    }

    /// A UAV acts only when it holds traffic and cannot reach the GBS.
    pub fn needs_decision(&self, m: NodeId) -> bool {
        !self.queues[m].is_empty() && !self.links.gbs_reachable[m]
    }

    pub fn decision_agents(&self) -> Vec<NodeId> {
        (0..self.num_uavs()).filter(|&m| self.needs_decision(m)).collect()
    }
}

/// Chooses split ratios for the UAVs that must act in a slot.
pub trait RoutingPolicy {
    fn name(&self) -> &str;

    /// Reset per-episode state; `seed` is the episode's master seed.
    fn begin_episode(&mut self, _num_uavs: usize, _seed: u64) {}

    /// One decision per entry of `agents`, in the same order.
    fn decide(&mut self, view: &SlotView<'_>, agents: &[NodeId]) -> Result<Vec<SplitDecision>>;
}

/// Everything an episode leaves behind.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub flows: Vec<TrafficFlow>,
    /// Parent flow of every packet, indexed by packet id.
    pub packet_flow: Vec<u64>,
    pub events: Option<Vec<EventRecord>>,
    pub trajectory: Option<Vec<Vec<UavKinematics>>>,
}

#[derive(Debug)]
pub struct Simulation {
    cfg: SimConfig,
    seed: u64,
    channel: ChannelModel,
    mobility: MobilityModel,
    traffic: TrafficGenerator,
    mobility_rng: SimRng,
    traffic_rng: SimRng,
    channel_rng: SimRng,
    neighbor_rng: SimRng,
    kinematics: Vec<UavKinematics>,
    queues: Vec<PriorityQueues>,
    ids: PacketIds,
    recorder: MetricsRecorder,
    flows: Vec<TrafficFlow>,
    slot: u32,
    links: Option<LinkTable>,
    trajectory: Option<Vec<Vec<UavKinematics>>>,
    link_dump: Option<csv::Writer<Vec<u8>>>,
}

impl Simulation {
    pub fn new(cfg: &SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let streams = RngStreams::new(seed);
        let mobility = MobilityModel::new(cfg)?;
        let mut mobility_rng = streams.stream(Stream::Mobility);
        let mut traffic_rng = streams.stream(Stream::Traffic);
        let kinematics = mobility.init_positions(cfg.num_uavs, &mut mobility_rng);
        let [lo, hi] = cfg.buffer_range;
        let queues = (0..cfg.num_uavs)
            .map(|_| PriorityQueues::new(traffic_rng.random_range(lo..=hi)))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            channel: ChannelModel::new(cfg),
            mobility,
            traffic: TrafficGenerator::new(cfg),
            mobility_rng,
            traffic_rng,
            channel_rng: streams.stream(Stream::ChannelAssignment),
            neighbor_rng: streams.stream(Stream::NeighborSelection),
            kinematics,
            queues,
            ids: PacketIds::default(),
            recorder: MetricsRecorder::new(cfg.slot_len, cfg.loss_cap, false),
            flows: Vec::new(),
            slot: 0,
            links: None,
            trajectory: None,
            link_dump: None,
        })
    }

    /// Record every packet event for later replay.
    pub fn with_event_log(mut self) -> Self {
        self.recorder = MetricsRecorder::new(self.cfg.slot_len, self.cfg.loss_cap, true);
        self
    }

    pub fn with_trajectory(mut self) -> Self {
        self.trajectory = Some(Vec::new());
        self
    }

    /// Dump every link of every slot as CSV (see [`crate::channel::LINK_CSV_HEADER`]).
    pub fn with_link_dump(mut self) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(crate::channel::LINK_CSV_HEADER)
            .expect("writing to memory");
        self.link_dump = Some(w);
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot as usize >= self.cfg.num_slots()
    }

    pub fn queues(&self) -> &[PriorityQueues] {
        &self.queues
    }

    pub fn kinematics(&self) -> &[UavKinematics] {
        &self.kinematics
    }

    /// Link table of the current (or most recently finished) slot.
    pub fn links(&self) -> Option<&LinkTable> {
        self.links.as_ref()
    }

    pub fn counts(&self) -> Counts {
        self.recorder.counts()
    }

    pub fn queued(&self) -> u64 {
        self.queues.iter().map(PriorityQueues::len).sum()
    }

    /// `generated == delivered + losses + expired + queued`, right now.
    pub fn is_conserved(&self) -> bool {
        let c = self.counts();
        c.generated
            == c.delivered + c.forward_loss + c.overflow_loss + c.expired + self.queued()
    }

    /// Run the pre-decision phases of the current slot and expose the view.
    pub fn begin_slot(&mut self) -> Result<SlotView<'_>> {
        if self.is_done() {
            return Err(Error::Experiment("episode already finished".into()));
        }
        let slot = self.slot;
        let now = f64::from(slot) * self.cfg.slot_len;
        if slot > 0 {
            for k in &mut self.kinematics {
                *k = self.mobility.step(k, &mut self.mobility_rng);
            }
        }
        if let Some(t) = &mut self.trajectory {
            t.push(self.kinematics.clone());
        }

        for (m, q) in self.queues.iter_mut().enumerate() {
            q.reclassify(now);
            if self.cfg.purge_expired {
                let gone = q.purge_expired(now);
                self.recorder.on_expired(slot, m, &gone);
            }
        }

        let flows = self
            .traffic
            .generate(slot, self.cfg.num_uavs, &mut self.traffic_rng);
        for flow in flows {
            let priority = classify_priority(flow.deadline, now);
            let packets = segment_flow(&flow, self.cfg.packet_payload_bits, priority, &mut self.ids);
            self.recorder.on_generated(&flow, &packets);
            let admission = self.queues[flow.source].enqueue(packets, now);
            self.recorder
                .on_overflow(slot, flow.source, &admission.rejected);
            self.flows.push(flow);
        }

        let active: Vec<bool> = self.queues.iter().map(|q| !q.is_empty()).collect();
        let subchannel = assign_subchannels(
            self.cfg.num_uavs,
            self.cfg.num_subchannels,
            &mut self.channel_rng,
        );
        let positions: Vec<Vec3> = self.kinematics.iter().map(|k| k.position).collect();
        let mut links = LinkTable::build(
            &self.channel,
            &positions,
            self.cfg.gbs_position,
            &active,
            subchannel,
        )?;
        links.build_neighbor_sets(self.cfg.max_neighbors, &mut self.neighbor_rng);
        if let Some(w) = &mut self.link_dump {
            links.write_csv(slot as usize, w)?;
        }
        self.links = Some(links);
        Ok(self.view())
    }

    /// View of the slot opened by the last [`Simulation::begin_slot`].
    pub fn view(&self) -> SlotView<'_> {
        SlotView {
            slot: self.slot,
            cfg: &self.cfg,
            links: self.links.as_ref().expect("begin_slot not called"),
            kinematics: &self.kinematics,
            queues: &self.queues,
        }
    }

    /// Forward with the given decisions (indexed by UAV) and close the slot.
    pub fn end_slot(&mut self, decisions: &[Option<SplitDecision>]) -> Result<SlotLedger> {
        let links = self
            .links
            .as_ref()
            .ok_or_else(|| Error::Experiment("end_slot before begin_slot".into()))?;
        let end = f64::from(self.slot + 1) * self.cfg.slot_len;
        let ledger = execute_slot(
            &mut self.queues,
            links,
            decisions,
            self.cfg.max_neighbors,
            self.slot,
            end,
            self.cfg.gbs_id(),
        )?;
        self.recorder.on_slot(self.slot, &ledger);
        self.slot += 1;
        Ok(ledger)
    }

    /// Ask `policy` for every acting UAV and forward.
    pub fn step_with(&mut self, policy: &mut dyn RoutingPolicy) -> Result<SlotLedger> {
        let view = self.begin_slot()?;
        let agents = view.decision_agents();
        let chosen = policy.decide(&view, &agents)?;
        if chosen.len() != agents.len() {
            return Err(Error::Shape(format!(
                "policy {} returned {} decisions for {} agents",
                policy.name(),
                chosen.len(),
                agents.len()
            )));
        }
        let mut decisions = vec![None; self.cfg.num_uavs];
        for (m, d) in agents.into_iter().zip(chosen) {
            decisions[m] = Some(d);
        }
        self.end_slot(&decisions)
    }

    pub fn take_link_dump(&mut self) -> Option<Vec<u8>> {
        self.link_dump
            .take()
            .map(|w| w.into_inner().expect("in-memory writer"))
    }

    pub fn finish(mut self) -> EpisodeOutcome {
        let queued = self.queued();
        let events = self.recorder.take_events();
        let packet_flow = self.recorder.packet_flow().to_vec();
        EpisodeOutcome {
            metrics: self.recorder.finish(queued),
            flows: self.flows,
            packet_flow,
            events,
            trajectory: self.trajectory,
        }
    }
}

/// Run a whole episode of `policy` from `seed`.
pub fn run_episode(
    cfg: &SimConfig,
    seed: u64,
    policy: &mut dyn RoutingPolicy,
) -> Result<EpisodeOutcome> {
    let mut sim = Simulation::new(cfg, seed)?;
    policy.begin_episode(cfg.num_uavs, seed);
    while !sim.is_done() {
        sim.step_with(policy)?;
    }
    Ok(sim.finish())
}
