//! Per-slot radio state: gains, co-channel interference, SINR, Shannon rates,
//! whole-packet capacities and the neighbor sets derived from them.

use std::io::Write;

use rand::seq::index;
use rand::Rng;

use crate::config::{db_to_linear, linear_to_db, SimConfig};
use crate::error::{Error, Result};
use crate::mobility::{distance, Vec3};
use crate::types::NodeId;

#[derive(Debug, Clone)]
pub struct ChannelModel {
    ref_gain: f64,
    s_curve: [f64; 2],
    pathloss_exp: f64,
    excess_los: f64,
    excess_nlos: f64,
    carrier_hz: f64,
    light_speed: f64,
    pub tx_power: f64,
    pub noise_power: f64,
    pub bandwidth: f64,
    pub sinr_min: f64,
    slot_len: f64,
    payload_bits: u64,
    pub num_subchannels: usize,
    pub max_neighbors: usize,
}

impl ChannelModel {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            ref_gain: db_to_linear(cfg.ref_gain_db),
            s_curve: cfg.s_curve,
            pathloss_exp: cfg.pathloss_exp,
            excess_los: db_to_linear(cfg.excess_loss_db[0]),
            excess_nlos: db_to_linear(cfg.excess_loss_db[1]),
            carrier_hz: cfg.carrier_hz,
            light_speed: cfg.light_speed,
            tx_power: cfg.tx_power_watts(),
            noise_power: cfg.noise_power_watts(),
            bandwidth: cfg.subchannel_bw_hz,
            sinr_min: cfg.sinr_min_linear(),
            slot_len: cfg.slot_len,
            payload_bits: cfg.packet_payload_bits,
            num_subchannels: cfg.num_subchannels,
            max_neighbors: cfg.max_neighbors,
        }
    }

    /// Line-of-sight UAV-to-UAV gain `beta0 / d^2`.
    pub fn uav_uav_gain(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::CoincidentNodes);
        }
        Ok(self.ref_gain / (d * d))
    }

    /// S-curve LoS probability at elevation angle `theta_deg`.
    pub fn los_probability(&self, theta_deg: f64) -> f64 {
        let [d1, d2] = self.s_curve;
        1.0 / (1.0 + d1 * (-d2 * (theta_deg - d1)).exp())
    }

    /// Expected UAV-to-GBS gain, averaging LoS and NLoS path loss.
    pub fn uav_gbs_gain(&self, d: f64, theta_deg: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::CoincidentNodes);
        }
        let free_space = (4.0 * std::f64::consts::PI * self.carrier_hz * d / self.light_speed)
            .powf(self.pathloss_exp);
        let p_los = self.los_probability(theta_deg);
        let loss = p_los * self.excess_los * free_space + (1.0 - p_los) * self.excess_nlos * free_space;
        Ok(1.0 / loss)
    }

    pub fn sinr(&self, signal_gain: f64, interference: f64) -> f64 {
        self.tx_power * signal_gain / (self.noise_power + interference)
    }

    pub fn rate(&self, sinr: f64) -> f64 {
        self.bandwidth * (1.0 + sinr).log2()
    }

    /// Whole packets deliverable in one slot at `rate`.
    pub fn capacity(&self, rate: f64) -> u64 {
        (rate * self.slot_len / self.payload_bits as f64).floor() as u64
    }
}

/// Elevation angle in degrees of `uav` seen from `gbs`.
pub fn elevation_deg(uav: Vec3, gbs: Vec3) -> f64 {
    let d = distance(uav, gbs);
    ((uav[2] - gbs[2]) / d).clamp(-1.0, 1.0).asin().to_degrees()
}

/// Every node draws one subchannel uniformly from `0..num_subchannels`.
pub fn assign_subchannels(num_nodes: usize, num_subchannels: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..num_nodes)
        .map(|_| rng.random_range(0..num_subchannels))
        .collect()
}

/// Active transmitters sharing `tx`'s subchannel, excluding `tx` itself and
/// the receiver `rx` (if it is a UAV).
pub fn co_channel_interferers(
    tx: NodeId,
    rx: Option<NodeId>,
    subchannel: &[usize],
    active: &[bool],
) -> Vec<NodeId> {
    (0..subchannel.len())
        .filter(|&i| i != tx && Some(i) != rx && active[i] && subchannel[i] == subchannel[tx])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub gain: f64,
    pub sinr: f64,
    pub rate: f64,
    pub capacity: u64,
}

#[derive(Debug, Clone)]
pub struct LinkTable {
    num_uavs: usize,
    uav_links: Vec<LinkState>,
    gbs_links: Vec<LinkState>,
    pub subchannel: Vec<usize>,
    pub active: Vec<bool>,
    pub gbs_distance: Vec<f64>,
    /// UAVs reachable above the SINR threshold.
    pub reachable: Vec<Vec<NodeId>>,
    /// Candidate relays, ascending global id, at most `max_neighbors`.
    pub candidates: Vec<Vec<NodeId>>,
    /// UAVs listing this UAV as a candidate.
    pub inbound: Vec<Vec<NodeId>>,
    pub gbs_reachable: Vec<bool>,
    sinr_min: f64,
}

impl LinkTable {
    /// Compute every link state for the slot. `active[m]` marks UAVs with
    /// queued traffic; only those contribute interference.
    pub fn build(
        model: &ChannelModel,
        positions: &[Vec3],
        gbs: Vec3,
        active: &[bool],
        subchannel: Vec<usize>,
    ) -> Result<Self> {
        let m = positions.len();
        let mut gains = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let g = model.uav_uav_gain(distance(positions[i], positions[j]))?;
                gains[i * m + j] = g;
                gains[j * m + i] = g;
            }
        }
        let mut gbs_gain = vec![0.0; m];
        let mut gbs_distance = vec![0.0; m];
        for i in 0..m {
            let d = distance(positions[i], gbs);
            gbs_distance[i] = d;
            gbs_gain[i] = model.uav_gbs_gain(d, elevation_deg(positions[i], gbs))?;
        }

        let mut uav_links = Vec::with_capacity(m * m);
        for tx in 0..m {
            for rx in 0..m {
                if tx == rx {
                    uav_links.push(LinkState {
                        gain: 0.0,
                        sinr: 0.0,
                        rate: 0.0,
                        capacity: 0,
                    });
                    continue;
                }
                let interference: f64 = co_channel_interferers(tx, Some(rx), &subchannel, active)
                    .into_iter()
                    .map(|i| model.tx_power * gains[i * m + rx])
                    .sum();
                let gain = gains[tx * m + rx];
                let sinr = model.sinr(gain, interference);
                let rate = model.rate(sinr);
                uav_links.push(LinkState {
                    gain,
                    sinr,
                    rate,
                    capacity: model.capacity(rate),
                });
            }
        }
        let gbs_links = (0..m)
            .map(|tx| {
                let interference: f64 = co_channel_interferers(tx, None, &subchannel, active)
                    .into_iter()
                    .map(|i| model.tx_power * gbs_gain[i])
                    .sum();
                let sinr = model.sinr(gbs_gain[tx], interference);
                let rate = model.rate(sinr);
                LinkState {
                    gain: gbs_gain[tx],
                    sinr,
                    rate,
                    capacity: model.capacity(rate),
                }
            })
            .collect();

        Ok(Self {
            num_uavs: m,
            uav_links,
            gbs_links,
            subchannel,
            active: active.to_vec(),
            gbs_distance,
            reachable: vec![Vec::new(); m],
            candidates: vec![Vec::new(); m],
            inbound: vec![Vec::new(); m],
            gbs_reachable: vec![false; m],
            sinr_min: model.sinr_min,
        })
    }

    pub fn num_uavs(&self) -> usize {
        self.num_uavs
    }

    /// Link from UAV `tx` to node `rx`; `rx == num_uavs` is the GBS.
    pub fn link(&self, tx: NodeId, rx: NodeId) -> LinkState {
        if rx == self.num_uavs {
            self.gbs_links[tx]
        } else {
            self.uav_links[tx * self.num_uavs + rx]
        }
    }

    pub fn gbs_link(&self, tx: NodeId) -> LinkState {
        self.gbs_links[tx]
    }

    /// Overwrite a UAV-to-UAV link; used to engineer test topologies.
    pub fn set_link(&mut self, tx: NodeId, rx: NodeId, state: LinkState) {
        if rx == self.num_uavs {
            self.gbs_links[tx] = state;
        } else {
            self.uav_links[tx * self.num_uavs + rx] = state;
        }
    }

    /// Derive reachability from SINR, sample up to `max_neighbors`
    /// candidates per UAV and build the inbound sets.
    pub fn build_neighbor_sets(&mut self, max_neighbors: usize, rng: &mut impl Rng) {
        let m = self.num_uavs;
        for tx in 0..m {
            self.reachable[tx] = (0..m)
                .filter(|&rx| rx != tx && self.uav_links[tx * m + rx].sinr >= self.sinr_min)
                .collect();
            self.gbs_reachable[tx] = self.gbs_links[tx].sinr >= self.sinr_min;
            let pool = &self.reachable[tx];
            let take = pool.len().min(max_neighbors);
            let mut chosen: Vec<NodeId> = index::sample(rng, pool.len(), take)
                .into_iter()
                .map(|k| pool[k])
                .collect();
            chosen.sort_unstable();
            self.candidates[tx] = chosen;
        }
        for inbound in &mut self.inbound {
            inbound.clear();
        }
        for tx in 0..m {
            for &rx in &self.candidates[tx] {
                self.inbound[rx].push(tx);
            }
        }
    }

    /// Dump every link as `slot, tx, rx, sinr_db, rate_bps, g`.
    pub fn write_csv<W: Write>(&self, slot: usize, w: &mut csv::Writer<W>) -> Result<()> {
        for tx in 0..self.num_uavs {
            for rx in 0..=self.num_uavs {
                if rx == tx {
                    continue;
                }
                let l = self.link(tx, rx);
                w.write_record(&[
                    slot.to_string(),
                    tx.to_string(),
                    rx.to_string(),
                    format!("{:.4}", linear_to_db(l.sinr)),
                    format!("{:.1}", l.rate),
                    l.capacity.to_string(),
                ])?;
            }
        }
        Ok(())
    }
}

pub const LINK_CSV_HEADER: [&str; 6] = ["slot", "tx", "rx", "sinr_db", "rate_bps", "g"];
