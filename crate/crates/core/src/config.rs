//! Simulation and training configuration.
//!
//! Config files are flat `key = value` TOML. Every key is optional; omitted
//! keys take the defaults below. Unknown keys are rejected so that typos do
//! not silently fall back to a default.
//!
//! | key | unit | default |
//! |-----|------|---------|
//! | `arena_size` | m ×3 | `[1200, 1200, 200]` |
//! | `min_uav_altitude` | m | `100` |
//! | `num_uavs` | count | `35` |
//! | `slot_len` | s | `0.05` |
//! | `horizon` | s | `9` |
//! | `traffic_prob` | probability per UAV per slot | `0.03` |
//! | `packet_payload_bits` | bits | `12000` |
//! | `max_neighbors` | count | `8` |
//! | `max_tx_power_dbm` | dBm | `30` |
//! | `noise_psd_dbm_hz` | dBm/Hz | `-174` |
//! | `num_subchannels` | count | `25` |
//! | `subchannel_bw_hz` | Hz | `20e6` |
//! | `ref_gain_db` | dB | `-50` |
//! | `s_curve` | `[D1, D2]` | `[9.61, 0.15]` |
//! | `pathloss_exp` | – | `2` |
//! | `excess_loss_db` | `[LoS, NLoS]` dB | `[1, 20]` |
//! | `carrier_hz` | Hz | `2.4e9` |
//! | `light_speed` | m/s | `3e8` |
//! | `sinr_min_db` | dB | `11` |
//! | `loss_cap` | ratio | `0.1` |
//! | `traffic_size_range_mb` | MB | `[0.5, 2]` |
//! | `deadline_range_s` | s | `[1.5, 3]` |
//! | `deadline_anchor_mb` | MB | `[0.5, 2]` |
//! | `buffer_range` | packets | `[3000, 5000]` |
//! | `gbs_position` | m ×3 | `[0, 600, 0]` |
//! | `mean_velocity`, `min_velocity`, `max_velocity` | m/s ×3 | `[25,25,10]`, `[15,15,5]`, `[50,50,20]` |
//! | `gm_memory` | – | `0.85` |
//! | `gm_noise_std` | m/s ×3 | `[5, 5, 2]` |
//! | `purge_expired` | bool | `false` |
//! | `q_step` | packets | `300` |
//! | `obs_queue_norm` | packets | `5000` |
//! | `greedy_progress_gate` | bool | `false` |
//! | reward keys | see [`RewardConfig`] | |
//! | training keys | see [`TrainConfig`] | |
//!
//! The relative deadline of a flow is the linear map sending
//! `deadline_anchor_mb` onto `deadline_range_s`, evaluated at the flow size.
//! Keeping the anchor separate from `traffic_size_range_mb` lets load presets
//! change flow sizes without moving the deadline line.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "UAVROUTE_CONFIG";

/// Sign applied to the tolerance-reward argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TolSign {
    /// `tanh(k1 (a q - c) / q_scale + k2)`.
    AsWritten,
    /// `tanh(k1 (c - a q) / q_scale + k2)`.
    Negated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w_min: f64,
    pub w_max: f64,
    /// Queue-length range mapped onto `[w_max, w_min]`.
    pub reward_q_min: f64,
    pub reward_q_max: f64,
    /// Path-reward penalties for priorities 1, 2, 3.
    pub priority_penalty: [f64; 3],
    /// Penalty magnitude for the retain share in the tolerance reward.
    pub r0_tol: f64,
    pub k1: f64,
    pub k2: f64,
    /// Packets per unit of tanh argument.
    pub tol_q_scale: f64,
    pub tol_sign: TolSign,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_min: 0.2,
            w_max: 0.8,
            reward_q_min: 1.0,
            reward_q_max: 1000.0,
            priority_penalty: [0.5, 0.3, 0.05],
            r0_tol: 0.1,
            k1: 3.5,
            k2: -0.35,
            tol_q_scale: 300.0,
            tol_sign: TolSign::AsWritten,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub arena_size: [f64; 3],
    pub min_uav_altitude: f64,
    pub num_uavs: usize,
    pub slot_len: f64,
    pub horizon: f64,
    pub traffic_prob: f64,
    pub packet_payload_bits: u64,
    pub max_neighbors: usize,
    pub max_tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub num_subchannels: usize,
    pub subchannel_bw_hz: f64,
    pub ref_gain_db: f64,
    pub s_curve: [f64; 2],
    pub pathloss_exp: f64,
    pub excess_loss_db: [f64; 2],
    pub carrier_hz: f64,
    pub light_speed: f64,
    pub sinr_min_db: f64,
    pub loss_cap: f64,
    pub traffic_size_range_mb: [f64; 2],
    pub deadline_range_s: [f64; 2],
    pub deadline_anchor_mb: [f64; 2],
    pub buffer_range: [u64; 2],
    pub gbs_position: [f64; 3],
    pub mean_velocity: [f64; 3],
    pub min_velocity: [f64; 3],
    pub max_velocity: [f64; 3],
    pub gm_memory: f64,
    pub gm_noise_std: [f64; 3],
    pub purge_expired: bool,
    pub q_step: u64,
    pub obs_queue_norm: f64,
    pub greedy_progress_gate: bool,
    #[serde(flatten)]
    pub reward: RewardConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            arena_size: [1200.0, 1200.0, 200.0],
            min_uav_altitude: 100.0,
            num_uavs: 35,
            slot_len: 0.05,
            horizon: 9.0,
            traffic_prob: 0.03,
            packet_payload_bits: 12_000,
            max_neighbors: 8,
            max_tx_power_dbm: 30.0,
            noise_psd_dbm_hz: -174.0,
            num_subchannels: 25,
            subchannel_bw_hz: 20e6,
            ref_gain_db: -50.0,
            s_curve: [9.61, 0.15],
            pathloss_exp: 2.0,
            excess_loss_db: [1.0, 20.0],
            carrier_hz: 2.4e9,
            light_speed: 3e8,
            sinr_min_db: 11.0,
            loss_cap: 0.1,
            traffic_size_range_mb: [0.5, 2.0],
            deadline_range_s: [1.5, 3.0],
            deadline_anchor_mb: [0.5, 2.0],
            buffer_range: [3000, 5000],
            gbs_position: [0.0, 600.0, 0.0],
            mean_velocity: [25.0, 25.0, 10.0],
            min_velocity: [15.0, 15.0, 5.0],
            max_velocity: [50.0, 50.0, 20.0],
            gm_memory: 0.85,
            gm_noise_std: [5.0, 5.0, 2.0],
            purge_expired: false,
            q_step: 300,
            obs_queue_norm: 5000.0,
            greedy_progress_gate: false,
            reward: RewardConfig::default(),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl SimConfig {
    /// Reduced scenario used for CI-sized runs: 8 UAVs, 3 s, N = 4.
    pub fn desk_scale() -> Self {
        Self {
            num_uavs: 8,
            horizon: 3.0,
            max_neighbors: 4,
            ..Self::default()
        }
    }

    pub fn paper_scale() -> Self {
        Self::default()
    }

    pub fn num_slots(&self) -> usize {
        (self.horizon / self.slot_len).round() as usize
    }

    /// Node id of the ground base station; UAVs are `0..num_uavs`.
    pub fn gbs_id(&self) -> usize {
        self.num_uavs
    }

    pub fn arena_diagonal(&self) -> f64 {
        let [x, y, z] = self.arena_size;
        (x * x + y * y + z * z).sqrt()
    }

    pub fn tx_power_watts(&self) -> f64 {
        dbm_to_watts(self.max_tx_power_dbm) / (self.max_neighbors as f64 + 1.0)
    }

    pub fn noise_power_watts(&self) -> f64 {
        self.subchannel_bw_hz * dbm_to_watts(self.noise_psd_dbm_hz)
    }

    pub fn sinr_min_linear(&self) -> f64 {
        db_to_linear(self.sinr_min_db)
    }

    /// Relative deadline (seconds after generation) for a flow of `size_mb`.
    pub fn relative_deadline(&self, size_mb: f64) -> f64 {
        let [s0, s1] = self.deadline_anchor_mb;
        let [d0, d1] = self.deadline_range_s;
        d0 + (size_mb - s0) * (d1 - d0) / (s1 - s0)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive")))
            }
        }
        fn range(name: &str, r: [f64; 2]) -> Result<()> {
            if r[0].is_finite() && r[1].is_finite() && r[0] < r[1] {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be a non-degenerate range [lo, hi] with lo < hi"
                )))
            }
        }
        fn probability(name: &str, p: f64) -> Result<()> {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in [0, 1]")))
            }
        }

        for (i, v) in self.arena_size.iter().enumerate() {
            positive(&format!("arena_size[{i}]"), *v)?;
        }
        if !(self.min_uav_altitude >= 0.0) {
            return Err(Error::InvalidConfig(
                "min_uav_altitude must be non-negative".into(),
            ));
        }
        if self.min_uav_altitude > self.arena_size[2] {
            return Err(Error::InfeasibleAltitude {
                min: self.min_uav_altitude,
                max: self.arena_size[2],
            });
        }
        for (name, v) in [
            ("num_uavs", self.num_uavs),
            ("max_neighbors", self.max_neighbors),
            ("num_subchannels", self.num_subchannels),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.packet_payload_bits == 0 {
            return Err(Error::InvalidConfig(
                "packet_payload_bits must be positive".into(),
            ));
        }
        if self.q_step == 0 {
            return Err(Error::InvalidConfig("q_step must be positive".into()));
        }
        positive("slot_len", self.slot_len)?;
        positive("horizon", self.horizon)?;
        let slots = self.num_slots();
        if slots == 0 || (slots as f64 * self.slot_len - self.horizon).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "horizon must be an integer multiple of slot_len".into(),
            ));
        }
        probability("traffic_prob", self.traffic_prob)?;
        probability("gm_memory", self.gm_memory)?;
        positive("subchannel_bw_hz", self.subchannel_bw_hz)?;
        positive("carrier_hz", self.carrier_hz)?;
        positive("light_speed", self.light_speed)?;
        positive("pathloss_exp", self.pathloss_exp)?;
        positive("obs_queue_norm", self.obs_queue_norm)?;
        if !(self.loss_cap >= 0.0) {
            return Err(Error::InvalidConfig("loss_cap must be non-negative".into()));
        }
        range("traffic_size_range_mb", self.traffic_size_range_mb)?;
        positive("traffic_size_range_mb[0]", self.traffic_size_range_mb[0])?;
        range("deadline_range_s", self.deadline_range_s)?;
        range("deadline_anchor_mb", self.deadline_anchor_mb)?;
        if self.buffer_range[0] == 0 || self.buffer_range[0] >= self.buffer_range[1] {
            return Err(Error::InvalidConfig(
                "buffer_range must be a non-degenerate range of positive packet counts".into(),
            ));
        }
        for i in 0..3 {
            if !(0.0 <= self.min_velocity[i]
                && self.min_velocity[i] <= self.mean_velocity[i]
                && self.mean_velocity[i] <= self.max_velocity[i])
            {
                return Err(Error::InvalidConfig(format!(
                    "velocity bounds must satisfy 0 <= min_velocity[{i}] <= mean_velocity[{i}] <= max_velocity[{i}]"
                )));
            }
            if !(self.gm_noise_std[i] >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "gm_noise_std[{i}] must be non-negative"
                )));
            }
        }
        let r = &self.reward;
        if !(r.w_min <= r.w_max) {
            return Err(Error::InvalidConfig("w_min must not exceed w_max".into()));
        }
        range("reward_q", [r.reward_q_min, r.reward_q_max])?;
        positive("tol_q_scale", r.tol_q_scale)?;
        Ok(())
    }
}

/// Dirichlet action-construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirichletConfig {
    /// Scale applied to the sparsemax output.
    pub rho: f64,
    /// Floor added on valid dimensions.
    pub alpha_min: f64,
    /// Concentration used on masked dimensions.
    pub mask_eps: f64,
}

impl Default for DirichletConfig {
    fn default() -> Self {
        Self {
            rho: 30.0,
            alpha_min: 0.5,
            mask_eps: 1e-8,
        }
    }
}

/// How the critic's min-of-squared-errors is turned into a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticLossSign {
    /// Minimize `mean(min(...))`.
    Minimize,
    /// Minimize `-mean(min(...))`, the sign taken literally.
    Literal,
}

/// Sign of the entropy term in the actor loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropySign {
    /// Minimize `-mean(L_clip + c H)`, rewarding entropy.
    Bonus,
    /// Minimize `-mean(L_clip - c H)`, penalizing entropy.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub update_rounds: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub actor_clip: f64,
    pub value_clip: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub normalize_advantages: bool,
    pub critic_loss_sign: CriticLossSign,
    pub entropy_sign: EntropySign,
    pub own_hidden: usize,
    pub neigh_hidden: usize,
    pub gru_hidden: usize,
    pub fusion_hidden: usize,
    #[serde(flatten)]
    pub dirichlet: DirichletConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 3500,
            update_rounds: 5,
            gamma: 0.95,
            gae_lambda: 0.95,
            actor_clip: 0.05,
            value_clip: 0.2,
            entropy_coef: 0.01,
            learning_rate: 2e-4,
            weight_decay: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            normalize_advantages: true,
            critic_loss_sign: CriticLossSign::Minimize,
            entropy_sign: EntropySign::Bonus,
            own_hidden: 128,
            neigh_hidden: 256,
            gru_hidden: 256,
            fusion_hidden: 128,
            dirichlet: DirichletConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn desk_scale() -> Self {
        Self {
            episodes: 300,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in [0, 1]")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("gae_lambda", self.gae_lambda)?;
        for (name, v) in [
            ("actor_clip", self.actor_clip),
            ("value_clip", self.value_clip),
            ("learning_rate", self.learning_rate),
            ("rho", self.dirichlet.rho),
            ("alpha_min", self.dirichlet.alpha_min),
            ("mask_eps", self.dirichlet.mask_eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.entropy_coef < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(
                "entropy_coef and weight_decay must be non-negative".into(),
            ));
        }
        for (name, v) in [
            ("own_hidden", self.own_hidden),
            ("neigh_hidden", self.neigh_hidden),
            ("gru_hidden", self.gru_hidden),
            ("fusion_hidden", self.fusion_hidden),
            ("update_rounds", self.update_rounds),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

fn keys_of<T: Serialize>(value: &T) -> BTreeSet<String> {
    match toml::Value::try_from(value) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

/// Parse a flat config text into both the simulation and training sections.
pub fn parse_config(text: &str) -> Result<(SimConfig, TrainConfig)> {
    parse_config_over(text, &SimConfig::default(), &TrainConfig::default())
}

/// Like [`parse_config`], but keys missing from `text` keep the values of
/// the given base configs instead of the defaults.
pub fn parse_config_over(text: &str, sim: &SimConfig, train: &TrainConfig) -> Result<(SimConfig, TrainConfig)> {
    let overrides: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
    let mut table: toml::Table = render_config(sim, train)
        .parse()
        .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
    for k in overrides.keys() {
        if !table.contains_key(k) {
            return Err(Error::ConfigParse(format!("unknown key `{k}`")));
        }
    }
    table.extend(overrides);
    parse_table(table)
}

fn parse_table(table: toml::Table) -> Result<(SimConfig, TrainConfig)> {
    let known: BTreeSet<String> = keys_of(&SimConfig::default())
        .into_iter()
        .chain(keys_of(&TrainConfig::default()))
        .collect();
    if let Some(unknown) = table.keys().find(|k| !known.contains(*k)) {
        return Err(Error::ConfigParse(format!("unknown key `{unknown}`")));
    }
    let value = toml::Value::Table(table);
    let sim: SimConfig = value
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
    let train: TrainConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
    sim.validate()?;
    train.validate()?;
    Ok((sim, train))
}

/// Load the simulation section of a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    Ok(load_full_config(path)?.0)
}

pub fn load_full_config(path: impl AsRef<Path>) -> Result<(SimConfig, TrainConfig)> {
    load_config_over(path, &SimConfig::default(), &TrainConfig::default())
}

pub fn load_config_over(
    path: impl AsRef<Path>,
    sim: &SimConfig,
    train: &TrainConfig,
) -> Result<(SimConfig, TrainConfig)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_over(&text, sim, train)
}

/// Render a config pair back to the flat file format.
pub fn render_config(sim: &SimConfig, train: &TrainConfig) -> String {
    let mut table = toml::Table::new();
    for v in [toml::Value::try_from(sim), toml::Value::try_from(train)]
        .into_iter()
        .flatten()
    {
        if let toml::Value::Table(t) = v {
            table.extend(t);
        }
    }
    toml::to_string(&table).unwrap_or_default()
}
