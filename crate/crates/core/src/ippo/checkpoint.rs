//! Binary checkpoint: magic, version, a JSON header, then little-endian f64
//! arrays (actor params, actor m, actor v, critic params, critic m, critic v).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::{actor_encoder, critic_encoder, IppoPolicy};
use super::trainer::{CurveRow, Trainer};
use crate::config::{SimConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::AdamW;

pub const MAGIC: &[u8; 8] = b"UAVRCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub master_seed: u64,
    /// Next episode to run; with the master seed this fixes all future
    /// sampling.
    pub episode: usize,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub actor_params: usize,
    pub critic_params: usize,
    pub actor_opt: AdamW,
    pub critic_opt: AdamW,
    pub curve: Vec<CurveRow>,
}

fn push_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Trainer {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            version: VERSION,
            master_seed: self.master_seed,
            episode: self.episode,
            sim: self.sim.clone(),
            train: self.cfg.clone(),
            actor_params: self.actor_params.len(),
            critic_params: self.critic_params.len(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            curve: self.curve.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(24 + json.len() + 8 * 3 * (header.actor_params + header.critic_params));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for xs in [
            &self.actor_params,
            &self.actor_opt.m,
            &self.actor_opt.v,
            &self.critic_params,
            &self.critic_opt.m,
            &self.critic_opt.v,
        ] {
            push_f64s(&mut out, xs);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut arrays) = parse(bytes)?;
        let actor = actor_encoder(&header.sim, &header.train);
        let critic = critic_encoder(&header.sim, &header.train);
        if actor.num_params() != header.actor_params || critic.num_params() != header.critic_params {
            return Err(corrupt("parameter counts do not match the stored configuration"));
        }
        let mut actor_opt = header.actor_opt;
        let mut critic_opt = header.critic_opt;
        let critic_v = arrays.pop().expect("six arrays");
        let critic_m = arrays.pop().expect("six arrays");
        let critic_params = arrays.pop().expect("six arrays");
        let actor_v = arrays.pop().expect("six arrays");
        let actor_m = arrays.pop().expect("six arrays");
        let actor_params = arrays.pop().expect("six arrays");
        actor_opt.m = actor_m;
        actor_opt.v = actor_v;
        critic_opt.m = critic_m;
        critic_opt.v = critic_v;
        Ok(Self {
            sim: header.sim,
            cfg: header.train,
            master_seed: header.master_seed,
            actor,
            critic,
            actor_params,
            critic_params,
            actor_opt,
            critic_opt,
            episode: header.episode,
            curve: header.curve,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Header plus the six parameter and moment arrays.
fn parse(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<Vec<f64>>)> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..20 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let mut rest = &bytes[20 + hlen..];
    let (a, c) = (header.actor_params, header.critic_params);
    if rest.len() != 8 * 3 * (a + c) {
        return Err(corrupt(format!(
            "payload holds {} bytes, expected {}",
            rest.len(),
            8 * 3 * (a + c)
        )));
    }
    let mut arrays = Vec::with_capacity(6);
    for n in [a, a, a, c, c, c] {
        let (head, tail) = rest.split_at(8 * n);
        arrays.push(
            head.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect(),
        );
        rest = tail;
    }
    Ok((header, arrays))
}

/// Read only what evaluation and inspection need.
pub fn read_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse(&bytes)?.0)
}

/// The trained actor of a checkpoint as a routing policy.
pub fn load_policy(path: impl AsRef<Path>) -> Result<IppoPolicy> {
    Ok(Trainer::load(path)?.policy())
}
