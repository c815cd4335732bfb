//! 3D Gauss-Markov UAV mobility inside a box arena.
//!
//! Each velocity component is tracked as a direction sign and a speed. The
//! speed follows a Gauss-Markov recursion around the reference speed and is
//! clamped into `[v_min, v_max]`; the sign flips when the UAV reflects off an
//! arena wall.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::SimConfig;
use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavKinematics {
    pub position: Vec3,
    /// Signed velocity, m/s.
    pub velocity: Vec3,
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// One Gauss-Markov update of a speed with a standard-normal draw `noise`
/// already scaled by the component's noise std.
pub fn gauss_markov_speed(speed: f64, mean: f64, memory: f64, noise: f64) -> f64 {
    memory * speed + (1.0 - memory) * mean + (1.0 - memory * memory).sqrt() * noise
}

/// Fold `x` back into `[lo, hi]` by mirror reflection. Returns the folded
/// value and whether an odd number of reflections happened.
fn reflect(x: f64, lo: f64, hi: f64) -> (f64, bool) {
    if hi <= lo {
        return (lo, false);
    }
    let mut y = x;
    let mut flipped = false;
    while y < lo || y > hi {
        y = if y < lo { 2.0 * lo - y } else { 2.0 * hi - y };
        flipped = !flipped;
    }
    (y, flipped)
}

#[derive(Debug, Clone)]
pub struct MobilityModel {
    lower: Vec3,
    upper: Vec3,
    mean: Vec3,
    v_min: Vec3,
    v_max: Vec3,
    memory: f64,
    noise_std: Vec3,
    slot_len: f64,
}

impl MobilityModel {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        if cfg.min_uav_altitude > cfg.arena_size[2] {
            return Err(Error::InfeasibleAltitude {
                min: cfg.min_uav_altitude,
                max: cfg.arena_size[2],
            });
        }
        Ok(Self {
            lower: [0.0, 0.0, cfg.min_uav_altitude],
            upper: cfg.arena_size,
            mean: cfg.mean_velocity,
            v_min: cfg.min_velocity,
            v_max: cfg.max_velocity,
            memory: cfg.gm_memory,
            noise_std: cfg.gm_noise_std,
            slot_len: cfg.slot_len,
        })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| self.lower[i] <= p[i] && p[i] <= self.upper[i])
    }

    pub fn speed_in_bounds(&self, v: Vec3) -> bool {
        (0..3).all(|i| self.v_min[i] <= v[i].abs() && v[i].abs() <= self.v_max[i])
    }

    /// Uniform positions in the flight band; initial velocity is the
    /// reference velocity with a random sign on each horizontal component.
    pub fn init_positions(&self, count: usize, rng: &mut impl Rng) -> Vec<UavKinematics> {
        (0..count)
            .map(|_| {
                let mut position = [0.0; 3];
                for i in 0..3 {
                    position[i] = if self.upper[i] > self.lower[i] {
                        rng.random_range(self.lower[i]..=self.upper[i])
                    } else {
                        self.lower[i]
                    };
                }
                let mut velocity = self.mean;
                for v in velocity.iter_mut().take(2) {
                    if rng.random_bool(0.5) {
                        *v = -*v;
                    }
                }
                UavKinematics { position, velocity }
            })
            .collect()
    }

    pub fn step(&self, kin: &UavKinematics, rng: &mut impl Rng) -> UavKinematics {
        let mut next = *kin;
        for i in 0..3 {
            let sign = if kin.velocity[i] < 0.0 { -1.0 } else { 1.0 };
            let z: f64 = rng.sample(StandardNormal);
            let speed = gauss_markov_speed(
                kin.velocity[i].abs(),
                self.mean[i],
                self.memory,
                self.noise_std[i] * z,
            )
            .clamp(self.v_min[i], self.v_max[i]);
            let moved = kin.position[i] + sign * speed * self.slot_len;
            let (pos, flipped) = reflect(moved, self.lower[i], self.upper[i]);
            next.position[i] = pos;
            next.velocity[i] = if flipped { -sign * speed } else { sign * speed };
        }
        next
    }
}

/// Write one CSV row per (slot, uav, x, y, z).
pub fn write_trajectory_csv<W: Write>(out: W, trajectory: &[Vec<UavKinematics>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "uav", "x_m", "y_m", "z_m"])?;
    for (slot, states) in trajectory.iter().enumerate() {
        for (uav, k) in states.iter().enumerate() {
            w.write_record(&[
                slot.to_string(),
                uav.to_string(),
                k.position[0].to_string(),
                k.position[1].to_string(),
                k.position[2].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("trajectory csv", e))?;
    Ok(())
}
