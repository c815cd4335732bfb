//! Audits every slot's link table against an independent recomputation of
//! the channel model, and every forwarding move against the SINR gate.

use std::f64::consts::PI;

use uavroute::baselines::HeuristicPolicy;
use uavroute::sim::{RoutingPolicy, Simulation};
use uavroute::SimConfig;

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Received SINR in dB computed in the log domain from raw geometry.
fn sinr_db(cfg: &SimConfig, signal_loss_db: f64, interferer_loss_db: &[f64]) -> f64 {
    let p_dbm = cfg.max_tx_power_dbm - db((cfg.max_neighbors + 1) as f64);
    let noise_dbm = cfg.noise_psd_dbm_hz + db(cfg.subchannel_bw_hz);
    let lin = |dbm: f64| 10f64.powf(dbm / 10.0);
    let interference: f64 = interferer_loss_db.iter().map(|l| lin(p_dbm - l)).sum();
    p_dbm - signal_loss_db - db(lin(noise_dbm) + interference)
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn uav_loss_db(cfg: &SimConfig, d: f64) -> f64 {
    -cfg.ref_gain_db + 10.0 * cfg.pathloss_exp * d.log10()
}

fn gbs_loss_db(cfg: &SimConfig, p: [f64; 3]) -> f64 {
    let g = cfg.gbs_position;
    let d = dist(p, g);
    let theta = ((p[2] - g[2]) / d).asin() * 180.0 / PI;
    let [a, b] = cfg.s_curve;
    let p_los = 1.0 / (1.0 + a * (-b * (theta - a)).exp());
    let fspl_db = 10.0 * cfg.pathloss_exp * (4.0 * PI * cfg.carrier_hz * d / cfg.light_speed).log10();
    let [e_los, e_nlos] = cfg.excess_loss_db.map(|x| 10f64.powf(x / 10.0));
    fspl_db + db(p_los * e_los + (1.0 - p_los) * e_nlos)
}

#[test]
fn link_tables_match_independent_channel_model() {
    let cfg = SimConfig {
        num_uavs: 10,
        horizon: 1.0,
        traffic_prob: 0.2,
        num_subchannels: 3,
        ..SimConfig::desk_scale()
    };
    let thr = cfg.sinr_min_db;
    let m = cfg.num_uavs;
    let mut checked = 0;
    for seed in 0..5 {
        let mut sim = Simulation::new(&cfg, seed).unwrap();
        let mut policy = HeuristicPolicy;
        policy.begin_episode(m, seed);
        while !sim.is_done() {
            let view = sim.begin_slot().unwrap();
            let links = view.links;
            let pos: Vec<[f64; 3]> = view.kinematics.iter().map(|k| k.position).collect();
            let co = |tx: usize, rx: Option<usize>| -> Vec<usize> {
                (0..m)
                    .filter(|&i| i != tx && Some(i) != rx && links.active[i] && links.subchannel[i] == links.subchannel[tx])
                    .collect()
            };
            for tx in 0..m {
                for rx in (0..m).filter(|&r| r != tx) {
                    let interf: Vec<f64> = co(tx, Some(rx)).iter().map(|&i| uav_loss_db(&cfg, dist(pos[i], pos[rx]))).collect();
                    let expect = sinr_db(&cfg, uav_loss_db(&cfg, dist(pos[tx], pos[rx])), &interf);
                    let got = db(links.link(tx, rx).sinr);
                    assert!((got - expect).abs() < 1e-9, "slot {} link {tx}->{rx}: {got} vs {expect}", view.slot);
                    assert_eq!(links.reachable[tx].contains(&rx), expect >= thr);
                    checked += 1;
                }
                let interf: Vec<f64> = co(tx, None).iter().map(|&i| gbs_loss_db(&cfg, pos[i])).collect();
                let expect = sinr_db(&cfg, gbs_loss_db(&cfg, pos[tx]), &interf);
                assert!((db(links.gbs_link(tx).sinr) - expect).abs() < 1e-9);
                assert_eq!(links.gbs_reachable[tx], expect >= thr);
                assert!(links.candidates[tx].len() <= cfg.max_neighbors);
                assert!(links.candidates[tx].iter().all(|c| links.reachable[tx].contains(c)));
                for &c in &links.candidates[tx] {
                    assert!(links.inbound[c].contains(&tx));
                }
            }
            let gate: Vec<Vec<bool>> = (0..m)
                .map(|tx| (0..m).map(|rx| rx != tx && links.link(tx, rx).sinr >= links_min(&cfg)).collect())
                .collect();
            let gbs_ok = links.gbs_reachable.clone();
            let agents = view.decision_agents();
            let chosen = policy.decide(&view, &agents).unwrap();
            let mut decisions = vec![None; m];
            for (a, d) in agents.into_iter().zip(chosen) {
                decisions[a] = Some(d);
            }
            let ledger = sim.end_slot(&decisions).unwrap();
            for t in &ledger.transfers {
                if t.sent > 0 {
                    assert!(gate[t.from][t.to], "transfer {}->{} below the SINR gate", t.from, t.to);
                }
            }
            for (tx, &n) in ledger.direct.iter().enumerate() {
                if n > 0 {
                    assert!(gbs_ok[tx]);
                }
            }
        }
    }
    assert!(checked > 1000);
}

fn links_min(cfg: &SimConfig) -> f64 {
    10f64.powf(cfg.sinr_min_db / 10.0)
}
