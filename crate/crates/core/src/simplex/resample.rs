/// Number of neighbors to keep: one per `q_step` queued packets, capped by
/// `max_neighbors` and by the real candidates.
pub fn forwarding_count(q_sel: u64, q_step: u64, max_neighbors: usize, candidates: usize) -> usize {
    (q_sel.div_ceil(q_step) as usize).min(max_neighbors).min(candidates)
}

/// Keep the retain share and the `omega` largest candidate shares (lower
/// index on ties), zero the rest and renormalize.
pub fn resample(a: &[f64], omega: usize, valid: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (1..valid.min(a.len())).collect();
    idx.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
    let mut out = vec![0.0; a.len()];
    out[0] = a[0];
    for &i in idx.iter().take(omega) {
        out[i] = a[i];
    }
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        for v in &mut out {
            *v /= s;
        }
    } else {
        out[0] = 1.0;
    }
    out
}
