//! Per-sample clipped surrogate and clipped value loss, with their
//! derivatives.

use crate::config::CriticLossSign;

/// `min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)`.
pub fn clipped_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Derivative of [`clipped_objective`] with respect to the log-probability:
/// `ratio * adv` where the unclipped branch is active, zero otherwise.
pub fn clipped_objective_dlogp(ratio: f64, adv: f64, eps: f64) -> f64 {
    if ratio * adv <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv {
        ratio * adv
    } else {
        0.0
    }
}

/// Per-sample value loss and its derivative with respect to `v`.
///
/// The minimizing form is `min((v - t)^2, (v_clip - t)^2)` with
/// `v_clip = v_old + clip(v - v_old, -eps, eps)`; the literal form negates it.
pub fn value_loss(v: f64, v_old: f64, target: f64, eps: f64, sign: CriticLossSign) -> (f64, f64) {
    let dv = v - v_old;
    let v_clip = v_old + dv.clamp(-eps, eps);
    let e1 = (v - target) * (v - target);
    let e2 = (v_clip - target) * (v_clip - target);
    let (loss, grad) = if e1 <= e2 {
        (e1, 2.0 * (v - target))
    } else if dv.abs() < eps {
        (e2, 2.0 * (v_clip - target))
    } else {
        (e2, 0.0)
    };
    match sign {
        CriticLossSign::Minimize => (loss, grad),
        CriticLossSign::Literal => (-loss, -grad),
    }
}

pub fn clipped_value(v: f64, v_old: f64, eps: f64) -> f64 {
    v_old + (v - v_old).clamp(-eps, eps)
}
