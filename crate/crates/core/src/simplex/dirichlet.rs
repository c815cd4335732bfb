//! Dirichlet concentrations, sampling, density, entropy and their
//! derivatives with respect to the concentrations.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{digamma, ln_gamma};

use super::sparsemax::{sparsemax, sparsemax_vjp};
use crate::config::DirichletConfig;
use crate::error::{Error, Result};

/// Smallest component a sampled action may have.
pub const SAMPLE_FLOOR: f64 = 1e-12;

/// Trigamma function, the derivative of digamma.
pub fn trigamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    // asymptotic series in 1/x with Bernoulli-number coefficients
    acc + r
        + 0.5 * r2
        + r * r2 * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 * (1.0 / 30.0 - r2 * 5.0 / 66.0))))
}

/// Concentration vector over `[retain, candidates..., padding...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Concentration {
    pub alpha: Vec<f64>,
    /// Number of leading unmasked entries (`1 + candidates`).
    pub valid: usize,
    /// `sparsemax(beta)` over all entries, kept for the backward pass.
    pub probs: Vec<f64>,
}

/// `rho * sparsemax(beta) + alpha_min` on the first `valid` entries and the
/// mask constant elsewhere.
pub fn build_concentration(beta: &[f64], valid: usize, cfg: &DirichletConfig) -> Result<Concentration> {
    if valid == 0 || valid > beta.len() {
        return Err(Error::Shape(format!("{valid} valid dims for {} logits", beta.len())));
    }
    let probs = sparsemax(beta)?;
    let alpha = probs
        .iter()
        .enumerate()
        .map(|(i, p)| if i < valid { cfg.rho * p + cfg.alpha_min } else { cfg.mask_eps })
        .collect();
    Ok(Concentration { alpha, valid, probs })
}

impl Concentration {
    /// Pull a gradient with respect to `alpha` back to the logits.
    pub fn backward(&self, grad_alpha: &[f64], rho: f64) -> Vec<f64> {
        let upstream: Vec<f64> = grad_alpha
            .iter()
            .enumerate()
            .map(|(i, g)| if i < self.valid { rho * g } else { 0.0 })
            .collect();
        sparsemax_vjp(&self.probs, &upstream)
    }
}

pub fn mean(alpha: &[f64]) -> Vec<f64> {
    let s: f64 = alpha.iter().sum();
    alpha.iter().map(|a| a / s).collect()
}

pub fn variance(alpha: &[f64]) -> Vec<f64> {
    let s: f64 = alpha.iter().sum();
    alpha
        .iter()
        .map(|a| a * (s - a) / (s * s * (s + 1.0)))
        .collect()
}

/// Normalized Gamma draws, floored at [`SAMPLE_FLOOR`] and renormalized so
/// that the log-density stays finite.
pub fn sample(alpha: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let mut x: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(rng))
        .collect();
    let s: f64 = x.iter().sum();
    for v in &mut x {
        *v = (*v / s).max(SAMPLE_FLOOR);
    }
    let s: f64 = x.iter().sum();
    for v in &mut x {
        *v /= s;
    }
    x
}

fn ln_norm(alpha: &[f64]) -> f64 {
    let s: f64 = alpha.iter().sum();
    ln_gamma(s) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
}

pub fn log_prob(a: &[f64], alpha: &[f64]) -> Result<f64> {
    if a.len() != alpha.len() {
        return Err(Error::Shape(format!("action {} vs alpha {}", a.len(), alpha.len())));
    }
    if let Some((index, &value)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
        return Err(Error::BoundarySample { index, value });
    }
    let body: f64 = a.iter().zip(alpha).map(|(x, al)| (al - 1.0) * x.ln()).sum();
    Ok(ln_norm(alpha) + body)
}

/// `d log p / d alpha_i = psi(sum alpha) - psi(alpha_i) + ln a_i`.
pub fn log_prob_grad(a: &[f64], alpha: &[f64]) -> Vec<f64> {
    let ps = digamma(alpha.iter().sum());
    a.iter()
        .zip(alpha)
        .map(|(x, &al)| ps - digamma(al) + x.ln())
        .collect()
}

pub fn entropy(alpha: &[f64]) -> f64 {
    let s: f64 = alpha.iter().sum();
    let k = alpha.len() as f64;
    -ln_norm(alpha) + (s - k) * digamma(s)
        - alpha.iter().map(|&a| (a - 1.0) * digamma(a)).sum::<f64>()
}

/// `d H / d alpha_i = (sum alpha - K) psi'(sum alpha) - (alpha_i - 1) psi'(alpha_i)`.
pub fn entropy_grad(alpha: &[f64]) -> Vec<f64> {
    let s: f64 = alpha.iter().sum();
    let common = (s - alpha.len() as f64) * trigamma(s);
    alpha
        .iter()
        .map(|&a| common - (a - 1.0) * trigamma(a))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStreams, Stream};
    use std::f64::consts::PI;

    fn cfg() -> DirichletConfig {
        DirichletConfig::default()
    }

    #[test]
    fn trigamma_reference_values() {
        assert!((trigamma(1.0) - PI * PI / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - PI * PI / 2.0).abs() < 1e-12);
        assert!((trigamma(2.0) - (PI * PI / 6.0 - 1.0)).abs() < 1e-12);
        // psi'(x) ~ 1/x^2 near zero
        assert!((trigamma(1e-8) * 1e-16 - 1.0).abs() < 1e-7);
        for &x in &[0.3, 1.7, 5.9, 6.1, 40.0] {
            let h = 1e-5;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((trigamma(x) - fd).abs() < 1e-6 * trigamma(x).max(1.0), "x = {x}");
        }
    }

    #[test]
    fn concentration_examples() {
        let c = build_concentration(&[1.0, 0.0, 0.0], 3, &cfg()).unwrap();
        assert_eq!(c.alpha, vec![30.5, 0.5, 0.5]);
        let c = build_concentration(&[0.0; 3], 3, &cfg()).unwrap();
        assert!(c.alpha.iter().all(|a| (a - 10.5).abs() < 1e-12));
        let c = build_concentration(&[0.2, 0.1, 0.0, 0.0, 0.0], 2, &cfg()).unwrap();
        assert!(c.alpha[2..].iter().all(|&a| a == 1e-8));
        assert!(c.alpha[..2].iter().all(|&a| a >= 0.5));
        assert!(build_concentration(&[0.0; 3], 0, &cfg()).is_err());
    }

    #[test]
    fn log_prob_examples() {
        assert!(log_prob(&[0.3, 0.7], &[1.0, 1.0]).unwrap().abs() < 1e-14);
        let lp = log_prob(&[0.5, 0.5], &[2.0, 2.0]).unwrap();
        assert!((lp - (6f64.ln() + 2.0 * 0.5f64.ln())).abs() < 1e-12);
        assert!((lp - 0.405_465_108_108).abs() < 1e-9);
        let err = log_prob(&[1.0, 0.0], &[2.0, 2.0]).unwrap_err();
        assert!(err.to_string().starts_with("boundary sample"));
    }

    #[test]
    fn log_prob_grad_matches_finite_differences() {
        let a = [0.5, 0.5];
        let alpha = [2.0, 2.0];
        let g = log_prob_grad(&a, &alpha);
        let h = 1e-6;
        for i in 0..2 {
            let mut p = alpha;
            let mut m = alpha;
            p[i] += h;
            m[i] -= h;
            let fd = (log_prob(&a, &p).unwrap() - log_prob(&a, &m).unwrap()) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn entropy_examples_and_gradient() {
        assert!(entropy(&[1.0, 1.0]).abs() < 1e-14);
        let alpha = [2.5, 0.7, 4.0];
        let g = entropy_grad(&alpha);
        let h = 1e-6;
        for i in 0..3 {
            let mut p = alpha;
            let mut m = alpha;
            p[i] += h;
            m[i] -= h;
            let fd = (entropy(&p) - entropy(&m)) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-6, "dim {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn entropy_falls_as_scale_grows() {
        let beta = [0.4, 0.1, 0.3];
        let h: Vec<f64> = [1.0, 10.0, 30.0, 100.0]
            .iter()
            .map(|&rho| {
                let c = build_concentration(&beta, 3, &DirichletConfig { rho, ..cfg() }).unwrap();
                entropy(&c.alpha)
            })
            .collect();
        assert!(h.windows(2).all(|w| w[1] < w[0]), "{h:?}");
    }

    #[test]
    fn samples_are_interior_and_masked_mass_is_tiny() {
        let mut rng = RngStreams::new(4).stream(Stream::PolicySampling);
        let alpha = [3.0, 0.5, 1e-8, 1e-8];
        let mut masked = 0.0;
        for _ in 0..2000 {
            let a = sample(&alpha, &mut rng);
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(a.iter().all(|&x| x > 0.0 && x < 1.0));
            assert!(log_prob(&a, &alpha).unwrap().is_finite());
            masked += a[2] + a[3];
        }
        assert!(masked / 2000.0 <= 1e-6);
    }

    #[test]
    fn backward_through_concentration() {
        let beta = [0.3, 0.25, -0.1, 0.05];
        let c0 = build_concentration(&beta, 3, &cfg()).unwrap();
        let w = [0.7, -0.2, 1.1, 5.0];
        let g = c0.backward(&w, cfg().rho);
        let h = 1e-7;
        for i in 0..4 {
            let mut p = beta;
            let mut m = beta;
            p[i] += h;
            m[i] -= h;
            let f = |b: &[f64]| -> f64 {
                build_concentration(b, 3, &cfg())
                    .unwrap()
                    .alpha
                    .iter()
                    .zip(&w)
                    .map(|(a, x)| a * x)
                    .sum()
            };
            assert!((g[i] - (f(&p) - f(&m)) / (2.0 * h)).abs() < 1e-5, "dim {i}");
        }
    }
}
