use crate::error::{Error, Result};

/// Euclidean projection of `z` onto the probability simplex.
pub fn sparsemax(z: &[f64]) -> Result<Vec<f64>> {
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sparsemax input"));
    }
    if z.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // support size k is the largest k with 1 + k z_(k) > sum_{j<=k} z_(j)
    let mut cumsum = 0.0;
    let mut k = 0;
    let mut support_sum = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        if 1.0 + (i + 1) as f64 * v > cumsum {
            k = i + 1;
            support_sum = cumsum;
        }
    }
    let tau = (support_sum - 1.0) / k as f64;
    Ok(z.iter().map(|&v| (v - tau).max(0.0)).collect())
}

/// Vector-Jacobian product of sparsemax at output `p`: for coordinates in
/// the support the upstream gradient minus its support mean, zero elsewhere.
pub fn sparsemax_vjp(p: &[f64], grad: &[f64]) -> Vec<f64> {
    let (n, sum) = p
        .iter()
        .zip(grad)
        .filter(|(pi, _)| **pi > 0.0)
        .fold((0usize, 0.0), |(n, s), (_, g)| (n + 1, s + g));
    let mean = if n == 0 { 0.0 } else { sum / n as f64 };
    p.iter()
        .zip(grad)
        .map(|(pi, g)| if *pi > 0.0 { g - mean } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn examples() {
        assert_eq!(sparsemax(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(sparsemax(&[2.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let p = sparsemax(&[0.3, 0.2, 0.1]).unwrap();
        assert!(close(&p, &[0.4 + 1.0 / 30.0, 1.0 / 3.0, 0.2 + 1.0 / 30.0], 1e-12));
        assert!(close(&sparsemax(&[0.0; 3]).unwrap(), &[1.0 / 3.0; 3], 1e-15));
        assert_eq!(sparsemax(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(sparsemax(&[f64::NAN, 0.0]).is_err());
        assert!(sparsemax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let z = [0.31, 0.2, -0.4, 0.12];
        let g = [0.7, -1.3, 2.0, 0.25];
        let p = sparsemax(&z).unwrap();
        let an = sparsemax_vjp(&p, &g);
        let h = 1e-7;
        for i in 0..z.len() {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let fp: f64 = sparsemax(&zp).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum();
            let fm: f64 = sparsemax(&zm).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum();
            assert!((an[i] - (fp - fm) / (2.0 * h)).abs() < 1e-6, "coord {i}");
        }
    }

    proptest! {
        #[test]
        fn output_is_on_simplex_and_shift_invariant(z in proptest::collection::vec(-5.0f64..5.0, 1..10), c in -3.0f64..3.0) {
            let p = sparsemax(&z).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
            prop_assert!(close(&sparsemax(&shifted).unwrap(), &p, 1e-9));
        }
    }
}
