//! Two-sample Kolmogorov–Smirnov test, Gaussian kernel density estimates and
//! bootstrap standard errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// sup |F_a - F_b|.
    pub statistic: f64,
    /// Asymptotic p-value with the Stephens small-sample correction.
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation("KS test needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Validation("KS samples contain NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    })
}

/// P(K > lambda) for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-lambda series: P(K <= l) = sqrt(2 pi) / l sum exp(-(2j-1)^2 pi^2 / (8 l^2))
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|j| ((2 * j - 1) as f64).powi(2)).map(|k| (c * k).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Silverman's rule for a d-dimensional Gaussian kernel:
/// sigma (4 / ((d + 2) n))^(1 / (d + 4)), with sigma the mean coordinate standard deviation.
pub fn silverman_bandwidth(points: &[f64], dim: usize) -> f64 {
    let n = points.len() / dim;
    let mut sigma = 0.0;
    for j in 0..dim {
        let col = points.iter().skip(j).step_by(dim);
        let mean = col.clone().sum::<f64>() / n as f64;
        let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        sigma += var.sqrt();
    }
    sigma /= dim as f64;
    sigma * (4.0 / ((dim as f64 + 2.0) * n as f64)).powf(1.0 / (dim as f64 + 4.0))
}

/// Gaussian kernel values K_h(X_i - at) for every point, plus the number of points within one bandwidth.
pub fn kernel_values(points: &[f64], dim: usize, at: &[f64], bandwidth: f64) -> (Vec<f64>, usize) {
    let norm = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0) / bandwidth.powi(dim as i32);
    let mut inside = 0;
    let values = points
        .chunks_exact(dim)
        .map(|p| {
            let d2: f64 = p.iter().zip(at).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (bandwidth * bandwidth);
            if d2 < 1.0 {
                inside += 1;
            }
            norm * (-0.5 * d2).exp()
        })
        .collect();
    (values, inside)
}

/// Bootstrap standard deviation of `stat(mean(a), mean(b))` with independent resampling of `a` and `b`.
pub fn bootstrap_ratio_se<F: Fn(f64, f64) -> f64>(a: &[f64], b: &[f64], replicates: usize, seed: u64, stat: F) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resampled_mean = |xs: &[f64], rng: &mut ChaCha8Rng| {
        let n = xs.len();
        (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64
    };
    let draws: Vec<f64> = (0..replicates)
        .map(|_| {
            let ma = resampled_mean(a, &mut rng);
            let mb = resampled_mean(b, &mut rng);
            stat(ma, mb)
        })
        .collect();
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() as f64 - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn kolmogorov_tail_values() {
        // tabulated critical values of the Kolmogorov distribution
        assert_relative_eq!(kolmogorov_survival(1.3581), 0.05, epsilon = 1e-4);
        assert_relative_eq!(kolmogorov_survival(1.6276), 0.01, epsilon = 1e-4);
        assert_relative_eq!(kolmogorov_survival(1.2238), 0.10, epsilon = 1e-4);
        // both series agree where they meet
        let l = 1.18;
        let small = {
            let c = -std::f64::consts::PI.powi(2) / (8.0 * l * l);
            let s: f64 = (1..=20).map(|j| (c * ((2 * j - 1) as f64).powi(2)).exp()).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / l * s
        };
        assert_relative_eq!(small, kolmogorov_survival(l), epsilon = 1e-12);
        assert_relative_eq!(kolmogorov_survival(0.5), 0.9639452436648751, epsilon = 1e-9);
    }

    #[test]
    fn ks_detects_shift_and_accepts_same_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c: Vec<f64> = b.iter().map(|v: &f64| v + 0.3).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
    }

    #[test]
    fn ks_statistic_by_hand() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[2.5, 4.0]).unwrap();
        // at 2: F_a = 2/3, F_b = 0
        assert_relative_eq!(r.statistic, 2.0 / 3.0, epsilon = 1e-15);
        let tie = ks_two_sample(&[1.0, 1.0], &[1.0]).unwrap();
        assert_eq!(tie.statistic, 0.0);
    }

    #[test]
    fn kde_recovers_gaussian_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<f64> = (0..200_000 * 3).map(|_| StandardNormal.sample(&mut rng)).collect();
        let h = silverman_bandwidth(&pts, 3);
        let (k, inside) = kernel_values(&pts, 3, &[0.0, 0.0, 0.0], h);
        let est = k.iter().sum::<f64>() / k.len() as f64;
        // smoothing a standard normal with N(0, h^2) gives variance 1 + h^2
        let exact = (2.0 * std::f64::consts::PI * (1.0 + h * h)).powf(-1.5);
        assert_relative_eq!(est, exact, max_relative = 0.02);
        assert!(inside > 100);
    }

    #[test]
    fn bootstrap_se_of_mean_ratio() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let se = bootstrap_ratio_se(&a, &a, 100, 3, |x, y| x / y);
        assert!(se > 0.0 && se < 1.0);
        let c = vec![2.0; 10];
        assert_eq!(bootstrap_ratio_se(&c, &c, 50, 3, |x, y| x / y), 0.0);
    }
}
