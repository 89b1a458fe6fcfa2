//! Poisson variates for photoelectron counts.
//!
//! Small means use inverse-transform sequential search; means of 30 and
//! above use Hörmann's transformed rejection with squeeze (PTRS). Both paths
//! draw only from the supplied generator, so results are reproducible for a
//! given stream.

use std::f64::consts::PI;

use rand_core::RngCore;

/// Means below this use inverse transform.
pub const INVERSION_LIMIT: f64 = 30.0;

#[inline]
fn unit_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `ln(k!)`: exact summation below 16, Stirling series above.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let n = k as f64;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    n * n.ln() - n + 0.5 * (2.0 * PI * n).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// Draws one Poisson variate with the given mean.
///
/// A mean of zero (or below) yields zero. The mean must be finite.
pub fn sample<R: RngCore + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    debug_assert!(mean.is_finite(), "poisson mean must be finite");
    if mean <= 0.0 {
        0
    } else if mean < INVERSION_LIMIT {
        sample_inversion(mean, rng)
    } else {
        sample_ptrs(mean, rng)
    }
}

fn sample_inversion<R: RngCore + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u = unit_open(rng);
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // The cdf can saturate just below 1 in floating point; past ~mean + 40
    // sqrt(mean) the remaining tail mass is far below f64 resolution.
    let cap = (mean + 40.0 * mean.sqrt() + 40.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn sample_ptrs<R: RngCore + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);

    loop {
        let u = unit_open(rng) - 0.5;
        let v = unit_open(rng);
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let k = k as u64;
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k as f64 * loglam - ln_factorial(k);
        if lhs <= rhs {
            return k;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn moments(mean: f64, n: usize, key: u64) -> (f64, f64, f64) {
        let mut rng = CounterRng::from_key(key);
        let xs: Vec<f64> = (0..n).map(|_| sample(mean, &mut rng) as f64).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
        (m, v, m4)
    }

    #[test]
    fn ln_factorial_matches_summation() {
        for k in [0u64, 1, 2, 10, 15, 16, 17, 50, 200, 1000] {
            let exact: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
            let got = ln_factorial(k);
            assert!(
                (got - exact).abs() <= 1e-10 * exact.max(1.0),
                "k={k}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn zero_mean_is_always_zero() {
        let mut rng = CounterRng::from_key(3);
        for _ in 0..1000 {
            assert_eq!(sample(0.0, &mut rng), 0);
        }
    }

    #[test]
    fn mean_and_variance_within_three_se() {
        let n = 100_000;
        for (i, &lam) in [0.3, 4.0, 29.9, 30.0, 75.0, 1.0e3, 1.0e6].iter().enumerate() {
            let (m, v, m4) = moments(lam, n, 100 + i as u64);
            let se_mean = (lam / n as f64).sqrt();
            let se_var = ((m4 - v * v * (n as f64 - 3.0) / (n as f64 - 1.0)) / n as f64).sqrt();
            assert!((m - lam).abs() < 3.0 * se_mean, "lambda {lam}: mean {m}");
            assert!((v - lam).abs() < 3.0 * se_var, "lambda {lam}: var {v}");
        }
    }

    fn chi_square_against_pmf(lam: f64, key: u64) -> (f64, usize) {
        let n = 200_000usize;
        let lo = (lam - 5.0 * lam.sqrt()).max(0.0).floor() as u64;
        let hi = (lam + 5.0 * lam.sqrt()).ceil() as u64 + 3;
        let mut counts = vec![0f64; (hi - lo + 1) as usize];
        let mut rng = CounterRng::from_key(key);
        for _ in 0..n {
            let k = sample(lam, &mut rng).clamp(lo, hi);
            counts[(k - lo) as usize] += 1.0;
        }
        // expected probabilities from the exact pmf, tails folded into the end bins
        let pmf = |k: u64| (-lam + k as f64 * lam.ln() - ln_factorial(k)).exp();
        let mut probs: Vec<f64> = (lo..=hi).map(pmf).collect();
        let below: f64 = (0..lo).map(pmf).sum();
        probs[0] += below;
        let total: f64 = probs.iter().sum();
        let last = probs.len() - 1;
        probs[last] += 1.0 - total;
        let mut chi2 = 0.0;
        let mut dof = 0;
        for (c, p) in counts.iter().zip(&probs) {
            let e = p * n as f64;
            if e >= 5.0 {
                chi2 += (c - e).powi(2) / e;
                dof += 1;
            }
        }
        (chi2, dof - 1)
    }

    #[test]
    fn distribution_matches_pmf() {
        for (lam, key) in [(4.0, 1u64), (45.0, 2), (400.0, 3)] {
            let (chi2, dof) = chi_square_against_pmf(lam, key);
            // loose upper bound: dof + 5 sqrt(2 dof)
            let bound = dof as f64 + 5.0 * (2.0 * dof as f64).sqrt();
            assert!(chi2 < bound, "lambda {lam}: chi2 {chi2} with {dof} dof");
        }
    }
}
