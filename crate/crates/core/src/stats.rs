//! Small descriptive-statistics helpers shared by the estimators.

/// Welford accumulator for mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningMoments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }
}

impl FromIterator<f64> for RunningMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median of the finite values; `None` when there are none.
pub fn median(xs: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Linear-interpolated quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample mean, unbiased variance and their standard errors.
///
/// The variance standard error uses the sample fourth central moment:
/// `Var(s²) ≈ (m4 - s⁴ (n - 3) / (n - 1)) / n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

pub fn summarize(xs: &[f64]) -> SampleSummary {
    let n = xs.len();
    assert!(n >= 4, "need at least four samples");
    let nf = n as f64;
    let m = mean(xs);
    let s2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / nf;
    let var_s2 = ((m4 - s2 * s2 * (nf - 3.0) / (nf - 1.0)) / nf).max(0.0);
    SampleSummary {
        n,
        mean: m,
        variance: s2,
        se_mean: (s2 / nf).sqrt(),
        se_variance: var_s2.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [3.0, -1.5, 8.25, 0.0, 2.0, 2.0, 11.0];
        let acc: RunningMoments = xs.iter().copied().collect();
        let m = mean(&xs);
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 6.0;
        assert!((acc.mean() - m).abs() < 1e-12);
        assert!((acc.variance() - v).abs() < 1e-12);
        assert_eq!(acc.count(), 7);
    }

    #[test]
    fn constant_sequence_has_zero_variance() {
        let acc: RunningMoments = std::iter::repeat_n(4.2, 50).collect();
        assert_eq!(acc.variance(), 0.0);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.25), 1.0);
        assert_eq!(quantile_sorted(&s, 0.375), 1.5);
    }
}
