//! Noise analysis: variance fields, histograms, intensity sweeps and the
//! low-light post/pre variance ratio.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::derive_key;
use crate::sensor::SensorConfig;
use crate::simulator::{simulate_moments, Readout};
use crate::skellam::{DifferenceFrame, ExpectedWells};
use crate::stats::{quantile_sorted, RunningMoments};

/// Per-pixel unbiased temporal variance of a frame stack.
pub fn variance_field(frames: &[DifferenceFrame]) -> Result<Image> {
    if frames.len() < 2 {
        return Err(Error::usage(format!(
            "variance field needs N ≥ 2 frames, got {}",
            frames.len()
        )));
    }
    let dims = frames[0].dims();
    if frames.iter().any(|f| f.dims() != dims) {
        return Err(Error::usage("frames differ in size"));
    }
    let (w, h) = dims;
    let var = (0..w * h)
        .map(|i| frames.iter().map(|f| f.values[i]).collect::<RunningMoments>().variance())
        .collect();
    Image::new(w, h, var)
}

/// Bin-width rule for [`histogram`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Binning {
    /// Width `2·IQR·n^(-1/3)`.
    #[default]
    FreedmanDiaconis,
    Bins { count: usize },
    Width { width: f64 },
}

/// Upper limit on the number of bins any rule may produce.
pub const MAX_BINS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges; the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Count-weighted mean of bin centres.
    pub fn center_of_mass(&self) -> f64 {
        let total = self.total() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| 0.5 * (self.edges[i] + self.edges[i + 1]) * c as f64)
            .sum::<f64>()
            / total
    }
}

/// Histogram of finite values.
pub fn histogram(values: &[f64], binning: Binning) -> Result<Histogram> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(Error::usage("histogram of an empty set"));
    }
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let span = hi - lo;
    let bins = match binning {
        Binning::Bins { count: 0 } => return Err(Error::usage("bin count must be positive")),
        Binning::Bins { count } => count,
        Binning::Width { width } if !(width > 0.0 && width.is_finite()) => {
            return Err(Error::usage(format!("bin width must be positive, got {width}")))
        }
        Binning::Width { width } => (span / width).ceil() as usize,
        Binning::FreedmanDiaconis => {
            let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
            let width = 2.0 * iqr / (v.len() as f64).cbrt();
            if width > 0.0 {
                (span / width).ceil() as usize
            } else {
                1
            }
        }
    }
    .clamp(1, MAX_BINS);
    let bins = if span == 0.0 { 1 } else { bins };
    let step = if span == 0.0 { 1.0 } else { span / bins as f64 };
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi.max(lo + step) } else { lo + i as f64 * step }).collect();
    let mut counts = vec![0u64; bins];
    for &x in &v {
        let k = (((x - lo) / step) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Straight line `y = intercept + slope·x` with parameter covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub se_slope: f64,
    pub se_intercept: f64,
    pub cov_slope_intercept: f64,
    /// Weighted residual sum of squares (chi-square when weighted).
    pub residual: f64,
    pub weighted: bool,
}

/// Least-squares line through `(x, y)`.
///
/// With standard errors for every point the fit is weighted by `1/se²` and
/// the covariance is the unscaled `(XᵀWX)⁻¹`. Without them, or when any
/// error is zero, the fit is ordinary least squares and the covariance is
/// scaled by the residual variance.
pub fn fit_line(x: &[f64], y: &[f64], se: Option<&[f64]>) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || se.is_some_and(|s| s.len() != n) {
        return Err(Error::usage("fit inputs differ in length"));
    }
    if n < 2 {
        return Err(Error::usage("a line fit needs at least two points"));
    }
    let weights: Option<Vec<f64>> = se.and_then(|s| {
        s.iter()
            .all(|&e| e > 0.0 && e.is_finite())
            .then(|| s.iter().map(|e| 1.0 / (e * e)).collect())
    });
    let w = |i: usize| weights.as_ref().map_or(1.0, |w| w[i]);
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        sw += w(i);
        sx += w(i) * x[i];
        sy += w(i) * y[i];
    }
    let (xm, ym) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for i in 0..n {
        sxx += w(i) * (x[i] - xm).powi(2);
        sxy += w(i) * (x[i] - xm) * (y[i] - ym);
    }
    let x_scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if sxx <= 1e-12 * sw * x_scale * x_scale {
        return Err(Error::usage("degenerate fit: all levels are equal"));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residual: f64 = (0..n).map(|i| w(i) * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let scale = if weights.is_some() {
        1.0
    } else if n > 2 {
        residual / (n - 2) as f64
    } else {
        0.0
    };
    let var_slope = scale / sxx;
    let var_intercept = scale * (1.0 / sw + xm * xm / sxx);
    Ok(LineFit {
        slope,
        intercept,
        se_slope: var_slope.sqrt(),
        se_intercept: var_intercept.sqrt(),
        cov_slope_intercept: -xm * var_slope,
        residual,
        weighted: weights.is_some(),
    })
}

/// Ratio of two zero-intensity intercepts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub ratio: Option<f64>,
    pub uncertainty: Option<f64>,
    pub diagnostic: Option<String>,
}

impl RatioEstimate {
    pub fn is_defined(&self) -> bool {
        self.ratio.is_some()
    }
}

/// Minimum significance of the pre-ADC intercept for a defined ratio.
pub const RATIO_MIN_SIGNIFICANCE: f64 = 2.0;

/// `post / pre` with first-order error propagation for independent
/// estimates.
///
/// Undefined when the pre-ADC intercept is not positive, or is within
/// [`RATIO_MIN_SIGNIFICANCE`] standard errors of zero.
pub fn ratio_from_intercepts(post: f64, se_post: f64, pre: f64, se_pre: f64) -> RatioEstimate {
    let undefined = |why: String| RatioEstimate {
        ratio: None,
        uncertainty: None,
        diagnostic: Some(why),
    };
    if !(pre > 0.0) {
        return undefined(format!("pre-ADC intercept {pre:.4} is not positive; ratio undefined"));
    }
    if pre < RATIO_MIN_SIGNIFICANCE * se_pre {
        return undefined(format!(
            "pre-ADC intercept {pre:.4} ± {se_pre:.4} is consistent with zero; ratio undefined"
        ));
    }
    let r = post / pre;
    let u = (se_post * se_post / (pre * pre) + post * post * se_pre * se_pre / pre.powi(4)).sqrt();
    RatioEstimate {
        ratio: Some(r),
        uncertainty: Some(u),
        diagnostic: None,
    }
}

/// Low-light post/pre variance ratio of a sweep.
pub fn ratio_at_zero(report: &NoiseReport) -> RatioEstimate {
    ratio_from_intercepts(
        report.fit_post.intercept,
        report.fit_post.se_intercept,
        report.fit_pre.intercept,
        report.fit_pre.se_intercept,
    )
}

/// Sweep settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    /// Plus-well expectation at each level; the minus well gets
    /// `level · minus_fraction`.
    pub levels: Vec<f64>,
    pub frames: u64,
    pub seed: u64,
    #[serde(default = "default_minus_fraction")]
    pub minus_fraction: f64,
    #[serde(default)]
    pub binning: Binning,
}

fn default_minus_fraction() -> f64 {
    1.0
}

/// Results at one intensity level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: f64,
    pub var_pre: f64,
    pub var_post: f64,
    /// Standard errors of the frame-averaged variances.
    pub se_pre: f64,
    pub se_post: f64,
    pub histogram_pre: Histogram,
    pub histogram_post: Histogram,
}

impl LevelResult {
    /// `var_post − var_pre` and its standard error.
    pub fn difference(&self) -> (f64, f64) {
        (
            self.var_post - self.var_pre,
            (self.se_pre * self.se_pre + self.se_post * self.se_post).sqrt(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub levels: Vec<LevelResult>,
    pub fit_pre: LineFit,
    pub fit_post: LineFit,
    pub ratio: RatioEstimate,
    pub read_variance: f64,
    pub frames: u64,
    pub pixels: usize,
}

/// Mean and standard error of a variance field.
fn field_summary(moments: &[RunningMoments]) -> (Vec<f64>, f64, f64) {
    let var: Vec<f64> = moments.iter().map(RunningMoments::variance).collect();
    let acc: RunningMoments = var.iter().copied().collect();
    let se = (acc.variance() / var.len() as f64).sqrt();
    (var, acc.mean(), se)
}

/// Simulates snapshot and sequential captures at each level and fits
/// variance against level.
pub fn intensity_sweep(config: &SensorConfig, opts: &SweepOptions) -> Result<NoiseReport> {
    config.validate()?;
    if opts.levels.len() < 3 {
        return Err(Error::usage(format!(
            "an intensity sweep needs at least 3 levels, got {}",
            opts.levels.len()
        )));
    }
    if opts.frames < 2 {
        return Err(Error::usage(format!("a sweep needs N ≥ 2 frames, got {}", opts.frames)));
    }
    if let Some(l) = opts.levels.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::domain(format!("sweep level {l} must be finite and non-negative")));
    }
    if !(opts.minus_fraction >= 0.0 && opts.minus_fraction.is_finite()) {
        return Err(Error::domain("minus_fraction must be finite and non-negative"));
    }
    let (w, h) = config.dims();
    let mut levels = Vec::with_capacity(opts.levels.len());
    for (li, &level) in opts.levels.iter().enumerate() {
        let wells = ExpectedWells::uniform(w, h, level, level * opts.minus_fraction)?;
        let run = |readout: Readout, tag: u64| -> Result<(Vec<f64>, f64, f64)> {
            let seed = derive_key(opts.seed, &[li as u64, tag]);
            Ok(field_summary(&simulate_moments(&wells, config, seed, opts.frames, readout)?))
        };
        let (field_pre, var_pre, se_pre) = run(Readout::Snapshot, 0)?;
        let (field_post, var_post, se_post) = run(Readout::Sequential, 1)?;
        log::debug!("level {level}: pre {var_pre:.3} post {var_post:.3}");
        levels.push(LevelResult {
            level,
            var_pre,
            var_post,
            se_pre,
            se_post,
            histogram_pre: histogram(&field_pre, opts.binning)?,
            histogram_post: histogram(&field_post, opts.binning)?,
        });
    }
    let x: Vec<f64> = levels.iter().map(|l| l.level).collect();
    let col = |f: fn(&LevelResult) -> f64| levels.iter().map(f).collect::<Vec<_>>();
    let fit_pre = fit_line(&x, &col(|l| l.var_pre), Some(&col(|l| l.se_pre)))?;
    let fit_post = fit_line(&x, &col(|l| l.var_post), Some(&col(|l| l.se_post)))?;
    let ratio = ratio_from_intercepts(
        fit_post.intercept,
        fit_post.se_intercept,
        fit_pre.intercept,
        fit_pre.se_intercept,
    );
    Ok(NoiseReport {
        levels,
        fit_pre,
        fit_post,
        ratio,
        read_variance: config.read_variance,
        frames: opts.frames,
        pixels: w * h,
    })
}

/// Compact JSON form of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub intercept_pre: f64,
    pub intercept_post: f64,
    pub se_intercept_pre: f64,
    pub se_intercept_post: f64,
    pub slope_pre: f64,
    pub slope_post: f64,
    pub se_slope_pre: f64,
    pub se_slope_post: f64,
    pub residual_pre: f64,
    pub residual_post: f64,
    pub ratio: Option<f64>,
    pub ratio_uncertainty: Option<f64>,
    pub ratio_diagnostic: Option<String>,
    pub read_variance: f64,
    pub frames: u64,
    pub pixels: usize,
    pub level_count: usize,
}

impl NoiseReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            intercept_pre: self.fit_pre.intercept,
            intercept_post: self.fit_post.intercept,
            se_intercept_pre: self.fit_pre.se_intercept,
            se_intercept_post: self.fit_post.se_intercept,
            slope_pre: self.fit_pre.slope,
            slope_post: self.fit_post.slope,
            se_slope_pre: self.fit_pre.se_slope,
            se_slope_post: self.fit_post.se_slope,
            residual_pre: self.fit_pre.residual,
            residual_post: self.fit_post.residual,
            ratio: self.ratio.ratio,
            ratio_uncertainty: self.ratio.uncertainty,
            ratio_diagnostic: self.ratio.diagnostic.clone(),
            read_variance: self.read_variance,
            frames: self.frames,
            pixels: self.pixels,
            level_count: self.levels.len(),
        }
    }

    /// One header line, then one row per level.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "level,var_pre,var_post,se_pre,se_post")?;
        for l in &self.levels {
            writeln!(out, "{},{},{},{},{}", l.level, l.var_pre, l.var_post, l.se_pre, l.se_post)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{polarization_scene, PolarizationParams};
    use crate::simulator::{integrate_wells, sample, ModulationPattern};
    use proptest::prelude::*;

    fn cfg(w: usize, h: usize, contrast: f64, read: f64) -> SensorConfig {
        SensorConfig::new(contrast, read, w, h).unwrap()
    }

    fn stack(wells: &ExpectedWells, c: &SensorConfig, seed: u64, n: u64, r: Readout) -> Vec<DifferenceFrame> {
        (0..n).map(|f| sample(wells, c, seed, f, r).unwrap()).collect()
    }

    #[test]
    fn identical_frames_give_zero_field() {
        let f = DifferenceFrame::new(Image::filled(3, 2, 7.5), 0, 0).unwrap();
        let v = variance_field(&[f.clone(), f.clone(), f]).unwrap();
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
        let one = DifferenceFrame::new(Image::zeros(2, 2), 0, 0).unwrap();
        assert!(matches!(variance_field(&[one]), Err(Error::Usage(_))));
    }

    #[test]
    fn dark_stacks_show_one_and_two_read_variances() {
        let c = cfg(16, 16, 0.5, 10.0);
        let wells = ExpectedWells::uniform(16, 16, 0.0, 0.0).unwrap();
        let pre = variance_field(&stack(&wells, &c, 5, 400, Readout::Snapshot)).unwrap();
        let post = variance_field(&stack(&wells, &c, 6, 400, Readout::Sequential)).unwrap();
        // SE of the mean over 256 pixels of a chi-square variance: σ²·sqrt(2/399/256)
        assert!((pre.mean() - 10.0).abs() < 3.0 * 10.0 * (2.0f64 / 399.0 / 256.0).sqrt());
        assert!((post.mean() - 20.0).abs() < 3.0 * 20.0 * (2.0f64 / 399.0 / 256.0).sqrt());
    }

    #[test]
    fn polarization_snapshot_histogram_lies_left() {
        let c = cfg(24, 24, 0.6, 10.0);
        let (d, g) = PolarizationParams::default().maps(24, 24).unwrap();
        let scene = polarization_scene(&d, &g).unwrap();
        let wells = integrate_wells(&scene, &ModulationPattern::square_5050(), &c).unwrap();
        let pre = variance_field(&stack(&wells, &c, 1, 100, Readout::Snapshot)).unwrap();
        let post = variance_field(&stack(&wells, &c, 2, 100, Readout::Sequential)).unwrap();
        let binning = Binning::Bins { count: 40 };
        let hp = histogram(pre.as_slice(), binning).unwrap();
        let hq = histogram(post.as_slice(), binning).unwrap();
        assert!(hp.center_of_mass() < hq.center_of_mass());
        assert!(pre.mean() < post.mean());
    }

    #[test]
    fn histogram_counts_and_rules() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 5.0).collect();
        for b in [Binning::FreedmanDiaconis, Binning::Bins { count: 7 }, Binning::Width { width: 0.5 }] {
            let h = histogram(&xs, b).unwrap();
            assert_eq!(h.total(), 1000);
            assert_eq!(h.edges.len(), h.counts.len() + 1);
            assert!(h.edges.windows(2).all(|e| e[1] > e[0]));
        }
        assert_eq!(histogram(&xs, Binning::Bins { count: 7 }).unwrap().counts.len(), 7);
        let flat = histogram(&[2.0; 5], Binning::FreedmanDiaconis).unwrap();
        assert_eq!(flat.counts, vec![5]);
        assert!(histogram(&[], Binning::FreedmanDiaconis).is_err());
        assert!(histogram(&xs, Binning::Width { width: 0.0 }).is_err());
    }

    proptest! {
        #[test]
        fn histogram_ignores_pixel_order(mut xs in prop::collection::vec(-100.0f64..100.0, 2..200), seed in any::<u64>()) {
            let h1 = histogram(&xs, Binning::FreedmanDiaconis).unwrap();
            // deterministic shuffle
            let n = xs.len();
            for i in (1..n).rev() {
                let j = (crate::rng::mix64(seed ^ i as u64) % (i as u64 + 1)) as usize;
                xs.swap(i, j);
            }
            let h2 = histogram(&xs, Binning::FreedmanDiaconis).unwrap();
            prop_assert_eq!(h1, h2);
        }

        #[test]
        fn exact_lines_are_recovered(a in -50.0f64..50.0, b in -5.0f64..5.0) {
            let x = [0.0, 10.0, 30.0, 70.0];
            let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
            let f = fit_line(&x, &y, None).unwrap();
            prop_assert!((f.slope - b).abs() < 1e-9);
            prop_assert!((f.intercept - a).abs() < 1e-8);
        }
    }

    #[test]
    fn weighted_fit_matches_closed_form() {
        // oracle: solve the 2x2 normal equations directly
        let x = [0.0, 50.0, 100.0, 200.0];
        let y = [10.2, 35.1, 59.0, 111.3];
        let se = [0.2, 0.5, 0.4, 1.0];
        let f = fit_line(&x, &y, Some(&se)).unwrap();
        let (mut a, mut b, mut c, mut d, mut e) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..4 {
            let w = 1.0 / (se[i] * se[i]);
            a += w;
            b += w * x[i];
            c += w * x[i] * x[i];
            d += w * y[i];
            e += w * x[i] * y[i];
        }
        let det = a * c - b * b;
        let intercept = (c * d - b * e) / det;
        let slope = (a * e - b * d) / det;
        assert!((f.intercept - intercept).abs() < 1e-9);
        assert!((f.slope - slope).abs() < 1e-12);
        assert!((f.se_intercept - (c / det).sqrt()).abs() < 1e-12);
        assert!((f.se_slope - (a / det).sqrt()).abs() < 1e-12);
        assert!((f.cov_slope_intercept + b / det).abs() < 1e-12);
        assert!(f.weighted);
        assert!(matches!(fit_line(&[3.0; 4], &y, None), Err(Error::Usage(_))));
    }

    #[test]
    fn ratio_propagation() {
        let r = ratio_from_intercepts(20.0, 0.3, 10.0, 0.22);
        assert_eq!(r.ratio, Some(2.0));
        // independent oracle: first-order variance of a quotient
        let want = 2.0 * ((0.3f64 / 20.0).powi(2) + (0.22f64 / 10.0).powi(2)).sqrt();
        assert!((r.uncertainty.unwrap() - want).abs() < 1e-12);
        assert_eq!(ratio_from_intercepts(7.0, 0.1, 7.0, 0.1).ratio, Some(1.0));
        let bad = ratio_from_intercepts(1.0, 0.1, -0.01, 0.1);
        assert!(!bad.is_defined());
        assert!(bad.diagnostic.unwrap().contains("undefined"));
        assert!(!ratio_from_intercepts(1.0, 0.1, 0.05, 0.1).is_defined());
    }

    #[test]
    fn published_minima_ratio() {
        let r = ratio_from_intercepts(29.99, 0.30, 15.05, 0.22);
        assert!((r.ratio.unwrap() - 1.99).abs() < 0.005);
        // first-order propagation gives about 0.035
        assert!((r.uncertainty.unwrap() - 0.0353).abs() < 0.001);
    }

    #[test]
    fn sweep_reproduces_intercepts_and_slope() {
        let c = cfg(32, 32, 0.5, 10.0);
        let opts = SweepOptions {
            levels: vec![0.0, 50.0, 100.0, 200.0],
            frames: 400,
            seed: 11,
            minus_fraction: 1.0,
            binning: Binning::default(),
        };
        let rep = intensity_sweep(&c, &opts).unwrap();
        let (fp, fq) = (rep.fit_pre, rep.fit_post);
        assert!((fp.intercept - 10.0).abs() < 3.0 * fp.se_intercept + 0.05);
        assert!((fq.intercept - 20.0).abs() < 3.0 * fq.se_intercept + 0.05);
        // slope = η²·(1 + minus_fraction)
        assert!((fp.slope - 0.5).abs() < 3.0 * fp.se_slope);
        assert!((fq.slope - 0.5).abs() < 3.0 * fq.se_slope);
        let r = ratio_at_zero(&rep);
        assert!((r.ratio.unwrap() - 2.0).abs() < 3.0 * r.uncertainty.unwrap());
        for l in &rep.levels {
            assert_eq!(l.histogram_pre.total(), 1024);
            assert_eq!(l.histogram_post.total(), 1024);
            let (d, se) = l.difference();
            assert!((d - 10.0).abs() < 3.0 * se);
        }
        assert!(fp.slope >= 0.0 && fq.slope >= 0.0);
        assert!(fp.intercept > -2.0 * fp.se_intercept);

        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }

    #[test]
    fn sweep_without_read_noise() {
        let c = cfg(16, 16, 0.7, 0.0);
        let opts = SweepOptions {
            levels: vec![0.0, 40.0, 80.0],
            frames: 200,
            seed: 3,
            minus_fraction: 0.5,
            binning: Binning::default(),
        };
        let rep = intensity_sweep(&c, &opts).unwrap();
        assert!(rep.fit_pre.intercept.abs() < 3.0 * rep.fit_pre.se_intercept.max(1e-9) + 0.05);
        assert!(rep.fit_post.intercept.abs() < 3.0 * rep.fit_post.se_intercept.max(1e-9) + 0.05);
        let ds = rep.fit_post.slope - rep.fit_pre.slope;
        let se = rep.fit_post.se_slope.hypot(rep.fit_pre.se_slope);
        assert!(ds.abs() < 3.0 * se);
        let r = ratio_at_zero(&rep);
        assert!(!r.is_defined() || (r.ratio.unwrap() - 1.0).abs() < 3.0 * r.uncertainty.unwrap());
    }

    #[test]
    fn sweep_validation() {
        let c = cfg(4, 4, 0.5, 1.0);
        let mut opts = SweepOptions {
            levels: vec![0.0, 10.0],
            frames: 10,
            seed: 0,
            minus_fraction: 1.0,
            binning: Binning::default(),
        };
        assert!(matches!(intensity_sweep(&c, &opts), Err(Error::Usage(_))));
        opts.levels = vec![5.0, 5.0, 5.0];
        assert!(matches!(intensity_sweep(&c, &opts), Err(Error::Usage(_))));
        opts.levels = vec![0.0, 1.0, 2.0];
        opts.frames = 1;
        assert!(matches!(intensity_sweep(&c, &opts), Err(Error::Usage(_))));
    }
}
