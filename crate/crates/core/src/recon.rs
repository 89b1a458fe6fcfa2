//! Recovery of both well images from difference-frame statistics.
//!
//! Three moment estimators feed the inversion in [`crate::skellam`]:
//!
//! * temporal statistics over a stack of frames of a static scene,
//! * patch statistics over a pre-segmented single frame,
//! * bilateral-weighted local statistics of a single frame.
//!
//! The bilateral estimator normalizes both moments by the weight sum, so its
//! variance is biased low; that bias is kept on purpose and shows up as an
//! underestimate of the summed wells.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::sensor::SensorConfig;
use crate::skellam::{invert_moments, DifferenceFrame, ExpectedWells, MomentField, Recovery, SampleCount};
use crate::stats::{median, RunningMoments};

/// Patch labels of a frame; label 0 means unassigned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl Segmentation {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height || labels.is_empty() {
            return Err(Error::domain(format!(
                "label buffer has {} entries, expected {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Reads labels from an image of non-negative integers.
    pub fn from_image(img: &Image) -> Result<Self> {
        let labels = img
            .as_slice()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(Error::domain(format!("label image holds non-integer value {v}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(img.width(), img.height(), labels)
    }

    pub fn to_image(&self) -> Image {
        Image::new(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l as f64).collect(),
        )
        .expect("dimensions checked on construction")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Pixel indices of every non-zero label, in ascending pixel order.
    pub fn patches(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if l != 0 {
                map.entry(l).or_default().push(i);
            }
        }
        map
    }
}

/// Per-pixel dark offset and the scalar read-noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct DarkCalibration {
    pub offset: Image,
    pub read_variance: f64,
}

fn check_stack(frames: &[DifferenceFrame], what: &str) -> Result<(usize, usize)> {
    if frames.len() < 2 {
        return Err(Error::usage(format!(
            "{what} needs N ≥ 2 frames, got {}",
            frames.len()
        )));
    }
    let dims = frames[0].dims();
    if frames.iter().any(|f| f.dims() != dims) {
        return Err(Error::usage(format!("{what}: frames differ in size")));
    }
    Ok(dims)
}

fn per_pixel_moments(frames: &[DifferenceFrame]) -> Vec<RunningMoments> {
    let n = frames[0].values.len();
    (0..n)
        .into_par_iter()
        .map(|i| frames.iter().map(|f| f.values[i]).collect())
        .collect()
}

/// Offset is the per-pixel temporal mean; read variance is the spatial
/// median of per-pixel temporal variances.
pub fn dark_frame_calibrate(dark_frames: &[DifferenceFrame]) -> Result<DarkCalibration> {
    let (w, h) = check_stack(dark_frames, "dark-frame calibration")?;
    let acc = per_pixel_moments(dark_frames);
    let offset = Image::new(w, h, acc.iter().map(RunningMoments::mean).collect())?;
    let variances: Vec<f64> = acc.iter().map(RunningMoments::variance).collect();
    let read_variance = median(&variances).ok_or_else(|| Error::numeric("no finite dark variances"))?;
    Ok(DarkCalibration {
        offset,
        read_variance,
    })
}

/// Temporal mean and unbiased variance at every pixel of a frame stack.
pub fn estimate_moments_m1(frames: &[DifferenceFrame]) -> Result<MomentField> {
    let (w, h) = check_stack(frames, "temporal estimation")?;
    let acc = per_pixel_moments(frames);
    MomentField::new(
        Image::new(w, h, acc.iter().map(RunningMoments::mean).collect())?,
        Image::new(w, h, acc.iter().map(RunningMoments::variance).collect())?,
        SampleCount::Temporal(frames.len()),
    )
}

/// Result of the patch estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchEstimate {
    pub field: MomentField,
    /// Labelled patches with a single pixel, left invalid.
    pub invalid_patches: usize,
}

/// Mean and unbiased variance of every labelled patch, assigned to all of
/// its pixels. Unlabelled pixels and single-pixel patches are invalid.
pub fn estimate_moments_m2(frame: &DifferenceFrame, seg: &Segmentation) -> Result<PatchEstimate> {
    if frame.dims() != seg.dims() {
        return Err(Error::domain("segmentation and frame differ in size"));
    }
    let (w, h) = frame.dims();
    let mut mean = Image::zeros(w, h);
    let mut variance = Image::zeros(w, h);
    let mut valid = vec![false; w * h];
    let mut invalid_patches = 0;
    for (label, pixels) in seg.patches() {
        if pixels.len() < 2 {
            log::warn!("patch {label} has a single pixel; left invalid");
            invalid_patches += 1;
            continue;
        }
        let acc: RunningMoments = pixels.iter().map(|&i| frame.values[i]).collect();
        for &i in &pixels {
            mean[i] = acc.mean();
            variance[i] = acc.variance();
            valid[i] = true;
        }
    }
    Ok(PatchEstimate {
        field: MomentField::with_mask(mean, variance, valid, SampleCount::Spatial)?,
        invalid_patches,
    })
}

/// Range and domain widths of the bilateral weight and the window radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilateralParams {
    /// Same units as frame values.
    pub sigma_range: f64,
    /// Pixels.
    pub sigma_domain: f64,
    pub window_radius: usize,
}

/// Default spatial width of the bilateral weight, in pixels.
pub const DEFAULT_SIGMA_DOMAIN: f64 = 3.0;
/// Default window radius (a 9 x 9 window).
pub const DEFAULT_WINDOW_RADIUS: usize = 4;

impl BilateralParams {
    pub fn new(sigma_range: f64, sigma_domain: f64, window_radius: usize) -> Result<Self> {
        let p = Self {
            sigma_range,
            sigma_domain,
            window_radius,
        };
        p.validate()?;
        Ok(p)
    }

    /// Window radius `ceil(3 sigma_domain)`.
    pub fn truncated(sigma_range: f64, sigma_domain: f64) -> Result<Self> {
        if !(sigma_domain > 0.0 && sigma_domain.is_finite()) {
            return Err(Error::domain("sigma_domain must be positive and finite"));
        }
        Self::new(sigma_range, sigma_domain, (3.0 * sigma_domain).ceil() as usize)
    }

    /// Defaults derived from the frame: `sigma_range = 2 sqrt(max(v, 1))` with
    /// `v` a robust estimate of the frame's noise variance, `sigma_domain = 3`
    /// and a 9 x 9 window.
    pub fn default_for(frame: &DifferenceFrame) -> Self {
        let v = robust_noise_variance(&frame.values).unwrap_or(1.0);
        Self {
            sigma_range: 2.0 * v.max(1.0).sqrt(),
            sigma_domain: DEFAULT_SIGMA_DOMAIN,
            window_radius: DEFAULT_WINDOW_RADIUS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_range > 0.0) || !(self.sigma_domain > 0.0) {
            return Err(Error::domain("bilateral sigmas must be positive"));
        }
        if self.window_radius < 1 {
            return Err(Error::domain("bilateral window radius must be at least 1"));
        }
        if (self.window_radius as f64) < 2.0 * self.sigma_domain && self.sigma_domain.is_finite() {
            log::debug!(
                "window radius {} is below 2 sigma_domain = {}",
                self.window_radius,
                2.0 * self.sigma_domain
            );
        }
        Ok(())
    }
}

/// Noise variance from the median absolute deviation of horizontal
/// neighbour differences; insensitive to piecewise-constant structure.
pub fn robust_noise_variance(img: &Image) -> Option<f64> {
    let (w, h) = img.dims();
    if w < 2 {
        return None;
    }
    let diffs: Vec<f64> = (0..h)
        .flat_map(|y| (1..w).map(move |x| (x, y)))
        .map(|(x, y)| img.get(x, y) - img.get(x - 1, y))
        .collect();
    let med = median(&diffs)?;
    let dev: Vec<f64> = diffs.iter().map(|d| (d - med).abs()).collect();
    let mad = median(&dev)?;
    let sigma_diff = 1.4826 * mad;
    Some(sigma_diff * sigma_diff / 2.0)
}

/// Bilateral-weighted local mean and variance at every pixel.
pub fn estimate_moments_m3(frame: &DifferenceFrame, params: &BilateralParams) -> Result<MomentField> {
    params.validate()?;
    let img = &frame.values;
    let (w, h) = img.dims();
    let r = params.window_radius as i64;
    let inv_range = 1.0 / (2.0 * params.sigma_range * params.sigma_range);
    let inv_domain = 1.0 / (2.0 * params.sigma_domain * params.sigma_domain);
    let side = (2 * r + 1) as usize;
    let spatial: Vec<f64> = (0..side * side)
        .map(|k| {
            let dy = (k / side) as i64 - r;
            let dx = (k % side) as i64 - r;
            (-((dx * dx + dy * dy) as f64) * inv_domain).exp()
        })
        .collect();

    let moments: Vec<(f64, f64)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let centre = img[i];
            let mut samples = Vec::with_capacity(side * side);
            for dy in -r..=r {
                let yy = y + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x + dx;
                    if xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    let v = img.get(xx as usize, yy as usize);
                    let ws = spatial[((dy + r) as usize) * side + (dx + r) as usize];
                    let wr = (-(v - centre) * (v - centre) * inv_range).exp();
                    samples.push((v, ws * wr));
                }
            }
            let wsum: f64 = samples.iter().map(|s| s.1).sum();
            let mu = samples.iter().map(|(v, wt)| v * wt).sum::<f64>() / wsum;
            let var = samples
                .iter()
                .map(|(v, wt)| (v - mu) * (v - mu) * wt)
                .sum::<f64>()
                / wsum;
            (mu, var)
        })
        .collect();

    MomentField::new(
        Image::new(w, h, moments.iter().map(|m| m.0).collect())?,
        Image::new(w, h, moments.iter().map(|m| m.1.max(0.0)).collect())?,
        SampleCount::Spatial,
    )
}

/// Options of [`separate_sources`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SeparationOptions<'a> {
    /// Fixed-pattern offset subtracted from the mean before inversion.
    pub dark_offset: Option<&'a Image>,
    /// Treat the read-noise variance as zero.
    pub ignore_read_noise: bool,
}

/// Recovers both wells from a moment field.
pub fn separate_sources(
    m: &MomentField,
    config: &SensorConfig,
    options: SeparationOptions<'_>,
) -> Result<Recovery> {
    let corrected = match options.dark_offset {
        Some(offset) => m.subtract_offset(offset)?,
        None => m.clone(),
    };
    if options.ignore_read_noise {
        let mut cfg = config.clone();
        cfg.read_variance = 0.0;
        invert_moments(&corrected, &cfg)
    } else {
        invert_moments(&corrected, config)
    }
}

/// `||recovered - truth|| / ||truth||` over both wells, restricted to
/// `mask` when given.
pub fn relative_rmse(recovered: &ExpectedWells, truth: &ExpectedWells, mask: Option<&[bool]>) -> f64 {
    let mut err = 0.0;
    let mut norm = 0.0;
    for i in 0..truth.plus().len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        for (r, t) in [
            (recovered.plus()[i], truth.plus()[i]),
            (recovered.minus()[i], truth.minus()[i]),
        ] {
            err += (r - t) * (r - t);
            norm += t * t;
        }
    }
    (err / norm).sqrt()
}
