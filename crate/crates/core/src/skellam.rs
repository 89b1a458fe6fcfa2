//! Difference-pixel statistics and their inversion.
//!
//! A snapshot difference pixel reads `gain * contrast * (P+ - P-)` plus one
//! zero-mean read-noise draw, where `P±` are independent Poisson counts with
//! means `I+` and `I-`. Its mean and variance are therefore
//!
//! ```text
//! mean     = gain * contrast * (I+ - I-)
//! variance = gain² * contrast² * (I+ + I-) + read_variance
//! ```
//!
//! With unit gain the map `(I+, I-) -> (mean, variance - read_variance)` is
//! the linear [`SkellamMixingMatrix`], which is invertible for any positive
//! contrast, so both latent wells can be recovered from the first two
//! moments of the difference signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::sensor::SensorConfig;

/// Expected electron counts of the two wells of every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedWells {
    plus: Image,
    minus: Image,
}

impl ExpectedWells {
    pub fn new(plus: Image, minus: Image) -> Result<Self> {
        if !plus.same_dims(&minus) {
            return Err(Error::domain("well images have different dimensions"));
        }
        if !plus.all_finite_non_negative() || !minus.all_finite_non_negative() {
            return Err(Error::domain("expected wells must be finite and non-negative"));
        }
        Ok(Self { plus, minus })
    }

    /// Both wells constant over a `width x height` frame.
    pub fn uniform(width: usize, height: usize, plus: f64, minus: f64) -> Result<Self> {
        Self::new(
            Image::filled(width, height, plus),
            Image::filled(width, height, minus),
        )
    }

    pub fn plus(&self) -> &Image {
        &self.plus
    }

    pub fn minus(&self) -> &Image {
        &self.minus
    }

    pub fn dims(&self) -> (usize, usize) {
        self.plus.dims()
    }

    pub fn into_parts(self) -> (Image, Image) {
        (self.plus, self.minus)
    }

    /// Noise-free expected difference image.
    pub fn expected_difference(&self, config: &SensorConfig) -> Image {
        let k = config.gain * config.contrast;
        self.plus
            .zip_map(&self.minus, |p, m| k * (p - m))
            .expect("well dimensions checked on construction")
    }
}

/// One captured difference image.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceFrame {
    pub values: Image,
    pub frame_index: u64,
    /// Root seed the frame was drawn from.
    pub seed: u64,
}

impl DifferenceFrame {
    pub fn new(values: Image, frame_index: u64, seed: u64) -> Result<Self> {
        if !values.all_finite() {
            return Err(Error::domain("difference frame contains non-finite values"));
        }
        Ok(Self {
            values,
            frame_index,
            seed,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }
}

/// How a moment field was estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleCount {
    /// Per-pixel statistics over this many frames.
    Temporal(usize),
    /// Statistics gathered over spatial neighbourhoods of a single frame.
    Spatial,
}

/// Per-pixel mean and variance of the difference signal, with a validity
/// mask for pixels that have no estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentField {
    mean: Image,
    variance: Image,
    valid: Vec<bool>,
    samples: SampleCount,
}

impl MomentField {
    pub fn new(mean: Image, variance: Image, samples: SampleCount) -> Result<Self> {
        let valid = vec![true; mean.len()];
        Self::with_mask(mean, variance, valid, samples)
    }

    pub fn with_mask(
        mean: Image,
        variance: Image,
        valid: Vec<bool>,
        samples: SampleCount,
    ) -> Result<Self> {
        if !mean.same_dims(&variance) || valid.len() != mean.len() {
            return Err(Error::domain("moment images and mask differ in size"));
        }
        if let SampleCount::Temporal(0) = samples {
            return Err(Error::domain("temporal moment field needs at least one sample"));
        }
        if variance.as_slice().iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::domain("variance must be non-negative"));
        }
        Ok(Self {
            mean,
            variance,
            valid,
            samples,
        })
    }

    pub fn mean(&self) -> &Image {
        &self.mean
    }

    pub fn variance(&self) -> &Image {
        &self.variance
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn samples(&self) -> SampleCount {
        self.samples
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mean.dims()
    }

    /// Subtracts a fixed-pattern offset from the mean.
    pub fn subtract_offset(&self, offset: &Image) -> Result<MomentField> {
        Ok(Self {
            mean: self.mean.zip_map(offset, |m, o| m - o)?,
            ..self.clone()
        })
    }
}

/// `H = [[c, -c], [c², c²]]` for contrast `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkellamMixingMatrix {
    entries: [[f64; 2]; 2],
}

impl SkellamMixingMatrix {
    pub fn new(contrast: f64) -> Result<Self> {
        if !(contrast > 0.0 && contrast.is_finite()) {
            return Err(Error::domain(format!(
                "mixing matrix needs positive contrast, got {contrast}"
            )));
        }
        let c2 = contrast * contrast;
        Ok(Self {
            entries: [[contrast, -contrast], [c2, c2]],
        })
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.entries
    }

    pub fn determinant(&self) -> f64 {
        let [[a, b], [c, d]] = self.entries;
        a * d - b * c
    }

    pub fn inverse(&self) -> [[f64; 2]; 2] {
        let [[a, b], [c, d]] = self.entries;
        let det = self.determinant();
        [[d / det, -b / det], [-c / det, a / det]]
    }

    /// `H · (plus, minus)` = `(mean, variance - read_variance)`.
    pub fn apply(&self, plus: f64, minus: f64) -> (f64, f64) {
        let [[a, b], [c, d]] = self.entries;
        (a * plus + b * minus, c * plus + d * minus)
    }

    /// `H⁻¹ · (mean, excess_variance)` = `(plus, minus)`.
    pub fn solve(&self, mean: f64, excess_variance: f64) -> (f64, f64) {
        let [[a, b], [c, d]] = self.inverse();
        (a * mean + b * excess_variance, c * mean + d * excess_variance)
    }
}

fn check_well(v: f64, which: &str) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::domain(format!(
            "{which} well must be finite and non-negative, got {v}"
        )));
    }
    Ok(())
}

/// Mean and variance of a difference pixel with expected wells `(plus, minus)`.
pub fn skellam_moments(plus: f64, minus: f64, config: &SensorConfig) -> Result<(f64, f64)> {
    check_well(plus, "plus")?;
    check_well(minus, "minus")?;
    let k = config.gain * config.contrast;
    Ok((k * (plus - minus), k * k * (plus + minus) + config.read_variance))
}

/// Analytic moment field of an entire well pair.
pub fn expected_moments(wells: &ExpectedWells, config: &SensorConfig) -> Result<MomentField> {
    let (w, h) = wells.dims();
    let mut mean = Image::zeros(w, h);
    let mut variance = Image::zeros(w, h);
    for i in 0..mean.len() {
        let (m, v) = skellam_moments(wells.plus()[i], wells.minus()[i], config)?;
        mean[i] = m;
        variance[i] = v;
    }
    MomentField::new(mean, variance, SampleCount::Spatial)
}

/// Unit-gain mixing matrix of the sensor.
pub fn mixing_matrix(config: &SensorConfig) -> Result<SkellamMixingMatrix> {
    SkellamMixingMatrix::new(config.contrast)
}

/// Rescales moments measured in digital units to unit gain.
///
/// The mean is divided by the gain and the shot-noise part of the variance
/// by its square; the read-noise term is left in place.
pub fn normalize_gain(m: &MomentField, config: &SensorConfig) -> MomentField {
    rescale(m, config.gain, config.read_variance)
}

/// Inverse of [`normalize_gain`].
pub fn apply_gain(m: &MomentField, config: &SensorConfig) -> MomentField {
    rescale(m, 1.0 / config.gain, config.read_variance)
}

fn rescale(m: &MomentField, gain: f64, read_variance: f64) -> MomentField {
    if gain == 1.0 {
        return m.clone();
    }
    let g2 = gain * gain;
    MomentField {
        mean: m.mean.map(|v| v / gain),
        variance: m
            .variance
            .map(|v| ((v - read_variance) / g2 + read_variance).max(0.0)),
        valid: m.valid.clone(),
        samples: m.samples,
    }
}

/// Wells recovered from a moment field.
#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    pub wells: ExpectedWells,
    /// Pixels whose moments were valid; invalid pixels carry zero wells.
    pub valid: Vec<bool>,
    /// Number of well entries that came out negative and were set to zero.
    pub clamped: usize,
}

/// Solves `(I+, I-) = H⁻¹ (mean, variance - read_variance)` at every pixel.
pub fn invert_moments(m: &MomentField, config: &SensorConfig) -> Result<Recovery> {
    config.check_dims(m.dims(), "moment field")?;
    let h = mixing_matrix(config)?;
    let norm = normalize_gain(m, config);
    let (w, ht) = m.dims();
    let mut plus = Image::zeros(w, ht);
    let mut minus = Image::zeros(w, ht);
    let mut clamped = 0;
    for i in 0..plus.len() {
        if !norm.valid[i] {
            continue;
        }
        let (p, n) = h.solve(norm.mean[i], norm.variance[i] - config.read_variance);
        for (dst, v) in [(&mut plus[i], p), (&mut minus[i], n)] {
            if v < 0.0 {
                clamped += 1;
            } else if v.is_finite() {
                *dst = v;
            }
        }
    }
    Ok(Recovery {
        wells: ExpectedWells::new(plus, minus)?,
        valid: norm.valid,
        clamped,
    })
}
