use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Device constants of a two-bucket pixel array.
///
/// `gain` converts electrons to digital units; `read_variance` is the
/// variance (in digital units squared) added by one readout of the
/// differenced wells. `full_well`, when set, clamps sampled electron counts
/// per well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default = "defaults::contrast")]
    pub contrast: f64,
    #[serde(default = "defaults::gain")]
    pub gain: f64,
    #[serde(default = "defaults::read_variance")]
    pub read_variance: f64,
    /// Seconds.
    #[serde(default = "defaults::exposure")]
    pub exposure: f64,
    #[serde(default = "defaults::width")]
    pub width: usize,
    #[serde(default = "defaults::height")]
    pub height: usize,
    #[serde(default)]
    pub full_well: Option<f64>,
}

mod defaults {
    pub fn contrast() -> f64 {
        0.5
    }
    pub fn gain() -> f64 {
        1.0
    }
    pub fn read_variance() -> f64 {
        10.0
    }
    pub fn exposure() -> f64 {
        1.0e-3
    }
    pub fn width() -> usize {
        64
    }
    pub fn height() -> usize {
        64
    }
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            contrast: defaults::contrast(),
            gain: defaults::gain(),
            read_variance: defaults::read_variance(),
            exposure: defaults::exposure(),
            width: defaults::width(),
            height: defaults::height(),
            full_well: None,
        }
    }
}

impl SensorConfig {
    /// Builds and validates a configuration with unit gain and no well clamp.
    pub fn new(
        contrast: f64,
        read_variance: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cfg = Self {
            contrast,
            read_variance,
            width,
            height,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_gain(mut self, gain: f64) -> Result<Self> {
        self.gain = gain;
        self.validate()?;
        Ok(self)
    }

    pub fn with_size(mut self, width: usize, height: usize) -> Result<Self> {
        self.width = width;
        self.height = height;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::domain(format!(
                "contrast must lie in (0, 1], got {}",
                self.contrast
            )));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::domain(format!("gain must be positive, got {}", self.gain)));
        }
        if !(self.read_variance >= 0.0 && self.read_variance.is_finite()) {
            return Err(Error::domain(format!(
                "read_variance must be non-negative, got {}",
                self.read_variance
            )));
        }
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(Error::domain(format!(
                "exposure must be positive, got {}",
                self.exposure
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain(format!(
                "width and height must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if let Some(cap) = self.full_well {
            if !(cap > 0.0) {
                return Err(Error::domain(format!("full_well must be positive, got {cap}")));
            }
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Checks that an image of the given size fits this sensor.
    pub fn check_dims(&self, dims: (usize, usize), what: &str) -> Result<()> {
        if dims != self.dims() {
            return Err(Error::domain(format!(
                "{what} is {}x{} but the sensor is {}x{}",
                dims.0, dims.1, self.width, self.height
            )));
        }
        Ok(())
    }
}
