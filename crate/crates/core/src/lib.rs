//! Snapshot difference imaging with two-bucket time-of-flight pixels.
//!
//! The crate simulates difference frames under a Poisson/Skellam noise
//! model, compares analog (pre-ADC) against digital (post-ADC) differencing
//! and recovers both latent well images from difference-frame statistics.

pub mod analysis;
pub mod error;
pub mod image;
pub mod io;
pub mod pipeline;
pub mod poisson;
pub mod recon;
pub mod rng;
pub mod scenes;
pub mod sensor;
pub mod simulator;
pub mod skellam;
pub mod stats;

pub use error::{Error, Result};
pub use image::Image;
pub use sensor::SensorConfig;
pub use skellam::{DifferenceFrame, ExpectedWells, MomentField, SampleCount, SkellamMixingMatrix};
pub use recon::{BilateralParams, Segmentation};
pub use simulator::{CaptureMode, ModulationPattern, Readout, SceneSequence, SceneSpec};
