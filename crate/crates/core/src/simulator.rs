//! Forward image formation for a two-bucket pixel array.
//!
//! The sensor modulation `f(t)` takes values 0 and 1 over the normalized
//! exposure `[0, 1]`. Charge generated while `f = 1` lands in the plus well,
//! the rest in the minus well. Light source A is driven with `f`, light
//! source B with its complement, and ambient light is unmodulated.
//!
//! Source images are electrons per exposure under the canonical 50 % drive;
//! a pattern with duty `d` scales source A by `2d` and source B by
//! `2(1 - d)`. Ambient electrons are split between the wells by duty.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::poisson;
use crate::rng::CounterRng;
use crate::sensor::SensorConfig;
use crate::skellam::{DifferenceFrame, ExpectedWells};
use crate::stats::RunningMoments;

/// Square-wave periods per exposure used for the 50/50 drive.
pub const SQUARE_CYCLES: usize = 64;

/// Default number of time samples per exposure for dynamic scenes.
pub const DEFAULT_TIME_SAMPLES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    #[serde(rename = "square_5050")]
    Square5050,
    AsymmetricSplit,
    ConstantOn,
    ConstantOff,
}

/// Binary sensor modulation over one normalized exposure.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationPattern {
    kind: PatternKind,
    initial_level: bool,
    transitions: Vec<f64>,
}

impl ModulationPattern {
    /// High-frequency 50 % square wave starting high.
    pub fn square_5050() -> Self {
        Self::square_with_cycles(SQUARE_CYCLES).expect("positive cycle count")
    }

    pub fn square_with_cycles(cycles: usize) -> Result<Self> {
        if cycles == 0 {
            return Err(Error::domain("square wave needs at least one cycle"));
        }
        let n = 2 * cycles;
        Ok(Self {
            kind: PatternKind::Square5050,
            initial_level: true,
            transitions: (1..n).map(|k| k as f64 / n as f64).collect(),
        })
    }

    /// Low for the first `split` of the exposure, high afterwards.
    pub fn asymmetric_split(split: f64) -> Result<Self> {
        if !(split > 0.0 && split < 1.0) {
            return Err(Error::domain(format!("split must lie in (0, 1), got {split}")));
        }
        Ok(Self {
            kind: PatternKind::AsymmetricSplit,
            initial_level: false,
            transitions: vec![split],
        })
    }

    pub fn constant_on() -> Self {
        Self {
            kind: PatternKind::ConstantOn,
            initial_level: true,
            transitions: Vec::new(),
        }
    }

    pub fn constant_off() -> Self {
        Self {
            kind: PatternKind::ConstantOff,
            initial_level: false,
            transitions: Vec::new(),
        }
    }

    /// Arbitrary pattern given by its starting level and flip times.
    pub fn custom(initial_level: bool, transitions: Vec<f64>) -> Result<Self> {
        if transitions.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::domain("transitions must lie in [0, 1]"));
        }
        if transitions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("transitions must be strictly increasing"));
        }
        let kind = match (transitions.is_empty(), initial_level) {
            (true, true) => PatternKind::ConstantOn,
            (true, false) => PatternKind::ConstantOff,
            _ => PatternKind::AsymmetricSplit,
        };
        Ok(Self {
            kind,
            initial_level,
            transitions,
        })
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn initial_level(&self) -> bool {
        self.initial_level
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// Level of `f` at normalized time `t`.
    pub fn level_at(&self, t: f64) -> bool {
        let flips = self.transitions.partition_point(|&x| x <= t);
        self.initial_level ^ (flips % 2 == 1)
    }

    /// The logically negated pattern.
    pub fn complement(&self) -> Self {
        let kind = match self.kind {
            PatternKind::ConstantOn => PatternKind::ConstantOff,
            PatternKind::ConstantOff => PatternKind::ConstantOn,
            k => k,
        };
        Self {
            kind,
            initial_level: !self.initial_level,
            transitions: self.transitions.clone(),
        }
    }

    /// Length of the part of `[t0, t1]` where `f = 1`.
    pub fn high_time(&self, t0: f64, t1: f64) -> f64 {
        let (t0, t1) = (t0.max(0.0), t1.min(1.0));
        if t1 <= t0 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut start = 0.0f64;
        let mut level = self.initial_level;
        for &edge in self.transitions.iter().chain(std::iter::once(&1.0)) {
            if level {
                let lo = start.max(t0);
                let hi = edge.min(t1);
                if hi > lo {
                    total += hi - lo;
                }
            }
            start = edge;
            level = !level;
        }
        total
    }

    /// Fraction of the exposure at level 1.
    pub fn duty(&self) -> f64 {
        self.high_time(0.0, 1.0)
    }
}

/// Serialized form of a modulation pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatternSpec {
    #[serde(rename = "square_5050")]
    Square5050 {
        #[serde(default)]
        cycles: Option<usize>,
    },
    AsymmetricSplit {
        split: f64,
    },
    ConstantOn,
    ConstantOff,
    Custom {
        initial_level: bool,
        transitions: Vec<f64>,
    },
}

impl Default for PatternSpec {
    fn default() -> Self {
        PatternSpec::Square5050 { cycles: None }
    }
}

impl PatternSpec {
    pub fn build(&self) -> Result<ModulationPattern> {
        match self {
            PatternSpec::Square5050 { cycles } => {
                ModulationPattern::square_with_cycles(cycles.unwrap_or(SQUARE_CYCLES))
            }
            PatternSpec::AsymmetricSplit { split } => ModulationPattern::asymmetric_split(*split),
            PatternSpec::ConstantOn => Ok(ModulationPattern::constant_on()),
            PatternSpec::ConstantOff => Ok(ModulationPattern::constant_off()),
            PatternSpec::Custom {
                initial_level,
                transitions,
            } => ModulationPattern::custom(*initial_level, transitions.clone()),
        }
    }
}

/// Static scene: per-source electron images plus unmodulated ambient light.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub source_a: Image,
    pub source_b: Image,
    pub ambient: Image,
}

impl SceneSpec {
    pub fn new(source_a: Image, source_b: Image, ambient: Image) -> Result<Self> {
        if !source_a.same_dims(&source_b) || !source_a.same_dims(&ambient) {
            return Err(Error::domain("scene images have different dimensions"));
        }
        for (name, img) in [("source_a", &source_a), ("source_b", &source_b), ("ambient", &ambient)] {
            if !img.all_finite_non_negative() {
                return Err(Error::domain(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(Self {
            source_a,
            source_b,
            ambient,
        })
    }

    /// Scene without ambient light.
    pub fn from_sources(source_a: Image, source_b: Image) -> Result<Self> {
        let (w, h) = source_a.dims();
        Self::new(source_a, source_b, Image::zeros(w, h))
    }

    pub fn dims(&self) -> (usize, usize) {
        self.source_a.dims()
    }

    /// Same scene with additional uniform ambient electrons.
    pub fn with_ambient(mut self, ambient: Image) -> Result<Self> {
        self.ambient = ambient;
        Self::new(self.source_a, self.source_b, self.ambient)
    }
}

/// Time-resolved scene: `frames[k]` holds the electrons arriving during the
/// k-th of K equal slices of the exposure, constant within the slice.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSequence {
    frames: Vec<Image>,
}

impl SceneSequence {
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::domain("scene sequence needs at least two time samples"));
        }
        if frames.iter().any(|f| !f.same_dims(&frames[0])) {
            return Err(Error::domain("scene sequence frames differ in size"));
        }
        if frames.iter().any(|f| !f.all_finite_non_negative()) {
            return Err(Error::domain("scene sequence values must be finite and non-negative"));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    /// Total electrons over the exposure.
    pub fn total(&self) -> Image {
        let (w, h) = self.dims();
        let mut acc = Image::zeros(w, h);
        for f in &self.frames {
            for (a, b) in acc.as_mut_slice().iter_mut().zip(f.as_slice()) {
                *a += b;
            }
        }
        acc
    }
}

/// Expected wells of a static scene under the given modulation.
pub fn integrate_wells(
    scene: &SceneSpec,
    pattern: &ModulationPattern,
    config: &SensorConfig,
) -> Result<ExpectedWells> {
    config.check_dims(scene.dims(), "scene")?;
    let duty = pattern.duty();
    let off = 1.0 - duty;
    let plus = scene
        .source_a
        .zip_map(&scene.ambient, |a, amb| 2.0 * duty * a + duty * amb)?;
    let minus = scene
        .source_b
        .zip_map(&scene.ambient, |b, amb| 2.0 * off * b + off * amb)?;
    ExpectedWells::new(plus, minus)
}

/// Expected wells of a time-resolved scene: each slice is split between
/// the wells by the fraction of the slice during which `f = 1`.
pub fn integrate_sequence(
    seq: &SceneSequence,
    pattern: &ModulationPattern,
    config: &SensorConfig,
) -> Result<ExpectedWells> {
    config.check_dims(seq.dims(), "scene sequence")?;
    let (w, h) = seq.dims();
    let k = seq.len() as f64;
    let mut plus = Image::zeros(w, h);
    let mut minus = Image::zeros(w, h);
    for (i, frame) in seq.frames().iter().enumerate() {
        let t0 = i as f64 / k;
        let t1 = (i + 1) as f64 / k;
        let high = pattern.high_time(t0, t1) * k;
        let low = 1.0 - high;
        for ((p, m), &e) in plus
            .as_mut_slice()
            .iter_mut()
            .zip(minus.as_mut_slice())
            .zip(frame.as_slice())
        {
            *p += high * e;
            *m += low * e;
        }
    }
    ExpectedWells::new(plus, minus)
}

/// How the two wells are digitized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Analog difference, one readout.
    Snapshot,
    /// Two separate readouts subtracted digitally.
    Sequential,
}

/// Draws one pixel value from its stream.
///
/// Draw order is fixed: plus count, minus count, then one or two normal
/// variates for read noise.
#[inline]
pub fn sample_pixel(
    plus: f64,
    minus: f64,
    config: &SensorConfig,
    readout: Readout,
    rng: &mut CounterRng,
) -> f64 {
    let cap = config.full_well.unwrap_or(f64::INFINITY);
    let p = (poisson::sample(plus, rng) as f64).min(cap);
    let n = (poisson::sample(minus, rng) as f64).min(cap);
    let k = config.gain * config.contrast;
    let read_sd = config.read_variance.sqrt();
    if read_sd == 0.0 {
        return k * (p - n);
    }
    let r1: f64 = StandardNormal.sample(rng);
    match readout {
        Readout::Snapshot => k * (p - n) + read_sd * r1,
        Readout::Sequential => {
            let r2: f64 = StandardNormal.sample(rng);
            (k * p + read_sd * r1) - (k * n + read_sd * r2)
        }
    }
}

fn check_wells(wells: &ExpectedWells, config: &SensorConfig) -> Result<()> {
    config.check_dims(wells.dims(), "expected wells")
}

fn sample_with(
    wells: &ExpectedWells,
    config: &SensorConfig,
    seed: u64,
    frame_index: u64,
    readout: Readout,
) -> Result<DifferenceFrame> {
    check_wells(wells, config)?;
    let (w, h) = wells.dims();
    let plus = wells.plus().as_slice();
    let minus = wells.minus().as_slice();
    let values: Vec<f64> = (0..plus.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = CounterRng::for_pixel(seed, frame_index, i as u64);
            sample_pixel(plus[i], minus[i], config, readout, &mut rng)
        })
        .collect();
    DifferenceFrame::new(Image::new(w, h, values)?, frame_index, seed)
}

/// One snapshot (pre-ADC) difference frame.
pub fn sample_frame(
    wells: &ExpectedWells,
    config: &SensorConfig,
    seed: u64,
    frame_index: u64,
) -> Result<DifferenceFrame> {
    sample_with(wells, config, seed, frame_index, Readout::Snapshot)
}

/// One post-ADC difference of two separately read captures.
pub fn sample_sequential_pair(
    wells: &ExpectedWells,
    config: &SensorConfig,
    seed: u64,
    frame_index: u64,
) -> Result<DifferenceFrame> {
    sample_with(wells, config, seed, frame_index, Readout::Sequential)
}

pub fn sample(
    wells: &ExpectedWells,
    config: &SensorConfig,
    seed: u64,
    frame_index: u64,
    readout: Readout,
) -> Result<DifferenceFrame> {
    sample_with(wells, config, seed, frame_index, readout)
}

/// Per-pixel running moments over frames `0..frames`, without storing the
/// frames. Each pixel sees exactly the values [`sample`] would produce.
pub fn simulate_moments(
    wells: &ExpectedWells,
    config: &SensorConfig,
    seed: u64,
    frames: u64,
    readout: Readout,
) -> Result<Vec<RunningMoments>> {
    check_wells(wells, config)?;
    let plus = wells.plus().as_slice();
    let minus = wells.minus().as_slice();
    Ok((0..plus.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = RunningMoments::new();
            for f in 0..frames {
                let mut rng = CounterRng::for_pixel(seed, f, i as u64);
                acc.push(sample_pixel(plus[i], minus[i], config, readout, &mut rng));
            }
            acc
        })
        .collect())
}

/// Imaging modality of a capture.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CaptureMode {
    #[default]
    SnapshotDiff,
    SequentialPair,
    /// Asymmetric modulation: light before `split` goes to the minus well.
    TemporalGradient { split: f64 },
    /// Minus-well image displaced by `(dx, dy)` pixels.
    SpatialShift { dx: i64, dy: i64 },
}

impl CaptureMode {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        match *self {
            CaptureMode::TemporalGradient { split } if !(split > 0.0 && split < 1.0) => Err(
                Error::domain(format!("temporal split must lie in (0, 1), got {split}")),
            ),
            CaptureMode::SpatialShift { dx, dy }
                if dx.unsigned_abs() as usize >= width || dy.unsigned_abs() as usize >= height =>
            {
                Err(Error::domain(format!(
                    "shift ({dx}, {dy}) must be smaller than the {width}x{height} frame"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn readout(&self) -> Readout {
        match self {
            CaptureMode::SequentialPair => Readout::Sequential,
            _ => Readout::Snapshot,
        }
    }
}

/// What a capture looks at.
#[derive(Clone, Copy, Debug)]
pub enum CaptureInput<'a> {
    Scene(&'a SceneSpec),
    Sequence(&'a SceneSequence),
}

/// Expected wells for a capture; no noise is drawn.
pub fn capture_wells(
    input: CaptureInput<'_>,
    pattern: &ModulationPattern,
    mode: CaptureMode,
    config: &SensorConfig,
) -> Result<ExpectedWells> {
    mode.validate(config.width, config.height)?;
    match (mode, input) {
        (CaptureMode::TemporalGradient { split }, CaptureInput::Sequence(seq)) => {
            integrate_sequence(seq, &ModulationPattern::asymmetric_split(split)?, config)
        }
        (CaptureMode::TemporalGradient { .. }, CaptureInput::Scene(_)) => Err(Error::usage(
            "temporal-gradient capture needs a time-resolved scene sequence",
        )),
        (CaptureMode::SpatialShift { dx, dy }, input) => {
            let wells = match input {
                CaptureInput::Scene(scene) => integrate_wells(scene, pattern, config)?,
                CaptureInput::Sequence(seq) => integrate_sequence(seq, pattern, config)?,
            };
            let (plus, minus) = wells.into_parts();
            ExpectedWells::new(plus, minus.translated(dx, dy))
        }
        (_, CaptureInput::Scene(scene)) => integrate_wells(scene, pattern, config),
        (_, CaptureInput::Sequence(seq)) => integrate_sequence(seq, pattern, config),
    }
}

/// Simulates one difference frame of the given modality.
pub fn capture(
    input: CaptureInput<'_>,
    pattern: &ModulationPattern,
    mode: CaptureMode,
    config: &SensorConfig,
    seed: u64,
    frame_index: u64,
) -> Result<DifferenceFrame> {
    let wells = capture_wells(input, pattern, mode, config)?;
    sample(&wells, config, seed, frame_index, mode.readout())
}

/// Pixels within `|dx|` columns or `|dy|` rows of the frame edge, where
/// the zero padding of a spatial shift affects the result.
pub fn shift_border_mask(width: usize, height: usize, dx: i64, dy: i64) -> Vec<bool> {
    let bx = dx.unsigned_abs() as usize;
    let by = dy.unsigned_abs() as usize;
    let mut mask = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            mask[y * width + x] = x < bx || x + bx >= width || y < by || y + by >= height;
        }
    }
    mask
}
