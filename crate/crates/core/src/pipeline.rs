//! File-level commands: configuration documents, frame simulation,
//! reconstruction, noise sweeps, scene export and dark calibration.
//!
//! Every command parses and validates all of its inputs before it creates
//! the output directory or writes a file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{intensity_sweep, Binning, NoiseReport, ReportSummary, SweepOptions};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{encode_pfm, encode_pgm16, read_image, sha256_hex, write_bytes};
use crate::recon::{
    dark_frame_calibrate, estimate_moments_m1, estimate_moments_m2, estimate_moments_m3, relative_rmse,
    separate_sources, BilateralParams, Segmentation, SeparationOptions, DEFAULT_SIGMA_DOMAIN,
    DEFAULT_WINDOW_RADIUS,
};
use crate::scenes::{GeneratedScene, SceneRecipe};
use crate::sensor::SensorConfig;
use crate::simulator::{capture_wells, sample, CaptureInput, CaptureMode, PatternSpec, SceneSpec};
use crate::skellam::{DifferenceFrame, ExpectedWells, MomentField};

/// Seed used when a configuration does not name one.
pub const DEFAULT_SEED: u64 = 0x5eed_d1ff;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_PLUS_FILE: &str = "truth_plus.pfm";
pub const TRUTH_MINUS_FILE: &str = "truth_minus.pfm";
pub const LABELS_FILE: &str = "labels.pgm";
pub const DARK_OFFSET_FILE: &str = "dark_offset.pfm";
pub const DARK_SUMMARY_FILE: &str = "dark.json";

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_frames() -> u64 {
    1
}

/// Source images read from files instead of a recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFiles {
    pub source_a: PathBuf,
    pub source_b: PathBuf,
    #[serde(default)]
    pub ambient: Option<PathBuf>,
}

/// A capture run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub scene: Option<SceneRecipe>,
    #[serde(default)]
    pub scene_files: Option<SceneFiles>,
    #[serde(default)]
    pub mode: CaptureMode,
    #[serde(default)]
    pub pattern: PatternSpec,
    #[serde(default = "default_frames")]
    pub frames: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            scene: None,
            scene_files: None,
            mode: CaptureMode::default(),
            pattern: PatternSpec::default(),
            frames: default_frames(),
            seed: DEFAULT_SEED,
            out: None,
        }
    }
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Domain(m) => Error::Domain(format!("{name}: {m}")),
        Error::Usage(m) => Error::Usage(format!("{name}: {m}")),
        other => other,
    })
}

/// Parses a JSON document, reporting the file on failure.
pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| match Error::from(e) {
        Error::Usage(m) => Error::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

/// A scene ready for capture.
#[derive(Clone, Debug)]
pub enum LoadedScene {
    Static {
        scene: SceneSpec,
        labels: Option<Segmentation>,
    },
    Dynamic(crate::simulator::SceneSequence),
}

impl LoadedScene {
    pub fn input(&self) -> CaptureInput<'_> {
        match self {
            LoadedScene::Static { scene, .. } => CaptureInput::Scene(scene),
            LoadedScene::Dynamic(seq) => CaptureInput::Sequence(seq),
        }
    }

    pub fn labels(&self) -> Option<&Segmentation> {
        match self {
            LoadedScene::Static { labels, .. } => labels.as_ref(),
            LoadedScene::Dynamic(_) => None,
        }
    }
}

impl RunConfig {
    /// Reads a config; relative scene file paths are taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = load_json(path)?;
        let base = path.parent();
        if let Some(files) = cfg.scene_files.as_mut() {
            files.source_a = resolve(base, &files.source_a);
            files.source_b = resolve(base, &files.source_b);
            files.ambient = files.ambient.as_ref().map(|a| resolve(base, a));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        field("sensor", self.sensor.validate())?;
        if self.frames < 1 {
            return Err(Error::usage("frames: must be at least 1"));
        }
        match (&self.scene, &self.scene_files) {
            (Some(_), Some(_)) => Err(Error::usage("scene, scene_files: give only one of them")),
            (None, None) => Err(Error::usage("scene: a scene recipe or scene_files is required")),
            (None, Some(f)) => {
                for (name, p) in [("scene_files.source_a", Some(&f.source_a)), ("scene_files.source_b", Some(&f.source_b)), ("scene_files.ambient", f.ambient.as_ref())] {
                    if let Some(p) = p {
                        if !p.is_file() {
                            return Err(Error::usage(format!("{name}: {} does not exist", p.display())));
                        }
                    }
                }
                Ok(())
            }
            (Some(_), None) => Ok(()),
        }?;
        field("mode", self.mode.validate(self.sensor.width, self.sensor.height))?;
        field("pattern", self.pattern.build().map(|_| ()))
    }

    pub fn load_scene(&self) -> Result<LoadedScene> {
        let (w, h) = self.sensor.dims();
        if let Some(recipe) = &self.scene {
            return Ok(match field("scene", recipe.generate(w, h))? {
                GeneratedScene::Static { scene, labels } => LoadedScene::Static { scene, labels },
                GeneratedScene::Dynamic(seq) => LoadedScene::Dynamic(seq),
            });
        }
        let files = self
            .scene_files
            .as_ref()
            .ok_or_else(|| Error::usage("scene: a scene recipe or scene_files is required"))?;
        let a = read_image(&files.source_a)?;
        let b = read_image(&files.source_b)?;
        let amb = match &files.ambient {
            Some(p) => read_image(p)?,
            None => Image::zeros(a.width(), a.height()),
        };
        let scene = field("scene_files", SceneSpec::new(a, b, amb))?;
        field("scene_files", self.sensor.check_dims(scene.dims(), "scene"))?;
        Ok(LoadedScene::Static { scene, labels: None })
    }

    /// Expected wells of the configured capture.
    pub fn expected_wells(&self, scene: &LoadedScene) -> Result<ExpectedWells> {
        let pattern = field("pattern", self.pattern.build())?;
        field("mode", capture_wells(scene.input(), &pattern, self.mode, &self.sensor))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: u64,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub seed: u64,
    pub frame_count: u64,
    pub frames: Vec<FrameRecord>,
    /// Expected wells, for reconstruction metrics.
    pub truth_plus: String,
    pub truth_minus: String,
    #[serde(default)]
    pub labels: Option<String>,
}

fn create_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::numeric(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn frame_file_name(index: u64) -> String {
    format!("frame_{index:05}.pfm")
}

/// Simulates `cfg.frames` difference frames into `out`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let scene = cfg.load_scene()?;
    let wells = cfg.expected_wells(&scene)?;
    let readout = cfg.mode.readout();

    create_out_dir(out)?;
    let mut frames = Vec::with_capacity(cfg.frames as usize);
    for index in 0..cfg.frames {
        let frame = sample(&wells, &cfg.sensor, cfg.seed, index, readout)?;
        let bytes = encode_pfm(&frame.values);
        let file = frame_file_name(index);
        write_bytes(&out.join(&file), &bytes)?;
        frames.push(FrameRecord {
            index,
            file,
            sha256: sha256_hex(&bytes),
        });
    }
    write_bytes(&out.join(TRUTH_PLUS_FILE), &encode_pfm(wells.plus()))?;
    write_bytes(&out.join(TRUTH_MINUS_FILE), &encode_pfm(wells.minus()))?;
    let labels = match scene.labels() {
        Some(seg) => {
            write_bytes(&out.join(LABELS_FILE), &encode_pgm16(&seg.to_image())?)?;
            Some(LABELS_FILE.to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.seed,
        frame_count: cfg.frames,
        frames,
        truth_plus: TRUTH_PLUS_FILE.into(),
        truth_minus: TRUTH_MINUS_FILE.into(),
        labels,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    log::info!("wrote {} frames to {}", cfg.frames, out.display());
    Ok(manifest)
}

/// Frame files named by a directory's manifest, or else every `.pfm` in it
/// other than known auxiliary outputs, in name order. A file path is taken
/// as a single frame.
pub fn list_frames(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(Error::usage(format!("frames: {} does not exist", path.display())));
    }
    let manifest_path = path.join(MANIFEST_FILE);
    if manifest_path.is_file() {
        let m: Manifest = load_json(&manifest_path)?;
        return Ok(m.frames.iter().map(|f| path.join(&f.file)).collect());
    }
    let skip = [TRUTH_PLUS_FILE, TRUTH_MINUS_FILE, DARK_OFFSET_FILE];
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "pfm")
                && !p.file_name().is_some_and(|n| skip.iter().any(|s| n == *s))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::usage(format!("frames: no .pfm frames in {}", path.display())));
    }
    Ok(files)
}

pub fn read_frames(paths: &[PathBuf]) -> Result<Vec<DifferenceFrame>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| DifferenceFrame::new(read_image(p)?, i as u64, 0))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    M1,
    M2,
    M3,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Method::M1),
            "m2" => Ok(Method::M2),
            "m3" => Ok(Method::M3),
            _ => Err(Error::usage(format!("method: expected m1, m2 or m3, got '{s}'"))),
        }
    }
}

/// Bilateral settings; unset fields take the frame-derived defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilateralConfig {
    pub sigma_range: Option<f64>,
    pub sigma_domain: Option<f64>,
    pub window_radius: Option<usize>,
}

/// A reconstruction job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    /// Taken from the frames' manifest when absent.
    #[serde(default)]
    pub sensor: Option<SensorConfig>,
    pub frames: PathBuf,
    pub method: Method,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Frame used by the single-frame methods.
    #[serde(default)]
    pub frame_index: usize,
    #[serde(default)]
    pub bilateral: BilateralConfig,
    /// Directory written by dark calibration.
    #[serde(default)]
    pub dark: Option<PathBuf>,
    #[serde(default)]
    pub ignore_read_noise: bool,
    #[serde(default)]
    pub truth_plus: Option<PathBuf>,
    #[serde(default)]
    pub truth_minus: Option<PathBuf>,
}

impl ReconstructConfig {
    pub fn new(frames: PathBuf, method: Method) -> Self {
        Self {
            sensor: None,
            frames,
            method,
            labels: None,
            frame_index: 0,
            bilateral: BilateralConfig::default(),
            dark: None,
            ignore_read_noise: false,
            truth_plus: None,
            truth_minus: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ReconstructConfig = load_json(path)?;
        let base = path.parent();
        cfg.frames = resolve(base, &cfg.frames);
        for p in [&mut cfg.labels, &mut cfg.dark, &mut cfg.truth_plus, &mut cfg.truth_minus]
            .into_iter()
            .flatten()
        {
            *p = resolve(base, p);
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub joint: f64,
    pub plus: f64,
    pub minus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructMetrics {
    pub method: Method,
    pub frames_used: usize,
    pub valid_pixels: usize,
    pub total_pixels: usize,
    pub clamped: usize,
    pub invalid_patches: usize,
    pub read_variance: f64,
    pub ignore_read_noise: bool,
    #[serde(default)]
    pub sigma_range: Option<f64>,
    #[serde(default)]
    pub sigma_domain: Option<f64>,
    #[serde(default)]
    pub window_radius: Option<usize>,
    #[serde(default)]
    pub rmse: Option<RmseReport>,
}

fn channel_rmse(rec: &Image, truth: &Image, valid: &[bool]) -> f64 {
    let (mut e, mut n) = (0.0, 0.0);
    for i in 0..truth.len() {
        if valid[i] {
            e += (rec[i] - truth[i]).powi(2);
            n += truth[i] * truth[i];
        }
    }
    (e / n).sqrt()
}

struct DarkInput {
    offset: Image,
    read_variance: f64,
}

fn load_dark(dir: &Path) -> Result<DarkInput> {
    let summary: DarkSummary = load_json(&dir.join(DARK_SUMMARY_FILE))?;
    Ok(DarkInput {
        offset: read_image(&dir.join(DARK_OFFSET_FILE))?,
        read_variance: summary.read_variance,
    })
}

/// Moment estimation followed by source separation.
pub fn reconstruct(cfg: &ReconstructConfig, out: &Path) -> Result<ReconstructMetrics> {
    let paths = list_frames(&cfg.frames)?;
    match cfg.method {
        Method::M1 if paths.len() < 2 => {
            return Err(Error::usage(format!(
                "m1 needs a stack of N ≥ 2 frames, got {}",
                paths.len()
            )))
        }
        Method::M2 if cfg.labels.is_none() => {
            return Err(Error::usage("m2 needs a label image (labels)"))
        }
        Method::M2 | Method::M3 if cfg.frame_index >= paths.len() => {
            return Err(Error::usage(format!(
                "frame_index: {} is out of range for {} frames",
                cfg.frame_index,
                paths.len()
            )))
        }
        _ => {}
    }
    let mut sensor = match &cfg.sensor {
        Some(s) => s.clone(),
        None => {
            let manifest = cfg.frames.join(MANIFEST_FILE);
            if !manifest.is_file() {
                return Err(Error::usage(
                    "sensor: no sensor configuration given and no manifest next to the frames",
                ));
            }
            load_json::<Manifest>(&manifest)?.config.sensor
        }
    };
    let dark = cfg.dark.as_deref().map(load_dark).transpose()?;
    if let Some(d) = &dark {
        sensor.read_variance = d.read_variance;
    }
    field("sensor", sensor.validate())?;

    let frames = match cfg.method {
        Method::M1 => read_frames(&paths)?,
        _ => read_frames(&paths[cfg.frame_index..=cfg.frame_index])?,
    };
    field("frames", sensor.check_dims(frames[0].dims(), "frame"))?;
    let truth = match (&cfg.truth_plus, &cfg.truth_minus) {
        (Some(p), Some(m)) => Some(ExpectedWells::new(read_image(p)?, read_image(m)?)?),
        (None, None) => None,
        _ => return Err(Error::usage("truth_plus, truth_minus: give both or neither")),
    };
    if let Some(t) = &truth {
        field("truth", sensor.check_dims(t.dims(), "ground truth"))?;
    }

    let mut invalid_patches = 0;
    let mut bilateral = None;
    let field_m: MomentField = match cfg.method {
        Method::M1 => estimate_moments_m1(&frames)?,
        Method::M2 => {
            let labels = cfg.labels.as_ref().expect("checked above");
            let seg = field("labels", Segmentation::from_image(&read_image(labels)?))?;
            let est = field("labels", estimate_moments_m2(&frames[0], &seg))?;
            invalid_patches = est.invalid_patches;
            est.field
        }
        Method::M3 => {
            let d = BilateralParams::default_for(&frames[0]);
            let b = &cfg.bilateral;
            let params = field(
                "bilateral",
                BilateralParams::new(
                    b.sigma_range.unwrap_or(d.sigma_range),
                    b.sigma_domain.unwrap_or(DEFAULT_SIGMA_DOMAIN),
                    b.window_radius.unwrap_or(DEFAULT_WINDOW_RADIUS),
                ),
            )?;
            bilateral = Some(params);
            estimate_moments_m3(&frames[0], &params)?
        }
    };
    let recovery = separate_sources(
        &field_m,
        &sensor,
        SeparationOptions {
            dark_offset: dark.as_ref().map(|d| &d.offset),
            ignore_read_noise: cfg.ignore_read_noise,
        },
    )?;
    let rmse = truth.as_ref().map(|t| RmseReport {
        joint: relative_rmse(&recovery.wells, t, Some(&recovery.valid)),
        plus: channel_rmse(recovery.wells.plus(), t.plus(), &recovery.valid),
        minus: channel_rmse(recovery.wells.minus(), t.minus(), &recovery.valid),
    });
    let metrics = ReconstructMetrics {
        method: cfg.method,
        frames_used: frames.len(),
        valid_pixels: recovery.valid.iter().filter(|&&v| v).count(),
        total_pixels: recovery.valid.len(),
        clamped: recovery.clamped,
        invalid_patches,
        read_variance: sensor.read_variance,
        ignore_read_noise: cfg.ignore_read_noise,
        sigma_range: bilateral.map(|b| b.sigma_range),
        sigma_domain: bilateral.map(|b| b.sigma_domain),
        window_radius: bilateral.map(|b| b.window_radius),
        rmse,
    };

    let (w, h) = sensor.dims();
    let valid_img = Image::new(w, h, recovery.valid.iter().map(|&v| v as u8 as f64).collect())?;
    let outputs = [
        ("recovered_plus.pfm", encode_pfm(recovery.wells.plus())),
        ("recovered_minus.pfm", encode_pfm(recovery.wells.minus())),
        ("moments_mean.pfm", encode_pfm(field_m.mean())),
        ("moments_variance.pfm", encode_pfm(field_m.variance())),
        ("valid.pgm", encode_pgm16(&valid_img)?),
    ];
    create_out_dir(out)?;
    for (name, bytes) in outputs {
        write_bytes(&out.join(name), &bytes)?;
    }
    write_json(&out.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

/// A noise sweep document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default = "sweep_defaults::levels")]
    pub levels: Vec<f64>,
    #[serde(default = "sweep_defaults::frames")]
    pub frames: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "sweep_defaults::minus_fraction")]
    pub minus_fraction: f64,
    #[serde(default)]
    pub binning: Binning,
}

mod sweep_defaults {
    pub fn levels() -> Vec<f64> {
        vec![0.0, 50.0, 100.0, 200.0]
    }
    pub fn frames() -> u64 {
        1000
    }
    pub fn minus_fraction() -> f64 {
        1.0
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            levels: sweep_defaults::levels(),
            frames: sweep_defaults::frames(),
            seed: DEFAULT_SEED,
            minus_fraction: sweep_defaults::minus_fraction(),
            binning: Binning::default(),
        }
    }
}

impl SweepConfig {
    pub fn options(&self) -> SweepOptions {
        SweepOptions {
            levels: self.levels.clone(),
            frames: self.frames,
            seed: self.seed,
            minus_fraction: self.minus_fraction,
            binning: self.binning,
        }
    }
}

/// Writes `noise_report.csv`, `noise_summary.json` and
/// `noise_report.json` (full report with histograms).
pub fn noise_sweep(cfg: &SweepConfig, out: &Path) -> Result<NoiseReport> {
    field("sensor", cfg.sensor.validate())?;
    if cfg.levels.len() < 3 {
        return Err(Error::usage(format!(
            "levels: a sweep needs at least 3 levels, got {}",
            cfg.levels.len()
        )));
    }
    let report = intensity_sweep(&cfg.sensor, &cfg.options())?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let summary: ReportSummary = report.summary();
    create_out_dir(out)?;
    write_bytes(&out.join("noise_report.csv"), &csv)?;
    write_json(&out.join("noise_summary.json"), &summary)?;
    write_json(&out.join("noise_report.json"), &report)?;
    Ok(report)
}

/// Exports the configured scene: source images, expected wells and
/// expected difference, labels when the scene has them, and the recipe.
pub fn scene_gen(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    cfg.validate()?;
    let scene = cfg.load_scene()?;
    let wells = cfg.expected_wells(&scene)?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    match &scene {
        LoadedScene::Static { scene, labels } => {
            files.push(("source_a.pfm".into(), encode_pfm(&scene.source_a)));
            files.push(("source_b.pfm".into(), encode_pfm(&scene.source_b)));
            files.push(("ambient.pfm".into(), encode_pfm(&scene.ambient)));
            if let Some(seg) = labels {
                files.push((LABELS_FILE.into(), encode_pgm16(&seg.to_image())?));
            }
        }
        LoadedScene::Dynamic(seq) => {
            for (k, f) in seq.frames().iter().enumerate() {
                files.push((format!("slice_{k:03}.pfm"), encode_pfm(f)));
            }
        }
    }
    files.push((TRUTH_PLUS_FILE.into(), encode_pfm(wells.plus())));
    files.push((TRUTH_MINUS_FILE.into(), encode_pfm(wells.minus())));
    files.push((
        "expected_difference.pfm".into(),
        encode_pfm(&wells.expected_difference(&cfg.sensor)),
    ));
    let recipe = serde_json::to_string_pretty(cfg).map_err(|e| Error::numeric(e.to_string()))? + "\n";
    files.push(("scene.json".into(), recipe.into_bytes()));

    create_out_dir(out)?;
    for (name, bytes) in &files {
        write_bytes(&out.join(name), bytes)?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarkSummary {
    pub frames: usize,
    pub read_variance: f64,
    pub mean_offset: f64,
}

/// Dark-frame calibration of a frame directory.
pub fn dark_calibrate(frames: &Path, out: &Path) -> Result<DarkSummary> {
    let paths = list_frames(frames)?;
    let stack = read_frames(&paths)?;
    let cal = dark_frame_calibrate(&stack)?;
    let summary = DarkSummary {
        frames: stack.len(),
        read_variance: cal.read_variance,
        mean_offset: cal.offset.mean(),
    };
    let offset = encode_pfm(&cal.offset);
    create_out_dir(out)?;
    write_bytes(&out.join(DARK_OFFSET_FILE), &offset)?;
    write_json(&out.join(DARK_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::ColorChartParams;

    fn uniform_run(frames: u64, read: f64) -> RunConfig {
        RunConfig {
            sensor: SensorConfig::new(0.5, read, 8, 6).unwrap(),
            scene: Some(SceneRecipe::Uniform { source_a: 0.0, source_b: 0.0, ambient: 0.0 }),
            frames,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_scene_without_read_noise_gives_zero_frame() {
        let dir = tempfile::tempdir().unwrap();
        let m = simulate(&uniform_run(1, 0.0), dir.path()).unwrap();
        assert_eq!(m.frame_count, 1);
        let img = read_image(&dir.path().join(&m.frames[0].file)).unwrap();
        assert!(img.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manifest_lists_every_frame_with_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let m = simulate(&uniform_run(5, 10.0), dir.path()).unwrap();
        assert_eq!(m.frames.len(), 5);
        for f in &m.frames {
            let bytes = fs::read(dir.path().join(&f.file)).unwrap();
            assert_eq!(sha256_hex(&bytes), f.sha256);
        }
        let back: Manifest = load_json(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
        assert_eq!(list_frames(dir.path()).unwrap().len(), 5);
    }

    #[test]
    fn rerun_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = uniform_run(3, 4.0);
        simulate(&cfg, a.path()).unwrap();
        simulate(&cfg, b.path()).unwrap();
        for name in ["frame_00000.pfm", "frame_00002.pfm", MANIFEST_FILE] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let mut cfg = uniform_run(0, 1.0);
        let err = simulate(&cfg, &out).unwrap_err();
        assert!(err.to_string().contains("frames"));
        cfg.frames = 1;
        cfg.sensor.contrast = 2.0;
        let err = simulate(&cfg, &out).unwrap_err();
        assert!(err.to_string().contains("sensor") && err.to_string().contains("contrast"));
        cfg.sensor.contrast = 0.5;
        cfg.scene = None;
        assert!(simulate(&cfg, &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn unknown_fields_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"framez": 3}"#).unwrap();
        let err = RunConfig::load(&p).unwrap_err();
        assert!(matches!(err, Error::Usage(ref m) if m.contains("framez")));
    }

    #[test]
    fn scene_files_resolve_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        crate::io::write_pfm(&dir.path().join("a.pfm"), &Image::filled(8, 6, 30.0)).unwrap();
        crate::io::write_pfm(&dir.path().join("b.pfm"), &Image::filled(8, 6, 10.0)).unwrap();
        let p = dir.path().join("run.json");
        fs::write(
            &p,
            r#"{"sensor": {"width": 8, "height": 6, "contrast": 1.0, "read_variance": 0.0},
                "scene_files": {"source_a": "a.pfm", "source_b": "b.pfm"}}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        cfg.validate().unwrap();
        let wells = cfg.expected_wells(&cfg.load_scene().unwrap()).unwrap();
        assert_eq!(wells.plus()[0], 30.0);
        assert_eq!(wells.minus()[0], 10.0);
    }

    #[test]
    fn reconstruct_requires_stack_or_labels() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("frames");
        simulate(&uniform_run(1, 1.0), &frames).unwrap();
        let out = dir.path().join("rec");
        let err = reconstruct(&ReconstructConfig::new(frames.clone(), Method::M1), &out).unwrap_err();
        assert!(matches!(err, Error::Usage(ref m) if m.contains("N ≥ 2")));
        let err = reconstruct(&ReconstructConfig::new(frames.clone(), Method::M2), &out).unwrap_err();
        assert!(matches!(err, Error::Usage(ref m) if m.contains("label")));
        assert!(!out.exists());
        let m3 = reconstruct(&ReconstructConfig::new(frames, Method::M3), &out).unwrap();
        assert_eq!(m3.valid_pixels, m3.total_pixels);
        assert!(out.join("recovered_plus.pfm").is_file());
    }

    #[test]
    fn chart_end_to_end_with_m1_and_m2() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("frames");
        let cfg = RunConfig {
            sensor: SensorConfig::new(0.8, 10.0, 44, 30).unwrap(),
            scene: Some(SceneRecipe::ColorChart(ColorChartParams {
                rows: 2,
                cols: 3,
                red: vec![0.9, 0.1, 0.5, 0.2, 0.7, 0.4],
                blue: vec![0.1, 0.9, 0.5, 0.6, 0.3, 0.4],
                ..Default::default()
            })),
            frames: 200,
            seed: 9,
            ..RunConfig::default()
        };
        let manifest = simulate(&cfg, &frames).unwrap();
        assert_eq!(manifest.labels.as_deref(), Some(LABELS_FILE));

        let mut rc = ReconstructConfig::new(frames.clone(), Method::M1);
        rc.truth_plus = Some(frames.join(TRUTH_PLUS_FILE));
        rc.truth_minus = Some(frames.join(TRUTH_MINUS_FILE));
        let m1 = reconstruct(&rc, &dir.path().join("m1")).unwrap();
        assert_eq!(m1.frames_used, 200);
        // N = 200: per-pixel relative error is large, the joint figure is not
        assert!(m1.rmse.as_ref().unwrap().joint < 0.5, "{:?}", m1.rmse);

        rc.method = Method::M2;
        rc.labels = Some(frames.join(LABELS_FILE));
        let m2 = reconstruct(&rc, &dir.path().join("m2")).unwrap();
        assert_eq!(m2.frames_used, 1);
        assert!(m2.valid_pixels < m2.total_pixels);
        assert!(m2.rmse.unwrap().joint < 0.25);
    }

    #[test]
    fn dark_calibration_feeds_reconstruction() {
        let dir = tempfile::tempdir().unwrap();
        let darks = dir.path().join("darks");
        simulate(&uniform_run(200, 6.0), &darks).unwrap();
        let cal = dark_calibrate(&darks, &dir.path().join("cal")).unwrap();
        assert_eq!(cal.frames, 200);
        assert!((cal.read_variance - 6.0).abs() < 1.5);
        let mut rc = ReconstructConfig::new(darks.clone(), Method::M1);
        rc.dark = Some(dir.path().join("cal"));
        let m = reconstruct(&rc, &dir.path().join("rec")).unwrap();
        assert_eq!(m.read_variance, cal.read_variance);
    }

    #[test]
    fn sweep_writes_one_row_per_level() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SweepConfig {
            sensor: SensorConfig::new(0.5, 10.0, 8, 8).unwrap(),
            levels: vec![0.0, 20.0, 40.0, 80.0, 160.0],
            frames: 50,
            ..SweepConfig::default()
        };
        noise_sweep(&cfg, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("noise_report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 5);
        let s: ReportSummary = load_json(&dir.path().join("noise_summary.json")).unwrap();
        assert_eq!(s.level_count, 5);
        let few = SweepConfig { levels: vec![0.0, 1.0], ..cfg };
        let out = dir.path().join("few");
        assert!(matches!(noise_sweep(&few, &out), Err(Error::Usage(_))));
        assert!(!out.exists());
    }

    #[test]
    fn scene_gen_exports_sources_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            sensor: SensorConfig::new(0.8, 10.0, 86, 58).unwrap(),
            scene: Some(SceneRecipe::ColorChart(ColorChartParams::default())),
            ..RunConfig::default()
        };
        let files = scene_gen(&cfg, dir.path()).unwrap();
        assert!(files.contains(&LABELS_FILE.to_string()));
        let labels = read_image(&dir.path().join(LABELS_FILE)).unwrap();
        assert_eq!(labels.as_slice().iter().cloned().fold(0.0, f64::max), 24.0);
        let back = RunConfig::load(&dir.path().join("scene.json")).unwrap();
        assert_eq!(back, cfg);
    }
}
