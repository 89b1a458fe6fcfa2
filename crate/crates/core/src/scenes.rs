//! Synthetic scenes for the imaging modalities.
//!
//! Each generator returns electron images per exposure for the in-phase
//! source (A), the anti-phase source (B) and ambient light, or a time
//! sequence of irradiance images for dynamic scenes.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::recon::Segmentation;
use crate::simulator::{SceneSequence, SceneSpec, DEFAULT_TIME_SAMPLES};

const COLORCHECKER_JSON: &str = include_str!("../data/colorchecker.json");

/// Red and blue band reflectance of one chart patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchReflectance {
    pub name: String,
    pub red: f64,
    pub blue: f64,
}

#[derive(Deserialize)]
struct ChartFile {
    patches: Vec<PatchReflectance>,
}

/// The bundled 24-patch reflectance table.
pub fn default_chart_reflectances() -> Vec<PatchReflectance> {
    let file: ChartFile =
        serde_json::from_str(COLORCHECKER_JSON).expect("bundled chart table is valid JSON");
    file.patches
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// Geometry and parameters of a colour chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorChartParams {
    #[serde(default = "chart_defaults::rows")]
    pub rows: usize,
    #[serde(default = "chart_defaults::cols")]
    pub cols: usize,
    /// Per-patch reflectances, row-major; empty selects the bundled table.
    #[serde(default)]
    pub red: Vec<f64>,
    #[serde(default)]
    pub blue: Vec<f64>,
    /// Electrons per exposure from a fully reflecting patch.
    #[serde(default = "chart_defaults::illum")]
    pub illum_red: f64,
    #[serde(default = "chart_defaults::illum")]
    pub illum_blue: f64,
    /// Dark border between and around patches.
    #[serde(default = "chart_defaults::gap")]
    pub gap_px: usize,
}

mod chart_defaults {
    pub fn rows() -> usize {
        4
    }
    pub fn cols() -> usize {
        6
    }
    pub fn illum() -> f64 {
        2000.0
    }
    pub fn gap() -> usize {
        2
    }
}

impl Default for ColorChartParams {
    fn default() -> Self {
        Self {
            rows: chart_defaults::rows(),
            cols: chart_defaults::cols(),
            red: Vec::new(),
            blue: Vec::new(),
            illum_red: chart_defaults::illum(),
            illum_blue: chart_defaults::illum(),
            gap_px: chart_defaults::gap(),
        }
    }
}

/// One patch of a generated chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPatch {
    pub label: u32,
    pub rect: Rect,
    pub red: f64,
    pub blue: f64,
}

/// A generated chart: the scene plus its patch layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorChart {
    pub scene: SceneSpec,
    pub patches: Vec<ChartPatch>,
    width: usize,
    height: usize,
}

impl ColorChart {
    /// Labels 1..=rows*cols over the patch areas, 0 on the border.
    pub fn segmentation(&self) -> Segmentation {
        let mut labels = vec![0u32; self.width * self.height];
        for p in &self.patches {
            for y in p.rect.y..p.rect.y + p.rect.height {
                for x in p.rect.x..p.rect.x + p.rect.width {
                    labels[y * self.width + x] = p.label;
                }
            }
        }
        Segmentation::new(self.width, self.height, labels).expect("chart dimensions are valid")
    }
}

fn check_reflectance(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain(format!("reflectance {v} outside [0, 1]")));
    }
    Ok(())
}

/// Bipolar colour chart: red light drives the plus well, blue the minus well.
pub fn color_chart(params: &ColorChartParams, width: usize, height: usize) -> Result<ColorChart> {
    let n = params.rows * params.cols;
    if n == 0 {
        return Err(Error::domain("chart needs at least one row and column"));
    }
    let (red, blue) = if params.red.is_empty() && params.blue.is_empty() {
        let table = default_chart_reflectances();
        if table.len() != n {
            return Err(Error::domain(format!(
                "bundled table has {} patches but the chart has {n}",
                table.len()
            )));
        }
        (
            table.iter().map(|p| p.red).collect::<Vec<_>>(),
            table.iter().map(|p| p.blue).collect::<Vec<_>>(),
        )
    } else {
        (params.red.clone(), params.blue.clone())
    };
    if red.len() != n || blue.len() != n {
        return Err(Error::domain(format!(
            "expected {n} red and blue reflectances, got {} and {}",
            red.len(),
            blue.len()
        )));
    }
    for &v in red.iter().chain(&blue) {
        check_reflectance(v)?;
    }
    if !(params.illum_red >= 0.0 && params.illum_blue >= 0.0) {
        return Err(Error::domain("illumination must be non-negative"));
    }
    let gap = params.gap_px;
    let cell_w = width.saturating_sub(gap) / params.cols;
    let cell_h = height.saturating_sub(gap) / params.rows;
    if cell_w <= gap || cell_h <= gap {
        return Err(Error::domain(format!(
            "{width}x{height} is too small for a {}x{} chart with {gap}px gaps",
            params.rows, params.cols
        )));
    }

    let mut patches = Vec::with_capacity(n);
    for r in 0..params.rows {
        for c in 0..params.cols {
            let k = r * params.cols + c;
            patches.push(ChartPatch {
                label: k as u32 + 1,
                rect: Rect {
                    x: gap + c * cell_w,
                    y: gap + r * cell_h,
                    width: cell_w - gap,
                    height: cell_h - gap,
                },
                red: red[k],
                blue: blue[k],
            });
        }
    }
    let mut a = Image::zeros(width, height);
    let mut b = Image::zeros(width, height);
    for p in &patches {
        for y in p.rect.y..p.rect.y + p.rect.height {
            for x in p.rect.x..p.rect.x + p.rect.width {
                a.set(x, y, params.illum_red * p.red);
                b.set(x, y, params.illum_blue * p.blue);
            }
        }
    }
    Ok(ColorChart {
        scene: SceneSpec::from_sources(a, b)?,
        patches,
        width,
        height,
    })
}

/// Direct (polarization-preserving) and global (depolarized) light under
/// parallel/crossed polarizers.
///
/// The parallel source sees all direct light plus half the global light;
/// the crossed source sees the other half of the global light only, so the
/// expected difference is the direct component alone.
pub fn polarization_scene(direct: &Image, global: &Image) -> Result<SceneSpec> {
    if !direct.all_finite_non_negative() || !global.all_finite_non_negative() {
        return Err(Error::domain("direct and global maps must be non-negative"));
    }
    let a = direct.zip_map(global, |d, g| d + 0.5 * g)?;
    let b = global.map(|g| 0.5 * g);
    SceneSpec::from_sources(a, b)
}

/// Parameters of the built-in direct/global maps: a diffuse disc object
/// with specular highlights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationParams {
    #[serde(default = "pol_defaults::global")]
    pub global_level: f64,
    #[serde(default = "pol_defaults::direct")]
    pub direct_peak: f64,
    #[serde(default = "pol_defaults::background")]
    pub background: f64,
}

mod pol_defaults {
    pub fn global() -> f64 {
        400.0
    }
    pub fn direct() -> f64 {
        600.0
    }
    pub fn background() -> f64 {
        50.0
    }
}

impl Default for PolarizationParams {
    fn default() -> Self {
        Self {
            global_level: pol_defaults::global(),
            direct_peak: pol_defaults::direct(),
            background: pol_defaults::background(),
        }
    }
}

impl PolarizationParams {
    /// `(direct, global)` maps at the given resolution.
    pub fn maps(&self, width: usize, height: usize) -> Result<(Image, Image)> {
        if !(self.global_level >= 0.0 && self.direct_peak >= 0.0 && self.background >= 0.0) {
            return Err(Error::domain("polarization levels must be non-negative"));
        }
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        let radius = 0.4 * width.min(height) as f64;
        let spot = (0.08 * width.min(height) as f64).max(1.0);
        let highlights = [(cx - 0.3 * radius, cy - 0.3 * radius), (cx + 0.35 * radius, cy + 0.1 * radius)];
        let inside = |x: f64, y: f64| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() <= radius;
        let global = Image::from_fn(width, height, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if inside(px, py) {
                self.global_level
            } else {
                self.background
            }
        });
        let direct = Image::from_fn(width, height, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if !inside(px, py) {
                return 0.1 * self.background;
            }
            highlights
                .iter()
                .map(|&(hx, hy)| {
                    let d2 = (px - hx).powi(2) + (py - hy).powi(2);
                    self.direct_peak * (-d2 / (2.0 * spot * spot)).exp()
                })
                .sum::<f64>()
                + 0.1 * self.global_level
        });
        Ok((direct, global))
    }
}

/// Occluder in front of a background, lit from the left by source A and
/// from the right by source B.
///
/// Each source leaves a hard shadow band `light_offset_px` wide on the far
/// side of the occluder: A's shadow to the right, B's to the left. Inside
/// the occluder and away from the bands both sources see the background.
pub fn depth_edge_scene(background: &Image, occluder: Rect, light_offset_px: usize) -> Result<SceneSpec> {
    let (w, h) = background.dims();
    if light_offset_px < 1 {
        return Err(Error::domain("light offset must be at least one pixel"));
    }
    if occluder.x + occluder.width > w || occluder.y + occluder.height > h {
        return Err(Error::domain("occluder must lie within the frame"));
    }
    if !background.all_finite_non_negative() {
        return Err(Error::domain("background must be non-negative"));
    }
    let mut a = background.clone();
    let mut b = background.clone();
    if occluder.height > 0 && occluder.width > 0 {
        let right = occluder.x + occluder.width;
        let left = occluder.x;
        for y in occluder.y..occluder.y + occluder.height {
            for x in right..(right + light_offset_px).min(w) {
                a.set(x, y, 0.0);
            }
            for x in left.saturating_sub(light_offset_px)..left {
                b.set(x, y, 0.0);
            }
        }
    }
    SceneSpec::from_sources(a, b)
}

/// Width of the anti-aliasing ramp at object edges, in pixels.
pub const EDGE_RAMP_PX: f64 = 2.0;

#[inline]
fn coverage(signed_distance_inside: f64) -> f64 {
    (signed_distance_inside / EDGE_RAMP_PX + 0.5).clamp(0.0, 1.0)
}

/// A bright disc moving at constant velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingDisc {
    /// Centre at mid-exposure.
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    /// Displacement over the full exposure, pixels.
    pub vx: f64,
    pub vy: f64,
}

/// Rotating fan blades around a hub.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanParams {
    pub blades: usize,
    /// Blade angular width, radians.
    pub blade_width: f64,
    /// Rotation over the exposure, radians (positive is clockwise in image
    /// coordinates).
    pub rotation: f64,
    pub radius: f64,
}

impl Default for FanParams {
    fn default() -> Self {
        Self {
            blades: 3,
            blade_width: 0.6,
            rotation: 0.15,
            radius: 0.0,
        }
    }
}

/// Kinds of time-resolved scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicKind {
    FallingObjects { objects: Vec<MovingDisc> },
    RotatingFan(FanParams),
}

/// Bright moving objects on a dark background as `time_samples` images
/// across one exposure. `brightness` is the electron count an object pixel
/// collects over the whole exposure; `background` likewise.
pub fn dynamic_scene(
    kind: &DynamicKind,
    time_samples: usize,
    width: usize,
    height: usize,
    brightness: f64,
    background: f64,
) -> Result<SceneSequence> {
    if time_samples < 2 {
        return Err(Error::domain("dynamic scenes need at least two time samples"));
    }
    if !(brightness >= 0.0 && background >= 0.0) {
        return Err(Error::domain("brightness and background must be non-negative"));
    }
    let k = time_samples as f64;
    let frames = (0..time_samples)
        .map(|s| {
            // slice midpoint relative to mid-exposure
            let t = (s as f64 + 0.5) / k - 0.5;
            Image::from_fn(width, height, |x, y| {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let cov = match kind {
                    DynamicKind::FallingObjects { objects } => objects
                        .iter()
                        .map(|o| {
                            let cx = o.x + o.vx * t;
                            let cy = o.y + o.vy * t;
                            coverage(o.radius - ((px - cx).powi(2) + (py - cy).powi(2)).sqrt())
                        })
                        .fold(0.0, f64::max),
                    DynamicKind::RotatingFan(fan) => fan_coverage(fan, width, height, px, py, t),
                };
                (background + cov * (brightness - background).max(0.0)) / k
            })
        })
        .collect();
    SceneSequence::new(frames)
}

fn fan_coverage(fan: &FanParams, width: usize, height: usize, px: f64, py: f64, t: f64) -> f64 {
    if fan.blades == 0 {
        return 0.0;
    }
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let radius = if fan.radius > 0.0 {
        fan.radius
    } else {
        0.45 * width.min(height) as f64
    };
    let (dx, dy) = (px - cx, py - cy);
    let r = (dx * dx + dy * dy).sqrt();
    if r < 1e-9 {
        return 1.0;
    }
    let radial = coverage(radius - r);
    let angle = dy.atan2(dx) - fan.rotation * t;
    let pitch = TAU / fan.blades as f64;
    // angular distance to the nearest blade centre
    let phase = angle.rem_euclid(pitch);
    let off = phase.min(pitch - phase);
    let arc_inside = (0.5 * fan.blade_width - off) * r;
    radial * coverage(arc_inside)
}

/// Uniform white target at `distance` (metres) under two identical sources;
/// irradiance falls off with the square of distance.
pub fn flat_target(distance: f64, electrons_at_one_metre: f64, width: usize, height: usize) -> Result<SceneSpec> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::domain(format!("target distance must be positive, got {distance}")));
    }
    if !(electrons_at_one_metre >= 0.0) {
        return Err(Error::domain("target brightness must be non-negative"));
    }
    let level = electrons_at_one_metre / (distance * distance);
    SceneSpec::from_sources(Image::filled(width, height, level), Image::filled(width, height, level))
}

/// Serializable scene description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneRecipe {
    ColorChart(ColorChartParams),
    Polarization(PolarizationParams),
    DepthEdge {
        background: f64,
        occluder: Rect,
        light_offset_px: usize,
    },
    FallingObjects {
        objects: Vec<MovingDisc>,
        #[serde(default = "default_brightness")]
        brightness: f64,
        #[serde(default)]
        background: f64,
        #[serde(default = "default_time_samples")]
        time_samples: usize,
    },
    RotatingFan {
        #[serde(default)]
        fan: FanParams,
        #[serde(default = "default_brightness")]
        brightness: f64,
        #[serde(default)]
        background: f64,
        #[serde(default = "default_time_samples")]
        time_samples: usize,
    },
    FlatTarget {
        distance: f64,
        #[serde(default = "default_brightness")]
        electrons_at_one_metre: f64,
    },
    /// Uniform light from both sources plus ambient.
    Uniform {
        source_a: f64,
        source_b: f64,
        #[serde(default)]
        ambient: f64,
    },
}

fn default_brightness() -> f64 {
    1000.0
}

fn default_time_samples() -> usize {
    DEFAULT_TIME_SAMPLES
}

/// Output of a recipe.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratedScene {
    Static {
        scene: SceneSpec,
        labels: Option<Segmentation>,
    },
    Dynamic(SceneSequence),
}

impl SceneRecipe {
    pub fn generate(&self, width: usize, height: usize) -> Result<GeneratedScene> {
        let stat = |scene| Ok(GeneratedScene::Static { scene, labels: None });
        match self {
            SceneRecipe::ColorChart(p) => {
                let chart = color_chart(p, width, height)?;
                let labels = Some(chart.segmentation());
                Ok(GeneratedScene::Static {
                    scene: chart.scene,
                    labels,
                })
            }
            SceneRecipe::Polarization(p) => {
                let (direct, global) = p.maps(width, height)?;
                stat(polarization_scene(&direct, &global)?)
            }
            SceneRecipe::DepthEdge {
                background,
                occluder,
                light_offset_px,
            } => {
                if !(*background >= 0.0) {
                    return Err(Error::domain("background must be non-negative"));
                }
                stat(depth_edge_scene(
                    &Image::filled(width, height, *background),
                    *occluder,
                    *light_offset_px,
                )?)
            }
            SceneRecipe::FallingObjects {
                objects,
                brightness,
                background,
                time_samples,
            } => Ok(GeneratedScene::Dynamic(dynamic_scene(
                &DynamicKind::FallingObjects {
                    objects: objects.clone(),
                },
                *time_samples,
                width,
                height,
                *brightness,
                *background,
            )?)),
            SceneRecipe::RotatingFan {
                fan,
                brightness,
                background,
                time_samples,
            } => Ok(GeneratedScene::Dynamic(dynamic_scene(
                &DynamicKind::RotatingFan(fan.clone()),
                *time_samples,
                width,
                height,
                *brightness,
                *background,
            )?)),
            SceneRecipe::FlatTarget {
                distance,
                electrons_at_one_metre,
            } => stat(flat_target(*distance, *electrons_at_one_metre, width, height)?),
            SceneRecipe::Uniform {
                source_a,
                source_b,
                ambient,
            } => {
                if !(*source_a >= 0.0 && *source_b >= 0.0 && *ambient >= 0.0) {
                    return Err(Error::domain("uniform scene levels must be non-negative"));
                }
                stat(SceneSpec::new(
                    Image::filled(width, height, *source_a),
                    Image::filled(width, height, *source_b),
                    Image::filled(width, height, *ambient),
                )?)
            }
        }
    }
}
