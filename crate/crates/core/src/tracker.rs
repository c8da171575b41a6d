//! Per-frame tracking loop.
//!
//! A [`Tracker`] holds an immutable [`TrackerConfig`]; all per-sequence data
//! lives in a [`TrackerState`] value threaded through [`Tracker::track_frame`].
//! The three optional layers are displacement consistency (D), scale
//! consistency (S) and rotation adaptiveness (R); with all three off the
//! tracker is a plain correlation-peak tracker.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::consistency::{displacement_consistency, scale_consistency, scale_factor, ConsistencyParams, MotionState};
use crate::correlation::{
    feature_transform, filter_respond, gaussian_label, subpixel_peak, train_filter, update_model, xcorr_fft,
    FeatureMap, ResponseMap,
};
use crate::error::{out_of_range, Error, Result};
use crate::geometry::{Angle, Point2, RotatedBBox};
use crate::grid::Grid;
use crate::imageproc::{crop_resample, Image, Patch};
use crate::rotation_bank::{
    build_bank, nearest_neighbors, order_around, per_frame_rotations, rotation_gwa, select_by_ratio, top3_candidates,
    TemplateBank,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateMode {
    /// Exemplar from the first frame only; rotation through a precomputed bank.
    FixedTemplate,
    /// Correlation filter retrained every frame from a rolling-average model;
    /// rotation through `-ζ, 0, +ζ` re-rotations of that model.
    UpdatingTemplate,
}

/// Named ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    D,
    DS,
    DSR,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::D, Variant::DS, Variant::DSR];

    /// `(displacement, scale, rotation)` flags.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Variant::Baseline => (false, false, false),
            Variant::D => (true, false, false),
            Variant::DS => (true, true, false),
            Variant::DSR => (true, true, true),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::D => "D",
            Variant::DS => "DS",
            Variant::DSR => "DSR",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "D" => Ok(Variant::D),
            "DS" => Ok(Variant::DS),
            "DSR" => Ok(Variant::DSR),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected baseline, D, DS or DSR)"
            ))),
        }
    }
}

/// Flat tracker configuration; this is also the JSON config file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub mode: TemplateMode,
    pub displacement: bool,
    pub scale: bool,
    pub rotation: bool,
    pub w: f64,
    pub w_theta: f64,
    pub w_d: f64,
    pub sigma_scale: f64,
    pub scale_step: f64,
    pub num_scales: usize,
    pub scale_damping: f64,
    /// Bank spacing in degrees (fixed mode).
    pub bank_step: f64,
    /// Number of bank entries correlated per frame (fixed mode).
    pub neighbors: usize,
    /// Per-frame re-rotation in degrees (updating mode).
    pub zeta: f64,
    pub sigma_rot: f64,
    pub ratio_epsilon: f64,
    pub exemplar_size: usize,
    pub search_size: usize,
    /// Exemplar crop side as a multiple of the target size.
    pub context: f64,
    /// Apply a cosine window to template features.
    pub windowed: bool,
    pub update_rate: f64,
    /// Ridge regulariser relative to unit-energy features.
    pub lambda: f64,
    /// Label sigma as a fraction of the target size in feature cells.
    pub label_sigma: f64,
    /// Refine response peaks to sub-cell precision.
    pub subpixel: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let c = ConsistencyParams::default();
        TrackerConfig {
            mode: TemplateMode::FixedTemplate,
            displacement: false,
            scale: false,
            rotation: false,
            w: c.w,
            w_theta: c.w_theta,
            w_d: c.w_d,
            sigma_scale: c.sigma_scale,
            scale_step: c.scale_step,
            num_scales: c.num_scales,
            scale_damping: c.scale_damping,
            bank_step: 20.0,
            neighbors: 5,
            zeta: 8.0,
            sigma_rot: 1.0,
            ratio_epsilon: 1.0,
            exemplar_size: 64,
            search_size: 128,
            context: 2.0,
            windowed: true,
            update_rate: 0.01,
            lambda: 1e-2,
            label_sigma: 0.1,
            subpixel: true,
        }
    }
}

impl TrackerConfig {
    pub fn with_variant(mut self, v: Variant) -> Self {
        (self.displacement, self.scale, self.rotation) = v.flags();
        self
    }

    pub fn consistency(&self) -> ConsistencyParams {
        ConsistencyParams {
            w: self.w,
            w_theta: self.w_theta,
            w_d: self.w_d,
            sigma_scale: self.sigma_scale,
            scale_step: self.scale_step,
            num_scales: self.num_scales,
            scale_damping: self.scale_damping,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.consistency().validate()?;
        let cfg = |m: String| Err(Error::Config(m));
        if self.exemplar_size == 0 || self.search_size <= self.exemplar_size {
            return cfg(format!(
                "search_size {} must exceed exemplar_size {} (> 0)",
                self.search_size, self.exemplar_size
            ));
        }
        let count = 360.0 / self.bank_step;
        if !(self.bank_step > 0.0) || (count.round() * self.bank_step - 360.0).abs() > 1e-9 {
            return cfg(format!("bank_step {} must divide 360", self.bank_step));
        }
        if self.neighbors == 0 || self.neighbors > count.round() as usize + 1 {
            return cfg(format!("neighbors {} outside 1..=bank size", self.neighbors));
        }
        if !(self.zeta > 0.0 && self.zeta <= 45.0) {
            return cfg(format!("zeta {} outside (0, 45]", self.zeta));
        }
        for (name, v) in [
            ("sigma_rot", self.sigma_rot),
            ("ratio_epsilon", self.ratio_epsilon),
            ("context", self.context),
            ("label_sigma", self.label_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return cfg(format!("{name} = {v} must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.update_rate) {
            return cfg(format!("update_rate {} outside [0, 1]", self.update_rate));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return cfg(format!("lambda {} must be >= 0", self.lambda));
        }
        Ok(())
    }

    /// Parses a JSON config; missing keys take defaults, unknown keys fail.
    pub fn from_json(text: &str) -> Result<Self> {
        let c: TrackerConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    fn active_scales(&self) -> Vec<f64> {
        if self.scale {
            (0..self.num_scales)
                .map(|i| scale_factor(self.scale_step, self.num_scales, i))
                .collect()
        } else {
            vec![1.0]
        }
    }
}

#[derive(Debug, Clone)]
enum Model {
    Template(Arc<FeatureMap>),
    Bank(Arc<TemplateBank<FeatureMap>>),
    Rolling { patch: Patch, label: Arc<Grid> },
}

/// Per-frame diagnostics; never used to abort tracking.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Winning peak score.
    pub confidence: f64,
    /// Heading of the smoothed motion path, when known.
    pub path_direction: Option<Angle>,
    /// Winning scale bin (0-based).
    pub scale_bin: usize,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    bbox: RotatedBBox,
    angle: Angle,
    model: Model,
    motion: MotionState,
    frame_index: usize,
    frame_dims: (usize, usize),
    diagnostics: Diagnostics,
}

impl TrackerState {
    pub fn bbox(&self) -> RotatedBBox {
        self.bbox
    }

    pub fn angle(&self) -> Angle {
        self.angle
    }

    pub fn motion(&self) -> &MotionState {
        &self.motion
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    /// Number of rotated templates held (bank entries in fixed mode).
    pub fn template_count(&self) -> usize {
        match &self.model {
            Model::Template(_) | Model::Rolling { .. } => 1,
            Model::Bank(b) => b.len(),
        }
    }
}

/// Target size used for crop geometry: geometric mean of the box sides.
fn target_size(b: &RotatedBBox) -> f64 {
    (b.width * b.height).sqrt()
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
}

/// One correlated orientation: its per-scale maps already fused (or the
/// single map) plus the size that scale decision implies.
struct Oriented {
    map: ResponseMap,
    new_size: f64,
    winner: usize,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Tracker> {
        config.validate()?;
        Ok(Tracker { config })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// `lambda` is stated for unit-energy features; z-scored maps carry
    /// energy equal to their pixel count, so the ridge scales with it.
    fn ridge(&self) -> f64 {
        self.config.lambda * (self.config.search_size * self.config.search_size) as f64
    }

    fn crop_side(&self, size: f64) -> f64 {
        size * self.config.context
    }

    fn search_side(&self, size: f64) -> f64 {
        self.crop_side(size) * self.config.search_size as f64 / self.config.exemplar_size as f64
    }

    pub fn init(&self, frame: &Image, gt: &RotatedBBox) -> Result<TrackerState> {
        gt.validate()?;
        let (w, h) = (frame.width() as f64, frame.height() as f64);
        if !(gt.center.x >= 0.0 && gt.center.y >= 0.0 && gt.center.x <= w - 1.0 && gt.center.y <= h - 1.0) {
            return Err(Error::DegenerateBox(format!(
                "initial box centre ({}, {}) outside the {}x{} frame",
                gt.center.x,
                gt.center.y,
                frame.width(),
                frame.height()
            )));
        }
        let cfg = &self.config;
        let angle = if cfg.rotation { gt.angle } else { Angle::ZERO };
        let size = target_size(gt);
        let pad = frame.mean();
        let model = match cfg.mode {
            TemplateMode::FixedTemplate => {
                let exemplar = crop_resample(frame, gt.center, self.crop_side(size), cfg.exemplar_size, angle, pad)?;
                if cfg.rotation {
                    let bank = build_bank(&exemplar, cfg.bank_step, |p| feature_transform(p, cfg.windowed))?;
                    Model::Bank(Arc::new(bank))
                } else {
                    Model::Template(Arc::new(feature_transform(&exemplar, cfg.windowed)?))
                }
            }
            TemplateMode::UpdatingTemplate => {
                let patch = crop_resample(frame, gt.center, self.search_side(size), cfg.search_size, angle, pad)?;
                let cells = cfg.exemplar_size as f64 / cfg.context;
                let label = gaussian_label(cfg.search_size, cfg.label_sigma * cells)?;
                Model::Rolling {
                    patch,
                    label: Arc::new(label),
                }
            }
        };
        Ok(TrackerState {
            bbox: RotatedBBox::new(gt.center, gt.width, gt.height, angle)?,
            angle,
            model,
            motion: MotionState::new(gt.center),
            frame_index: 0,
            frame_dims: (frame.width(), frame.height()),
            diagnostics: Diagnostics::default(),
        })
    }

    /// Maps a response peak to image coordinates. `offset` is the score index
    /// of zero displacement; `cell` the source pixels per score cell.
    fn locate(&self, center: Point2, angle: Angle, map: &ResponseMap, offset: f64, cells: &[f64]) -> Point2 {
        self.locate_with(center, angle, map, offset, cells, self.config.subpixel)
    }

    fn locate_with(
        &self,
        center: Point2,
        angle: Angle,
        map: &ResponseMap,
        offset: f64,
        cells: &[f64],
        subpixel: bool,
    ) -> Point2 {
        let p = if subpixel {
            subpixel_peak(map)
        } else {
            map.peak().location
        };
        let cell = cells[map.scale_index()];
        let dx = (p.x - offset) * cell;
        let dy = (p.y - offset) * cell;
        let (s, c) = angle.sin_cos();
        Point2::new(center.x + (c * dx - s * dy), center.y + (s * dx + c * dy))
    }

    fn fuse_scales(&self, maps: Vec<ResponseMap>, size: f64) -> Result<Oriented> {
        if self.config.scale {
            let d = scale_consistency(&maps, &self.config.consistency(), size)?;
            Ok(Oriented {
                map: d.fused,
                new_size: d.new_size,
                winner: d.winner,
            })
        } else {
            let map = maps.into_iter().next().expect("one scale");
            Ok(Oriented {
                map,
                new_size: size,
                winner: 0,
            })
        }
    }

    pub fn track_frame(&self, state: &TrackerState, frame: &Image) -> Result<(RotatedBBox, TrackerState)> {
        if (frame.width(), frame.height()) != state.frame_dims {
            return Err(Error::DimensionMismatch(format!(
                "frame {}x{} differs from the initial {}x{}",
                frame.width(),
                frame.height(),
                state.frame_dims.0,
                state.frame_dims.1
            )));
        }
        let cfg = &self.config;
        let prev = state.bbox.center;
        let size = target_size(&state.bbox);
        let scales = cfg.active_scales();
        let search_side = self.search_side(size);
        let cells: Vec<f64> = scales
            .iter()
            .map(|f| search_side * f / cfg.search_size as f64)
            .collect();
        let pad = frame.mean();

        let (centroid, angle, new_size, next_model, diagnostics) = match &state.model {
            Model::Template(_) | Model::Bank(_) => {
                let searches = scales
                    .iter()
                    .map(|f| {
                        let p = crop_resample(frame, prev, search_side * f, cfg.search_size, Angle::ZERO, pad)?;
                        feature_transform(&p, false)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let offset = (cfg.search_size - cfg.exemplar_size) as f64 / 2.0;
                let correlate = |template: &FeatureMap, rot: usize| -> Result<Oriented> {
                    let maps = searches
                        .iter()
                        .enumerate()
                        .map(|(i, s)| Ok(xcorr_fft(template, s)?.with_indices(i, rot)))
                        .collect::<Result<Vec<_>>>()?;
                    self.fuse_scales(maps, size)
                };
                match &state.model {
                    Model::Template(t) => {
                        let o = correlate(t, 0)?;
                        let c = self.locate(prev, Angle::ZERO, &o.map, offset, &cells);
                        let diag = Diagnostics {
                            confidence: o.map.peak().value,
                            path_direction: None,
                            scale_bin: o.winner,
                        };
                        (c, state.angle, o.new_size, state.model.clone(), diag)
                    }
                    Model::Bank(bank) => {
                        let near = nearest_neighbors(bank, state.angle, cfg.neighbors)?;
                        let ordered = order_around(bank, &near, state.angle);
                        let oriented = ordered
                            .iter()
                            .map(|&i| correlate(&bank.entries()[i].template, i))
                            .collect::<Result<Vec<_>>>()?;
                        let maps: Vec<ResponseMap> = oriented.iter().map(|o| o.map.clone()).collect();
                        let angles: Vec<Angle> = ordered.iter().map(|&i| bank.entries()[i].angle()).collect();
                        // Candidates are compared on integer peaks; refining them first lets
                        // sub-pixel offsets outweigh small score gaps in the ratio.
                        let candidates = top3_candidates(&maps, &angles, prev, cfg.sigma_rot, |m| {
                            self.locate_with(prev, Angle::ZERO, m, offset, &cells, false)
                        })?;
                        let mut best = select_by_ratio(&candidates, cfg.ratio_epsilon)?;
                        if cfg.subpixel {
                            let fused = rotation_gwa(&maps, best.map_index + 1, cfg.sigma_rot)?;
                            best.centroid = self.locate(prev, Angle::ZERO, &fused, offset, &cells);
                        }
                        let o = &oriented[best.map_index];
                        let diag = Diagnostics {
                            confidence: best.score,
                            path_direction: None,
                            scale_bin: o.winner,
                        };
                        (best.centroid, best.angle, o.new_size, state.model.clone(), diag)
                    }
                    Model::Rolling { .. } => unreachable!(),
                }
            }
            Model::Rolling { patch, label } => {
                let (templates, turns): (Vec<Patch>, Vec<f64>) = if cfg.rotation {
                    let [lo, mid, hi] = per_frame_rotations(patch, cfg.zeta)?;
                    (vec![lo, mid, hi], vec![-cfg.zeta, 0.0, cfg.zeta])
                } else {
                    (vec![patch.clone()], vec![0.0])
                };
                let searches = scales
                    .iter()
                    .map(|f| {
                        let p = crop_resample(frame, prev, search_side * f, cfg.search_size, state.angle, pad)?;
                        feature_transform(&p, cfg.windowed)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let offset = (cfg.search_size / 2) as f64;
                let ridge = self.ridge();
                let oriented = templates
                    .iter()
                    .enumerate()
                    .map(|(r, t)| {
                        let filter = train_filter(&feature_transform(t, cfg.windowed)?, label, ridge)?;
                        let maps = searches
                            .iter()
                            .enumerate()
                            .map(|(i, s)| Ok(filter_respond(&filter, s)?.with_indices(i, r)))
                            .collect::<Result<Vec<_>>>()?;
                        self.fuse_scales(maps, size)
                    })
                    .collect::<Result<Vec<_>>>()?;
                // No averaging across the three rotations: the strongest wins.
                let win = oriented.iter().enumerate().fold(0, |b, (i, o)| {
                    if o.map.peak().value > oriented[b].map.peak().value {
                        i
                    } else {
                        b
                    }
                });
                let o = &oriented[win];
                let c = self.locate(prev, state.angle, &o.map, offset, &cells);
                let angle = if turns[win] == 0.0 {
                    state.angle
                } else {
                    state.angle.offset(turns[win])
                };
                let diag = Diagnostics {
                    confidence: o.map.peak().value,
                    path_direction: None,
                    scale_bin: o.winner,
                };
                (c, angle, o.new_size, state.model.clone(), diag)
            }
        };

        let (center, motion) = if cfg.displacement {
            displacement_consistency(&state.motion, centroid, &cfg.consistency())?
        } else {
            (centroid, state.motion)
        };

        let ratio = new_size / size;
        let (width, height) = if ratio == 1.0 {
            (state.bbox.width, state.bbox.height)
        } else {
            (state.bbox.width * ratio, state.bbox.height * ratio)
        };
        let bbox = RotatedBBox::new(center, width, height, angle)?;

        let model = match next_model {
            Model::Rolling { patch, label } => {
                let fresh = crop_resample(
                    frame,
                    center,
                    self.search_side(target_size(&bbox)),
                    cfg.search_size,
                    angle,
                    pad,
                )?;
                Model::Rolling {
                    patch: update_model(&patch, &fresh, cfg.update_rate)?,
                    label,
                }
            }
            other => other,
        };

        let next = TrackerState {
            bbox,
            angle,
            model,
            motion,
            frame_index: state.frame_index + 1,
            frame_dims: state.frame_dims,
            diagnostics: Diagnostics {
                path_direction: motion.initialized.then_some(motion.prev_angle),
                ..diagnostics
            },
        };
        Ok((bbox, next))
    }

    /// Initialises on `frames[0]` with `gt` and tracks the rest. The first
    /// returned box is `gt` itself (with the tracker's angle convention).
    pub fn run(&self, frames: &[Image], gt: &RotatedBBox) -> Result<Vec<RotatedBBox>> {
        let first = frames.first().ok_or_else(|| out_of_range("no frames to track"))?;
        let mut state = self.init(first, gt)?;
        let mut boxes = vec![state.bbox()];
        for frame in &frames[1..] {
            let (b, next) = self.track_frame(&state, frame)?;
            boxes.push(b);
            state = next;
        }
        Ok(boxes)
    }
}
