//! Sequences, synthetic data, OPE/TRE evaluation and A/B comparison.
//!
//! Sequence directories follow the OTB layout: numbered frames under `img/`
//! (PGM only), `groundtruth_rect.txt` with one `x,y,w,h` line per frame
//! (1-based top-left corner) and optionally `groundtruth_poly.txt` with
//! `x1,y1,…,x4,y4` corner lines (1-based). When the polygon file exists it
//! takes precedence and the ground truth is treated as rotated.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, out_of_range, Error, Result};
use crate::geometry::{center_error, iou_axis_aligned, iou_rotated, wrap_angle, Angle, Point2, RotatedBBox};
use crate::grid::Grid;
use crate::imageproc::{read_pgm, write_pgm, Image};
use crate::tracker::{Tracker, TrackerConfig};

pub const SUCCESS_STEPS: usize = 100;
pub const PRECISION_MAX_PX: usize = 50;
pub const PRECISION_HEADLINE_PX: usize = 20;

#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    /// Source files in frame order; empty for in-memory sequences.
    pub frame_files: Vec<PathBuf>,
    pub frames: Vec<Image>,
    pub ground_truth: Vec<RotatedBBox>,
    /// Whether the ground truth carries angles (polygon annotations).
    pub rotated: bool,
}

impl Sequence {
    pub fn new(name: impl Into<String>, frames: Vec<Image>, ground_truth: Vec<RotatedBBox>, rotated: bool) -> Result<Self> {
        let name = name.into();
        check_counts(Path::new(&name), frames.len(), ground_truth.len())?;
        Ok(Sequence {
            name,
            frame_files: Vec::new(),
            frames,
            ground_truth,
            rotated,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn check_counts(path: &Path, frames: usize, gt: usize) -> Result<()> {
    let bad = |msg: String| {
        Err(Error::InvalidSequence {
            path: path.to_path_buf(),
            msg,
        })
    };
    if frames < 2 {
        return bad(format!("need at least 2 frames, found {frames}"));
    }
    if frames != gt {
        return bad(format!("{frames} frames but {gt} ground-truth lines"));
    }
    Ok(())
}

/// Parses one annotation line: 4 numbers (OTB rectangle) or 8 (corners).
pub fn parse_gt_line(line: &str) -> std::result::Result<RotatedBBox, String> {
    let nums = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match nums[..] {
        [x, y, w, h] => RotatedBBox::axis_aligned(x - 1.0 + (w - 1.0) / 2.0, y - 1.0 + (h - 1.0) / 2.0, w, h)
            .map_err(|e| e.to_string()),
        [x1, y1, x2, y2, x3, y3, x4, y4] => {
            let p = |x: f64, y: f64| Point2::new(x - 1.0, y - 1.0);
            RotatedBBox::from_polygon(&[p(x1, y1), p(x2, y2), p(x3, y3), p(x4, y4)]).map_err(|e| e.to_string())
        }
        _ => Err(format!("expected 4 or 8 numbers, found {}", nums.len())),
    }
}

fn read_gt(path: &Path) -> Result<(Vec<RotatedBBox>, bool)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut boxes = Vec::new();
    let mut polygons = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let b = parse_gt_line(line).map_err(|msg| Error::GroundTruthParse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        })?;
        polygons |= line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).count() == 8;
        boxes.push(b);
    }
    if boxes.is_empty() {
        return Err(Error::MissingGroundTruth(path.to_path_buf()));
    }
    Ok((boxes, polygons))
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let rect = dir.join("groundtruth_rect.txt");
    if !rect.is_file() {
        return Err(Error::MissingGroundTruth(rect));
    }
    let poly = dir.join("groundtruth_poly.txt");
    let (ground_truth, rotated) = if poly.is_file() { read_gt(&poly)? } else { read_gt(&rect)? };

    let img_dir = dir.join("img");
    let mut frame_files = Vec::new();
    for entry in fs::read_dir(&img_dir).map_err(io_err(&img_dir))? {
        let path = entry.map_err(io_err(&img_dir))?.path();
        if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            let n = frame_number(&path).ok_or_else(|| Error::InvalidSequence {
                path: path.clone(),
                msg: "frame file name has no number".into(),
            })?;
            frame_files.push((n, path));
        }
    }
    frame_files.sort();
    let frame_files: Vec<PathBuf> = frame_files.into_iter().map(|(_, p)| p).collect();
    check_counts(dir, frame_files.len(), ground_truth.len())?;

    let frames = frame_files
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(io_err(p))?;
            read_pgm(&bytes).map_err(|e| Error::InvalidSequence {
                path: p.clone(),
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = (frames[0].width(), frames[0].height());
    if let Some((p, _)) = frame_files.iter().zip(&frames).find(|(_, f)| (f.width(), f.height()) != (w, h)) {
        return Err(Error::InvalidSequence {
            path: p.clone(),
            msg: format!("frame size differs from the first frame ({w}x{h})"),
        });
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(Sequence {
        name,
        frame_files,
        frames,
        ground_truth,
        rotated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Translate,
    Rotate,
    Scale,
    Combined,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translate" => Ok(Preset::Translate),
            "rotate" => Ok(Preset::Rotate),
            "scale" => Ok(Preset::Scale),
            "combined" => Ok(Preset::Combined),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected translate, rotate, scale or combined)"
            ))),
        }
    }
}

/// Synthetic sequence parameters. The preset decides which motions apply:
/// `translate` uses `velocity`, `rotate` uses `omega`, `scale` uses
/// `scale_rate`, `combined` uses all three.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub sprite_size: usize,
    /// Degrees per frame.
    pub omega: f64,
    /// Pixels per frame.
    pub velocity: (f64, f64),
    /// Size multiplier per frame.
    pub scale_rate: f64,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    /// Standard deviation of the per-frame offset between the rendered
    /// sprite and its ground-truth pose (frames after the first).
    pub jitter: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            frames: 60,
            width: 320,
            height: 240,
            sprite_size: 48,
            omega: 4.0,
            velocity: (3.0, 0.0),
            scale_rate: 1.01,
            noise: 0.0,
            jitter: 0.0,
        }
    }
}

/// Seeded noise box-blurred twice and stretched to `[lo, hi]`.
fn blurred_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> Grid {
    let noise = Grid::from_fn(w, h, |_, _| rng.random_range(0.0..1.0));
    let blur = |g: &Grid| {
        Grid::from_fn(w, h, |x, y| {
            let (mut acc, mut cnt) = (0.0, 0.0);
            for sy in y.saturating_sub(2)..(y + 3).min(h) {
                for sx in x.saturating_sub(2)..(x + 3).min(w) {
                    acc += g.get(sx, sy);
                    cnt += 1.0;
                }
            }
            acc / cnt
        })
    };
    let smooth = blur(&blur(&noise));
    let (min, max) = smooth
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (max - min).max(1e-12);
    Grid::from_fn(w, h, |x, y| lo + (hi - lo) * (smooth.get(x, y) - min) / span)
}

/// Bilinear lookup with edge clamping.
fn sample_clamped(g: &Grid, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (g.width() - 1) as f64);
    let y = y.clamp(0.0, (g.height() - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(g.width() - 1), (y0 + 1).min(g.height() - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = g.get(x0, y0) * (1.0 - fx) + g.get(x1, y0) * fx;
    let bottom = g.get(x0, y1) * (1.0 - fx) + g.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Renders a synthetic sequence in memory. Pixels are quantized to integers
/// so the frames equal what a PGM round trip yields.
pub fn render_sequence(name: impl Into<String>, preset: Preset, params: &SynthParams, seed: u64) -> Result<Sequence> {
    let p = params;
    if p.frames < 2 || p.sprite_size < 32 || p.width == 0 || p.height == 0 {
        return Err(out_of_range(format!(
            "need frames >= 2 and sprite_size >= 32 (got {} and {})",
            p.frames, p.sprite_size
        )));
    }
    for (name, v) in [
        ("omega", p.omega),
        ("velocity x", p.velocity.0),
        ("velocity y", p.velocity.1),
        ("noise", p.noise),
        ("jitter", p.jitter),
        ("scale_rate", p.scale_rate),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name));
        }
        if (name == "noise" || name == "jitter") && v < 0.0 {
            return Err(out_of_range(format!("{name} {v} must be >= 0")));
        }
    }
    if !(p.scale_rate > 0.0) {
        return Err(out_of_range(format!("scale_rate {} must be > 0", p.scale_rate)));
    }
    let (translate, rotate, scale) = match preset {
        Preset::Translate => (true, false, false),
        Preset::Rotate => (false, true, false),
        Preset::Scale => (false, false, true),
        Preset::Combined => (true, true, true),
    };
    let v = if translate { p.velocity } else { (0.0, 0.0) };
    let last = (p.frames - 1) as f64;
    let start = Point2::new(
        (p.width as f64 - 1.0) / 2.0 - v.0 * last / 2.0,
        (p.height as f64 - 1.0) / 2.0 - v.1 * last / 2.0,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = p.sprite_size;
    let texture = blurred_noise(&mut rng, s, s, 10.0, 245.0);
    let background = blurred_noise(&mut rng, p.width, p.height, 80.0, 170.0);
    let noise = Normal::new(0.0, p.noise).map_err(|e| out_of_range(e.to_string()))?;
    let jitter = Normal::new(0.0, p.jitter).map_err(|e| out_of_range(e.to_string()))?;
    let half = (s as f64 - 1.0) / 2.0;

    let mut frames = Vec::with_capacity(p.frames);
    let mut ground_truth = Vec::with_capacity(p.frames);
    for k in 0..p.frames {
        let kf = k as f64;
        let center = Point2::new(start.x + v.0 * kf, start.y + v.1 * kf);
        let angle = if rotate { wrap_angle(kf * p.omega)? } else { Angle::ZERO };
        let factor = if scale { p.scale_rate.powi(k as i32) } else { 1.0 };
        let side = s as f64 * factor;
        let gt = RotatedBBox::new(center, side, side, angle)?;
        // The first frame initialises the tracker, so it is drawn at its
        // ground-truth pose.
        let offset = if p.jitter > 0.0 && k > 0 {
            (jitter.sample(&mut rng), jitter.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        let drawn = Point2::new(center.x + offset.0, center.y + offset.1);
        let extent = RotatedBBox::new(drawn, side, side, angle)?.enclosing_axis_aligned();
        let (x0, y0) = (extent.center.x - extent.width / 2.0, extent.center.y - extent.height / 2.0);
        if x0 < 0.0 || y0 < 0.0 || x0 + extent.width > p.width as f64 - 1.0 || y0 + extent.height > p.height as f64 - 1.0 {
            return Err(out_of_range(format!(
                "sprite leaves the {}x{} frame at frame {}",
                p.width,
                p.height,
                k + 1
            )));
        }
        let (sin, cos) = angle.sin_cos();
        let limit = s as f64 / 2.0;
        let mut pixels = Vec::with_capacity(p.width * p.height);
        for y in 0..p.height {
            for x in 0..p.width {
                let (dx, dy) = (x as f64 - drawn.x, y as f64 - drawn.y);
                let u = (cos * dx + sin * dy) / factor;
                let w = (-sin * dx + cos * dy) / factor;
                let value = if u.abs() <= limit && w.abs() <= limit {
                    sample_clamped(&texture, u + half, w + half)
                } else {
                    background.get(x, y)
                };
                let n = if p.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                pixels.push((value + n).round().clamp(0.0, 255.0));
            }
        }
        frames.push(Image::new(p.width, p.height, pixels)?);
        ground_truth.push(gt);
    }
    Sequence::new(name, frames, ground_truth, rotate)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Writes `img/NNNN.pgm`, `groundtruth_rect.txt` (axis-aligned enclosing
/// boxes) and `groundtruth_poly.txt` (corners).
pub fn write_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    let img = dir.join("img");
    fs::create_dir_all(&img).map_err(io_err(&img))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = img.join(format!("{:04}.pgm", i + 1));
        fs::write(&path, write_pgm(frame)).map_err(io_err(&path))?;
    }
    let mut rect = String::new();
    let mut poly = String::new();
    for b in &seq.ground_truth {
        let e = b.enclosing_axis_aligned();
        let x = e.center.x + 1.0 - (e.width - 1.0) / 2.0;
        let y = e.center.y + 1.0 - (e.height - 1.0) / 2.0;
        let _ = writeln!(rect, "{},{},{},{}", fmt_num(x), fmt_num(y), fmt_num(e.width), fmt_num(e.height));
        let corners: Vec<String> = b
            .corners()
            .iter()
            .flat_map(|c| [fmt_num(c.x + 1.0), fmt_num(c.y + 1.0)])
            .collect();
        let _ = writeln!(poly, "{}", corners.join(","));
    }
    for (name, text) in [("groundtruth_rect.txt", rect), ("groundtruth_poly.txt", poly)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Renders a preset and writes it to `dir`; returns the in-memory sequence.
pub fn synth_sequence(preset: Preset, params: &SynthParams, seed: u64, dir: &Path) -> Result<Sequence> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic".into());
    let mut seq = render_sequence(name, preset, params, seed)?;
    write_sequence(&seq, dir)?;
    seq.frame_files = (1..=seq.len()).map(|i| dir.join("img").join(format!("{i:04}.pgm"))).collect();
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RuntimeStats {
    pub frames: usize,
    pub seconds: f64,
}

impl RuntimeStats {
    pub fn fps(&self) -> f64 {
        if self.seconds > 0.0 {
            self.frames as f64 / self.seconds
        } else {
            0.0
        }
    }
}

/// Scores of one evaluation. Runtime is kept out of the serialized form so
/// result files are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub sequence: String,
    /// `[cx, cy, w, h, angle]` per evaluated frame.
    pub boxes: Vec<[f64; 5]>,
    pub iou: Vec<f64>,
    pub center_error: Vec<f64>,
    /// Fraction of frames with IoU > t for t = 0, 0.01, …, 1.
    pub success: Vec<f64>,
    /// Fraction of frames with center error ≤ t px for t = 0, 1, …, 50.
    pub precision: Vec<f64>,
    pub auc: f64,
    pub precision_20: f64,
    #[serde(skip)]
    pub runtime: RuntimeStats,
}

pub fn success_curve(ious: &[f64]) -> Vec<f64> {
    let n = ious.len().max(1) as f64;
    (0..=SUCCESS_STEPS)
        .map(|i| {
            let t = i as f64 / SUCCESS_STEPS as f64;
            ious.iter().filter(|&&v| v > t).count() as f64 / n
        })
        .collect()
}

pub fn precision_curve(errors: &[f64]) -> Vec<f64> {
    let n = errors.len().max(1) as f64;
    (0..=PRECISION_MAX_PX)
        .map(|t| errors.iter().filter(|&&e| e <= t as f64).count() as f64 / n)
        .collect()
}

/// Area under the success curve as a left Riemann sum over the 100 grid
/// intervals, so a perfect run scores exactly 1 and the result is within
/// 0.01 of the mean IoU.
pub fn auc(success: &[f64]) -> f64 {
    success[..SUCCESS_STEPS].iter().sum::<f64>() / SUCCESS_STEPS as f64
}

/// Per-frame overlap: rotated IoU against rotated ground truth, otherwise
/// the prediction's axis-aligned enclosing box against the rectangle.
pub fn score_frame(pred: &RotatedBBox, gt: &RotatedBBox, rotated_gt: bool) -> Result<f64> {
    if rotated_gt {
        iou_rotated(pred, gt)
    } else {
        iou_axis_aligned(&pred.enclosing_axis_aligned(), gt)
    }
}

impl EvalResult {
    pub fn from_boxes(sequence: &str, preds: &[RotatedBBox], gts: &[RotatedBBox], rotated_gt: bool) -> Result<Self> {
        if preds.len() != gts.len() {
            return Err(out_of_range(format!("{} predictions for {} ground-truth boxes", preds.len(), gts.len())));
        }
        let iou = preds
            .iter()
            .zip(gts)
            .map(|(p, g)| score_frame(p, g, rotated_gt))
            .collect::<Result<Vec<_>>>()?;
        let center_error: Vec<f64> = preds.iter().zip(gts).map(|(p, g)| center_error(p, g)).collect();
        let success = success_curve(&iou);
        let precision = precision_curve(&center_error);
        Ok(EvalResult {
            sequence: sequence.to_string(),
            boxes: preds
                .iter()
                .map(|b| [b.center.x, b.center.y, b.width, b.height, b.angle.degrees()])
                .collect(),
            auc: auc(&success),
            precision_20: precision[PRECISION_HEADLINE_PX],
            iou,
            center_error,
            success,
            precision,
            runtime: RuntimeStats::default(),
        })
    }

    pub fn mean_iou(&self) -> f64 {
        mean(&self.iou)
    }

    pub fn mean_center_error(&self) -> f64 {
        mean(&self.center_error)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// 0-based start frames for `segments` evenly spaced TRE runs.
pub fn tre_starts(len: usize, segments: usize) -> Result<Vec<usize>> {
    if segments == 0 {
        return Err(out_of_range("segments must be >= 1"));
    }
    let starts: Vec<usize> = (0..segments).map(|i| i * len / segments).collect();
    if let Some(&s) = starts.iter().find(|&&s| len < s + 2) {
        return Err(out_of_range(format!(
            "{len}-frame sequence too short for {segments} segments (start frame {} leaves < 2 frames)",
            s + 1
        )));
    }
    Ok(starts)
}

/// Temporal robustness evaluation: OPE from each start frame, scores pooled.
pub fn run_tre(seq: &Sequence, config: &TrackerConfig, segments: usize) -> Result<EvalResult> {
    let starts = tre_starts(seq.len(), segments)?;
    let tracker = Tracker::new(config.clone())?;
    let clock = Instant::now();
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for s in starts {
        preds.extend(tracker.run(&seq.frames[s..], &seq.ground_truth[s])?);
        gts.extend_from_slice(&seq.ground_truth[s..]);
    }
    let mut result = EvalResult::from_boxes(&seq.name, &preds, &gts, seq.rotated)?;
    result.runtime = RuntimeStats {
        frames: preds.len(),
        seconds: clock.elapsed().as_secs_f64(),
    };
    Ok(result)
}

/// One-pass evaluation: initialise on the first frame and track the rest.
pub fn run_ope(seq: &Sequence, config: &TrackerConfig) -> Result<EvalResult> {
    run_tre(seq, config, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub sequence: String,
    pub baseline_auc: f64,
    pub variant_auc: f64,
    pub delta_auc: f64,
    pub baseline_precision: f64,
    pub variant_precision: f64,
    pub delta_precision: f64,
}

/// Sign test over per-sequence AUC deltas; ties are dropped from `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    /// Two-sided binomial p-value under p = 1/2.
    pub p_value: f64,
}

impl SignTest {
    pub fn from_deltas(deltas: &[f64]) -> SignTest {
        let positive = deltas.iter().filter(|&&d| d > 0.0).count();
        let negative = deltas.iter().filter(|&&d| d < 0.0).count();
        let ties = deltas.len() - positive - negative;
        let n = positive + negative;
        let k = positive.min(negative);
        // P(X <= k) for X ~ Bin(n, 1/2), doubled.
        let mut coeff = 1.0f64;
        let mut tail = 0.0;
        for i in 0..=k {
            if i > 0 {
                coeff *= (n - i + 1) as f64 / i as f64;
            }
            tail += coeff;
        }
        let p_value = if n == 0 { 1.0 } else { (2.0 * tail / 2f64.powi(n as i32)).min(1.0) };
        SignTest {
            positive,
            negative,
            ties,
            p_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub mean_delta_auc: f64,
    pub mean_delta_precision: f64,
    pub sign_test: SignTest,
    /// Rows = variants, columns = Success (AUC) and Precision.
    pub table: String,
}

pub fn compare(baseline: &[EvalResult], variant: &[EvalResult]) -> Result<CompareReport> {
    if baseline.len() != variant.len() || baseline.is_empty() {
        return Err(out_of_range(format!(
            "mismatched result sets: {} baseline vs {} variant",
            baseline.len(),
            variant.len()
        )));
    }
    let rows = baseline
        .iter()
        .zip(variant)
        .map(|(b, v)| {
            if b.sequence != v.sequence {
                return Err(out_of_range(format!(
                    "mismatched result sets: {:?} paired with {:?}",
                    b.sequence, v.sequence
                )));
            }
            Ok(CompareRow {
                sequence: b.sequence.clone(),
                baseline_auc: b.auc,
                variant_auc: v.auc,
                delta_auc: v.auc - b.auc,
                baseline_precision: b.precision_20,
                variant_precision: v.precision_20,
                delta_precision: v.precision_20 - b.precision_20,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = rows.iter().map(|r| r.delta_auc).collect();
    let mean_of = |f: fn(&CompareRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let table = render_table(&[
        ("baseline", mean_of(|r| r.baseline_auc), mean_of(|r| r.baseline_precision)),
        ("variant", mean_of(|r| r.variant_auc), mean_of(|r| r.variant_precision)),
    ]);
    Ok(CompareReport {
        mean_delta_auc: mean_of(|r| r.delta_auc),
        mean_delta_precision: mean_of(|r| r.delta_precision),
        sign_test: SignTest::from_deltas(&deltas),
        rows,
        table,
    })
}

/// Plain-text table, scores in percent.
pub fn render_table(rows: &[(&str, f64, f64)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("Tracker".len());
    let mut out = format!("{:<width$}  {:>14}  {:>9}\n", "Tracker", "Success (AUC)", "Precision");
    for (name, auc, prec) in rows {
        let _ = writeln!(out, "{:<width$}  {:>14.4}  {:>9.4}", name, auc * 100.0, prec * 100.0);
    }
    out
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file}.tmp"));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// `result.json` document: the effective config echoed next to the scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub config: TrackerConfig,
    #[serde(flatten)]
    pub result: EvalResult,
}

pub fn result_json(result: &EvalResult, config: &TrackerConfig) -> Result<String> {
    let doc = ResultFile {
        config: config.clone(),
        result: result.clone(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Json {
        path: PathBuf::from("result.json"),
        source: e,
    })
}

pub fn read_result(path: &Path) -> Result<ResultFile> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `iou_threshold,success,px_threshold,precision`; the precision columns are
/// empty past the 51-point pixel grid.
pub fn curves_csv(result: &EvalResult) -> String {
    let mut out = String::from("iou_threshold,success,px_threshold,precision\n");
    for (i, s) in result.success.iter().enumerate() {
        let t = i as f64 / SUCCESS_STEPS as f64;
        match result.precision.get(i) {
            Some(p) => {
                let _ = writeln!(out, "{t},{s},{i},{p}");
            }
            None => {
                let _ = writeln!(out, "{t},{s},,");
            }
        }
    }
    out
}

/// Writes `result.json` and `curves.csv` into `dir`.
pub fn write_eval(dir: &Path, result: &EvalResult, config: &TrackerConfig) -> Result<()> {
    write_atomic(&dir.join("result.json"), result_json(result, config)?.as_bytes())?;
    write_atomic(&dir.join("curves.csv"), curves_csv(result).as_bytes())
}
