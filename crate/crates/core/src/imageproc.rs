//! Grayscale images, binary PGM I/O, cropping and rotate/scale warps.

use std::fmt::Write as _;

use crate::error::{out_of_range, Error, Result};
use crate::geometry::{Angle, Point2};
use crate::grid::Grid;

/// Luminance image with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    grid: Grid,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Image> {
        let grid = Grid::new(width, height, pixels)?;
        Image::from_grid(grid)
    }

    pub fn from_grid(grid: Grid) -> Result<Image> {
        if let Some(v) = grid
            .data()
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 255.0)
        {
            return Err(Error::InvalidImage(format!(
                "pixel value {v} outside [0, 255]"
            )));
        }
        Ok(Image { grid })
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y)
    }

    pub fn pixels(&self) -> &[f64] {
        self.grid.data()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mean(&self) -> f64 {
        self.grid.mean()
    }

    /// Bilinear sample at a continuous pixel position; `None` outside the
    /// pixel-center hull `[0, w-1] x [0, h-1]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        bilinear(&self.grid, x, y)
    }
}

// Sample positions within this distance of the border snap onto it, so
// right-angle warps that land on the edge in exact arithmetic stay inside.
const EDGE_SNAP: f64 = 1e-9;

fn bilinear(g: &Grid, x: f64, y: f64) -> Option<f64> {
    let xmax = (g.width() - 1) as f64;
    let ymax = (g.height() - 1) as f64;
    if !(x > -EDGE_SNAP && x < xmax + EDGE_SNAP && y > -EDGE_SNAP && y < ymax + EDGE_SNAP) {
        return None;
    }
    let x = x.clamp(0.0, xmax);
    let y = y.clamp(0.0, ymax);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(g.width() - 1);
    let y1 = (y0 + 1).min(g.height() - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = g.get(x0, y0) + fx * (g.get(x1, y0) - g.get(x0, y0));
    let bottom = g.get(x0, y1) + fx * (g.get(x1, y1) - g.get(x0, y1));
    Some(top + fy * (bottom - top))
}

/// Where a patch came from in its source image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchOrigin {
    pub center: Point2,
    /// Side length covered in source pixels.
    pub source_size: f64,
    pub rotation: Angle,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: Grid,
    pub origin: PatchOrigin,
}

impl Patch {
    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn mean(&self) -> f64 {
        self.pixels.mean()
    }
}

/// Decodes a binary (P5) PGM with maxval 255.
pub fn read_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)
        .ok_or_else(|| Error::MalformedHeader("empty input".into()))?;
    if magic != b"P5" {
        return Err(Error::UnsupportedFormat(
            String::from_utf8_lossy(magic).into_owned(),
        ));
    }
    let mut field = |name: &str| -> Result<u32> {
        let tok = next_token(bytes, &mut pos)
            .ok_or_else(|| Error::MalformedHeader(format!("missing {name}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "bad {name} {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    };
    let width = field("width")? as usize;
    let height = field("height")? as usize;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedHeader("no separator after maxval".into())),
    }
    let expected = width * height;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let pixels = payload[..expected].iter().map(|&b| f64::from(b)).collect();
    Image::new(width, height, pixels)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Encodes as binary PGM; values are rounded to the nearest integer level.
pub fn write_pgm(img: &Image) -> Vec<u8> {
    let mut header = String::new();
    let _ = write!(header, "P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = header.into_bytes();
    out.extend(img.pixels().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    out
}

/// Square crop of `size` pixels around `center`, aligned to the nearest
/// pixel. Samples outside the image take `pad_value`.
pub fn extract_patch(img: &Image, center: Point2, size: usize, pad_value: f64) -> Result<Patch> {
    if size == 0 {
        return Err(out_of_range("patch size must be positive"));
    }
    if !center.is_finite() {
        return Err(Error::NonFinite("patch center"));
    }
    let x0 = center.x.round() as i64 - (size / 2) as i64;
    let y0 = center.y.round() as i64 - (size / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let pixels = Grid::from_fn(size, size, |i, j| {
        let sx = x0 + i as i64;
        let sy = y0 + j as i64;
        if sx >= 0 && sy >= 0 && sx < w && sy < h {
            img.get(sx as usize, sy as usize)
        } else {
            pad_value
        }
    });
    Ok(Patch {
        pixels,
        origin: PatchOrigin {
            center,
            source_size: size as f64,
            rotation: Angle::ZERO,
            scale: 1.0,
        },
    })
}

/// Rotates by `angle` and then scales by `scale`, both about the patch
/// center, keeping the patch dimensions. Output pixels are bilinear samples
/// at the inverse-mapped location; samples falling outside take the patch
/// mean.
pub fn warp_rotate_scale(patch: &Patch, angle: Angle, scale: f64) -> Result<Patch> {
    if !(0.1..=10.0).contains(&scale) {
        return Err(out_of_range(format!("warp scale {scale} outside [0.1, 10]")));
    }
    let src = &patch.pixels;
    let fill = src.mean();
    let cx = (src.width() as f64 - 1.0) / 2.0;
    let cy = (src.height() as f64 - 1.0) / 2.0;
    let (s, c) = angle.sin_cos();
    let pixels = Grid::from_fn(src.width(), src.height(), |i, j| {
        let u = (i as f64 - cx) / scale;
        let v = (j as f64 - cy) / scale;
        // inverse rotation
        let x = cx + c * u + s * v;
        let y = cy - s * u + c * v;
        bilinear(src, x, y).unwrap_or(fill)
    });
    Ok(Patch {
        pixels,
        origin: PatchOrigin {
            rotation: patch.origin.rotation.offset(angle.degrees()),
            scale: patch.origin.scale * scale,
            ..patch.origin
        },
    })
}

/// Resampled square crop: `out_size` pixels spanning `side` source pixels,
/// rotated by `angle` about `center`. Samples outside the image take `pad`.
///
/// Cropping a target drawn at orientation `angle` with the same `angle`
/// yields the target in its upright frame.
pub fn crop_resample(
    img: &Image,
    center: Point2,
    side: f64,
    out_size: usize,
    angle: Angle,
    pad: f64,
) -> Result<Patch> {
    if out_size == 0 || !(side.is_finite() && side > 0.0) {
        return Err(out_of_range(format!(
            "crop of side {side} into {out_size} pixels"
        )));
    }
    if !center.is_finite() {
        return Err(Error::NonFinite("crop center"));
    }
    let step = side / out_size as f64;
    let c = (out_size as f64 - 1.0) / 2.0;
    let (sn, cs) = angle.sin_cos();
    let pixels = Grid::from_fn(out_size, out_size, |i, j| {
        let u = (i as f64 - c) * step;
        let v = (j as f64 - c) * step;
        let x = center.x + cs * u - sn * v;
        let y = center.y + sn * u + cs * v;
        img.sample(x, y).unwrap_or(pad)
    });
    Ok(Patch {
        pixels,
        origin: PatchOrigin {
            center,
            source_size: side,
            rotation: angle,
            scale: out_size as f64 / side,
        },
    })
}

fn hann(k: usize, n: usize) -> f64 {
    if n == 1 {
        1.0
    } else {
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos())
    }
}

/// Separable Hann window.
pub fn cosine_window(width: usize, height: usize) -> Result<Grid> {
    if width == 0 || height == 0 {
        return Err(out_of_range("window dimensions must be at least 1"));
    }
    let wx: Vec<f64> = (0..width).map(|k| hann(k, width)).collect();
    let wy: Vec<f64> = (0..height).map(|k| hann(k, height)).collect();
    Ok(Grid::from_fn(width, height, |x, y| wx[x] * wy[y]))
}
