//! Similarity backend: normalized grayscale features, FFT cross-correlation,
//! a ridge-regression correlation filter and rolling-average model updates.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{out_of_range, Error, Result};
use crate::geometry::Point2;
use crate::grid::Grid;
use crate::imageproc::{cosine_window, Patch};

/// Multi-channel real feature grid, stored channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::DimensionMismatch(format!(
                "feature map {width}x{height}x{channels} must have positive dimensions"
            )));
        }
        if values.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "feature map {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature value"));
        }
        Ok(FeatureMap {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn from_grid(grid: Grid) -> Result<Self> {
        let (w, h) = grid.dims();
        FeatureMap::new(w, h, 1, grid.into_data())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.values[c * n..(c + 1) * n]
    }
}

/// Correlation peak: location is `(column, row)` in the score grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub location: Point2,
    pub value: f64,
}

/// Score grid tagged with the scale and rotation bins it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    scores: Grid,
    scale_index: usize,
    rotation_index: usize,
    peak: Peak,
}

impl ResponseMap {
    pub fn new(scores: Grid, scale_index: usize, rotation_index: usize) -> ResponseMap {
        let (x, y, value) = scores.argmax();
        ResponseMap {
            scores,
            scale_index,
            rotation_index,
            peak: Peak {
                location: Point2::new(x as f64, y as f64),
                value,
            },
        }
    }

    pub fn scores(&self) -> &Grid {
        &self.scores
    }

    pub fn peak(&self) -> Peak {
        self.peak
    }

    pub fn scale_index(&self) -> usize {
        self.scale_index
    }

    pub fn rotation_index(&self) -> usize {
        self.rotation_index
    }

    pub fn with_indices(mut self, scale_index: usize, rotation_index: usize) -> ResponseMap {
        self.scale_index = scale_index;
        self.rotation_index = rotation_index;
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.scores.dims()
    }
}

/// Peak location refined per axis by a parabola through the peak and its two
/// neighbours. Falls back to the integer coordinate at the border or where the
/// neighbourhood is not strictly concave; offsets are clamped to ±0.5.
pub fn subpixel_peak(map: &ResponseMap) -> Point2 {
    let g = map.scores();
    let p = map.peak().location;
    let (x, y) = (p.x as usize, p.y as usize);
    let c = map.peak().value;
    let refine = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
        (Some(l), Some(r)) => {
            let curv = l - 2.0 * c + r;
            if curv < 0.0 {
                (0.5 * (l - r) / curv).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    let dx = refine(
        x.checked_sub(1).map(|xl| g.get(xl, y)),
        (x + 1 < g.width()).then(|| g.get(x + 1, y)),
    );
    let dy = refine(
        y.checked_sub(1).map(|yl| g.get(x, yl)),
        (y + 1 < g.height()).then(|| g.get(x, y + 1)),
    );
    Point2::new(p.x + dx, p.y + dy)
}

/// Frequency-domain correlation filter. The response to a search map `x`
/// is `scale * ifft(W · X) + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    width: usize,
    height: usize,
    channels: usize,
    spectrum: Vec<Complex64>,
    pub lambda: f64,
    pub scale: f64,
    pub bias: f64,
}

impl Filter {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place 2D FFT of a row-major `width x height` buffer. The inverse is
/// unnormalized.
fn fft2(buf: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            (p.plan_fft_inverse(width), p.plan_fft_inverse(height))
        } else {
            (p.plan_fft_forward(width), p.plan_fft_forward(height))
        }
    });
    row_fft.process(buf);
    let mut column = vec![Complex64::default(); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = buf[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            buf[y * width + x] = column[y];
        }
    }
}

/// Forward 2D FFT of `data` (of size `dw x dh`) zero-padded to `width x height`.
fn spectrum_of(data: &[f64], dw: usize, dh: usize, width: usize, height: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::default(); width * height];
    for y in 0..dh {
        for x in 0..dw {
            buf[y * width + x] = Complex64::new(data[y * dw + x], 0.0);
        }
    }
    fft2(&mut buf, width, height, false);
    buf
}

fn inverse_real(mut spec: Vec<Complex64>, width: usize, height: usize) -> Vec<f64> {
    fft2(&mut spec, width, height, true);
    let norm = 1.0 / (width * height) as f64;
    spec.into_iter().map(|c| c.re * norm).collect()
}

const STD_EPS: f64 = 1e-6;

/// Zero-mean, unit-variance grayscale feature (one channel), optionally
/// tapered by a Hann window.
pub fn feature_transform(patch: &Patch, windowed: bool) -> Result<FeatureMap> {
    let px = patch.pixels.data();
    let n = px.len() as f64;
    let mean = px.iter().sum::<f64>() / n;
    let var = px.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + STD_EPS;
    let mut values: Vec<f64> = px.iter().map(|v| (v - mean) / denom).collect();
    if windowed {
        let win = cosine_window(patch.width(), patch.height())?;
        for (v, w) in values.iter_mut().zip(win.data()) {
            *v *= w;
        }
    }
    FeatureMap::new(patch.width(), patch.height(), 1, values)
}

/// Cross-correlation of `template` over every position where it fits inside
/// `search`, computed circularly in the frequency domain and summed over
/// channels. Score `(u, v)` is `sum t(x, y) * s(x + u, y + v)`.
pub fn xcorr_fft(template: &FeatureMap, search: &FeatureMap) -> Result<ResponseMap> {
    if template.channels != search.channels {
        return Err(Error::DimensionMismatch(format!(
            "template has {} channels, search has {}",
            template.channels, search.channels
        )));
    }
    if template.width > search.width || template.height > search.height {
        return Err(Error::DimensionMismatch(format!(
            "template {}x{} larger than search {}x{}",
            template.width, template.height, search.width, search.height
        )));
    }
    let (w, h) = (search.width, search.height);
    let mut acc = vec![Complex64::default(); w * h];
    for c in 0..search.channels {
        let t = spectrum_of(template.channel(c), template.width, template.height, w, h);
        let s = spectrum_of(search.channel(c), w, h, w, h);
        for ((a, tv), sv) in acc.iter_mut().zip(&t).zip(&s) {
            *a += tv.conj() * sv;
        }
    }
    let full = inverse_real(acc, w, h);
    let vw = w - template.width + 1;
    let vh = h - template.height + 1;
    let scores = Grid::from_fn(vw, vh, |u, v| full[v * w + u]);
    Ok(ResponseMap::new(scores, 0, 0))
}

/// Desired filter output: a unit-peak Gaussian centered at index `size / 2`.
pub fn gaussian_label(size: usize, sigma: f64) -> Result<Grid> {
    if size == 0 {
        return Err(out_of_range("label size must be at least 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(out_of_range(format!("label sigma {sigma} must be positive")));
    }
    let c = (size / 2) as f64;
    let k = 1.0 / (2.0 * sigma * sigma);
    Ok(Grid::from_fn(size, size, |i, j| {
        let dx = i as f64 - c;
        let dy = j as f64 - c;
        (-(dx * dx + dy * dy) * k).exp()
    }))
}

/// Ridge regression in the Fourier domain:
/// `W = conj(Z) · Y / (sum_c |Z_c|² + λ)` per frequency bin.
pub fn train_filter(exemplar: &FeatureMap, label: &Grid, lambda: f64) -> Result<Filter> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(out_of_range(format!("lambda {lambda} must be >= 0")));
    }
    let (w, h) = (exemplar.width, exemplar.height);
    if label.dims() != (w, h) {
        return Err(Error::DimensionMismatch(format!(
            "label {:?} vs exemplar {w}x{h}",
            label.dims()
        )));
    }
    let y = spectrum_of(label.data(), w, h, w, h);
    let z: Vec<Vec<Complex64>> = (0..exemplar.channels)
        .map(|c| spectrum_of(exemplar.channel(c), w, h, w, h))
        .collect();
    let mut spectrum = vec![Complex64::default(); w * h * exemplar.channels];
    for k in 0..w * h {
        let energy: f64 = z.iter().map(|zc| zc[k].norm_sqr()).sum::<f64>() + lambda;
        if energy == 0.0 {
            continue;
        }
        for (c, zc) in z.iter().enumerate() {
            spectrum[c * w * h + k] = zc[k].conj() * y[k] / energy;
        }
    }
    Ok(Filter {
        width: w,
        height: h,
        channels: exemplar.channels,
        spectrum,
        lambda,
        scale: 1.0,
        bias: 0.0,
    })
}

/// Circular response of `filter` to `search`; dimensions must match.
pub fn filter_respond(filter: &Filter, search: &FeatureMap) -> Result<ResponseMap> {
    if (search.width, search.height, search.channels) != (filter.width, filter.height, filter.channels) {
        return Err(Error::DimensionMismatch(format!(
            "search {}x{}x{} vs filter {}x{}x{}",
            search.width, search.height, search.channels, filter.width, filter.height, filter.channels
        )));
    }
    let (w, h) = (filter.width, filter.height);
    let mut acc = vec![Complex64::default(); w * h];
    for c in 0..filter.channels {
        let x = spectrum_of(search.channel(c), w, h, w, h);
        let wc = &filter.spectrum[c * w * h..(c + 1) * w * h];
        for ((a, wv), xv) in acc.iter_mut().zip(wc).zip(&x) {
            *a += wv * xv;
        }
    }
    let raw = inverse_real(acc, w, h);
    let scores = Grid::new(
        w,
        h,
        raw.into_iter().map(|v| filter.scale * v + filter.bias).collect(),
    )?;
    Ok(ResponseMap::new(scores, 0, 0))
}

/// Values that can be rolled forward with `(1 - rate) * old + rate * new`.
pub trait Blend: Sized {
    fn blend(&self, new: &Self, rate: f64) -> Result<Self>;
}

fn blend_slices(old: &[f64], new: &[f64], rate: f64) -> Vec<f64> {
    old.iter()
        .zip(new)
        .map(|(o, n)| (1.0 - rate) * o + rate * n)
        .collect()
}

impl Blend for Grid {
    fn blend(&self, new: &Self, rate: f64) -> Result<Self> {
        if self.dims() != new.dims() {
            return Err(Error::DimensionMismatch(format!(
                "grid {:?} vs {:?}",
                self.dims(),
                new.dims()
            )));
        }
        Grid::new(self.width(), self.height(), blend_slices(self.data(), new.data(), rate))
    }
}

impl Blend for FeatureMap {
    fn blend(&self, new: &Self, rate: f64) -> Result<Self> {
        if (self.width, self.height, self.channels) != (new.width, new.height, new.channels) {
            return Err(Error::DimensionMismatch("feature maps differ in shape".into()));
        }
        FeatureMap::new(
            self.width,
            self.height,
            self.channels,
            blend_slices(&self.values, &new.values, rate),
        )
    }
}

impl Blend for Filter {
    fn blend(&self, new: &Self, rate: f64) -> Result<Self> {
        if (self.width, self.height, self.channels) != (new.width, new.height, new.channels) {
            return Err(Error::DimensionMismatch("filters differ in shape".into()));
        }
        let spectrum = self
            .spectrum
            .iter()
            .zip(&new.spectrum)
            .map(|(o, n)| o * (1.0 - rate) + n * rate)
            .collect();
        Ok(Filter {
            spectrum,
            ..new.clone()
        })
    }
}

impl Blend for Patch {
    fn blend(&self, new: &Self, rate: f64) -> Result<Self> {
        Ok(Patch {
            pixels: self.pixels.blend(&new.pixels, rate)?,
            origin: new.origin,
        })
    }
}

/// Rolling-average model update.
pub fn update_model<T: Blend>(old: &T, new: &T, rate: f64) -> Result<T> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(out_of_range(format!("update rate {rate} outside [0, 1]")));
    }
    old.blend(new, rate)
}
