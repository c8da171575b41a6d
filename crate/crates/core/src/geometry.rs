//! Points, angles, oriented boxes and the overlap/error metrics built on them.
//!
//! Coordinates follow the image grid: `x` grows to the right, `y` grows
//! downward. Angles are in degrees and rotate with the ordinary
//! counter-clockwise matrix applied to that grid, so a heading of +90°
//! points down the image.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Rotates `self` about `pivot` by `angle`.
    pub fn rotate_about(self, pivot: Point2, angle: Angle) -> Point2 {
        let (s, c) = angle.sin_cos();
        let dx = self.x - pivot.x;
        let dy = self.y - pivot.y;
        Point2::new(pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// An angle in degrees, always held in `(-180, 180]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    pub fn from_degrees(deg: f64) -> Result<Angle> {
        wrap_angle(deg)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// `(sin, cos)`, exact at multiples of 90°.
    pub fn sin_cos(self) -> (f64, f64) {
        match self.0 {
            d if d == 0.0 => (0.0, 1.0),
            d if d == 90.0 => (1.0, 0.0),
            d if d == 180.0 => (0.0, -1.0),
            d if d == -90.0 => (-1.0, 0.0),
            d => d.to_radians().sin_cos(),
        }
    }

    /// Signed shortest rotation taking `self` onto `target`, in `(-180, 180]`.
    pub fn arc_to(self, target: Angle) -> f64 {
        wrap_degrees(target.0 - self.0)
    }

    /// Unsigned circular distance in `[0, 180]`.
    pub fn distance(self, other: Angle) -> f64 {
        self.arc_to(other).abs()
    }

    /// Adds `deg` and wraps. `deg` must be finite.
    pub(crate) fn offset(self, deg: f64) -> Angle {
        Angle(wrap_degrees(self.0 + deg))
    }
}

impl TryFrom<f64> for Angle {
    type Error = Error;

    fn try_from(deg: f64) -> Result<Self> {
        wrap_angle(deg)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

pub(crate) fn wrap_degrees(deg: f64) -> f64 {
    if deg > -180.0 && deg <= 180.0 {
        return deg;
    }
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Wraps `deg` into `(-180, 180]`; `-180` maps to `+180`.
pub fn wrap_angle(deg: f64) -> Result<Angle> {
    if !deg.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(Angle(wrap_degrees(deg)))
}

/// Oriented rectangle. The axis-aligned case is `angle == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedBBox {
    pub center: Point2,
    pub width: f64,
    pub height: f64,
    pub angle: Angle,
}

impl RotatedBBox {
    pub fn new(center: Point2, width: f64, height: f64, angle: Angle) -> Result<Self> {
        let b = RotatedBBox {
            center,
            width,
            height,
            angle,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn axis_aligned(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(Point2::new(cx, cy), width, height, Angle::ZERO)
    }

    /// Axis-aligned box from a continuous top-left corner and size.
    pub fn from_top_left(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        Self::axis_aligned(x + width / 2.0, y + height / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.is_finite() || !self.width.is_finite() || !self.height.is_finite() {
            return Err(Error::DegenerateBox("non-finite box parameters".into()));
        }
        if self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::DegenerateBox(format!(
                "size {}x{} must be positive",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Corners in the order (-w/2,-h/2), (+w/2,-h/2), (+w/2,+h/2), (-w/2,+h/2)
    /// of the box frame, which has positive shoelace area.
    pub fn corners(&self) -> [Point2; 4] {
        let hw = self.width / 2.0;
        let hh = self.height / 2.0;
        let (s, c) = self.angle.sin_cos();
        let map = |u: f64, v: f64| {
            Point2::new(
                self.center.x + c * u - s * v,
                self.center.y + s * u + c * v,
            )
        };
        [map(-hw, -hh), map(hw, -hh), map(hw, hh), map(-hw, hh)]
    }

    /// Smallest axis-aligned box containing this one.
    pub fn enclosing_axis_aligned(&self) -> RotatedBBox {
        if self.angle.degrees() == 0.0 {
            return *self;
        }
        let pts = self.corners();
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        RotatedBBox {
            center: Point2::new((x0 + x1) / 2.0, (y0 + y1) / 2.0),
            width: x1 - x0,
            height: y1 - y0,
            angle: Angle::ZERO,
        }
    }

    /// Minimal-area oriented box enclosing a quadrilateral.
    ///
    /// Among the four equivalent labelings of that rectangle, the one whose
    /// angle is closest to the direction of the first polygon edge is kept,
    /// so boxes written with [`RotatedBBox::corners`] come back unchanged.
    pub fn from_polygon(pts: &[Point2; 4]) -> Result<RotatedBBox> {
        if pts.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("polygon vertex"));
        }
        let hull = convex_hull(pts);
        if hull.len() < 3 || polygon_area(&hull) <= 0.0 {
            return Err(Error::DegenerateBox("polygon has zero area".into()));
        }
        let mut best: Option<(f64, RotatedBBox)> = None;
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            let len = a.distance(b);
            if len == 0.0 {
                continue;
            }
            let u = Point2::new((b.x - a.x) / len, (b.y - a.y) / len);
            let v = Point2::new(-u.y, u.x);
            let (mut u0, mut u1, mut v0, mut v1) = (
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
            );
            for p in &hull {
                let pu = p.x * u.x + p.y * u.y;
                let pv = p.x * v.x + p.y * v.y;
                u0 = u0.min(pu);
                u1 = u1.max(pu);
                v0 = v0.min(pv);
                v1 = v1.max(pv);
            }
            let area = (u1 - u0) * (v1 - v0);
            if best.as_ref().is_none_or(|(a, _)| area < *a) {
                let cu = (u0 + u1) / 2.0;
                let cv = (v0 + v1) / 2.0;
                let rect = RotatedBBox {
                    center: Point2::new(cu * u.x + cv * v.x, cu * u.y + cv * v.y),
                    width: u1 - u0,
                    height: v1 - v0,
                    angle: wrap_angle(u.y.atan2(u.x).to_degrees())?,
                };
                best = Some((area, rect));
            }
        }
        let (_, rect) = best.ok_or_else(|| Error::DegenerateBox("polygon has zero area".into()))?;

        let hint = wrap_angle((pts[1].y - pts[0].y).atan2(pts[1].x - pts[0].x).to_degrees())?;
        let labelings = [
            (0.0, rect.width, rect.height),
            (90.0, rect.height, rect.width),
            (180.0, rect.width, rect.height),
            (-90.0, rect.height, rect.width),
        ];
        let (turn, w, h) = labelings
            .into_iter()
            .min_by(|x, y| {
                let dx = rect.angle.offset(x.0).distance(hint);
                let dy = rect.angle.offset(y.0).distance(hint);
                dx.total_cmp(&dy)
            })
            .expect("four labelings");
        RotatedBBox::new(rect.center, w, h, rect.angle.offset(turn))
    }

    fn key(&self) -> [f64; 5] {
        [
            self.center.x,
            self.center.y,
            self.width,
            self.height,
            self.angle.degrees(),
        ]
    }
}

/// Intersection-over-union of two axis-aligned boxes.
pub fn iou_axis_aligned(a: &RotatedBBox, b: &RotatedBBox) -> Result<f64> {
    if a.angle.degrees() != 0.0 || b.angle.degrees() != 0.0 {
        return Err(Error::RotatedBoxInAxisAlignedIou);
    }
    a.validate()?;
    b.validate()?;
    let ix = overlap_1d(a.center.x, a.width, b.center.x, b.width);
    let iy = overlap_1d(a.center.y, a.height, b.center.y, b.height);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

fn overlap_1d(ca: f64, la: f64, cb: f64, lb: f64) -> f64 {
    let lo = (ca - la / 2.0).max(cb - lb / 2.0);
    let hi = (ca + la / 2.0).min(cb + lb / 2.0);
    (hi - lo).max(0.0)
}

/// Intersection-over-union of two oriented boxes via convex polygon clipping.
pub fn iou_rotated(a: &RotatedBBox, b: &RotatedBBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    // Evaluate in a fixed argument order so the result is exactly symmetric.
    let (a, b) = match cmp_keys(&a.key(), &b.key()) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let inter = intersection_area(&a.corners(), &b.corners());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return Err(Error::DegenerateBox("zero union area".into()));
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

fn cmp_keys(a: &[f64; 5], b: &[f64; 5]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Euclidean distance between box centers.
pub fn center_error(a: &RotatedBBox, b: &RotatedBBox) -> f64 {
    a.center.distance(b.center)
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Signed shoelace area (positive for the corner order used by boxes).
pub(crate) fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    s / 2.0
}

/// Sutherland–Hodgman clip of one convex polygon against another; both
/// must have positive orientation.
fn intersection_area(subject: &[Point2], clip: &[Point2]) -> f64 {
    let mut output: Vec<Point2> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    if output.len() < 3 {
        0.0
    } else {
        polygon_area(&output).max(0.0)
    }
}

fn segment_line_intersection(p: Point2, q: Point2, a: Point2, b: Point2) -> Point2 {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    Point2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Andrew's monotone chain; returns the hull with positive orientation.
fn convex_hull(pts: &[Point2]) -> Vec<Point2> {
    let mut p: Vec<Point2> = pts.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<Point2> = Vec::new();
    for &pt in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], pt) <= 0.0 {
            lower.pop();
        }
        lower.push(pt);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &pt in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], pt) <= 0.0 {
            upper.pop();
        }
        upper.push(pt);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
