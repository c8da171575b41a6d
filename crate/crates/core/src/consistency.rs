//! Motion consistency: smoothing the inter-frame displacement of the target
//! centroid (direction and distance separately) and fusing the response maps
//! of a scale pyramid with Gaussian weights centred on the winning scale.

use serde::{Deserialize, Serialize};

use crate::correlation::ResponseMap;
use crate::error::{out_of_range, Error, Result};
use crate::geometry::{Angle, Point2};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyParams {
    /// Weight on the previous centroid in the conventional damping step.
    pub w: f64,
    /// Weight on the previous heading.
    pub w_theta: f64,
    /// Weight on the previous step length.
    pub w_d: f64,
    pub sigma_scale: f64,
    pub scale_step: f64,
    pub num_scales: usize,
    /// Size learning rate γ.
    pub scale_damping: f64,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        ConsistencyParams {
            w: 0.0,
            w_theta: 0.01,
            w_d: 0.01,
            sigma_scale: 1.0,
            scale_step: 1.0375,
            num_scales: 3,
            scale_damping: 0.59,
        }
    }
}

impl ConsistencyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w", self.w),
            ("w_theta", self.w_theta),
            ("w_d", self.w_d),
            ("scale_damping", self.scale_damping),
        ] {
            check_unit(name, v)?;
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return Err(out_of_range(format!("sigma_scale {} must be > 0", self.sigma_scale)));
        }
        if !(self.scale_step > 1.0 && self.scale_step.is_finite()) {
            return Err(out_of_range(format!("scale_step {} must be > 1", self.scale_step)));
        }
        if self.num_scales == 0 {
            return Err(out_of_range("num_scales must be >= 1"));
        }
        Ok(())
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(out_of_range(format!("{name} = {v} outside [0, 1]")))
    }
}

/// Remembered motion between frames: last centroid, step length and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub prev_centroid: Point2,
    pub prev_distance: f64,
    pub prev_angle: Angle,
    /// False until a first displacement has been observed.
    pub initialized: bool,
}

impl MotionState {
    pub fn new(start: Point2) -> MotionState {
        MotionState {
            prev_centroid: start,
            prev_distance: 0.0,
            prev_angle: Angle::ZERO,
            initialized: false,
        }
    }
}

/// `w * prev + (1 - w) * predicted`.
pub fn conventional_update(prev: Point2, predicted: Point2, w: f64) -> Result<Point2> {
    check_unit("w", w)?;
    Ok(Point2::new(
        w * prev.x + (1.0 - w) * predicted.x,
        w * prev.y + (1.0 - w) * predicted.y,
    ))
}

/// Blends the previous heading into the new one along the shorter arc.
/// Matches `w_θ·θ₀ + (1 − w_θ)·θ₁` whenever the two headings are less than
/// 180° apart.
pub fn angle_consistency(prev: Angle, current: Angle, w_theta: f64) -> Angle {
    debug_assert!((0.0..=1.0).contains(&w_theta));
    current.offset(w_theta * current.arc_to(prev))
}

/// `w_d * d0 + (1 - w_d) * d1`.
pub fn distance_consistency(prev: f64, current: f64, w_d: f64) -> Result<f64> {
    if !(prev >= 0.0 && current >= 0.0) {
        return Err(out_of_range(format!(
            "distances must be >= 0 (got {prev}, {current})"
        )));
    }
    check_unit("w_d", w_d)?;
    Ok(w_d * prev + (1.0 - w_d) * current)
}

/// `anchor + distance ∠ heading`.
pub fn apply_displacement(anchor: Point2, distance: f64, heading: Angle) -> Point2 {
    let (s, c) = heading.sin_cos();
    Point2::new(anchor.x + distance * c, anchor.y + distance * s)
}

/// Corrects a predicted centroid so that its step from the previous centroid
/// keeps a consistent heading and length.
///
/// The prediction is first damped toward the previous centroid with `w`,
/// then heading and step length are blended with the remembered ones. A zero
/// step keeps the remembered heading and only decays the remembered length.
pub fn displacement_consistency(
    state: &MotionState,
    predicted: Point2,
    params: &ConsistencyParams,
) -> Result<(Point2, MotionState)> {
    let prev = state.prev_centroid;
    if !state.initialized {
        let d = prev.distance(predicted);
        let heading = if d > 0.0 {
            Angle::from_degrees((predicted.y - prev.y).atan2(predicted.x - prev.x).to_degrees())?
        } else {
            state.prev_angle
        };
        let next = MotionState {
            prev_centroid: predicted,
            prev_distance: d,
            prev_angle: heading,
            initialized: true,
        };
        return Ok((predicted, next));
    }

    let damped = conventional_update(prev, predicted, params.w)?;
    let step = damped.distance(prev);
    if step == 0.0 {
        let next = MotionState {
            prev_distance: distance_consistency(state.prev_distance, 0.0, params.w_d)?,
            ..*state
        };
        return Ok((prev, next));
    }

    let heading = Angle::from_degrees((damped.y - prev.y).atan2(damped.x - prev.x).to_degrees())?;
    let new_heading = angle_consistency(state.prev_angle, heading, params.w_theta);
    let new_step = distance_consistency(state.prev_distance, step, params.w_d)?;
    let corrected = if new_heading == heading && new_step == step {
        damped
    } else {
        apply_displacement(prev, new_step, new_heading)
    };
    let next = MotionState {
        prev_centroid: corrected,
        prev_distance: new_step,
        prev_angle: new_heading,
        initialized: true,
    };
    Ok((corrected, next))
}

/// Gaussian weights over bins `1..=n` centred at bin `mu` (1-based), using
/// `exp(-((bin - mu) / sigma)^2) / (sqrt(2π) sigma)` and normalised to sum 1.
///
/// The exponent has no ½ factor, so `sigma` here is √2 times a conventional
/// Gaussian standard deviation.
pub fn gaussian_scale_weights(n: usize, mu: usize, sigma: f64) -> Result<Vec<f64>> {
    if n == 0 || mu == 0 || mu > n {
        return Err(out_of_range(format!("centre bin {mu} outside 1..={n}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(out_of_range(format!("sigma {sigma} must be > 0")));
    }
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    let raw: Vec<f64> = (1..=n)
        .map(|bin| {
            let z = (bin as f64 - mu as f64) / sigma;
            norm * (-(z * z)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Weighted sum of same-sized response maps. The result keeps the scale and
/// rotation tags of the heaviest-weighted input.
pub fn fuse_response_maps(maps: &[ResponseMap], weights: &[f64]) -> Result<ResponseMap> {
    let first = maps
        .first()
        .ok_or_else(|| out_of_range("cannot fuse an empty set of response maps"))?;
    if maps.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} maps but {} weights",
            maps.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(out_of_range(format!("weights sum to {total}, expected 1")));
    }
    let dims = first.dims();
    if let Some(m) = maps.iter().find(|m| m.dims() != dims) {
        return Err(Error::DimensionMismatch(format!(
            "response map {:?} vs {:?}",
            m.dims(),
            dims
        )));
    }
    let mut acc = vec![0.0; dims.0 * dims.1];
    for (m, &w) in maps.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(m.scores().data()) {
            *a += v * w;
        }
    }
    let heaviest = weights
        .iter()
        .enumerate()
        .fold(0, |best, (i, &w)| if w > weights[best] { i } else { best });
    let tag = &maps[heaviest];
    Ok(ResponseMap::new(
        Grid::new(dims.0, dims.1, acc)?,
        tag.scale_index(),
        tag.rotation_index(),
    ))
}

/// Index (0-based) of the map with the highest peak; first wins ties.
pub(crate) fn winning_map(maps: &[ResponseMap]) -> usize {
    maps.iter().enumerate().fold(0, |best, (i, m)| {
        if m.peak().value > maps[best].peak().value {
            i
        } else {
            best
        }
    })
}

/// Outcome of fusing one scale pyramid.
#[derive(Debug, Clone)]
pub struct ScaleDecision {
    pub fused: ResponseMap,
    /// 0-based index of the winning scale.
    pub winner: usize,
    /// Size multiplier of the winning scale relative to the current size.
    pub scale_factor: f64,
    pub new_size: f64,
}

/// Fuses a scale pyramid (maps ordered from the smallest scale bin upward)
/// around its winning map and moves the target size a damped step toward
/// the winning scale.
pub fn scale_consistency(
    maps: &[ResponseMap],
    params: &ConsistencyParams,
    current_size: f64,
) -> Result<ScaleDecision> {
    if maps.is_empty() {
        return Err(out_of_range("empty scale pyramid"));
    }
    let n = maps.len();
    let winner = winning_map(maps);
    let weights = gaussian_scale_weights(n, winner + 1, params.sigma_scale)?;
    let fused = fuse_response_maps(maps, &weights)?;
    let scale_factor = scale_factor(params.scale_step, n, winner);
    let new_size = if scale_factor == 1.0 {
        current_size
    } else {
        let g = params.scale_damping;
        (1.0 - g) * current_size + g * current_size * scale_factor
    };
    Ok(ScaleDecision {
        fused,
        winner,
        scale_factor,
        new_size,
    })
}

/// `step^(index - centre)` for a pyramid of `n` scales, `index` 0-based.
pub fn scale_factor(step: f64, n: usize, index: usize) -> f64 {
    let offset = index as f64 - (n as f64 - 1.0) / 2.0;
    if offset == 0.0 {
        1.0
    } else {
        step.powf(offset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn deg(d: f64) -> Angle {
        Angle::from_degrees(d).unwrap()
    }

    fn map(values: &[f64]) -> ResponseMap {
        ResponseMap::new(Grid::new(values.len(), 1, values.to_vec()).unwrap(), 0, 0)
    }

    #[test]
    fn conventional_examples() {
        let p = Point2::new(0.0, 0.0);
        let q = Point2::new(10.0, 10.0);
        assert_eq!(conventional_update(p, q, 0.0).unwrap(), q);
        assert_eq!(conventional_update(p, q, 1.0).unwrap(), p);
        assert_eq!(conventional_update(p, q, 0.5).unwrap(), Point2::new(5.0, 5.0));
        assert!(conventional_update(p, q, 1.2).is_err());
    }

    #[test]
    fn angle_examples() {
        assert_eq!(angle_consistency(deg(30.0), deg(30.0), 0.01), deg(30.0));
        let a = angle_consistency(deg(0.0), deg(100.0), 0.01);
        assert!((a.degrees() - 99.0).abs() < 1e-12);

        // Unit-vector oracle: rotate θ₁ toward θ₀ by w of the arc between them.
        let (t0, t1, w) = (179.0f64, -179.0f64, 0.01);
        let arc = (t0.to_radians().sin() * t1.to_radians().cos()
            - t0.to_radians().cos() * t1.to_radians().sin())
        .atan2(t0.to_radians().cos() * t1.to_radians().cos() + t0.to_radians().sin() * t1.to_radians().sin());
        let oracle = (t1.to_radians() + w * arc).to_degrees();
        let got = angle_consistency(deg(t0), deg(t1), w);
        assert!((got.degrees() - oracle).abs() < 1e-9);
        assert!((got.degrees() - -179.02).abs() < 1e-9);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_consistency(10.0, 10.0, 0.01).unwrap(), 10.0);
        assert!((distance_consistency(0.0, 5.0, 0.01).unwrap() - 4.95).abs() < 1e-12);
        assert_eq!(distance_consistency(7.0, 3.0, 1.0).unwrap(), 7.0);
        assert!(distance_consistency(-1.0, 3.0, 0.5).is_err());
    }

    #[test]
    fn displacement_examples() {
        let o = Point2::new(0.0, 0.0);
        assert_eq!(apply_displacement(o, 1.0, deg(0.0)), Point2::new(1.0, 0.0));
        assert_eq!(apply_displacement(o, 1.0, deg(90.0)), Point2::new(0.0, 1.0));
        let a = Point2::new(3.0, -4.0);
        assert_eq!(apply_displacement(a, 0.0, deg(37.0)), a);
    }

    #[test]
    fn displacement_chain_hand_example() {
        let state = MotionState {
            prev_centroid: Point2::new(0.0, 0.0),
            prev_distance: 10.0,
            prev_angle: deg(0.0),
            initialized: true,
        };
        let params = ConsistencyParams::default();
        let (corrected, next) =
            displacement_consistency(&state, Point2::new(0.0, 10.0), &params).unwrap();
        // θ₁ = 90, θ₁ₙ = 0.01·0 + 0.99·90 = 89.1, d₁ₙ = 10.
        let theta = 89.1f64.to_radians();
        assert!((corrected.x - 10.0 * theta.cos()).abs() < 1e-9);
        assert!((corrected.y - 10.0 * theta.sin()).abs() < 1e-9);
        assert!((corrected.x - 0.157).abs() < 1e-3 && (corrected.y - 9.999).abs() < 1e-3);
        assert!((next.prev_angle.degrees() - 89.1).abs() < 1e-12);
        assert!((next.prev_distance - 10.0).abs() < 1e-12);
        assert_eq!(next.prev_centroid, corrected);
    }

    #[test]
    fn uniform_motion_is_a_fixed_point() {
        let params = ConsistencyParams::default();
        let mut state = MotionState::new(Point2::new(5.0, 5.0));
        for k in 1..40 {
            let truth = Point2::new(5.0 + 3.0 * k as f64, 5.0 - 2.0 * k as f64);
            let (c, next) = displacement_consistency(&state, truth, &params).unwrap();
            assert!(c.distance(truth) < 1e-9, "frame {k}");
            state = next;
        }
    }

    #[test]
    fn zero_step_keeps_heading() {
        let params = ConsistencyParams::default();
        let state = MotionState {
            prev_centroid: Point2::new(2.0, 2.0),
            prev_distance: 4.0,
            prev_angle: deg(-30.0),
            initialized: true,
        };
        let (c, next) = displacement_consistency(&state, Point2::new(2.0, 2.0), &params).unwrap();
        assert_eq!(c, Point2::new(2.0, 2.0));
        assert_eq!(next.prev_angle, deg(-30.0));
        assert!((next.prev_distance - 0.04).abs() < 1e-15);
    }

    #[test]
    fn first_observation_passes_through() {
        let params = ConsistencyParams::default();
        let state = MotionState::new(Point2::new(0.0, 0.0));
        let (c, next) = displacement_consistency(&state, Point2::new(0.0, -2.0), &params).unwrap();
        assert_eq!(c, Point2::new(0.0, -2.0));
        assert!(next.initialized);
        assert_eq!(next.prev_distance, 2.0);
        assert_eq!(next.prev_angle, deg(-90.0));
    }

    #[test]
    fn scale_weight_examples() {
        assert_eq!(gaussian_scale_weights(1, 1, 0.7).unwrap(), vec![1.0]);
        // Scalar oracle: e^{-1}/√(2π), 1/√(2π), e^{-1}/√(2π) then normalise.
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let raw = [c * (-1.0f64).exp(), c, c * (-1.0f64).exp()];
        let total: f64 = raw.iter().sum();
        let w = gaussian_scale_weights(3, 2, 1.0).unwrap();
        for (a, r) in w.iter().zip(raw) {
            assert!((a - r / total).abs() < 1e-12);
        }
        let rounded = [0.2119, 0.5761, 0.2119];
        for (a, b) in w.iter().zip(rounded) {
            assert!((a - b).abs() < 1e-3);
        }
        let sym = gaussian_scale_weights(7, 4, 1.3).unwrap();
        for i in 0..7 {
            assert!((sym[i] - sym[6 - i]).abs() < 1e-15);
        }
        assert!(gaussian_scale_weights(3, 0, 1.0).is_err());
        assert!(gaussian_scale_weights(3, 4, 1.0).is_err());
    }

    #[test]
    fn fuse_examples() {
        let a = map(&[1.0, -2.0, 3.5]);
        let b = map(&[0.5, 4.0, -1.0]);
        let one = fuse_response_maps(std::slice::from_ref(&a), &[1.0]).unwrap();
        assert_eq!(one.scores(), a.scores());
        let same = fuse_response_maps(&[a.clone(), a.clone()], &[0.3, 0.7]).unwrap();
        for (x, y) in same.scores().data().iter().zip(a.scores().data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let mix = fuse_response_maps(&[a.clone(), b.clone()], &[0.25, 0.75]).unwrap();
        for i in 0..3 {
            let want = 0.25 * a.scores().data()[i] + 0.75 * b.scores().data()[i];
            assert!((mix.scores().data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_errors_and_tags() {
        let a = map(&[1.0, 2.0]).with_indices(0, 5);
        let b = map(&[1.0, 2.0]).with_indices(1, 6);
        let c = map(&[1.0, 2.0, 3.0]);
        assert!(fuse_response_maps(&[a.clone(), c], &[0.5, 0.5]).is_err());
        assert!(fuse_response_maps(&[a.clone(), b.clone()], &[0.5, 0.6]).is_err());
        assert!(fuse_response_maps(&[a.clone(), b.clone()], &[1.0]).is_err());
        let f = fuse_response_maps(&[a, b], &[0.4, 0.6]).unwrap();
        assert_eq!((f.scale_index(), f.rotation_index()), (1, 6));
    }

    #[test]
    fn scale_consistency_examples() {
        let p = ConsistencyParams {
            scale_step: 1.05,
            scale_damping: 1.0,
            ..ConsistencyParams::default()
        };
        let single = [map(&[0.1, 0.9])];
        let d = scale_consistency(&single, &p, 80.0).unwrap();
        assert_eq!(d.fused.scores(), single[0].scores());
        assert_eq!(d.new_size, 80.0);

        let centred = [map(&[0.1]), map(&[0.9]), map(&[0.3])];
        for g in [0.0, 0.3, 1.0] {
            let p = ConsistencyParams { scale_damping: g, ..p };
            assert_eq!(scale_consistency(&centred, &p, 64.0).unwrap().new_size, 64.0);
        }

        let top = [map(&[0.1]), map(&[0.2]), map(&[0.9])];
        let d = scale_consistency(&top, &p, 100.0).unwrap();
        assert_eq!(d.winner, 2);
        assert!((d.new_size - 105.0).abs() < 1e-9);
        assert!(scale_consistency(&[], &p, 1.0).is_err());
    }

    #[test]
    fn noisy_line_error_drops_after_correction() {
        let params = ConsistencyParams::default();
        let mut wins = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 1.5).unwrap();
            let start = Point2::new(10.0, 20.0);
            let mut state = MotionState::new(start);
            let (mut raw_err, mut cor_err) = (0.0, 0.0);
            for k in 1..=300 {
                let truth = Point2::new(10.0 + 2.5 * k as f64, 20.0 + 1.0 * k as f64);
                let observed = Point2::new(truth.x + noise.sample(&mut rng), truth.y + noise.sample(&mut rng));
                let (c, next) = displacement_consistency(&state, observed, &params).unwrap();
                state = next;
                raw_err += observed.distance(truth);
                cor_err += c.distance(truth);
            }
            if cor_err <= raw_err {
                wins += 1;
            }
        }
        // One-sided sign test at 10 seeds: 9/10 gives p ≈ 0.011.
        assert!(wins >= 9, "corrected error lower on only {wins}/10 seeds");
    }

    proptest! {
        #[test]
        fn blends_are_convex(
            t0 in -180.0..180.0f64, t1 in -180.0..180.0f64, w in 0.0..=1.0f64,
            d0 in 0.0..100.0f64, d1 in 0.0..100.0f64,
        ) {
            let a = deg(t0);
            let b = deg(t1);
            let r = angle_consistency(a, b, w);
            // On the short arc from θ₁ to θ₀.
            prop_assert!(b.distance(r) <= b.distance(a) + 1e-9);
            prop_assert!(a.distance(r) <= b.distance(a) + 1e-9);
            let d = distance_consistency(d0, d1, w).unwrap();
            prop_assert!(d >= d0.min(d1) - 1e-12 && d <= d0.max(d1) + 1e-12);
        }

        #[test]
        fn zero_weights_recover_predictions(
            xs in proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..30),
        ) {
            let params = ConsistencyParams { w: 0.0, w_theta: 0.0, w_d: 0.0, ..ConsistencyParams::default() };
            let mut state = MotionState::new(Point2::new(0.0, 0.0));
            for (x, y) in xs {
                let p = Point2::new(x, y);
                let (c, next) = displacement_consistency(&state, p, &params).unwrap();
                prop_assert_eq!(c, p);
                state = next;
            }
        }

        #[test]
        fn corrected_step_is_bounded(
            d0 in 0.0..30.0f64, a0 in -180.0..180.0f64,
            px in -40.0..40.0f64, py in -40.0..40.0f64,
            w_theta in 0.0..=1.0f64, w_d in 0.0..=1.0f64,
        ) {
            let params = ConsistencyParams { w_theta, w_d, ..ConsistencyParams::default() };
            let state = MotionState {
                prev_centroid: Point2::new(1.0, 2.0),
                prev_distance: d0,
                prev_angle: deg(a0),
                initialized: true,
            };
            let p = Point2::new(px, py);
            let d1 = p.distance(state.prev_centroid);
            let (c, _) = displacement_consistency(&state, p, &params).unwrap();
            prop_assert!(c.distance(state.prev_centroid) <= d0.max(d1) + 1e-9);
        }

        #[test]
        fn weights_peak_at_mu_and_decrease(n in 1usize..15, mu_frac in 0.0..1.0f64, sigma in 0.2..5.0f64) {
            let mu = 1 + ((n - 1) as f64 * mu_frac).round() as usize;
            let w = gaussian_scale_weights(n, mu, sigma).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 1..=n {
                for j in 1..=n {
                    let (di, dj) = ((i as i64 - mu as i64).abs(), (j as i64 - mu as i64).abs());
                    // Strict where the tail has not underflowed to zero.
                    if di < dj && w[j - 1] > 0.0 {
                        prop_assert!(w[i - 1] > w[j - 1]);
                    }
                }
            }
        }

        #[test]
        fn fused_argmax_ignores_weight_scaling(
            seed in any::<u64>(), k in 0.01..100.0f64,
        ) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let maps: Vec<ResponseMap> = (0..3)
                .map(|_| ResponseMap::new(Grid::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0)), 0, 0))
                .collect();
            let raw = [rng.random_range(0.1..1.0), rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)];
            let norm = |ws: &[f64]| { let t: f64 = ws.iter().sum(); ws.iter().map(|w| w / t).collect::<Vec<_>>() };
            let scaled: Vec<f64> = raw.iter().map(|w| w * k).collect();
            let a = fuse_response_maps(&maps, &norm(&raw)).unwrap();
            let b = fuse_response_maps(&maps, &norm(&scaled)).unwrap();
            prop_assert_eq!(a.peak().location, b.peak().location);
        }
    }
}
