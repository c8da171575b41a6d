//! Rotation adaptiveness.
//!
//! Two routes are provided. A fixed-template tracker precomputes a bank of
//! exemplars rotated uniformly over the full circle, correlates only the
//! entries nearest its current angle estimate, and picks among the three
//! strongest Gaussian-fused responses by score per pixel of displacement.
//! An updating-template tracker instead re-rotates its current model by
//! `-ζ, 0, +ζ` every frame.

use crate::consistency::{fuse_response_maps, gaussian_scale_weights};
use crate::correlation::ResponseMap;
use crate::error::{out_of_range, Result};
use crate::geometry::{wrap_angle, Angle, Point2};
use crate::imageproc::{warp_rotate_scale, Patch};

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry<T> {
    /// Bank angle in degrees, in `[-180, 180]`. Both endpoints are kept.
    pub degrees: f64,
    pub template: T,
}

impl<T> BankEntry<T> {
    pub fn angle(&self) -> Angle {
        wrap_angle(self.degrees).expect("bank angles are finite")
    }
}

/// Rotated copies of one exemplar at a fixed angular step, covering -180°
/// to +180° inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank<T> {
    entries: Vec<BankEntry<T>>,
    step: f64,
}

impl<T> TemplateBank<T> {
    pub fn entries(&self) -> &[BankEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Signed offset of entry `i` from `current`, in `(-180, 180]`.
    fn offset(&self, i: usize, current: Angle) -> f64 {
        current.arc_to(self.entries[i].angle())
    }

    /// True for the -180° entry when a +180° entry also exists.
    fn is_alias(&self, i: usize) -> bool {
        self.entries[i].degrees == -180.0 && self.entries.iter().any(|e| e.degrees == 180.0)
    }
}

/// Builds a bank by rotating `exemplar` to every multiple of `step` in
/// `[-180, 180]` and passing each through `backend`.
pub fn build_bank<T>(
    exemplar: &Patch,
    step: f64,
    mut backend: impl FnMut(&Patch) -> Result<T>,
) -> Result<TemplateBank<T>> {
    if !(step > 0.0 && step <= 360.0) {
        return Err(out_of_range(format!("bank step {step} must be in (0, 360]")));
    }
    let count = (360.0 / step).round();
    if (count * step - 360.0).abs() > 1e-9 {
        return Err(out_of_range(format!("bank step {step} does not divide 360")));
    }
    let count = count as usize;
    let mut entries = Vec::with_capacity(count + 1);
    for k in 0..=count {
        let degrees = if k == count { 180.0 } else { -180.0 + k as f64 * step };
        let rotated = if degrees == 0.0 {
            exemplar.clone()
        } else {
            warp_rotate_scale(exemplar, wrap_angle(degrees)?, 1.0)?
        };
        entries.push(BankEntry {
            degrees,
            template: backend(&rotated)?,
        });
    }
    Ok(TemplateBank { entries, step })
}

/// Indices of the `k` entries closest to `current` on the circle, returned
/// in bank order.
///
/// Ties go to the smaller `|angle|`, then to the negative angle. The -180°
/// entry duplicates +180° and is only chosen after every other entry.
pub fn nearest_neighbors<T>(bank: &TemplateBank<T>, current: Angle, k: usize) -> Result<Vec<usize>> {
    if k > bank.len() {
        return Err(out_of_range(format!(
            "asked for {k} neighbours from a bank of {}",
            bank.len()
        )));
    }
    let mut order: Vec<usize> = (0..bank.len()).collect();
    order.sort_by(|&a, &b| {
        let ea = &bank.entries[a];
        let eb = &bank.entries[b];
        bank.is_alias(a)
            .cmp(&bank.is_alias(b))
            .then(bank.offset(a, current).abs().total_cmp(&bank.offset(b, current).abs()))
            .then(ea.degrees.abs().total_cmp(&eb.degrees.abs()))
            .then(ea.degrees.total_cmp(&eb.degrees))
    });
    let mut picked: Vec<usize> = order.into_iter().take(k).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Reorders bank indices by their signed offset from `current`, so that
/// consecutive indices are neighbouring orientations across the ±180° seam.
pub fn order_around<T>(bank: &TemplateBank<T>, indices: &[usize], current: Angle) -> Vec<usize> {
    let mut out = indices.to_vec();
    out.sort_by(|&a, &b| {
        bank.offset(a, current)
            .total_cmp(&bank.offset(b, current))
            .then(a.cmp(&b))
    });
    out
}

/// Gaussian-weighted average of rotation-bin maps centred at `center`
/// (1-based), reusing the scale-fusion weights.
pub fn rotation_gwa(maps: &[ResponseMap], center: usize, sigma_rot: f64) -> Result<ResponseMap> {
    let weights = gaussian_scale_weights(maps.len(), center, sigma_rot)?;
    fuse_response_maps(maps, &weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationCandidate {
    pub centroid: Point2,
    pub score: f64,
    pub angle: Angle,
    /// Distance from the previous centroid, pixels.
    pub displacement: f64,
    /// Position of the centre map in the input slice.
    pub map_index: usize,
}

/// Builds up to three candidates from the maps with the highest peaks, each
/// a rotation GWA centred on one of them. `locate` maps a response peak to
/// image coordinates.
pub fn top3_candidates(
    maps: &[ResponseMap],
    angles: &[Angle],
    prev_centroid: Point2,
    sigma_rot: f64,
    mut locate: impl FnMut(&ResponseMap) -> Point2,
) -> Result<Vec<RotationCandidate>> {
    if maps.is_empty() || maps.len() != angles.len() {
        return Err(out_of_range(format!(
            "{} maps with {} angles",
            maps.len(),
            angles.len()
        )));
    }
    let mut ranked: Vec<usize> = (0..maps.len()).collect();
    ranked.sort_by(|&a, &b| maps[b].peak().value.total_cmp(&maps[a].peak().value));
    ranked
        .into_iter()
        .take(3)
        .map(|i| {
            let fused = rotation_gwa(maps, i + 1, sigma_rot)?;
            let centroid = locate(&fused);
            Ok(RotationCandidate {
                centroid,
                score: fused.peak().value,
                angle: angles[i],
                displacement: centroid.distance(prev_centroid),
                map_index: i,
            })
        })
        .collect()
}

/// Picks the candidate with the highest `score / (displacement + eps)`;
/// the first wins ties.
pub fn select_by_ratio(candidates: &[RotationCandidate], eps: f64) -> Result<RotationCandidate> {
    if !(eps > 0.0) {
        return Err(out_of_range(format!("ratio epsilon {eps} must be > 0")));
    }
    let ratio = |c: &RotationCandidate| c.score / (c.displacement + eps);
    candidates
        .iter()
        .copied()
        .reduce(|best, c| if ratio(&c) > ratio(&best) { c } else { best })
        .ok_or_else(|| out_of_range("no rotation candidates"))
}

/// `[exemplar rotated by -ζ, exemplar, exemplar rotated by +ζ]`.
pub fn per_frame_rotations(exemplar: &Patch, zeta: f64) -> Result<[Patch; 3]> {
    if !(zeta > 0.0 && zeta <= 45.0) {
        return Err(out_of_range(format!("zeta {zeta} outside (0, 45]")));
    }
    Ok([
        warp_rotate_scale(exemplar, wrap_angle(-zeta)?, 1.0)?,
        exemplar.clone(),
        warp_rotate_scale(exemplar, wrap_angle(zeta)?, 1.0)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{feature_transform, xcorr_fft};
    use crate::grid::Grid;
    use crate::imageproc::{crop_resample, PatchOrigin};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn deg(d: f64) -> Angle {
        wrap_angle(d).unwrap()
    }

    /// Random noise box-blurred twice; no rotational symmetry.
    fn smooth_texture(rng: &mut ChaCha8Rng, n: usize) -> Grid {
        let noise = Grid::from_fn(n, n, |_, _| rng.random_range(0.0..255.0));
        let blur = |g: &Grid| {
            Grid::from_fn(n, n, |x, y| {
                let mut acc = 0.0;
                let mut cnt = 0.0;
                for dy in -2i64..=2 {
                    for dx in -2i64..=2 {
                        let (sx, sy) = (x as i64 + dx, y as i64 + dy);
                        if sx >= 0 && sy >= 0 && sx < n as i64 && sy < n as i64 {
                            acc += g.get(sx as usize, sy as usize);
                            cnt += 1.0;
                        }
                    }
                }
                acc / cnt
            })
        };
        let once = blur(&noise);
        let twice = blur(&once);
        let m = twice.mean();
        Grid::from_fn(n, n, |x, y| (128.0 + 4.0 * (twice.get(x, y) - m)).clamp(0.0, 255.0))
    }

    fn patch(grid: Grid) -> Patch {
        Patch {
            pixels: grid,
            origin: PatchOrigin {
                center: Point2::default(),
                source_size: 1.0,
                rotation: Angle::ZERO,
                scale: 1.0,
            },
        }
    }

    fn angle_bank(step: f64) -> TemplateBank<()> {
        let p = patch(Grid::filled(4, 4, 1.0));
        build_bank(&p, step, |_| Ok(())).unwrap()
    }

    fn angles_of(bank: &TemplateBank<()>, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| bank.entries()[i].degrees).collect()
    }

    fn cand(score: f64, displacement: f64, a: f64) -> RotationCandidate {
        RotationCandidate {
            centroid: Point2::new(a, 0.0),
            score,
            angle: deg(a),
            displacement,
            map_index: 0,
        }
    }

    #[test]
    fn bank_sizes() {
        assert_eq!(angle_bank(20.0).len(), 19);
        let b = angle_bank(90.0);
        let degs: Vec<f64> = b.entries().iter().map(|e| e.degrees).collect();
        assert_eq!(degs, vec![-180.0, -90.0, 0.0, 90.0, 180.0]);
        let p = patch(Grid::filled(4, 4, 1.0));
        assert!(build_bank(&p, 7.0, |_| Ok(())).is_err());
        assert!(build_bank(&p, 0.0, |_| Ok(())).is_err());
    }

    #[test]
    fn bank_zero_entry_is_the_exemplar() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = patch(smooth_texture(&mut rng, 16));
        let bank = build_bank(&p, 30.0, |q| feature_transform(q, true)).unwrap();
        let zero = bank.entries().iter().find(|e| e.degrees == 0.0).unwrap();
        let direct = feature_transform(&p, true).unwrap();
        for (a, b) in zero.template.values().iter().zip(direct.values()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn neighbour_examples() {
        let bank = angle_bank(20.0);
        let at = |a: f64| angles_of(&bank, &nearest_neighbors(&bank, deg(a), 5).unwrap());
        assert_eq!(at(0.0), vec![-40.0, -20.0, 0.0, 20.0, 40.0]);
        assert_eq!(at(7.0), vec![-40.0, -20.0, 0.0, 20.0, 40.0]);
        // Circular enumeration from 175°: 180(5) 160(15) -160(25) 140(35) -140(45); -180 aliases 180.
        assert_eq!(at(175.0), vec![-160.0, -140.0, 140.0, 160.0, 180.0]);
        assert!(nearest_neighbors(&bank, deg(0.0), 20).is_err());
        // Equidistant 10° -> 0 and 20 both at 10; three picks break toward |angle| then negative.
        assert_eq!(at(10.0)[..], [-40.0, -20.0, 0.0, 20.0, 40.0]);
        let three = angles_of(&bank, &nearest_neighbors(&bank, deg(-10.0), 3).unwrap());
        assert_eq!(three, vec![-20.0, 0.0, 20.0]);
    }

    #[test]
    fn order_around_crosses_the_seam() {
        let bank = angle_bank(20.0);
        let idx = nearest_neighbors(&bank, deg(175.0), 5).unwrap();
        let ordered = angles_of(&bank, &order_around(&bank, &idx, deg(175.0)));
        assert_eq!(ordered, vec![140.0, 160.0, 180.0, -160.0, -140.0]);
    }

    #[test]
    fn gwa_examples() {
        let m = ResponseMap::new(Grid::new(3, 1, vec![0.2, 0.9, 0.1]).unwrap(), 0, 0);
        assert_eq!(rotation_gwa(std::slice::from_ref(&m), 1, 1.0).unwrap().scores(), m.scores());
        let five = vec![m.clone(); 5];
        let same = rotation_gwa(&five, 3, 1.0).unwrap();
        for (a, b) in same.scores().data().iter().zip(m.scores().data()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Scalar oracle of the weight formula at bin distances {2, 1, 0, 1, 2}.
        let raw: Vec<f64> = [2.0f64, 1.0, 0.0, 1.0, 2.0].iter().map(|d| (-(d * d)).exp()).collect();
        let total: f64 = raw.iter().sum();
        let w = gaussian_scale_weights(5, 3, 1.0).unwrap();
        for (a, r) in w.iter().zip(&raw) {
            assert!((a - r / total).abs() < 1e-12);
        }
        let expected = [0.0103, 0.2076, 0.5642, 0.2076, 0.0103];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn top3_examples() {
        let peaks = [0.9, 0.5, 0.8, 0.2, 0.7];
        let maps: Vec<ResponseMap> = peaks
            .iter()
            .enumerate()
            .map(|(i, &p)| ResponseMap::new(Grid::new(1, 1, vec![p]).unwrap(), 0, i))
            .collect();
        let angles: Vec<Angle> = (0..5).map(|i| deg(i as f64 * 20.0 - 40.0)).collect();
        let c = top3_candidates(&maps, &angles, Point2::default(), 1.0, |_| Point2::default()).unwrap();
        let mut centres: Vec<usize> = c.iter().map(|c| c.map_index + 1).collect();
        centres.sort_unstable();
        assert_eq!(centres, vec![1, 3, 5]);

        let one = top3_candidates(&maps[..1], &angles[..1], Point2::default(), 1.0, |m| m.peak().location).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].score, 0.9);

        let same = vec![maps[0].clone(); 5];
        let c = top3_candidates(&same, &angles, Point2::default(), 1.0, |_| Point2::default()).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|x| (x.score - c[0].score).abs() < 1e-12));
        assert!(c[0].angle != c[1].angle && c[1].angle != c[2].angle && c[0].angle != c[2].angle);
    }

    #[test]
    fn ratio_examples() {
        let cs = [cand(0.9, 10.0, 1.0), cand(0.8, 2.0, 2.0), cand(0.85, 100.0, 3.0)];
        assert_eq!(select_by_ratio(&cs, 1.0).unwrap().angle, deg(2.0));
        assert_eq!(select_by_ratio(&cs[..1], 1.0).unwrap(), cs[0]);
        let z = cand(0.5, 0.0, 4.0);
        assert_eq!(z.score / (z.displacement + 1.0), 0.5);
        assert_eq!(select_by_ratio(&[z], 1.0).unwrap(), z);
        assert!(select_by_ratio(&[], 1.0).is_err());
    }

    #[test]
    fn per_frame_rotation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = patch(smooth_texture(&mut rng, 12));
        for zeta in [10.0, 8.0] {
            let [lo, mid, hi] = per_frame_rotations(&p, zeta).unwrap();
            assert_eq!(lo.origin.rotation, deg(-zeta));
            assert_eq!(mid, p);
            assert_eq!(hi.origin.rotation, deg(zeta));
        }
        assert!(per_frame_rotations(&p, 0.0).is_err());
        assert!(per_frame_rotations(&p, 46.0).is_err());
    }

    #[test]
    fn strongest_bank_entry_tracks_true_rotation() {
        let step = 20.0;
        let mut hits = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let texture = patch(smooth_texture(&mut rng, 64));
            let exemplar = crop_resample(
                &crate::imageproc::Image::from_grid(texture.pixels.clone()).unwrap(),
                Point2::new(31.5, 31.5),
                32.0,
                32,
                Angle::ZERO,
                128.0,
            )
            .unwrap();
            let bank = build_bank(&exemplar, step, |p| feature_transform(p, true)).unwrap();
            let alpha = rng.random_range(-170.0..170.0);
            let rotated = warp_rotate_scale(&texture, deg(alpha), 1.0).unwrap();
            let search = crop_resample(
                &crate::imageproc::Image::from_grid(rotated.pixels).unwrap(),
                Point2::new(31.5, 31.5),
                48.0,
                48,
                Angle::ZERO,
                128.0,
            )
            .unwrap();
            let sfeat = feature_transform(&search, false).unwrap();
            let best = bank
                .entries()
                .iter()
                .map(|e| (e.angle(), xcorr_fft(&e.template, &sfeat).unwrap().peak().value))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            // Within half a bin plus one bin of interpolation slack.
            if best.0.distance(deg(alpha)) <= step / 2.0 + step {
                hits += 1;
            }
        }
        assert_eq!(hits, 20);
    }

    proptest! {
        #[test]
        fn bank_count_matches_step(div in prop::sample::select(vec![1usize, 2, 3, 4, 5, 6, 8, 9, 10, 12, 15, 18, 20, 24, 30, 36, 40, 45, 60, 72, 90, 120, 180, 360])) {
            let step = 360.0 / div as f64;
            prop_assert_eq!(angle_bank(step).len(), div + 1);
        }

        #[test]
        fn neighbours_are_the_closest(current in -180.0..180.0f64, k in 1usize..19) {
            let bank = angle_bank(20.0);
            let cur = deg(current);
            let picked = nearest_neighbors(&bank, cur, k).unwrap();
            let dist = |i: usize| bank.entries()[i].angle().distance(cur);
            let nearest = (0..bank.len()).map(dist).fold(f64::INFINITY, f64::min);
            prop_assert!(picked.iter().any(|&i| dist(i) == nearest));
            let worst = picked.iter().map(|&i| dist(i)).fold(0.0, f64::max);
            for i in (0..bank.len()).filter(|i| !picked.contains(i) && !bank.is_alias(*i)) {
                prop_assert!(dist(i) >= worst);
            }
        }

        #[test]
        fn ratio_winner_survives_score_scaling(
            scores in proptest::collection::vec((0.01..5.0f64, 0.0..50.0f64), 1..6),
            k in 0.01..100.0f64,
        ) {
            let cs: Vec<RotationCandidate> = scores.iter().enumerate()
                .map(|(i, (s, d))| cand(*s, *d, i as f64)).collect();
            let scaled: Vec<RotationCandidate> = cs.iter()
                .map(|c| RotationCandidate { score: c.score * k, ..*c }).collect();
            let a = select_by_ratio(&cs, 1.0).unwrap();
            let b = select_by_ratio(&scaled, 1.0).unwrap();
            // Scaling can only flip an exact float tie.
            let r = |c: &RotationCandidate| c.score / (c.displacement + 1.0);
            prop_assert!(a.angle == b.angle || (r(&a) - r(&cs[b.angle.degrees() as usize])).abs() < 1e-12 * r(&a));
        }
    }
}
