//! Normalisation, missing-landmark infill and training-time augmentation of
//! keypoint sequences.
//!
//! The documented order of the training pipeline is: bounding-box
//! normalisation, infill of detector misses, geometric jitter, hand masking
//! with infill, speed augmentation, then resampling to the fixed network
//! length. Evaluation runs only normalisation, infill and deterministic
//! resampling.

use ndarray::{s, Array3, Axis};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::schema::NUM_NODES;

/// One sign sample: `frames` is `F x 27 x 2`, missing landmarks are NaN pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub id: String,
    pub label: Option<usize>,
    pub fps: f32,
    /// `(width, height)` in pixels.
    pub frame_size: (u32, u32),
    pub frames: Array3<f32>,
}

impl SkeletonSequence {
    pub fn new(
        id: impl Into<String>,
        label: Option<usize>,
        fps: f32,
        frame_size: (u32, u32),
        frames: Array3<f32>,
    ) -> Result<Self> {
        let seq = SkeletonSequence {
            id: id.into(),
            label,
            fps,
            frame_size,
            frames,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len_of(Axis(0))
    }

    pub fn validate(&self) -> Result<()> {
        let (f, k, d) = self.frames.dim();
        if f == 0 {
            return Err(Error::Data(format!("sequence {} has no frames", self.id)));
        }
        if k != NUM_NODES || d != 2 {
            return Err(Error::Data(format!(
                "sequence {} has shape {f}x{k}x{d}, expected Fx{NUM_NODES}x2",
                self.id
            )));
        }
        for t in 0..f {
            for n in 0..k {
                let (x, y) = (self.frames[[t, n, 0]], self.frames[[t, n, 1]]);
                let missing = x.is_nan() && y.is_nan();
                if !missing && !(x.is_finite() && y.is_finite()) {
                    return Err(Error::Data(format!(
                        "sequence {} frame {t} node {n} has non-finite coordinate",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_missing(&self, t: usize, n: usize) -> bool {
        self.frames[[t, n, 0]].is_nan()
    }

    pub fn has_missing(&self) -> bool {
        self.frames.iter().any(|v| v.is_nan())
    }

    fn with_frames(&self, frames: Array3<f32>) -> Self {
        SkeletonSequence {
            id: self.id.clone(),
            label: self.label,
            fps: self.fps,
            frame_size: self.frame_size,
            frames,
        }
    }

    /// Keeps frames at `indices` in the given order.
    pub fn select_frames(&self, indices: &[usize]) -> Self {
        let frames = self.frames.select(Axis(0), indices);
        self.with_frames(frames)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    /// Maximum absolute shear factor on each axis.
    pub shear_range: f64,
    /// Maximum absolute rotation in degrees.
    pub rotation_range: f64,
    /// Fraction of frames whose hands are masked and re-interpolated.
    pub hand_mask_prob: f64,
    /// Uniform range of the temporal resampling factor.
    pub speed_range: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            shear_range: 0.1,
            rotation_range: 10.0,
            hand_mask_prob: 0.2,
            speed_range: (0.8, 1.2),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every augmentation at its identity value.
    pub fn identity() -> Self {
        AugmentConfig {
            shear_range: 0.0,
            rotation_range: 0.0,
            hand_mask_prob: 0.0,
            speed_range: (1.0, 1.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shear_range >= 0.0 && self.rotation_range >= 0.0) {
            return Err(Error::Config("augmentation ranges must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.hand_mask_prob) {
            return Err(Error::Config("hand_mask_prob must lie in [0, 1]".into()));
        }
        let (lo, hi) = self.speed_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(
                "speed range must satisfy 0 < low <= high".into(),
            ));
        }
        Ok(())
    }
}

/// Maps coordinates normalised to `[0, 1]` back to pixels.
pub fn to_pixel_coords(seq: &SkeletonSequence, frame_size: (u32, u32)) -> Result<SkeletonSequence> {
    let (w, h) = frame_size;
    if w == 0 || h == 0 {
        return Err(Error::Config(format!("invalid frame size {w}x{h}")));
    }
    let mut frames = seq.frames.clone();
    frames.slice_mut(s![.., .., 0]).mapv_inplace(|x| x * w as f32);
    frames.slice_mut(s![.., .., 1]).mapv_inplace(|y| y * h as f32);
    let mut out = seq.with_frames(frames);
    out.frame_size = frame_size;
    Ok(out)
}

/// Maps the tight bounding box of all present keypoints over the whole
/// sequence into `[-1, 1]^2`, centred at the origin, with one isotropic scale
/// so the wider axis spans exactly `[-1, 1]`.
pub fn normalize_bbox(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for p in seq.frames.lanes(Axis(2)) {
        if p[0].is_nan() {
            continue;
        }
        for a in 0..2 {
            let v = f64::from(p[a]);
            min[a] = min[a].min(v);
            max[a] = max[a].max(v);
        }
    }
    if !min[0].is_finite() {
        return Err(Error::Data(format!(
            "sequence {} has no detected keypoints",
            seq.id
        )));
    }
    let center = [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0];
    let half = ((max[0] - min[0]).max(max[1] - min[1])) / 2.0;
    // a single point has no extent; only recentre it
    let scale = if half > 0.0 { 1.0 / half } else { 1.0 };
    let mut frames = seq.frames.clone();
    for mut p in frames.lanes_mut(Axis(2)) {
        if p[0].is_nan() {
            continue;
        }
        for a in 0..2 {
            let v = (f64::from(p[a]) - center[a]) * scale;
            p[a] = v.clamp(-1.0, 1.0) as f32;
        }
    }
    Ok(seq.with_frames(frames))
}

/// Interpolates between two 2D points: the direction angle about the origin
/// is interpolated along the shorter arc and the magnitude linearly. Falls
/// back to linear interpolation when either endpoint is the zero vector.
/// Equal endpoints are returned unchanged.
pub fn slerp_point(p0: [f64; 2], p1: [f64; 2], u: f64) -> [f64; 2] {
    if p0 == p1 {
        return p0;
    }
    let r0 = p0[0].hypot(p0[1]);
    let r1 = p1[0].hypot(p1[1]);
    if r0 == 0.0 || r1 == 0.0 {
        return [p0[0] + u * (p1[0] - p0[0]), p0[1] + u * (p1[1] - p0[1])];
    }
    let a0 = p0[1].atan2(p0[0]);
    let a1 = p1[1].atan2(p1[0]);
    let mut delta = a1 - a0;
    // wrap to (-pi, pi]
    while delta > std::f64::consts::PI {
        delta -= 2.0 * std::f64::consts::PI;
    }
    while delta <= -std::f64::consts::PI {
        delta += 2.0 * std::f64::consts::PI;
    }
    let a = a0 + u * delta;
    let r = r0 + u * (r1 - r0);
    [r * a.cos(), r * a.sin()]
}

/// Fills `hole[t]` frames of the given nodes from the nearest frames before
/// and after that are not holes. Boundary holes copy the single nearest
/// neighbour. A node with no usable frame at all is left untouched.
fn infill_nodes(frames: &mut Array3<f32>, nodes: &[usize], hole: impl Fn(usize, usize) -> bool) {
    let f = frames.len_of(Axis(0));
    for &n in nodes {
        let good: Vec<usize> = (0..f).filter(|&t| !hole(t, n)).collect();
        if good.is_empty() {
            continue;
        }
        for t in 0..f {
            if !hole(t, n) {
                continue;
            }
            // first good frame after t
            let pos = good.partition_point(|&g| g < t);
            let next = good.get(pos).copied();
            let prev = if pos > 0 { Some(good[pos - 1]) } else { None };
            let point = |i: usize| [f64::from(frames[[i, n, 0]]), f64::from(frames[[i, n, 1]])];
            let v = match (prev, next) {
                (Some(a), Some(b)) => {
                    let u = (t - a) as f64 / (b - a) as f64;
                    slerp_point(point(a), point(b), u)
                }
                (Some(a), None) => point(a),
                (None, Some(b)) => point(b),
                (None, None) => unreachable!(),
            };
            frames[[t, n, 0]] = v[0] as f32;
            frames[[t, n, 1]] = v[1] as f32;
        }
    }
}

/// Replaces detector misses by interpolation across time. Keypoints that are
/// missing in every frame are placed at the origin.
pub fn fill_missing(seq: &SkeletonSequence) -> SkeletonSequence {
    if !seq.has_missing() {
        return seq.clone();
    }
    let mut frames = seq.frames.clone();
    let nodes: Vec<usize> = (0..NUM_NODES).collect();
    let orig = seq.frames.clone();
    infill_nodes(&mut frames, &nodes, |t, n| orig[[t, n, 0]].is_nan());
    frames.mapv_inplace(|v| if v.is_nan() { 0.0 } else { v });
    seq.with_frames(frames)
}

/// One shear-then-rotate transform: `p' = R(angle) * [[1, sx], [sy, 1]] * p`.
/// Positive angles rotate counter-clockwise, so 90 degrees maps `(1, 0)` to
/// `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryTransform {
    pub shear_x: f64,
    pub shear_y: f64,
    pub angle_deg: f64,
}

impl GeometryTransform {
    pub const IDENTITY: GeometryTransform = GeometryTransform {
        shear_x: 0.0,
        shear_y: 0.0,
        angle_deg: 0.0,
    };

    fn symmetric<R: Rng + ?Sized>(rng: &mut R, range: f64) -> f64 {
        if range > 0.0 {
            rng.random_range(-range..=range)
        } else {
            0.0
        }
    }

    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        GeometryTransform {
            shear_x: Self::symmetric(rng, cfg.shear_range),
            shear_y: Self::symmetric(rng, cfg.shear_range),
            angle_deg: Self::symmetric(rng, cfg.rotation_range),
        }
    }

    /// Row-major 2x2 matrix.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let (sin, cos) = self.angle_deg.to_radians().sin_cos();
        let (sx, sy) = (self.shear_x, self.shear_y);
        [
            [cos - sin * sy, cos * sx - sin],
            [sin + cos * sy, sin * sx + cos],
        ]
    }

    pub fn apply(&self, seq: &SkeletonSequence) -> SkeletonSequence {
        if *self == Self::IDENTITY {
            return seq.clone();
        }
        let m = self.matrix();
        let mut frames = seq.frames.clone();
        for mut p in frames.lanes_mut(Axis(2)) {
            if p[0].is_nan() {
                continue;
            }
            let (x, y) = (f64::from(p[0]), f64::from(p[1]));
            p[0] = (m[0][0] * x + m[0][1] * y) as f32;
            p[1] = (m[1][0] * x + m[1][1] * y) as f32;
        }
        seq.with_frames(frames)
    }
}

/// Applies one randomly drawn shear and rotation to every frame.
pub fn augment_geometry<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> SkeletonSequence {
    GeometryTransform::sample(cfg, rng).apply(seq)
}

/// Masks all hand keypoints in `round(beta * F)` frames chosen without
/// replacement (at most `F - 1`, so one reference frame always remains) and
/// refills them by interpolation from the nearest unmasked frames.
pub fn mask_and_fill_hands<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    beta: f64,
    hand_nodes: &[usize],
    rng: &mut R,
) -> SkeletonSequence {
    let f = seq.num_frames();
    let count = ((beta * f as f64).round() as usize).min(f.saturating_sub(1));
    if count == 0 {
        return seq.clone();
    }
    let masked: Vec<usize> = sample(rng, f, count).into_vec();
    mask_frames_and_fill(seq, &masked, hand_nodes)
}

/// Deterministic core of [`mask_and_fill_hands`] for a given frame subset.
pub fn mask_frames_and_fill(
    seq: &SkeletonSequence,
    masked: &[usize],
    hand_nodes: &[usize],
) -> SkeletonSequence {
    let f = seq.num_frames();
    let mut is_masked = vec![false; f];
    for &t in masked {
        is_masked[t] = true;
    }
    let mut frames = seq.frames.clone();
    for &t in masked {
        for &n in hand_nodes {
            frames[[t, n, 0]] = f32::NAN;
            frames[[t, n, 1]] = f32::NAN;
        }
    }
    let snapshot = frames.clone();
    infill_nodes(&mut frames, hand_nodes, |t, n| {
        is_masked[t] || snapshot[[t, n, 0]].is_nan()
    });
    // frames whose hands were never detected anywhere keep their original values
    for &t in masked {
        for &n in hand_nodes {
            if frames[[t, n, 0]].is_nan() {
                frames[[t, n, 0]] = seq.frames[[t, n, 0]];
                frames[[t, n, 1]] = seq.frames[[t, n, 1]];
            }
        }
    }
    seq.with_frames(frames)
}

/// Frame indices realising a speed change to `target` frames: fewer frames are
/// drawn without replacement, more frames keep every original and add
/// duplicates drawn with replacement. Indices are sorted.
pub fn speed_indices<R: Rng + ?Sized>(f: usize, target: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = if target < f {
        sample(rng, f, target).into_vec()
    } else {
        let mut v: Vec<usize> = (0..f).collect();
        v.extend((0..target - f).map(|_| rng.random_range(0..f)));
        v
    };
    idx.sort_unstable();
    idx
}

/// Resamples to `round(F * factor)` frames (at least one).
pub fn speed_resample<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    factor: f64,
    rng: &mut R,
) -> SkeletonSequence {
    let f = seq.num_frames();
    let target = ((f as f64 * factor).round() as usize).max(1);
    if target == f {
        return seq.clone();
    }
    seq.select_frames(&speed_indices(f, target, rng))
}

pub fn temporal_speed_augment<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    speed_range: (f64, f64),
    rng: &mut R,
) -> SkeletonSequence {
    if seq.num_frames() < 2 {
        return seq.clone();
    }
    let (lo, hi) = speed_range;
    let factor = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    speed_resample(seq, factor, rng)
}

/// `target` evenly spaced indices `floor(i * (F - 1) / (target - 1))`.
pub fn uniform_indices(f: usize, target: usize) -> Vec<usize> {
    if target == 1 {
        return vec![0];
    }
    (0..target).map(|i| i * (f - 1) / (target - 1)).collect()
}

/// Pads by repeating the first frame `offset` times and the last frame until
/// `target` frames are reached.
pub fn pad_indices(f: usize, target: usize, offset: usize) -> Vec<usize> {
    debug_assert!(f + offset <= target);
    let mut idx = vec![0; offset];
    idx.extend(0..f);
    idx.resize(target, f - 1);
    idx
}

/// Brings a sequence to exactly `target` frames.
pub fn resample_to_length<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    target: usize,
    rng: &mut R,
    training: bool,
) -> SkeletonSequence {
    let f = seq.num_frames();
    let idx = match f.cmp(&target) {
        std::cmp::Ordering::Equal => return seq.clone(),
        std::cmp::Ordering::Less => {
            let offset = if training {
                rng.random_range(0..=target - f)
            } else {
                0
            };
            pad_indices(f, target, offset)
        }
        std::cmp::Ordering::Greater => {
            if training {
                let mut v = sample(rng, f, target).into_vec();
                v.sort_unstable();
                v
            } else {
                uniform_indices(f, target)
            }
        }
    };
    seq.select_frames(&idx)
}

/// The full per-sequence preprocessing pipeline. With `augment` set the
/// training-time augmentations run, otherwise only the deterministic steps.
pub fn prepare_sequence<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    target_frames: usize,
    augment: Option<&AugmentConfig>,
    hand_nodes: &[usize],
    rng: &mut R,
) -> Result<SkeletonSequence> {
    let mut s = fill_missing(&normalize_bbox(seq)?);
    if let Some(cfg) = augment {
        s = augment_geometry(&s, cfg, rng);
        s = mask_and_fill_hands(&s, cfg.hand_mask_prob, hand_nodes, rng);
        s = temporal_speed_augment(&s, cfg.speed_range, rng);
    }
    Ok(resample_to_length(&s, target_frames, rng, augment.is_some()))
}
