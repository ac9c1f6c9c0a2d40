//! Synthetic sign-like motions rendered onto the 27-node skeleton.
//!
//! Each class pairs a wrist trajectory (circle, line, zigzag, ...) with the
//! hand or hands that perform it. The idle hand rests at the hip. Every
//! sequence gets a random global offset and scale, and optional Gaussian
//! jitter of `noise` pixels on every coordinate.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{save_manifest, DatasetManifest, ManifestEntry, Split};
use super::sequence::save_sequence;
use crate::error::{Error, Result};
use crate::preprocess::SkeletonSequence;
use crate::schema::{
    LEFT_ELBOW, LEFT_EYE, LEFT_HAND_START, LEFT_SHOULDER, NOSE, NUM_NODES, RIGHT_ELBOW, RIGHT_EYE, RIGHT_HAND_START,
    RIGHT_SHOULDER,
};

pub const FRAME_SIZE: (u32, u32) = (640, 480);
pub const FPS: f32 = 25.0;
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    Circle,
    HorizontalLine,
    VerticalLine,
    Zigzag,
    FigureEight,
    Diagonal,
    Tap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mover {
    Right,
    Left,
    /// Both hands, mirrored about the body midline.
    Both,
}

const FAMILIES: [(Curve, Mover); 16] = [
    (Curve::Circle, Mover::Right),
    (Curve::HorizontalLine, Mover::Right),
    (Curve::VerticalLine, Mover::Right),
    (Curve::Zigzag, Mover::Right),
    (Curve::Circle, Mover::Left),
    (Curve::HorizontalLine, Mover::Left),
    (Curve::Circle, Mover::Both),
    (Curve::VerticalLine, Mover::Both),
    (Curve::FigureEight, Mover::Right),
    (Curve::Diagonal, Mover::Right),
    (Curve::Tap, Mover::Right),
    (Curve::Zigzag, Mover::Left),
    (Curve::FigureEight, Mover::Both),
    (Curve::Diagonal, Mover::Left),
    (Curve::Tap, Mover::Both),
    (Curve::VerticalLine, Mover::Left),
];

/// Motion of class `c`. Classes past the family table repeat it at a
/// higher number of cycles per sequence.
pub fn class_motion(c: usize) -> (Curve, Mover, usize) {
    let (curve, mover) = FAMILIES[c % FAMILIES.len()];
    (curve, mover, 1 + c / FAMILIES.len())
}

pub fn class_name(c: usize) -> String {
    let (curve, mover, cycles) = class_motion(c);
    format!("{curve:?}-{mover:?}-x{cycles}").to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Standard deviation of the per-coordinate jitter in pixels.
    pub noise: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 8,
            per_class: 20,
            frames_min: 24,
            frames_max: 48,
            noise: 2.0,
            seed: 0,
            train_fraction: 0.8,
            val_fraction: 0.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.classes < 2 {
            return fail("synthetic data needs at least 2 classes");
        }
        if self.per_class == 0 {
            return fail("per_class must be positive");
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return fail("frame range must satisfy 0 < min <= max");
        }
        if !(self.noise >= 0.0) {
            return fail("noise must be nonnegative");
        }
        let (a, b) = (self.train_fraction, self.val_fraction);
        if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0) {
            return fail("split fractions must be nonnegative and sum to at most 1");
        }
        Ok(())
    }

    /// Train and validation counts per class: `round(n * fraction)` each,
    /// validation capped so the two never exceed `n`; the rest is test.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let n = self.per_class;
        let train = ((n as f64 * self.train_fraction).round() as usize).min(n);
        let val = ((n as f64 * self.val_fraction).round() as usize).min(n - train);
        (train, val, n - train - val)
    }

    fn split_of(&self, index: usize) -> Split {
        let (train, val, _) = self.split_counts();
        if index < train {
            Split::Train
        } else if index < train + val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

fn curve_point(curve: Curve, u: f64, cycles: usize) -> (f64, f64) {
    let phi = TAU * u * cycles as f64;
    match curve {
        Curve::Circle => (phi.cos(), phi.sin()),
        Curve::HorizontalLine => (phi.sin(), 0.0),
        Curve::VerticalLine => (0.0, phi.sin()),
        Curve::Zigzag => {
            let x = 2.0 * (u * cycles as f64).fract() - 1.0;
            let tri = (4.0 * u * cycles as f64).fract();
            let y = if tri < 0.5 { 4.0 * tri - 1.0 } else { 3.0 - 4.0 * tri };
            (x, 0.5 * y)
        }
        Curve::FigureEight => (phi.sin(), 0.5 * (2.0 * phi).sin()),
        Curve::Diagonal => (0.7 * phi.sin(), 0.7 * phi.sin()),
        Curve::Tap => (0.0, -1.6 + 0.25 * (3.0 * phi).sin()),
    }
}

/// Finger landmark offsets for a hand pointing up, thumb toward the body
/// midline on the right hand (mirrored for the left).
const FINGERS: [(f64, f64); 10] = [
    (0.0, 0.0),
    (25.0, -25.0),
    (12.0, -30.0),
    (14.0, -60.0),
    (0.0, -32.0),
    (0.0, -66.0),
    (-10.0, -30.0),
    (-12.0, -58.0),
    (-20.0, -26.0),
    (-24.0, -48.0),
];

type Pose = [(f64, f64); NUM_NODES];

fn place_arm(pose: &mut Pose, shoulder: usize, elbow: usize, hand_start: usize, wrist: (f64, f64), side: f64, angle: f64) {
    let s = pose[shoulder];
    let mid = ((s.0 + wrist.0) / 2.0, (s.1 + wrist.1) / 2.0);
    pose[elbow] = (mid.0 - side * 25.0, mid.1 + 10.0);
    let (sin, cos) = angle.sin_cos();
    for (k, &(dx, dy)) in FINGERS.iter().enumerate() {
        let dx = dx * side;
        pose[hand_start + k] = (wrist.0 + cos * dx - sin * dy, wrist.1 + sin * dx + cos * dy);
    }
}

/// Noise-free pose at normalised time `u`, before the per-sequence offset.
pub fn render_pose(class: usize, u: f64) -> Pose {
    let (curve, mover, cycles) = class_motion(class);
    let mut pose = [(0.0, 0.0); NUM_NODES];
    pose[NOSE] = (320.0, 140.0);
    pose[LEFT_EYE] = (335.0, 125.0);
    pose[RIGHT_EYE] = (305.0, 125.0);
    pose[LEFT_SHOULDER] = (400.0, 230.0);
    pose[RIGHT_SHOULDER] = (240.0, 230.0);
    let radius = 60.0;
    let (cx, cy) = curve_point(curve, u, cycles);
    let swing = 0.3 * (TAU * u * cycles as f64).sin();
    // right side of the signer sits at smaller image x; side = +1 there
    let right_active = matches!(mover, Mover::Right | Mover::Both);
    let left_active = matches!(mover, Mover::Left | Mover::Both);
    let right_wrist = if right_active { (270.0 + radius * cx, 300.0 + radius * cy) } else { (215.0, 420.0) };
    let left_wrist = if left_active { (370.0 - radius * cx, 300.0 + radius * cy) } else { (425.0, 420.0) };
    let rest = std::f64::consts::PI;
    place_arm(&mut pose, RIGHT_SHOULDER, RIGHT_ELBOW, RIGHT_HAND_START, right_wrist, 1.0, if right_active { swing } else { rest });
    place_arm(&mut pose, LEFT_SHOULDER, LEFT_ELBOW, LEFT_HAND_START, left_wrist, -1.0, if left_active { -swing } else { rest });
    pose
}

/// One sequence of class `class`; depends only on `(spec.seed, class, index)`.
pub fn generate_sequence(spec: &SyntheticSpec, class: usize, index: usize) -> SkeletonSequence {
    let id = format!("syn-c{class:02}-{index:03}");
    let mut rng = crate::rng::keyed(spec.seed, &id);
    let frames = rng.random_range(spec.frames_min..=spec.frames_max);
    let scale = rng.random_range(0.9..1.1);
    let shift = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
    let jitter = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("finite noise");
    let (w, h) = (f64::from(FRAME_SIZE.0), f64::from(FRAME_SIZE.1));
    let mut out = Array3::zeros((frames, NUM_NODES, 2));
    for t in 0..frames {
        let u = if frames > 1 { t as f64 / (frames - 1) as f64 } else { 0.0 };
        for (n, &(x, y)) in render_pose(class, u).iter().enumerate() {
            let mut x = 320.0 + (x - 320.0) * scale + shift.0;
            let mut y = 240.0 + (y - 240.0) * scale + shift.1;
            if spec.noise > 0.0 {
                x += jitter.sample(&mut rng);
                y += jitter.sample(&mut rng);
            }
            out[[t, n, 0]] = x.clamp(0.0, w) as f32;
            out[[t, n, 1]] = y.clamp(0.0, h) as f32;
        }
    }
    SkeletonSequence::new(id, Some(class), FPS, FRAME_SIZE, out).expect("finite synthetic sequence")
}

/// All sequences with their split tags, class-major.
pub fn generate_sequences(spec: &SyntheticSpec) -> Result<Vec<(SkeletonSequence, Split)>> {
    spec.validate()?;
    Ok((0..spec.classes)
        .flat_map(|c| (0..spec.per_class).map(move |i| (c, i)))
        .map(|(c, i)| (generate_sequence(spec, c, i), spec.split_of(i)))
        .collect())
}

/// Writes one file per sequence plus `manifest.txt` into `dir` and returns
/// the manifest path.
pub fn generate_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let seqs = generate_sequences(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = DatasetManifest {
        class_names: (0..spec.classes).map(class_name).collect(),
        entries: Vec::with_capacity(seqs.len()),
    };
    for (seq, split) in &seqs {
        let file = PathBuf::from(format!("{}.seq", seq.id));
        save_sequence(seq, &dir.join(&file))?;
        manifest.entries.push(ManifestEntry {
            path: file,
            label: seq.label.expect("synthetic sequences are labeled"),
            split: *split,
            signer: None,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    save_manifest(&manifest, &path)?;
    Ok((manifest, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{normalize_bbox, uniform_indices};

    #[test]
    fn coordinates_finite_and_in_frame() {
        let spec = SyntheticSpec {
            classes: 20,
            per_class: 2,
            ..SyntheticSpec::default()
        };
        for (seq, _) in generate_sequences(&spec).unwrap() {
            for p in seq.frames.outer_iter().flat_map(|f| f.outer_iter().map(|p| (p[0], p[1])).collect::<Vec<_>>()) {
                assert!(p.0.is_finite() && (0.0..=640.0).contains(&p.0));
                assert!(p.1.is_finite() && (0.0..=480.0).contains(&p.1));
            }
        }
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec::default();
        assert_eq!(generate_sequence(&spec, 3, 7), generate_sequence(&spec, 3, 7));
        assert_ne!(generate_sequence(&spec, 3, 7).frames, generate_sequence(&spec, 3, 8).frames);
    }

    #[test]
    fn split_rounding() {
        let spec = SyntheticSpec::default();
        assert_eq!(spec.split_counts(), (16, 0, 4));
        let spec = SyntheticSpec {
            per_class: 7,
            train_fraction: 0.5,
            val_fraction: 0.25,
            ..SyntheticSpec::default()
        };
        // 3.5 rounds to 4, 1.75 rounds to 2
        assert_eq!(spec.split_counts(), (4, 2, 1));
    }

    fn resampled(seq: &SkeletonSequence) -> Vec<f32> {
        let n = normalize_bbox(seq).unwrap();
        let idx = uniform_indices(n.num_frames(), 32);
        n.select_frames(&idx).frames.iter().copied().collect()
    }

    #[test]
    fn nearest_template_separates_classes() {
        let spec = SyntheticSpec {
            classes: 16,
            per_class: 10,
            noise: 0.0,
            ..SyntheticSpec::default()
        };
        let seqs = generate_sequences(&spec).unwrap();
        let templates: Vec<Vec<f32>> = (0..spec.classes).map(|c| resampled(&seqs[c * spec.per_class].0)).collect();
        for (seq, _) in &seqs {
            let v = resampled(seq);
            let best = (0..spec.classes)
                .min_by(|&a, &b| {
                    let d = |t: &Vec<f32>| t.iter().zip(&v).map(|(p, q)| (p - q) * (p - q)).sum::<f32>();
                    d(&templates[a]).total_cmp(&d(&templates[b]))
                })
                .unwrap();
            assert_eq!(Some(best), seq.label, "{}", seq.id);
        }
    }
}
