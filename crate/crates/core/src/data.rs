//! JSON-lines annotations and a synthetic stick-figure dataset.
//!
//! Annotation file: one JSON object per line with the fields
//! `image` (path relative to the dataset root), `crop` (`{x, y, width,
//! height}` in image pixels), `keypoints` (map from keypoint name to
//! `{x, y, visibility}` in crop pixels), `head_size` (pixels or null) and
//! `split` (`train`, `val` or `test`).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::raster::{Image, Rect};
use crate::rng::stream_rng;
use crate::skeleton::{Keypoint, KeypointId, KeypointSet, Visibility, NUM_KEYPOINTS};
use crate::{Error, Result};

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown split `{s}` (expected train, val or test)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub image: String,
    pub crop: Rect,
    pub keypoints: KeypointSet,
    pub head_size: Option<f64>,
    pub split: Split,
}

impl AnnotationRecord {
    /// Checks the record invariants; `index` is used in error messages.
    pub fn validate(&self, index: usize) -> Result<()> {
        let err = |field: &str, message: String| Error::Annotation {
            index,
            field: field.into(),
            message,
        };
        if self.crop.width <= 0 || self.crop.height <= 0 {
            return Err(err("crop", format!("non-positive area {}x{}", self.crop.width, self.crop.height)));
        }
        let bounds = Rect::new(0, 0, self.crop.width, self.crop.height);
        for (id, k) in self.keypoints.iter() {
            if k.is_annotated() && !(k.x.is_finite() && k.y.is_finite() && bounds.contains(k.x, k.y)) {
                return Err(err(
                    &format!("keypoints.{id}"),
                    format!("({}, {}) lies outside the crop", k.x, k.y),
                ));
            }
        }
        if let Some(h) = self.head_size {
            if !(h > 0.0 && h.is_finite()) {
                return Err(err("head_size", format!("must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Parses one JSONL line, reporting the offending field on failure.
pub fn parse_record(line: &str, index: usize) -> Result<AnnotationRecord> {
    let de = &mut serde_json::Deserializer::from_str(line);
    let record: AnnotationRecord = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Annotation {
            index,
            field: if path == "." { "<record>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    record.validate(index)?;
    Ok(record)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::Missing {
        path: path.to_path_buf(),
        message: format!("cannot open annotations: {e}"),
    })?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, out.len())?);
    }
    Ok(out)
}

pub fn save_annotations(records: &[AnnotationRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Segment lengths as fractions of the standing figure height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimbProportions {
    pub head: f64,
    pub neck: f64,
    pub torso: f64,
    pub shoulder_half_width: f64,
    pub hip_half_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub thigh: f64,
    pub shin: f64,
}

impl Default for LimbProportions {
    fn default() -> Self {
        Self {
            head: 0.17,
            neck: 0.05,
            torso: 0.30,
            shoulder_half_width: 0.11,
            hip_half_width: 0.07,
            upper_arm: 0.18,
            forearm: 0.16,
            thigh: 0.24,
            shin: 0.24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimbColors {
    pub right: [f32; 3],
    pub left: [f32; 3],
    pub torso: [f32; 3],
    pub head: [f32; 3],
}

impl Default for LimbColors {
    fn default() -> Self {
        Self {
            right: [220.0, 60.0, 50.0],
            left: [50.0, 90.0, 220.0],
            torso: [60.0, 170.0, 80.0],
            head: [235.0, 200.0, 150.0],
        }
    }
}

/// Pose of one stick figure. Angles are radians; limb angles swing the
/// limb outwards (away from the body midline) from hanging straight down,
/// and `[right, left]` pairs use the same convention on both sides so equal
/// values give a mirror-symmetric pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPoseSpec {
    /// Pelvis position in crop pixels.
    pub pelvis: (f64, f64),
    /// Standing height in pixels.
    pub height: f64,
    /// Torso lean; positive turns the torso clockwise on screen.
    pub torso_angle: f64,
    /// Head tilt relative to the torso.
    pub neck_angle: f64,
    pub shoulder: [f64; 2],
    /// Elbow bend relative to the upper arm.
    pub elbow: [f64; 2],
    pub hip: [f64; 2],
    /// Knee bend relative to the thigh.
    pub knee: [f64; 2],
    pub limbs: LimbProportions,
    pub background_seed: u64,
    pub colors: LimbColors,
}

impl SyntheticPoseSpec {
    /// Upright, arms and legs hanging straight, centred in the crop.
    pub fn identity(resolution: (usize, usize)) -> Self {
        let limbs = LimbProportions::default();
        let height = 0.8 * resolution.0 as f64;
        let up = limbs.head + limbs.neck + limbs.torso;
        let down = limbs.thigh + limbs.shin;
        let cx = (resolution.1 as f64 - 1.0) / 2.0;
        let cy = (resolution.0 as f64 - 1.0) / 2.0 + (up - down) / 2.0 * height;
        Self {
            pelvis: (cx, cy),
            height,
            torso_angle: 0.0,
            neck_angle: 0.0,
            shoulder: [0.0; 2],
            elbow: [0.0; 2],
            hip: [0.0; 2],
            knee: [0.0; 2],
            limbs,
            background_seed: 0,
            colors: LimbColors::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.limbs;
        let lengths = [
            l.head,
            l.neck,
            l.torso,
            l.shoulder_half_width,
            l.hip_half_width,
            l.upper_arm,
            l.forearm,
            l.thigh,
            l.shin,
        ];
        if !(self.height > 0.0) || lengths.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("figure height and limb lengths must be positive".into()));
        }
        let angles = [self.torso_angle, self.neck_angle]
            .into_iter()
            .chain(self.shoulder)
            .chain(self.elbow)
            .chain(self.hip)
            .chain(self.knee);
        for a in angles {
            if !(a.abs() <= std::f64::consts::PI) {
                return Err(Error::InvalidConfig(format!("joint angle {a} outside [-pi, pi]")));
            }
        }
        Ok(())
    }
}

/// Continuous joint positions in crop pixels, indexed by keypoint.
pub fn forward_kinematics(spec: &SyntheticPoseSpec) -> [(f64, f64); NUM_KEYPOINTS] {
    use KeypointId::*;
    let h = spec.height;
    let l = &spec.limbs;
    let (s, c) = spec.torso_angle.sin_cos();
    // Body-up and body-right (the figure's left, image right) unit vectors.
    let up = (s, -c);
    let side = (c, s);
    let at = |o: (f64, f64), d: (f64, f64), len: f64| (o.0 + d.0 * len * h, o.1 + d.1 * len * h);
    // Direction at `angle` from body-down, swung towards `outward`.
    let swing = |angle: f64, outward: (f64, f64)| {
        let (sa, ca) = angle.sin_cos();
        (-up.0 * ca + outward.0 * sa, -up.1 * ca + outward.1 * sa)
    };
    let mut p = [(0.0, 0.0); NUM_KEYPOINTS];
    let pelvis = spec.pelvis;
    let thorax = at(pelvis, up, l.torso);
    let (sn, cn) = spec.neck_angle.sin_cos();
    let head_dir = (up.0 * cn - up.1 * sn, up.0 * sn + up.1 * cn);
    let neck = at(thorax, head_dir, l.neck);
    p[Pelvis.index()] = pelvis;
    p[Thorax.index()] = thorax;
    p[UpperNeck.index()] = neck;
    p[HeadTop.index()] = at(neck, head_dir, l.head);
    // The figure faces the viewer: its right side is on the image left.
    let sides = [(-1.0, [RShoulder, RElbow, RWrist, RHip, RKnee, RAnkle]), (1.0, [LShoulder, LElbow, LWrist, LHip, LKnee, LAnkle])];
    for (i, (sign, [sh, el, wr, hp, kn, an])) in sides.into_iter().enumerate() {
        let out = (side.0 * sign, side.1 * sign);
        let shoulder = at(thorax, out, l.shoulder_half_width);
        let elbow = at(shoulder, swing(spec.shoulder[i], out), l.upper_arm);
        let wrist = at(elbow, swing(spec.shoulder[i] + spec.elbow[i], out), l.forearm);
        let hip = at(pelvis, out, l.hip_half_width);
        let knee = at(hip, swing(spec.hip[i], out), l.thigh);
        let ankle = at(knee, swing(spec.hip[i] + spec.knee[i], out), l.shin);
        p[sh.index()] = shoulder;
        p[el.index()] = elbow;
        p[wr.index()] = wrist;
        p[hp.index()] = hip;
        p[kn.index()] = knee;
        p[an.index()] = ankle;
    }
    p
}

/// Annotation of a spec: joint positions snapped to the pixel grid;
/// joints outside the crop are unannotated.
pub fn annotate(spec: &SyntheticPoseSpec, resolution: (usize, usize)) -> KeypointSet {
    let p = forward_kinematics(spec);
    let mut k = KeypointSet(std::array::from_fn(|n| Keypoint::visible(p[n].0.round(), p[n].1.round())));
    k.clip_to_bounds(resolution.1, resolution.0);
    k
}

/// Sampling ranges for random specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecRanges {
    /// Figure height as a fraction of the crop height.
    pub height_fraction: (f64, f64),
    /// Pelvis jitter as a fraction of the crop size.
    pub pelvis_jitter: f64,
    pub torso_angle: (f64, f64),
    pub neck_angle: (f64, f64),
    pub shoulder: (f64, f64),
    pub elbow: (f64, f64),
    pub hip: (f64, f64),
    pub knee: (f64, f64),
    /// Relative jitter applied to every limb proportion.
    pub limb_jitter: f64,
    /// Probability of a partial second figure behind the subject.
    pub distractor_probability: f64,
    /// Horizontal distractor offset as a fraction of the crop width.
    pub distractor_offset: (f64, f64),
    /// Maximum number of clutter strokes in the background.
    pub max_clutter: usize,
    /// Maximum number of strokes drawn over the subject. Keypoints they
    /// cover stay annotated but are flagged occluded.
    pub max_occluders: usize,
}

impl Default for SpecRanges {
    fn default() -> Self {
        Self {
            height_fraction: (0.7, 0.85),
            pelvis_jitter: 0.06,
            torso_angle: (-0.35, 0.35),
            neck_angle: (-0.3, 0.3),
            shoulder: (-0.3, 2.6),
            elbow: (-0.4, 2.2),
            hip: (-0.15, 0.8),
            knee: (-1.0, 0.4),
            limb_jitter: 0.08,
            distractor_probability: 0.25,
            distractor_offset: (0.45, 0.7),
            max_clutter: 4,
            max_occluders: 0,
        }
    }
}

impl SpecRanges {
    /// Wider poses, overlapping distractors and foreground occluders.
    pub fn hard() -> Self {
        Self {
            height_fraction: (0.6, 0.9),
            pelvis_jitter: 0.1,
            torso_angle: (-0.6, 0.6),
            neck_angle: (-0.4, 0.4),
            shoulder: (-0.6, 3.0),
            elbow: (-0.6, 2.6),
            hip: (-0.5, 1.4),
            knee: (-1.6, 0.6),
            limb_jitter: 0.12,
            distractor_probability: 0.6,
            distractor_offset: (0.25, 0.55),
            max_clutter: 8,
            max_occluders: 2,
        }
    }
}

impl SpecRanges {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            self.height_fraction,
            self.torso_angle,
            self.neck_angle,
            self.shoulder,
            self.elbow,
            self.hip,
            self.knee,
            self.distractor_offset,
        ];
        if pairs.iter().any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidConfig("spec ranges must be ordered (lo <= hi)".into()));
        }
        if !(self.height_fraction.0 > 0.0) || !(0.0..1.0).contains(&self.limb_jitter) {
            return Err(Error::InvalidConfig("height fraction must be > 0 and limb jitter in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.distractor_probability) || self.pelvis_jitter < 0.0 {
            return Err(Error::InvalidConfig("distractor probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, resolution: (usize, usize), rng: &mut R) -> SyntheticPoseSpec {
        let mut u = |r: (f64, f64)| if r.1 > r.0 { rng.random_range(r.0..=r.1) } else { r.0 };
        let mut spec = SyntheticPoseSpec::identity(resolution);
        spec.height = u(self.height_fraction) * resolution.0 as f64;
        spec.torso_angle = u(self.torso_angle);
        spec.neck_angle = u(self.neck_angle);
        spec.shoulder = [u(self.shoulder), u(self.shoulder)];
        spec.elbow = [u(self.elbow), u(self.elbow)];
        spec.hip = [u(self.hip), u(self.hip)];
        spec.knee = [u(self.knee), u(self.knee)];
        let j = self.limb_jitter;
        let l = &mut spec.limbs;
        for v in [
            &mut l.head,
            &mut l.neck,
            &mut l.torso,
            &mut l.shoulder_half_width,
            &mut l.hip_half_width,
            &mut l.upper_arm,
            &mut l.forearm,
            &mut l.thigh,
            &mut l.shin,
        ] {
            *v *= u((1.0 - j, 1.0 + j));
        }
        let up = l.head + l.neck + l.torso;
        let down = l.thigh + l.shin;
        let jit = self.pelvis_jitter;
        spec.pelvis = (
            (resolution.1 as f64 - 1.0) / 2.0 + u((-jit, jit)) * resolution.1 as f64,
            (resolution.0 as f64 - 1.0) / 2.0 + (up - down) / 2.0 * spec.height + u((-jit, jit)) * resolution.0 as f64,
        );
        let shade = |c: [f32; 3], u: &mut dyn FnMut((f64, f64)) -> f64| c.map(|v| (v + u((-25.0, 25.0)) as f32).clamp(0.0, 255.0));
        let base = LimbColors::default();
        spec.colors = LimbColors {
            right: shade(base.right, &mut u),
            left: shade(base.left, &mut u),
            torso: shade(base.torso, &mut u),
            head: shade(base.head, &mut u),
        };
        spec.background_seed = rng.random();
        spec
    }
}

fn draw_figure(img: &mut Image, spec: &SyntheticPoseSpec, joints: &[(f64, f64); NUM_KEYPOINTS]) {
    use KeypointId::*;
    let h = spec.height;
    let limb = (0.05 * h).max(1.5);
    let j = |k: KeypointId| joints[k.index()];
    let darker = |c: [f32; 3]| c.map(|v| v * 0.7);
    let c = spec.colors;
    img.draw_segment(j(RShoulder), j(LShoulder), limb, c.torso);
    img.draw_segment(j(RHip), j(LHip), limb, c.torso);
    img.draw_segment(j(Thorax), j(Pelvis), 0.09 * h, c.torso);
    img.draw_segment(j(Thorax), j(UpperNeck), limb, darker(c.torso));
    for (col, [sh, el, wr, hp, kn, an]) in [
        (c.left, [LShoulder, LElbow, LWrist, LHip, LKnee, LAnkle]),
        (c.right, [RShoulder, RElbow, RWrist, RHip, RKnee, RAnkle]),
    ] {
        img.draw_segment(j(hp), j(kn), limb * 1.2, col);
        img.draw_segment(j(kn), j(an), limb, darker(col));
        img.draw_disc(j(an), limb * 0.9, [40.0, 40.0, 40.0]);
        img.draw_segment(j(sh), j(el), limb, col);
        img.draw_segment(j(el), j(wr), limb * 0.9, darker(col));
        img.draw_disc(j(wr), limb * 0.8, [250.0, 250.0, 250.0]);
    }
    let (top, neck) = (j(HeadTop), j(UpperNeck));
    let centre = ((top.0 + neck.0) / 2.0, (top.1 + neck.1) / 2.0);
    let r = ((top.0 - neck.0).hypot(top.1 - neck.1) / 2.0).max(1.0);
    img.draw_disc(centre, r, c.head);
}

fn draw_background<R: Rng + ?Sized>(img: &mut Image, seed: u64, clutter: usize, rng: &mut R) {
    let mut bg = stream_rng(seed, 0);
    let base: [f64; 3] = std::array::from_fn(|_| bg.random_range(60.0..190.0));
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            (
                bg.random_range(0.02..0.25),
                bg.random_range(0.0..std::f64::consts::TAU),
                bg.random_range(0.0..std::f64::consts::TAU),
                std::array::from_fn(|_| bg.random_range(-30.0..30.0)),
            )
        })
        .collect();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let mut px = base;
            for (f, theta, phase, amp) in &waves {
                let t = (f * (x as f64 * theta.cos() + y as f64 * theta.sin()) + phase).sin();
                for ch in 0..3 {
                    px[ch] += amp[ch] * t;
                }
            }
            let noise = bg.random_range(-8.0..8.0);
            img.set(x, y, px.map(|v| (v + noise).round().clamp(0.0, 255.0) as u8));
        }
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    for _ in 0..rng.random_range(0..=clutter) {
        let a = (rng.random_range(0.0..w), rng.random_range(0.0..h));
        let b = (a.0 + rng.random_range(-0.3..0.3) * w, a.1 + rng.random_range(-0.3..0.3) * h);
        let col: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.0..255.0));
        img.draw_segment(a, b, rng.random_range(1.0..0.06 * w + 1.5), col);
    }
}

fn draw_occluders<R: Rng + ?Sized>(img: &mut Image, keypoints: &mut KeypointSet, max: usize, rng: &mut R) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    for _ in 0..rng.random_range(0..=max) {
        let a = (rng.random_range(0.15..0.85) * w, rng.random_range(0.15..0.85) * h);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let len = rng.random_range(0.1..0.3) * w;
        let b = (a.0 + len * theta.cos(), a.1 + len * theta.sin());
        let thickness = rng.random_range(0.06..0.12) * w;
        let col: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.0..255.0));
        img.draw_segment(a, b, thickness, col);
        for id in KeypointId::ALL {
            let k = keypoints.get_mut(id);
            if k.is_annotated() && segment_distance((k.x, k.y), a, b) <= thickness / 2.0 {
                k.visibility = Visibility::OccludedAnnotated;
            }
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p.0 - a.0 - t * vx).hypot(p.1 - a.1 - t * vy)
}

/// Renders one sample. The record's image path is empty, its crop covers
/// the whole image and its split is `train`; callers fill these in.
pub fn generate_synthetic_sample<R: Rng + ?Sized>(
    spec: &SyntheticPoseSpec,
    resolution: (usize, usize),
    ranges: &SpecRanges,
    rng: &mut R,
) -> (Image, AnnotationRecord) {
    let (h, w) = resolution;
    let mut img = Image::new(w, h);
    draw_background(&mut img, spec.background_seed, ranges.max_clutter, rng);
    if ranges.distractor_probability > 0.0 && rng.random_bool(ranges.distractor_probability) {
        let mut other = ranges.sample(resolution, rng);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (lo, hi) = ranges.distractor_offset;
        let offset = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        other.pelvis.0 += side * offset * w as f64;
        draw_figure(&mut img, &other, &forward_kinematics(&other));
    }
    let mut keypoints = annotate(spec, resolution);
    // Draw with the snapped positions so pixels and labels agree exactly.
    let mut snapped = forward_kinematics(spec);
    for p in snapped.iter_mut() {
        *p = (p.0.round(), p.1.round());
    }
    draw_figure(&mut img, spec, &snapped);
    if ranges.max_occluders > 0 {
        draw_occluders(&mut img, &mut keypoints, ranges.max_occluders, rng);
    }
    let head_size = {
        let (a, b) = (snapped[KeypointId::HeadTop.index()], snapped[KeypointId::UpperNeck.index()]);
        Some((a.0 - b.0).hypot(a.1 - b.1)).filter(|d| *d > 0.0)
    };
    let record = AnnotationRecord {
        image: String::new(),
        crop: Rect::new(0, 0, w as i64, h as i64),
        keypoints,
        head_size,
        split: Split::Train,
    };
    (img, record)
}

/// Everything needed to regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetManifest {
    pub seed: u64,
    pub count: usize,
    pub resolution: (usize, usize),
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub ranges: SpecRanges,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 64,
            resolution: (64, 64),
            val_fraction: 0.2,
            test_fraction: 0.0,
            ranges: SpecRanges::default(),
        }
    }
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidConfig("empty dataset: count must be >= 1".into()));
        }
        if self.resolution.0 < 8 || self.resolution.1 < 8 {
            return Err(Error::InvalidConfig("resolution must be at least 8x8".into()));
        }
        let f = (self.val_fraction, self.test_fraction);
        if !(f.0 >= 0.0 && f.1 >= 0.0 && f.0 + f.1 <= 1.0) {
            return Err(Error::InvalidConfig("split fractions must be >= 0 and sum to <= 1".into()));
        }
        self.ranges.validate()
    }

    /// Split of sample `index`: train first, then val, then test.
    pub fn split_of(&self, index: usize) -> Split {
        let n_val = (self.count as f64 * self.val_fraction).round() as usize;
        let n_test = (self.count as f64 * self.test_fraction).round() as usize;
        let n_train = self.count.saturating_sub(n_val + n_test);
        if index < n_train {
            Split::Train
        } else if index < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// Image plus its annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub record: AnnotationRecord,
}

/// Sample `index` of the dataset described by `manifest`.
pub fn synthesize(manifest: &DatasetManifest, index: usize) -> Sample {
    let mut rng = stream_rng(manifest.seed, index as u64);
    let spec = manifest.ranges.sample(manifest.resolution, &mut rng);
    let (image, mut record) = generate_synthetic_sample(&spec, manifest.resolution, &manifest.ranges, &mut rng);
    record.image = format!("{IMAGES_DIR}/{index:06}.png");
    record.split = manifest.split_of(index);
    Sample { image, record }
}

/// All samples of a manifest, generated in parallel.
pub fn generate_samples(manifest: &DatasetManifest) -> Result<Vec<Sample>> {
    manifest.validate()?;
    Ok(poseforge_nn::par::map_indexed(manifest.count, |i| synthesize(manifest, i)))
}

/// An on-disk dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Option<DatasetManifest>,
    pub records: Vec<AnnotationRecord>,
}

impl Dataset {
    pub fn records(&self, split: Split) -> impl Iterator<Item = &AnnotationRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.records(split).count()
    }

    /// Loads the images of `split`, cropped to their crop rectangles.
    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        let records: Vec<&AnnotationRecord> = self.records(split).collect();
        poseforge_nn::par::map_indexed(records.len(), |i| {
            let r = records[i];
            let path = self.root.join(&r.image);
            let full = Image::load_png(&path).map_err(|e| Error::Missing {
                path: path.clone(),
                message: format!("cannot read image: {e}"),
            })?;
            if !r.crop.inside(full.width(), full.height()) {
                return Err(Error::InvalidInput(format!("{}: crop {:?} exceeds the image", r.image, r.crop)));
            }
            let image = if r.crop == Rect::new(0, 0, full.width() as i64, full.height() as i64) {
                full
            } else {
                full.crop(r.crop)
            };
            Ok(Sample {
                image,
                record: r.clone(),
            })
        })
        .into_iter()
        .collect()
    }
}

/// Writes the dataset described by `manifest` under `root`.
pub fn generate_dataset(manifest: &DatasetManifest, root: &Path) -> Result<Dataset> {
    let samples = generate_samples(manifest)?;
    fs::create_dir_all(root.join(IMAGES_DIR))?;
    poseforge_nn::par::map_indexed(samples.len(), |i| samples[i].image.save_png(&root.join(&samples[i].record.image)))
        .into_iter()
        .collect::<Result<Vec<()>>>()?;
    let records: Vec<AnnotationRecord> = samples.into_iter().map(|s| s.record).collect();
    save_annotations(&records, &root.join(ANNOTATIONS_FILE))?;
    fs::write(root.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(Dataset {
        root: root.to_path_buf(),
        manifest: Some(manifest.clone()),
        records,
    })
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let ann = root.join(ANNOTATIONS_FILE);
    if !ann.is_file() {
        return Err(Error::Missing {
            path: root.to_path_buf(),
            message: format!("no dataset here (missing {ANNOTATIONS_FILE}); run `poseforge gen` first"),
        });
    }
    let records = load_annotations(&ann)?;
    let manifest_path = root.join(MANIFEST_FILE);
    let manifest = if manifest_path.is_file() {
        Some(serde_json::from_str(&fs::read_to_string(manifest_path)?)?)
    } else {
        None
    };
    Ok(Dataset {
        root: root.to_path_buf(),
        manifest,
        records,
    })
}

/// SHA-256 over the annotation file and every image, in path order.
pub fn dataset_checksum(dataset: &Dataset) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(fs::read(dataset.root.join(ANNOTATIONS_FILE))?);
    let mut paths: Vec<&str> = dataset.records.iter().map(|r| r.image.as_str()).collect();
    paths.sort_unstable();
    paths.dedup();
    for p in paths {
        hasher.update(p.as_bytes());
        hasher.update(fs::read(dataset.root.join(p))?);
    }
    Ok(hex(&hasher.finalize()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Visibility of every keypoint, for quick summaries.
pub fn visibility_counts(records: &[AnnotationRecord]) -> [usize; 3] {
    let mut c = [0; 3];
    for r in records {
        for (_, k) in r.keypoints.iter() {
            c[match k.visibility {
                Visibility::Visible => 0,
                Visibility::OccludedAnnotated => 1,
                Visibility::Unannotated => 2,
            }] += 1;
        }
    }
    c
}
