//! Keypoint-masking augmentation (background occlusion and keypoint
//! duplication) plus rotation/scale, flip and colour jitter.
//!
//! Masking never moves an annotation. Background occlusion keeps the covered
//! keypoint as a training target and marks it `occluded_annotated`; keypoint
//! duplication pastes a distractor and leaves annotations untouched.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{Image, Rect};
use crate::skeleton::{KeypointId, KeypointSet, Visibility};
use crate::{Error, Result};

/// Rejection-sampling budget for finding a valid patch location.
pub const MAX_PATCH_ATTEMPTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchSide {
    /// Multiple of the head-segment length of the sample.
    HeadFraction(f64),
    Pixels(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingWeights {
    pub background_occlusion: f64,
    pub keypoint_duplicate: f64,
}

impl Default for MaskingWeights {
    fn default() -> Self {
        Self {
            background_occlusion: 1.0,
            keypoint_duplicate: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Apply rotation and scaling.
    pub geometric: bool,
    /// Rotation is drawn from `±rotation_deg`.
    pub rotation_deg: f64,
    pub scale_range: (f64, f64),
    /// Per-sample probability of one masking application.
    pub mask_probability: f64,
    pub patch_side: PatchSide,
    /// Lower bound on the patch side as a fraction of the crop width.
    pub min_patch_fraction: f64,
    pub masking_mode_weights: MaskingWeights,
    pub flip_probability: f64,
    /// Maximum relative brightness/contrast change; 0 disables jitter.
    pub color_jitter: f64,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            geometric: true,
            rotation_deg: 30.0,
            scale_range: (0.75, 1.25),
            mask_probability: 0.5,
            patch_side: PatchSide::HeadFraction(1.0),
            min_patch_fraction: 8.0 / 256.0,
            masking_mode_weights: MaskingWeights::default(),
            flip_probability: 0.0,
            color_jitter: 0.0,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.rotation_deg >= 0.0) {
            return Err(Error::InvalidConfig("rotation_deg must be >= 0".into()));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidConfig(format!("scale_range ({lo}, {hi}) is not ordered and positive")));
        }
        if !prob(self.mask_probability) || !prob(self.flip_probability) {
            return Err(Error::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        let w = self.masking_mode_weights;
        if w.background_occlusion < 0.0 || w.keypoint_duplicate < 0.0 {
            return Err(Error::InvalidConfig("masking weights must be >= 0".into()));
        }
        if self.mask_probability > 0.0 && w.background_occlusion + w.keypoint_duplicate <= 0.0 {
            return Err(Error::InvalidConfig("masking weights are both zero".into()));
        }
        match self.patch_side {
            PatchSide::HeadFraction(f) if !(f > 0.0) => {
                Err(Error::InvalidConfig("patch head fraction must be > 0".into()))
            }
            PatchSide::Pixels(0) => Err(Error::InvalidConfig("patch side must be > 0".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskingMode {
    BackgroundOcclusion,
    KeypointDuplicate,
}

/// Log entry describing one applied operation and its sampled parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AppliedOp {
    Geometric {
        angle_deg: f64,
        scale: f64,
    },
    Flip,
    ColorJitter {
        gain: f64,
        bias: f64,
    },
    Masking {
        mode: MaskingMode,
        keypoint: KeypointId,
        source: Rect,
        destination: Rect,
    },
    NoOp {
        mode: MaskingMode,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub image: Image,
    pub keypoints: KeypointSet,
    pub applied_ops: Vec<AppliedOp>,
}

impl AugmentedSample {
    pub fn new(image: Image, keypoints: KeypointSet) -> Self {
        Self {
            image,
            keypoints,
            applied_ops: Vec::new(),
        }
    }

    fn no_op(mut self, mode: MaskingMode, reason: impl Into<String>) -> Self {
        let reason = reason.into();
        log::debug!("{mode:?} skipped: {reason}");
        self.applied_ops.push(AppliedOp::NoOp { mode, reason });
        self
    }
}

/// Patch side in pixels for this sample.
pub fn patch_side_px(keypoints: &KeypointSet, image: &Image, cfg: &AugmentConfig) -> usize {
    let raw = match cfg.patch_side {
        PatchSide::Pixels(p) => p as f64,
        PatchSide::HeadFraction(f) => {
            let (top, neck) = (keypoints.get(KeypointId::HeadTop), keypoints.get(KeypointId::UpperNeck));
            let head = if top.is_annotated() && neck.is_annotated() {
                top.distance(neck)
            } else {
                image.width() as f64 / 8.0
            };
            f * head
        }
    };
    let floor = cfg.min_patch_fraction * image.width() as f64;
    (raw.max(floor).round() as usize).max(1)
}

/// `side × side` rect centred on `(cx, cy)`, shifted to lie inside the image.
fn centered_rect(cx: f64, cy: f64, side: usize, image: &Image) -> Rect {
    let s = side as i64;
    let half = (side as f64 - 1.0) / 2.0;
    let x = ((cx - half).round() as i64).clamp(0, image.width() as i64 - s);
    let y = ((cy - half).round() as i64).clamp(0, image.height() as i64 - s);
    Rect::new(x, y, s, s)
}

fn contains_annotated(r: &Rect, k: &KeypointSet) -> bool {
    k.0.iter().any(|p| p.is_annotated() && r.contains(p.x, p.y))
}

fn annotated_ids(k: &KeypointSet) -> Vec<KeypointId> {
    k.iter().filter(|(_, p)| p.is_annotated()).map(|(id, _)| id).collect()
}

fn copy_patch(image: &mut Image, source: Rect, destination: Rect) {
    let patch = image.crop(source);
    image.paste(&patch, destination.x as usize, destination.y as usize);
}

/// Covers a uniformly chosen annotated keypoint with a background patch.
pub fn mask_background_occlusion<R: Rng + ?Sized>(
    sample: AugmentedSample,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> AugmentedSample {
    let ids = annotated_ids(&sample.keypoints);
    if ids.is_empty() {
        return sample.no_op(MaskingMode::BackgroundOcclusion, "no annotated keypoint");
    }
    let target = ids[rng.random_range(0..ids.len())];
    occlude_keypoint(sample, target, cfg, rng)
}

/// Background occlusion of a specific keypoint.
pub fn occlude_keypoint<R: Rng + ?Sized>(
    mut sample: AugmentedSample,
    target: KeypointId,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> AugmentedSample {
    let mode = MaskingMode::BackgroundOcclusion;
    let kp = *sample.keypoints.get(target);
    if !kp.is_annotated() {
        return sample.no_op(mode, format!("{target} is not annotated"));
    }
    let side = patch_side_px(&sample.keypoints, &sample.image, cfg);
    let (w, h) = (sample.image.width(), sample.image.height());
    if side > w || side > h {
        return sample.no_op(mode, format!("patch side {side} exceeds image {w}x{h}"));
    }
    let destination = centered_rect(kp.x, kp.y, side, &sample.image);
    for _ in 0..MAX_PATCH_ATTEMPTS {
        let source = Rect::new(
            rng.random_range(0..=(w - side)) as i64,
            rng.random_range(0..=(h - side)) as i64,
            side as i64,
            side as i64,
        );
        if contains_annotated(&source, &sample.keypoints) {
            continue;
        }
        copy_patch(&mut sample.image, source, destination);
        sample.keypoints.get_mut(target).visibility = Visibility::OccludedAnnotated;
        sample.applied_ops.push(AppliedOp::Masking {
            mode,
            keypoint: target,
            source,
            destination,
        });
        return sample;
    }
    sample.no_op(mode, format!("no background patch after {MAX_PATCH_ATTEMPTS} attempts"))
}

/// Copies the patch around a uniformly chosen annotated keypoint onto nearby
/// background, at a distance of one to three patch sides.
pub fn mask_keypoint_duplicate<R: Rng + ?Sized>(
    mut sample: AugmentedSample,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> AugmentedSample {
    let mode = MaskingMode::KeypointDuplicate;
    let ids = annotated_ids(&sample.keypoints);
    if ids.is_empty() {
        return sample.no_op(mode, "no annotated keypoint");
    }
    let target = ids[rng.random_range(0..ids.len())];
    let kp = *sample.keypoints.get(target);
    let side = patch_side_px(&sample.keypoints, &sample.image, cfg);
    let (w, h) = (sample.image.width(), sample.image.height());
    if side > w || side > h {
        return sample.no_op(mode, format!("patch side {side} exceeds image {w}x{h}"));
    }
    let source = centered_rect(kp.x, kp.y, side, &sample.image);
    for _ in 0..MAX_PATCH_ATTEMPTS {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = rng.random_range(side as f64..=3.0 * side as f64);
        let destination = centered_rect(
            kp.x + radius * theta.cos(),
            kp.y + radius * theta.sin(),
            side,
            &sample.image,
        );
        if destination == source || contains_annotated(&destination, &sample.keypoints) {
            continue;
        }
        copy_patch(&mut sample.image, source, destination);
        sample.applied_ops.push(AppliedOp::Masking {
            mode,
            keypoint: target,
            source,
            destination,
        });
        return sample;
    }
    sample.no_op(mode, format!("no background location after {MAX_PATCH_ATTEMPTS} attempts"))
}

/// With probability `mask_probability`, applies one masking operation whose
/// mode is drawn from the configured weights.
pub fn apply_keypoint_masking<R: Rng + ?Sized>(
    sample: AugmentedSample,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> AugmentedSample {
    if cfg.mask_probability <= 0.0 || !rng.random_bool(cfg.mask_probability.min(1.0)) {
        return sample;
    }
    let w = cfg.masking_mode_weights;
    let total = w.background_occlusion + w.keypoint_duplicate;
    if rng.random_range(0.0..total) < w.background_occlusion {
        mask_background_occlusion(sample, cfg, rng)
    } else {
        mask_keypoint_duplicate(sample, cfg, rng)
    }
}

/// Rotation by `angle_deg` and isotropic scaling about the crop centre.
/// Positive angles turn +x towards +y (clockwise on screen).
pub fn affine_transform(sample: AugmentedSample, angle_deg: f64, scale: f64) -> AugmentedSample {
    let AugmentedSample {
        image,
        keypoints,
        mut applied_ops,
    } = sample;
    let (w, h) = (image.width(), image.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = angle_deg.to_radians().sin_cos();
    let forward = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + scale * (c * dx - s * dy), cy + scale * (s * dx + c * dy))
    };
    let mut out = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            // Inverse map: rotate by -angle, divide by scale.
            let (dx, dy) = ((x as f64 - cx) / scale, (y as f64 - cy) / scale);
            let (sx, sy) = (cx + c * dx + s * dy, cy - s * dx + c * dy);
            let rgb = image.sample_bilinear(sx, sy);
            out.set(x, y, rgb.map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    let mut keypoints = keypoints.map_positions(forward);
    keypoints.clip_to_bounds(w, h);
    applied_ops.push(AppliedOp::Geometric { angle_deg, scale });
    AugmentedSample {
        image: out,
        keypoints,
        applied_ops,
    }
}

/// Random rotation in `±rotation_deg` and scale in `scale_range`.
pub fn geometric_augment<R: Rng + ?Sized>(sample: AugmentedSample, cfg: &AugmentConfig, rng: &mut R) -> AugmentedSample {
    let angle = if cfg.rotation_deg > 0.0 {
        rng.random_range(-cfg.rotation_deg..=cfg.rotation_deg)
    } else {
        0.0
    };
    let (lo, hi) = cfg.scale_range;
    let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    affine_transform(sample, angle, scale)
}

/// Mirrors the image horizontally and swaps left/right labels.
pub fn horizontal_flip(sample: AugmentedSample) -> AugmentedSample {
    let AugmentedSample {
        image,
        keypoints,
        mut applied_ops,
    } = sample;
    let w = image.width();
    let mut out = Image::new(w, image.height());
    for y in 0..image.height() {
        for x in 0..w {
            out.set(w - 1 - x, y, image.get(x, y));
        }
    }
    let mirrored = keypoints.map_positions(|x, y| ((w - 1) as f64 - x, y));
    let mut swapped = KeypointSet::default();
    for (id, k) in mirrored.iter() {
        *swapped.get_mut(id.mirrored()) = *k;
    }
    applied_ops.push(AppliedOp::Flip);
    AugmentedSample {
        image: out,
        keypoints: swapped,
        applied_ops,
    }
}

pub fn color_jitter<R: Rng + ?Sized>(mut sample: AugmentedSample, strength: f64, rng: &mut R) -> AugmentedSample {
    let gain = 1.0 + rng.random_range(-strength..=strength);
    let bias = 255.0 * rng.random_range(-strength..=strength) / 2.0;
    let (w, h) = (sample.image.width(), sample.image.height());
    for y in 0..h {
        for x in 0..w {
            let px = sample.image.get(x, y).map(|v| (v as f64 * gain + bias).round().clamp(0.0, 255.0) as u8);
            sample.image.set(x, y, px);
        }
    }
    sample.applied_ops.push(AppliedOp::ColorJitter { gain, bias });
    sample
}

/// Full training-time pipeline: geometric, flip, jitter, then masking when
/// `masking` is on.
pub fn augment<R: Rng + ?Sized>(
    mut sample: AugmentedSample,
    cfg: &AugmentConfig,
    masking: bool,
    rng: &mut R,
) -> AugmentedSample {
    if cfg.geometric {
        sample = geometric_augment(sample, cfg, rng);
    }
    if cfg.flip_probability > 0.0 && rng.random_bool(cfg.flip_probability) {
        sample = horizontal_flip(sample);
    }
    if cfg.color_jitter > 0.0 {
        sample = color_jitter(sample, cfg.color_jitter, rng);
    }
    if masking {
        sample = apply_keypoint_masking(sample, cfg, rng);
    }
    sample
}
