//! PCK / PCKh / AUC metrics and conditional multi-trial inference.

use serde::{Deserialize, Serialize};

use crate::heatmaps::{decode_keypoints, from_heatmap_coords, HeatmapStack};
use crate::raster::Image;
use crate::skeleton::{KeypointId, KeypointSet, Visibility, NUM_KEYPOINTS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Normalised by the torso diameter (right shoulder to left hip).
    PckTorso,
    /// Normalised by the head-segment length.
    #[default]
    Pckh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub metric: Metric,
    pub threshold: f64,
    pub auc_threshold_grid: Vec<f64>,
    /// Per-keypoint confidence thresholds; a single entry applies to all.
    pub tau_c: Vec<f64>,
    pub tau_s: f64,
    /// Crop-centre shifts in heatmap cells; the first must be `(0, 0)`.
    pub perturbation_offsets: Vec<(i64, i64)>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Pckh,
            threshold: 0.5,
            auc_threshold_grid: default_auc_grid(),
            tau_c: vec![0.2],
            tau_s: 0.25,
            perturbation_offsets: cross_offsets(8),
        }
    }
}

/// `0, 0.01, ..., 0.5`.
pub fn default_auc_grid() -> Vec<f64> {
    (0..=50).map(|i| i as f64 / 100.0).collect()
}

/// `(0,0)` followed by `±d` along each axis.
pub fn cross_offsets(d: i64) -> Vec<(i64, i64)> {
    vec![(0, 0), (d, 0), (-d, 0), (0, d), (0, -d)]
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!("threshold must be > 0, got {}", self.threshold)));
        }
        let g = &self.auc_threshold_grid;
        if g.len() < 2 || g.windows(2).any(|w| !(w[1] > w[0])) || g[0] < 0.0 {
            return Err(Error::InvalidConfig(
                "auc_threshold_grid needs >= 2 non-negative, strictly increasing values".into(),
            ));
        }
        if !(self.tau_c.len() == 1 || self.tau_c.len() == NUM_KEYPOINTS) {
            return Err(Error::InvalidConfig(format!("tau_c needs 1 or 16 entries, got {}", self.tau_c.len())));
        }
        if self.tau_c.iter().chain([&self.tau_s]).any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidConfig("tau_c and tau_s entries must lie in [0, 1]".into()));
        }
        if self.perturbation_offsets.first() != Some(&(0, 0)) {
            return Err(Error::InvalidConfig("perturbation_offsets must start with (0, 0)".into()));
        }
        Ok(())
    }

    pub fn tau_c_for(&self, k: usize) -> f64 {
        if self.tau_c.len() == 1 {
            self.tau_c[0]
        } else {
            self.tau_c[k]
        }
    }
}

/// Per-keypoint correctness; `None` where the ground truth is unannotated.
pub fn pck(pred: &KeypointSet, gt: &KeypointSet, normalizer: f64, threshold: f64) -> [Option<bool>; NUM_KEYPOINTS] {
    std::array::from_fn(|n| {
        let g = &gt.0[n];
        g.is_annotated().then(|| {
            let p = &pred.0[n];
            p.is_annotated() && p.distance(g) <= threshold * normalizer
        })
    })
}

/// Why a sample cannot be normalised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Exclusion {
    MissingKeypoint(KeypointId),
    DegenerateSegment,
}

impl std::fmt::Display for Exclusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exclusion::MissingKeypoint(k) => write!(f, "{k} is not annotated"),
            Exclusion::DegenerateSegment => f.write_str("normalising segment has zero length"),
        }
    }
}

fn segment(gt: &KeypointSet, a: KeypointId, b: KeypointId) -> Result<f64, Exclusion> {
    for k in [a, b] {
        if !gt.get(k).is_annotated() {
            return Err(Exclusion::MissingKeypoint(k));
        }
    }
    let d = gt.get(a).distance(gt.get(b));
    if d > 0.0 && d.is_finite() {
        Ok(d)
    } else {
        Err(Exclusion::DegenerateSegment)
    }
}

/// Head-segment length `‖head_top − upper_neck‖`.
pub fn pckh_normalizer(gt: &KeypointSet) -> Result<f64, Exclusion> {
    segment(gt, KeypointId::HeadTop, KeypointId::UpperNeck)
}

/// Torso diameter `‖r_shoulder − l_hip‖`.
pub fn torso_normalizer(gt: &KeypointSet) -> Result<f64, Exclusion> {
    segment(gt, KeypointId::RShoulder, KeypointId::LHip)
}

pub fn normalizer(metric: Metric, gt: &KeypointSet) -> Result<f64, Exclusion> {
    match metric {
        Metric::Pckh => pckh_normalizer(gt),
        Metric::PckTorso => torso_normalizer(gt),
    }
}

/// Trapezoidal area under a PCK-vs-threshold curve, normalised by the
/// threshold span so a perfect detector scores 1.
pub fn auc(curve: &[(f64, f64)]) -> f64 {
    if curve.len() < 2 {
        return curve.first().map_or(0.0, |p| p.1);
    }
    let span = curve[curve.len() - 1].0 - curve[0].0;
    let area: f64 = curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    area / span
}

/// Distances and normalisers of one evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub index: usize,
    pub normalizer: f64,
    /// Pixel distances to the ground truth; `None` for unannotated ground
    /// truth, infinite for missing predictions.
    pub distances: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub threshold: f64,
    /// Per-keypoint accuracy; `None` where no sample annotates the keypoint.
    pub per_keypoint_pck: Vec<Option<f64>>,
    /// Mean over every evaluated keypoint instance.
    pub aggregate_pck: f64,
    pub auc: f64,
    /// `(threshold, aggregate pck)` over the AUC grid.
    pub curve: Vec<(f64, f64)>,
    pub num_samples: usize,
    pub num_excluded: usize,
    pub ablation: Option<String>,
    pub config: EvalConfig,
}

impl EvalReport {
    /// CSV of the PCK-vs-threshold curve.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("threshold,pck\n");
        for (t, p) in &self.curve {
            s.push_str(&format!("{t},{p}\n"));
        }
        s
    }
}

/// Normalised distances for every sample; samples without a valid
/// normaliser are excluded with a logged reason.
pub fn sample_results(preds: &[KeypointSet], gts: &[KeypointSet], metric: Metric) -> Result<Vec<SampleResult>> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} ground-truth sets",
            preds.len(),
            gts.len()
        )));
    }
    let mut out = Vec::with_capacity(gts.len());
    for (i, (p, g)) in preds.iter().zip(gts).enumerate() {
        let norm = match normalizer(metric, g) {
            Ok(n) => n,
            Err(e) => {
                log::info!("sample {i} excluded: {e}");
                continue;
            }
        };
        let distances = (0..NUM_KEYPOINTS)
            .map(|n| {
                g.0[n].is_annotated().then(|| {
                    if p.0[n].is_annotated() {
                        p.0[n].distance(&g.0[n])
                    } else {
                        f64::INFINITY
                    }
                })
            })
            .collect();
        out.push(SampleResult {
            index: i,
            normalizer: norm,
            distances,
        });
    }
    Ok(out)
}

/// Per-keypoint counts `(correct, total)` at one threshold. Uses the same
/// `distance <= threshold * normalizer` test as [`pck`].
fn counts(results: &[SampleResult], threshold: f64) -> [(usize, usize); NUM_KEYPOINTS] {
    let mut c = [(0, 0); NUM_KEYPOINTS];
    for r in results {
        for (n, d) in r.distances.iter().enumerate() {
            if let Some(d) = d {
                c[n].1 += 1;
                if *d <= threshold * r.normalizer {
                    c[n].0 += 1;
                }
            }
        }
    }
    c
}

fn aggregate(c: &[(usize, usize); NUM_KEYPOINTS]) -> f64 {
    let (hit, total) = c.iter().fold((0, 0), |(h, t), (a, b)| (h + a, t + b));
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

pub fn evaluate(preds: &[KeypointSet], gts: &[KeypointSet], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let results = sample_results(preds, gts, cfg.metric)?;
    Ok(report_from_results(&results, gts.len(), cfg))
}

pub fn report_from_results(results: &[SampleResult], num_samples: usize, cfg: &EvalConfig) -> EvalReport {
    let c = counts(results, cfg.threshold);
    let curve: Vec<(f64, f64)> = cfg
        .auc_threshold_grid
        .iter()
        .map(|&t| (t, aggregate(&counts(results, t))))
        .collect();
    EvalReport {
        metric: cfg.metric,
        threshold: cfg.threshold,
        per_keypoint_pck: c
            .iter()
            .map(|&(h, t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
        aggregate_pck: aggregate(&c),
        auc: auc(&curve),
        curve,
        num_samples,
        num_excluded: num_samples - results.len(),
        ablation: None,
        config: cfg.clone(),
    }
}

/// Anything that maps a crop to scale-0 heatmaps.
pub trait HeatmapModel {
    /// Input-pixels per heatmap cell.
    fn stride(&self) -> usize;
    fn heatmaps(&self, image: &Image) -> Result<HeatmapStack>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalResult {
    /// Keypoints in crop pixel coordinates.
    pub keypoints: KeypointSet,
    pub confidences: [f64; NUM_KEYPOINTS],
    pub pose_score: f64,
    /// Set when no trial cleared `tau_s`.
    pub low_confidence: bool,
    pub forward_passes: usize,
    pub heatmaps: HeatmapStack,
}

/// Mean of per-keypoint maxima.
pub fn pose_score(confidences: &[f64; NUM_KEYPOINTS]) -> f64 {
    confidences.iter().sum::<f64>() / NUM_KEYPOINTS as f64
}

/// Argmax decoding with a quarter-cell shift towards the larger neighbour.
/// Symmetric neighbourhoods (such as rendered Gaussians at integer
/// positions) decode exactly.
pub fn decode_subpixel(h: &HeatmapStack) -> (KeypointSet, [f64; NUM_KEYPOINTS]) {
    let (mut set, conf) = decode_keypoints(h);
    let (hh, ww) = (h.height(), h.width());
    for n in 0..NUM_KEYPOINTS {
        let k = &mut set.0[n];
        let (x, y) = (k.x as usize, k.y as usize);
        let m = h.map(n);
        let v = |xx: usize, yy: usize| m[yy * ww + xx];
        if x > 0 && x + 1 < ww {
            k.x += quarter_step(v(x + 1, y) - v(x - 1, y));
        }
        if y > 0 && y + 1 < hh {
            k.y += quarter_step(v(x, y + 1) - v(x, y - 1));
        }
    }
    (set, conf)
}

fn quarter_step(diff: f64) -> f64 {
    if diff > 0.0 {
        0.25
    } else if diff < 0.0 {
        -0.25
    } else {
        0.0
    }
}

/// Decodes scale-0 heatmaps into crop coordinates. Every keypoint is
/// reported as visible.
pub fn predict_keypoints(h: &HeatmapStack, stride: usize) -> (KeypointSet, [f64; NUM_KEYPOINTS]) {
    let (mut set, conf) = decode_subpixel(h);
    for k in set.0.iter_mut() {
        k.visibility = Visibility::Visible;
    }
    (from_heatmap_coords(&set, stride), conf)
}

fn finish(h: HeatmapStack, stride: usize, low_confidence: bool, forward_passes: usize) -> ConditionalResult {
    let (keypoints, confidences) = predict_keypoints(&h, stride);
    ConditionalResult {
        keypoints,
        confidences,
        pose_score: pose_score(&confidences),
        low_confidence,
        forward_passes,
        heatmaps: h,
    }
}

/// Inference at the original crop, re-tried at perturbed crop centres when a
/// keypoint falls below its confidence threshold.
pub fn conditional_inference<M: HeatmapModel + ?Sized>(
    image: &Image,
    model: &M,
    cfg: &EvalConfig,
) -> Result<ConditionalResult> {
    cfg.validate()?;
    let stride = model.stride() as i64;
    let first = model.heatmaps(image)?;
    let (_, conf) = decode_keypoints(&first);
    if conf.iter().enumerate().all(|(k, &c)| c >= cfg.tau_c_for(k)) {
        return Ok(finish(first, stride as usize, false, 1));
    }
    let mut trials = vec![(pose_score(&conf), first)];
    for &(dx, dy) in &cfg.perturbation_offsets[1..] {
        let shifted = image.translated(dx * stride, dy * stride);
        let h = model.heatmaps(&shifted)?.shifted(dx, dy);
        let (_, c) = decode_keypoints(&h);
        trials.push((pose_score(&c), h));
    }
    let passes = trials.len();
    let kept: Vec<&(f64, HeatmapStack)> = trials.iter().filter(|(s, _)| *s > cfg.tau_s).collect();
    match kept.len() {
        0 => {
            let best = trials
                .into_iter()
                .fold(None::<(f64, HeatmapStack)>, |acc, t| match acc {
                    Some(a) if a.0 >= t.0 => Some(a),
                    _ => Some(t),
                })
                .expect("at least one trial");
            Ok(finish(best.1, stride as usize, true, passes))
        }
        1 => Ok(finish(kept[0].1.clone(), stride as usize, false, passes)),
        _ => {
            let total: f64 = kept.iter().map(|(s, _)| s).sum();
            let mut fused = kept[0].1.clone();
            fused.values_mut().iter_mut().for_each(|v| *v = 0.0);
            for (s, h) in &kept {
                for (f, v) in fused.values_mut().iter_mut().zip(h.values()) {
                    *f += s / total * v;
                }
            }
            Ok(finish(fused, stride as usize, false, passes))
        }
    }
}
