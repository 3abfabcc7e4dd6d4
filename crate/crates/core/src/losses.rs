//! Multi-scale supervision loss and the structure-aware loss.
//!
//! Both losses use the reduction "mean over keypoints, sum over pixels" at a
//! single scale; [`total_training_loss`] sums them over stacks and scales.
//! Every loss has an exact analytic gradient with respect to the prediction,
//! which the trainer feeds into the network's backward pass.

use serde::{Deserialize, Serialize};

use crate::heatmaps::{HeatmapPyramid, HeatmapStack};
use crate::model::NetworkOutput;
use crate::skeleton::{KeypointId, SkeletalGraph, NUM_KEYPOINTS};
use crate::{Error, Result};

/// How a keypoint map is combined with its neighbours' maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    /// Pixel-wise sum.
    #[default]
    Sum,
    /// Pixel-wise maximum (gradient goes to the first maximal member).
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the structural term.
    pub alpha: f64,
    /// Per-level weights; levels beyond the list weigh 1.
    pub scale_weights: Vec<f64>,
    pub combination: Combination,
    /// Drop unannotated keypoints from both terms instead of pushing their
    /// predictions to zero.
    pub mask_unannotated: bool,
    /// Supervise every stack (intermediate supervision) or only the last.
    pub supervise_all_stacks: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            scale_weights: Vec::new(),
            combination: Combination::Sum,
            mask_unannotated: false,
            supervise_all_stacks: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if let Some(w) = self.scale_weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig(format!("scale weight {w} is negative")));
        }
        Ok(())
    }

    pub fn scale_weight(&self, level: usize) -> f64 {
        self.scale_weights.get(level).copied().unwrap_or(1.0)
    }
}

/// `M = 16` combined maps: map `m` merges keypoint `m` with its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralHeatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl StructuralHeatmap {
    pub fn map(&self, m: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.values[m * hw..(m + 1) * hw]
    }
}

/// Loss value split into its two terms. `structural` already includes alpha.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossTerms {
    pub ms: f64,
    pub structural: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.ms + self.structural
    }

    fn scaled(self, w: f64) -> Self {
        Self {
            ms: w * self.ms,
            structural: w * self.structural,
        }
    }
}

fn check_shapes(pred: &HeatmapStack, gt: &HeatmapStack) -> Result<()> {
    if !pred.same_shape(gt) || pred.scale_id != gt.scale_id {
        return Err(Error::Shape(format!(
            "prediction {:?} at scale {} does not match ground truth {:?} at scale {}",
            pred.shape(),
            pred.scale_id,
            gt.shape(),
            gt.scale_id
        )));
    }
    Ok(())
}

/// `(1/N) Σ_n Σ_{x,y} (P_n − G_n)²`.
pub fn loss_ms(pred: &HeatmapStack, gt: &HeatmapStack) -> Result<f64> {
    check_shapes(pred, gt)?;
    let sum: f64 = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p - g) * (p - g))
        .sum();
    Ok(sum / NUM_KEYPOINTS as f64)
}

fn combine(maps: &[&[f64]], members: &[Vec<usize>], hw: usize, how: Combination) -> Vec<f64> {
    let mut out = vec![0.0; NUM_KEYPOINTS * hw];
    for (m, group) in members.iter().enumerate() {
        let dst = &mut out[m * hw..(m + 1) * hw];
        match how {
            Combination::Sum => {
                for &j in group {
                    dst.iter_mut().zip(maps[j]).for_each(|(d, v)| *d += v);
                }
            }
            Combination::Max => {
                dst.copy_from_slice(maps[group[0]]);
                for &j in &group[1..] {
                    dst.iter_mut().zip(maps[j]).for_each(|(d, v)| *d = d.max(*v));
                }
            }
        }
    }
    out
}

/// `{m} ∪ S(m)` for every keypoint, with `m` first.
fn member_lists(g: &SkeletalGraph) -> Vec<Vec<usize>> {
    KeypointId::ALL
        .iter()
        .map(|&k| {
            std::iter::once(k.index())
                .chain(g.neighbors(k).into_iter().map(KeypointId::index))
                .collect()
        })
        .collect()
}

/// Pixel-wise sum of each keypoint's map with its graph neighbours' maps.
pub fn build_structural_maps(h: &HeatmapStack, g: &SkeletalGraph) -> StructuralHeatmap {
    build_structural_maps_with(h, g, Combination::Sum)
}

pub fn build_structural_maps_with(h: &HeatmapStack, g: &SkeletalGraph, how: Combination) -> StructuralHeatmap {
    let hw = h.height() * h.width();
    let maps: Vec<&[f64]> = (0..NUM_KEYPOINTS).map(|n| h.map(n)).collect();
    StructuralHeatmap {
        height: h.height(),
        width: h.width(),
        values: combine(&maps, &member_lists(g), hw, how),
    }
}

/// Structure-aware loss: `loss_ms + α · (1/N) Σ_n Σ_{x,y} (P_Sn − G_Sn)²`.
pub fn loss_sa(pred: &HeatmapStack, gt: &HeatmapStack, g: &SkeletalGraph, cfg: &LossConfig) -> Result<f64> {
    Ok(loss_sa_terms(pred, gt, g, cfg, None)?.0.total())
}

/// Structure-aware loss terms and `∂L/∂P`. With `mask`, keypoints marked
/// false are removed from both terms and receive zero gradient.
pub fn loss_sa_terms(
    pred: &HeatmapStack,
    gt: &HeatmapStack,
    g: &SkeletalGraph,
    cfg: &LossConfig,
    mask: Option<&[bool; NUM_KEYPOINTS]>,
) -> Result<(LossTerms, Vec<f64>)> {
    check_shapes(pred, gt)?;
    let hw = pred.height() * pred.width();
    let n = NUM_KEYPOINTS as f64;
    let keep = |k: usize| mask.is_none_or(|m| m[k]);

    // Masked keypoints behave as if the prediction equalled the target.
    let masked_pred: Vec<f64>;
    let p_vals: &[f64] = if mask.is_some() {
        let mut v = pred.values().to_vec();
        for k in (0..NUM_KEYPOINTS).filter(|&k| !keep(k)) {
            v[k * hw..(k + 1) * hw].copy_from_slice(gt.map(k));
        }
        masked_pred = v;
        &masked_pred
    } else {
        pred.values()
    };

    let residual: Vec<f64> = p_vals.iter().zip(gt.values()).map(|(p, q)| p - q).collect();
    let ms = residual.iter().map(|r| r * r).sum::<f64>() / n;
    let mut grad: Vec<f64> = residual.iter().map(|r| 2.0 * r / n).collect();

    let mut structural = 0.0;
    if cfg.alpha != 0.0 {
        let members = member_lists(g);
        match cfg.combination {
            Combination::Sum => {
                // Σ of members' maps minus Σ of members' targets is Σ of residuals.
                let res_maps: Vec<&[f64]> = (0..NUM_KEYPOINTS).map(|k| &residual[k * hw..(k + 1) * hw]).collect();
                let rs = combine(&res_maps, &members, hw, Combination::Sum);
                structural = cfg.alpha * rs.iter().map(|r| r * r).sum::<f64>() / n;
                for (m, group) in members.iter().enumerate() {
                    let rsm = &rs[m * hw..(m + 1) * hw];
                    for &j in group {
                        let gj = &mut grad[j * hw..(j + 1) * hw];
                        gj.iter_mut().zip(rsm).for_each(|(d, r)| *d += cfg.alpha * 2.0 * r / n);
                    }
                }
            }
            Combination::Max => {
                for group in &members {
                    for px in 0..hw {
                        let (arg, pmax) = group
                            .iter()
                            .map(|&j| (j, p_vals[j * hw + px]))
                            .fold((usize::MAX, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
                        let gmax = group.iter().map(|&j| gt.values()[j * hw + px]).fold(f64::NEG_INFINITY, f64::max);
                        let r = pmax - gmax;
                        structural += cfg.alpha * r * r / n;
                        grad[arg * hw + px] += cfg.alpha * 2.0 * r / n;
                    }
                }
            }
        }
    }
    for k in (0..NUM_KEYPOINTS).filter(|&k| !keep(k)) {
        grad[k * hw..(k + 1) * hw].fill(0.0);
    }
    Ok((LossTerms { ms, structural }, grad))
}

/// Where a supervised output sits in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OutputSlot {
    Stack { stack: usize, scale: usize },
    Final,
}

/// One weighted loss term together with its gradient.
#[derive(Debug, Clone)]
pub struct SupervisedTerm {
    pub slot: OutputSlot,
    pub weight: f64,
    /// Weighted terms.
    pub terms: LossTerms,
    /// Weighted gradient w.r.t. the output at `slot`.
    pub grad: Vec<f64>,
}

/// Every supervised term of one sample.
#[derive(Debug, Clone)]
pub struct TrainingLoss {
    pub terms: Vec<SupervisedTerm>,
}

impl TrainingLoss {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|t| t.terms.total()).sum()
    }

    pub fn ms(&self) -> f64 {
        self.terms.iter().map(|t| t.terms.ms).sum()
    }

    pub fn structural(&self) -> f64 {
        self.terms.iter().map(|t| t.terms.structural).sum()
    }
}

/// `Σ_stacks Σ_scales w_i · loss_sa` plus `loss_sa` on the final output.
pub fn total_training_loss(
    outputs: &NetworkOutput,
    gt: &HeatmapPyramid,
    g: &SkeletalGraph,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(training_loss(outputs, gt, g, cfg)?.total())
}

/// Term-by-term version of [`total_training_loss`] with gradients. Terms
/// with zero weight are skipped.
pub fn training_loss(
    outputs: &NetworkOutput,
    gt: &HeatmapPyramid,
    g: &SkeletalGraph,
    cfg: &LossConfig,
) -> Result<TrainingLoss> {
    let mask = cfg.mask_unannotated.then_some(&gt.annotated);
    let mut terms = Vec::new();
    let stacks = outputs.per_stack.len();
    for (s, pyramid) in outputs.per_stack.iter().enumerate() {
        if pyramid.depth() != gt.depth() {
            return Err(Error::Shape(format!(
                "stack {s} has {} levels, ground truth has {}",
                pyramid.depth(),
                gt.depth()
            )));
        }
        if !cfg.supervise_all_stacks && s + 1 != stacks {
            continue;
        }
        for (i, (p, q)) in pyramid.stacks.iter().zip(&gt.stacks).enumerate() {
            let w = cfg.scale_weight(i);
            if w == 0.0 {
                continue;
            }
            let (t, mut grad) = loss_sa_terms(p, q, g, cfg, mask)?;
            grad.iter_mut().for_each(|v| *v *= w);
            terms.push(SupervisedTerm {
                slot: OutputSlot::Stack { stack: s, scale: i },
                weight: w,
                terms: t.scaled(w),
                grad,
            });
        }
    }
    if let Some(fin) = &outputs.final_heatmaps {
        let q = gt
            .stacks
            .first()
            .ok_or_else(|| Error::Shape("empty ground-truth pyramid".into()))?;
        let (t, grad) = loss_sa_terms(fin, q, g, cfg, mask)?;
        terms.push(SupervisedTerm {
            slot: OutputSlot::Final,
            weight: 1.0,
            terms: t,
            grad,
        });
    }
    Ok(TrainingLoss { terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::default_skeletal_graph;
    use KeypointId::*;

    fn stack_with(vals: impl Fn(usize) -> f64, h: usize, w: usize) -> HeatmapStack {
        HeatmapStack::from_values(h, w, 0, (0..NUM_KEYPOINTS * h * w).map(vals).collect()).unwrap()
    }

    #[test]
    fn identical_inputs_give_zero() {
        let p = stack_with(|i| (i % 7) as f64 * 0.1, 4, 4);
        assert_eq!(loss_ms(&p, &p).unwrap(), 0.0);
        for alpha in [0.0, 0.5, 3.0] {
            let cfg = LossConfig { alpha, ..Default::default() };
            assert_eq!(loss_sa(&p, &p, &default_skeletal_graph(), &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_pixel_residual() {
        let gt = HeatmapStack::zeros(8, 8, 0);
        let mut p = gt.clone();
        p.map_mut(5)[10] = 0.5;
        assert_eq!(loss_ms(&p, &gt).unwrap(), 0.015625);
    }

    #[test]
    fn doubling_residuals_quadruples() {
        let gt = stack_with(|i| (i % 5) as f64 * 0.2, 3, 3);
        let p = stack_with(|i| (i % 5) as f64 * 0.2 + ((i * 7) % 3) as f64 * 0.1, 3, 3);
        let p2 = stack_with(|i| (i % 5) as f64 * 0.2 + 2.0 * ((i * 7) % 3) as f64 * 0.1, 3, 3);
        let (a, b) = (loss_ms(&p, &gt).unwrap(), loss_ms(&p2, &gt).unwrap());
        assert!((b - 4.0 * a).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = HeatmapStack::zeros(4, 4, 0);
        assert!(loss_ms(&a, &HeatmapStack::zeros(4, 5, 0)).is_err());
        assert!(loss_ms(&a, &HeatmapStack::zeros(4, 4, 1)).is_err());
    }

    #[test]
    fn structural_maps_without_edges_equal_input() {
        let p = stack_with(|i| i as f64, 2, 3);
        let s = build_structural_maps(&p, &SkeletalGraph::empty());
        assert_eq!(s.values, p.values());
    }

    #[test]
    fn connected_pair_peaks_both_appear() {
        let mut g = SkeletalGraph::empty();
        g.pair_edges.push((RHip, RKnee));
        let mut p = HeatmapStack::zeros(3, 3, 0);
        p.map_mut(RHip.index())[0] = 1.0;
        p.map_mut(RKnee.index())[8] = 1.0;
        let s = build_structural_maps(&p, &g);
        for k in [RHip, RKnee] {
            let m = s.map(k.index());
            assert_eq!((m[0], m[8]), (1.0, 1.0));
            assert_eq!(m.iter().sum::<f64>(), 2.0);
        }
        assert_eq!(s.map(LHip.index()).iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn elbow_structural_map_includes_shoulder_and_wrist() {
        let mut p = HeatmapStack::zeros(2, 2, 0);
        p.map_mut(RShoulder.index())[0] = 1.0;
        p.map_mut(RWrist.index())[3] = 1.0;
        let s = build_structural_maps(&p, &default_skeletal_graph());
        let m = s.map(RElbow.index());
        assert_eq!((m[0], m[3]), (1.0, 1.0));
    }

    #[test]
    fn alpha_zero_reduces_to_ms_and_edge_free_doubles() {
        let gt = stack_with(|i| ((i * 3) % 11) as f64 / 11.0, 4, 4);
        let p = stack_with(|i| ((i * 5) % 13) as f64 / 13.0, 4, 4);
        let ms = loss_ms(&p, &gt).unwrap();
        let g = default_skeletal_graph();
        let zero = LossConfig { alpha: 0.0, ..Default::default() };
        assert_eq!(loss_sa(&p, &gt, &g, &zero).unwrap(), ms);
        let one = LossConfig { alpha: 1.0, ..Default::default() };
        let sa = loss_sa(&p, &gt, &SkeletalGraph::empty(), &one).unwrap();
        assert!((sa - 2.0 * ms).abs() < 1e-12 * ms.max(1.0));
    }

    #[test]
    fn max_combination_gradient_matches_differences() {
        let gt = stack_with(|i| ((i * 3) % 11) as f64 / 11.0, 3, 3);
        let p = stack_with(|i| ((i * 5) % 13) as f64 / 13.0 + i as f64 * 1e-3, 3, 3);
        let g = default_skeletal_graph();
        let cfg = LossConfig {
            alpha: 0.7,
            combination: Combination::Max,
            ..Default::default()
        };
        let (_, grad) = loss_sa_terms(&p, &gt, &g, &cfg, None).unwrap();
        let h = 1e-6;
        for i in (0..p.values().len()).step_by(7) {
            let mut up = p.clone();
            up.values_mut()[i] += h;
            let mut dn = p.clone();
            dn.values_mut()[i] -= h;
            let fd = (loss_sa(&up, &gt, &g, &cfg).unwrap() - loss_sa(&dn, &gt, &g, &cfg).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6, "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn mask_removes_keypoints() {
        let gt = HeatmapStack::zeros(2, 2, 0);
        let mut p = gt.clone();
        p.map_mut(RWrist.index())[1] = 1.0;
        let mut mask = [true; NUM_KEYPOINTS];
        let cfg = LossConfig::default();
        let g = default_skeletal_graph();
        assert!(loss_sa_terms(&p, &gt, &g, &cfg, Some(&mask)).unwrap().0.total() > 0.0);
        mask[RWrist.index()] = false;
        let (t, grad) = loss_sa_terms(&p, &gt, &g, &cfg, Some(&mask)).unwrap();
        assert_eq!(t.total(), 0.0);
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { alpha: -0.1, ..Default::default() }.validate().is_err());
        assert!(LossConfig {
            scale_weights: vec![1.0, -1.0],
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
