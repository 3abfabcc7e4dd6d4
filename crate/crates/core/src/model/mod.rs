//! MSS-net (stacked hourglasses with a supervised heatmap tap at every
//! decoder scale) and the MSR-net fusion head.

pub mod checkpoint;
pub mod training;

use poseforge_nn::{Graph, Interp, ParamId, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::heatmaps::{check_pyramid_geometry, level_resolution, HeatmapPyramid, HeatmapStack};
use crate::skeleton::NUM_KEYPOINTS;
use crate::{Error, Result};

/// Downsampling factor of the stem; heatmaps are `input / STEM_STRIDE`.
pub const STEM_STRIDE: usize = 4;

/// Init gain of layers emitting heatmaps, so predictions start near zero.
const HEAD_GAIN: f32 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsampling {
    #[default]
    Nearest,
    Bilinear,
}

impl From<Upsampling> for Interp {
    fn from(u: Upsampling) -> Self {
        match u {
            Upsampling::Nearest => Interp::Nearest,
            Upsampling::Bilinear => Interp::Bilinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_stacks: usize,
    /// Number of hourglass levels, equal to the supervised pyramid depth.
    pub hourglass_depth: usize,
    pub base_channels: usize,
    /// `(height, width)` of the input crop.
    pub input_resolution: (usize, usize),
    /// Width of the MSR-net hidden layers.
    pub msr_channels: usize,
    /// Number of conv layers in the MSR-net head (at least 1).
    pub msr_layers: usize,
    pub fusion_upsampling: Upsampling,
    /// Re-inject the heatmaps of every scale into the next stack instead of
    /// only scale 0.
    pub reinject_all_scales: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_stacks: 2,
            hourglass_depth: 3,
            base_channels: 32,
            input_resolution: (64, 64),
            msr_channels: 64,
            msr_layers: 3,
            fusion_upsampling: Upsampling::Nearest,
            reinject_all_scales: false,
        }
    }
}

impl ModelConfig {
    pub fn heatmap_resolution(&self) -> (usize, usize) {
        (self.input_resolution.0 / STEM_STRIDE, self.input_resolution.1 / STEM_STRIDE)
    }

    /// Resolution of every supervised scale, finest first.
    pub fn pyramid_resolutions(&self) -> Vec<(usize, usize)> {
        (0..self.hourglass_depth)
            .map(|i| level_resolution(self.heatmap_resolution(), i))
            .collect()
    }

    /// Channel count entering the MSR-net head.
    pub fn msr_input_channels(&self) -> usize {
        self.num_stacks * self.hourglass_depth * NUM_KEYPOINTS
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stacks == 0 {
            return Err(Error::InvalidConfig("num_stacks must be >= 1".into()));
        }
        if self.hourglass_depth == 0 {
            return Err(Error::InvalidConfig("hourglass_depth must be >= 1".into()));
        }
        if self.base_channels == 0 || self.msr_channels == 0 || self.msr_layers == 0 {
            return Err(Error::InvalidConfig("channel and layer counts must be >= 1".into()));
        }
        let (h, w) = self.input_resolution;
        if h % STEM_STRIDE != 0 || w % STEM_STRIDE != 0 || h == 0 || w == 0 {
            return Err(Error::InvalidConfig(format!(
                "input resolution {h}x{w} is not a positive multiple of {STEM_STRIDE}"
            )));
        }
        check_pyramid_geometry(self.heatmap_resolution(), self.hourglass_depth)
    }
}

/// Everything the network emits for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub per_stack: Vec<HeatmapPyramid>,
    /// MSR-net output at scale 0; absent for MSS-only forwards.
    pub final_heatmaps: Option<HeatmapStack>,
}

impl NetworkOutput {
    /// Heatmaps used for prediction: the MSR-net output when present,
    /// otherwise the finest scale of the last stack.
    pub fn prediction(&self) -> &HeatmapStack {
        match &self.final_heatmaps {
            Some(f) => f,
            None => self.per_stack.last().expect("at least one stack").level(0),
        }
    }
}

/// Which parts of the network a forward pass builds and differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Hourglass stacks only.
    Mss,
    /// Stacks plus MSR-net, gradients through both.
    Full,
    /// Stacks plus MSR-net with the taps detached, so only the head learns.
    MsrOnly,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    fn new(p: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize, stride: usize, gain: f32, rng: &mut ChaCha8Rng) -> Self {
        let (w, b) = p.add_conv(name, cin, cout, k, gain, rng);
        Self { w, b, stride, pad: k / 2 }
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        Ok(g.conv(x, self.w, self.b, self.stride, self.pad)?)
    }
}

#[derive(Debug, Clone, Copy)]
struct Residual {
    a: Conv,
    b: Conv,
}

impl Residual {
    fn new(p: &mut ParamStore, name: &str, c: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            a: Conv::new(p, &format!("{name}.a"), c, c, 3, 1, 1.0, rng),
            b: Conv::new(p, &format!("{name}.b"), c, c, 3, 1, 0.5, rng),
        }
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.a.apply(g, x)?;
        let h = g.relu(h);
        let h = self.b.apply(g, h)?;
        let s = g.add(x, h)?;
        Ok(g.relu(s))
    }
}

#[derive(Debug, Clone)]
struct Hourglass {
    encoder: Vec<Residual>,
    down: Vec<Conv>,
    up: Vec<Conv>,
    taps: Vec<Conv>,
}

#[derive(Debug, Clone)]
struct Reinjection {
    features: Conv,
    heatmaps: Vec<Conv>,
}

#[derive(Debug, Clone)]
struct Layers {
    stem: (Conv, Conv, Residual),
    stacks: Vec<Hourglass>,
    reinject: Vec<Reinjection>,
    msr: Vec<Conv>,
}

/// Vars recorded by [`PoseNet::forward_graph`].
#[derive(Debug, Clone)]
pub struct GraphOutput {
    /// `taps[stack][scale]`, each `[N, 16, H/2^scale, W/2^scale]`.
    pub taps: Vec<Vec<Var>>,
    pub final_heatmaps: Option<Var>,
}

/// MSS-net plus MSR-net with their parameters.
#[derive(Debug, Clone)]
pub struct PoseNet {
    cfg: ModelConfig,
    params: ParamStore,
    layers: Layers,
    /// Parameters created before the MSR head belong to the MSS-net.
    num_mss_params: usize,
}

impl PoseNet {
    /// Builds the network with parameters drawn from `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let c = cfg.base_channels;
        let k = NUM_KEYPOINTS;
        let stem = (
            Conv::new(&mut p, "stem.conv1", 3, c, 3, 2, 1.0, &mut rng),
            Conv::new(&mut p, "stem.conv2", c, c, 3, 2, 1.0, &mut rng),
            Residual::new(&mut p, "stem.res", c, &mut rng),
        );
        let d = cfg.hourglass_depth;
        let mut stacks = Vec::new();
        let mut reinject = Vec::new();
        for s in 0..cfg.num_stacks {
            let name = format!("hg{s}");
            stacks.push(Hourglass {
                encoder: (0..d).map(|i| Residual::new(&mut p, &format!("{name}.enc{i}"), c, &mut rng)).collect(),
                down: (1..d).map(|i| Conv::new(&mut p, &format!("{name}.down{i}"), c, c, 3, 2, 1.0, &mut rng)).collect(),
                up: (0..d.saturating_sub(1))
                    .map(|i| Conv::new(&mut p, &format!("{name}.up{i}"), c, c, 3, 1, 1.0, &mut rng))
                    .collect(),
                taps: (0..d).map(|i| Conv::new(&mut p, &format!("{name}.tap{i}"), c, k, 1, 1, HEAD_GAIN, &mut rng)).collect(),
            });
            if s + 1 < cfg.num_stacks {
                let scales = if cfg.reinject_all_scales { d } else { 1 };
                reinject.push(Reinjection {
                    features: Conv::new(&mut p, &format!("{name}.remap_feat"), c, c, 1, 1, 0.5, &mut rng),
                    heatmaps: (0..scales)
                        .map(|i| Conv::new(&mut p, &format!("{name}.remap_heat{i}"), k, c, 1, 1, 0.5, &mut rng))
                        .collect(),
                });
            }
        }
        let num_mss_params = p.len();
        let mut msr = Vec::new();
        let mut cin = cfg.msr_input_channels();
        for i in 0..cfg.msr_layers {
            let last = i + 1 == cfg.msr_layers;
            let (cout, gain) = if last { (k, HEAD_GAIN) } else { (cfg.msr_channels, 1.0) };
            msr.push(Conv::new(&mut p, &format!("msr.conv{i}"), cin, cout, 3, 1, gain, &mut rng));
            cin = cout;
        }
        Ok(Self {
            cfg,
            params: p,
            layers: Layers {
                stem,
                stacks,
                reinject,
                msr,
            },
            num_mss_params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Whether parameter `id` belongs to the MSS-net (as opposed to the head).
    pub fn is_mss_param(&self, id: ParamId) -> bool {
        id.index() < self.num_mss_params
    }

    /// Records a forward pass over a `[N, 3, H, W]` batch with values in
    /// `[0, 1]`.
    pub fn forward_graph(&self, g: &mut Graph, images: &Tensor, mode: ForwardMode) -> Result<GraphOutput> {
        let (h, w) = self.cfg.input_resolution;
        if images.channels() != 3 || images.height() != h || images.width() != w {
            return Err(Error::Shape(format!(
                "expected images of shape [N, 3, {h}, {w}], got {:?}",
                images.shape()
            )));
        }
        let mut centred = images.clone();
        centred.data_mut().iter_mut().for_each(|v| *v -= 0.5);
        let x = g.input(centred);
        let (c1, c2, res) = &self.layers.stem;
        let x = c1.apply(g, x)?;
        let x = g.relu(x);
        let x = c2.apply(g, x)?;
        let x = g.relu(x);
        let mut f = res.apply(g, x)?;

        let mut taps = Vec::with_capacity(self.cfg.num_stacks);
        for (s, hg) in self.layers.stacks.iter().enumerate() {
            let (d0, stack_taps) = self.hourglass(g, hg, f)?;
            if let Some(r) = self.layers.reinject.get(s) {
                let remapped = r.features.apply(g, d0)?;
                let mut next = g.add(f, remapped)?;
                for (i, conv) in r.heatmaps.iter().enumerate() {
                    let t = g.upsample(stack_taps[i], 1 << i, Interp::Nearest);
                    let remapped = conv.apply(g, t)?;
                    next = g.add(next, remapped)?;
                }
                f = next;
            }
            taps.push(stack_taps);
        }

        let final_heatmaps = match mode {
            ForwardMode::Mss => None,
            ForwardMode::Full | ForwardMode::MsrOnly => {
                let interp = self.cfg.fusion_upsampling.into();
                let mut parts = Vec::with_capacity(self.cfg.msr_input_channels() / NUM_KEYPOINTS);
                for stack in &taps {
                    for (i, &t) in stack.iter().enumerate() {
                        let t = if mode == ForwardMode::MsrOnly { g.detach(t) } else { t };
                        parts.push(g.upsample(t, 1 << i, interp));
                    }
                }
                let mut y = g.concat(&parts)?;
                for (i, conv) in self.layers.msr.iter().enumerate() {
                    y = conv.apply(g, y)?;
                    if i + 1 < self.layers.msr.len() {
                        y = g.relu(y);
                    }
                }
                Some(y)
            }
        };
        Ok(GraphOutput { taps, final_heatmaps })
    }

    /// One hourglass: returns the finest decoder features and the taps of
    /// every scale, finest first.
    fn hourglass(&self, g: &mut Graph, hg: &Hourglass, f: Var) -> Result<(Var, Vec<Var>)> {
        let d = self.cfg.hourglass_depth;
        let mut skips = Vec::with_capacity(d);
        let mut e = hg.encoder[0].apply(g, f)?;
        skips.push(e);
        for i in 1..d {
            let down = hg.down[i - 1].apply(g, e)?;
            let down = g.relu(down);
            e = hg.encoder[i].apply(g, down)?;
            skips.push(e);
        }
        let mut taps = vec![None; d];
        let mut dec = e;
        taps[d - 1] = Some(hg.taps[d - 1].apply(g, dec)?);
        for i in (0..d - 1).rev() {
            let up = g.upsample(dec, 2, Interp::Nearest);
            let up = hg.up[i].apply(g, up)?;
            let merged = g.add(up, skips[i])?;
            dec = g.relu(merged);
            taps[i] = Some(hg.taps[i].apply(g, dec)?);
        }
        Ok((dec, taps.into_iter().map(|t| t.expect("every scale tapped")).collect()))
    }

    /// Splits recorded outputs into per-sample [`NetworkOutput`]s.
    pub fn collect_outputs(&self, g: &Graph, out: &GraphOutput) -> Result<Vec<NetworkOutput>> {
        let n = g.value(out.taps[0][0]).batch();
        (0..n)
            .map(|b| {
                let per_stack = out
                    .taps
                    .iter()
                    .map(|stack| {
                        let levels = stack
                            .iter()
                            .enumerate()
                            .map(|(i, &v)| tensor_item_to_stack(g.value(v), b, i))
                            .collect::<Result<Vec<_>>>()?;
                        HeatmapPyramid::from_predictions(levels)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let final_heatmaps = out
                    .final_heatmaps
                    .map(|v| tensor_item_to_stack(g.value(v), b, 0))
                    .transpose()?;
                Ok(NetworkOutput {
                    per_stack,
                    final_heatmaps,
                })
            })
            .collect()
    }

    /// Batched inference.
    pub fn forward(&self, images: &Tensor, with_msr: bool) -> Result<Vec<NetworkOutput>> {
        let mut g = Graph::new(&self.params);
        let mode = if with_msr { ForwardMode::Full } else { ForwardMode::Mss };
        let out = self.forward_graph(&mut g, images, mode)?;
        self.collect_outputs(&g, &out)
    }

    /// Per-stack heatmap pyramids for a single `[1, 3, H, W]` image.
    pub fn mss_forward(&self, image: &Tensor) -> Result<Vec<HeatmapPyramid>> {
        if image.batch() != 1 {
            return Err(Error::Shape(format!("mss_forward takes one image, got batch {}", image.batch())));
        }
        Ok(self.forward(image, false)?.remove(0).per_stack)
    }

    /// Runs the MSR-net head on given per-stack pyramids.
    pub fn msr_forward(&self, per_stack: &[HeatmapPyramid]) -> Result<HeatmapStack> {
        let res = self.cfg.pyramid_resolutions();
        if per_stack.len() != self.cfg.num_stacks {
            return Err(Error::Shape(format!(
                "expected {} stacks, got {}",
                self.cfg.num_stacks,
                per_stack.len()
            )));
        }
        let mut g = Graph::new(&self.params);
        let interp = self.cfg.fusion_upsampling.into();
        let mut parts = Vec::new();
        for (s, pyr) in per_stack.iter().enumerate() {
            if pyr.depth() != res.len() {
                return Err(Error::Shape(format!("stack {s} has {} scales, expected {}", pyr.depth(), res.len())));
            }
            for (i, level) in pyr.stacks.iter().enumerate() {
                if (level.height(), level.width()) != res[i] {
                    return Err(Error::Shape(format!(
                        "stack {s} scale {i} is {}x{}, expected {:?}",
                        level.height(),
                        level.width(),
                        res[i]
                    )));
                }
                let t = Tensor::from_vec([1, NUM_KEYPOINTS, res[i].0, res[i].1], level.to_f32())?;
                let v = g.input(t);
                parts.push(g.upsample(v, 1 << i, interp));
            }
        }
        let mut y = g.concat(&parts)?;
        for (i, conv) in self.layers.msr.iter().enumerate() {
            y = conv.apply(&mut g, y)?;
            if i + 1 < self.layers.msr.len() {
                y = g.relu(y);
            }
        }
        tensor_item_to_stack(g.value(y), 0, 0)
    }
}

fn tensor_item_to_stack(t: &Tensor, item: usize, scale: usize) -> Result<HeatmapStack> {
    if t.channels() != NUM_KEYPOINTS {
        return Err(Error::Shape(format!("heatmap tensor has {} channels", t.channels())));
    }
    HeatmapStack::from_f32(t.height(), t.width(), scale, t.item(item))
}

/// Single-image heatmap source for evaluation. Without the MSR head the
/// last stack's finest map is used.
#[derive(Debug, Clone, Copy)]
pub struct Predictor<'a> {
    pub net: &'a PoseNet,
    pub use_msr: bool,
}

impl crate::evaluation::HeatmapModel for Predictor<'_> {
    fn stride(&self) -> usize {
        STEM_STRIDE
    }

    fn heatmaps(&self, image: &crate::raster::Image) -> Result<HeatmapStack> {
        let t = images_to_tensor(&[image])?;
        Ok(self.net.forward(&t, self.use_msr)?.remove(0).prediction().clone())
    }
}

/// Packs images (all of the configured resolution) into a `[N, 3, H, W]`
/// tensor with values in `[0, 1]`.
pub fn images_to_tensor(images: &[&crate::raster::Image]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "image {}x{} does not match batch resolution {h}x{w}",
                img.height(),
                img.width()
            )));
        }
        data.extend(img.to_chw());
    }
    Ok(Tensor::from_vec([images.len(), 3, h, w], data)?)
}
