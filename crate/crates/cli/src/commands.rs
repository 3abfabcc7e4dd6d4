use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use poseforge::augmentation::{augment as augment_sample, AugmentedSample};
use poseforge::config::{Preset, RunConfig, DATA_ENV};
use poseforge::data::{
    self, dataset_checksum, generate_dataset, load_annotations, load_dataset, AnnotationRecord, Dataset, Sample,
    SpecRanges, Split, ANNOTATIONS_FILE, IMAGES_DIR, MANIFEST_FILE,
};
use poseforge::evaluation::{conditional_inference, report_from_results, sample_results, ConditionalResult, EvalReport};
use poseforge::heatmaps::{render_gt_heatmaps, to_heatmap_coords, HeatmapStack};
use poseforge::model::checkpoint::{load_checkpoint, load_meta, CheckpointMeta, META_FILE};
use poseforge::model::training::{
    checkpoint_dir, pckh, staged_training, uses_msr, Ablation, Ablations, RunControl, TrainSettings,
};
use poseforge::model::{PoseNet, Predictor, STEM_STRIDE};
use poseforge::nn::par;
use poseforge::raster::Image;
use poseforge::render::{heatmap_grid, skeleton_overlay, upscale};
use poseforge::rng::{mix, stream_rng};
use poseforge::skeleton::{KeypointId, KeypointSet};
use serde::Serialize;

use crate::GlobalArgs;

/// Written to every output directory.
pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const DISTANCES_FILE: &str = "distances.csv";
pub const TRAIN_REPORT_FILE: &str = "training_report.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Pixel magnification of overlays and heatmap grids.
const VIEW_SCALE: usize = 4;

/// Bad input that is not a library error (arguments, directory state).
#[derive(Debug)]
pub struct UserError(pub String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

fn user(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UserError>() {
            return 1;
        }
        if let Some(pe) = cause.downcast_ref::<poseforge::Error>() {
            return if pe.is_user_error() { 1 } else { 2 };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            use std::io::ErrorKind::*;
            return if matches!(io.kind(), NotFound | PermissionDenied | AlreadyExists) { 1 } else { 2 };
        }
    }
    2
}

fn parse_ablations(names: &[String]) -> Result<Ablations> {
    let mut a = Ablations::default();
    for n in names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        a = a.with(n.parse::<Ablation>()?);
    }
    Ok(a)
}

/// Preset < config file < `--set` overrides, with `--seed` applied to the
/// training seed.
fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let preset: Preset = g.preset.parse()?;
    let mut cfg = RunConfig::load(preset, g.config.as_deref(), &g.overrides)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn data_root(g: &GlobalArgs, cfg: &RunConfig) -> PathBuf {
    g.data.clone().unwrap_or_else(|| cfg.data_root())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    preset: &'a str,
    config_hash: String,
    seed: u64,
    #[serde(flatten)]
    details: T,
}

fn write_manifest<T: Serialize>(dir: &Path, command: &str, g: &GlobalArgs, cfg: &RunConfig, details: T) -> Result<()> {
    write_json(
        &dir.join(RUN_MANIFEST),
        &RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            preset: &g.preset,
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            details,
        },
    )
}

fn is_nonempty_dir(p: &Path) -> bool {
    fs::read_dir(p).map(|mut d| d.next().is_some()).unwrap_or(false)
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub global: GlobalArgs,
    /// Number of samples.
    #[arg(long)]
    pub count: Option<usize>,
    /// Fraction of samples assigned to the val split.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Fraction of samples assigned to the test split.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Use the hard sampling ranges (wider poses, overlapping distractors,
    /// foreground occluders).
    #[arg(long)]
    pub hard: bool,
    /// Replace an existing dataset in the target directory.
    #[arg(long)]
    pub force: bool,
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let g = &a.global;
    let cfg = load_config(g)?;
    let mut manifest = cfg.data.manifest.clone();
    if let Some(s) = g.seed {
        manifest.seed = s;
    }
    if let Some(c) = a.count {
        manifest.count = c;
    }
    if let Some(f) = a.val_fraction {
        manifest.val_fraction = f;
    }
    if let Some(f) = a.test_fraction {
        manifest.test_fraction = f;
    }
    if a.hard {
        manifest.ranges = SpecRanges::hard();
    }
    manifest.validate()?;
    let root = g.out.clone().unwrap_or_else(|| data_root(g, &cfg));
    if is_nonempty_dir(&root) {
        if !a.force {
            return Err(user(format!(
                "{} is not empty; pass --force to replace it or choose another --out",
                root.display()
            )));
        }
        if !root.join(MANIFEST_FILE).is_file() {
            return Err(user(format!("{} exists but is not a poseforge dataset; refusing to replace it", root.display())));
        }
        for f in [ANNOTATIONS_FILE, MANIFEST_FILE, RUN_MANIFEST] {
            let p = root.join(f);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        if root.join(IMAGES_DIR).exists() {
            fs::remove_dir_all(root.join(IMAGES_DIR))?;
        }
    }
    let ds = generate_dataset(&manifest, &root)?;
    let checksum = dataset_checksum(&ds)?;
    let counts: Vec<(&str, usize)> = Split::ALL.iter().map(|s| (s.name(), ds.count(*s))).collect();
    let vis = data::visibility_counts(&ds.records);
    println!(
        "generated {} samples in {}: {}",
        ds.records.len(),
        root.display(),
        counts.iter().map(|(n, c)| format!("{n} {c}")).collect::<Vec<_>>().join(", ")
    );
    println!("keypoints: {} visible, {} occluded, {} unannotated", vis[0], vis[1], vis[2]);
    println!("checksum {checksum}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub global: GlobalArgs,
    /// Run only this stage (1-3); stages 2 and 3 need the previous
    /// stage's checkpoint in the run directory.
    #[arg(long)]
    pub stage: Option<usize>,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    report: &'a poseforge::model::training::TrainingReport,
    final_stage: usize,
    train_pckh: f64,
    val_pckh: Option<f64>,
}

fn load_samples(ds: &Dataset, split: Split) -> Result<Vec<Sample>> {
    Ok(ds.load_split(split)?)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let g = &a.global;
    let mut cfg = load_config(g)?;
    let extra = parse_ablations(&g.ablate)?;
    for ab in extra.active() {
        cfg.ablations = cfg.ablations.with(ab);
    }
    if let Some(s) = a.stage {
        if !(1..=3).contains(&s) {
            return Err(user(format!("--stage {s} does not exist (expected 1, 2 or 3)")));
        }
    }
    let hash = cfg.config_hash();
    let root = data_root(g, &cfg);
    let ds = load_dataset(&root).with_context(|| format!("loading dataset (set --data or {DATA_ENV})"))?;
    let train_set = load_samples(&ds, Split::Train)?;
    let val_set = load_samples(&ds, Split::Val)?;
    if train_set.is_empty() {
        return Err(user(format!("{} has no training samples", root.display())));
    }
    let run_dir = g.out.clone().unwrap_or_else(|| cfg.out_dir.join(format!("{}-{}", g.preset, &hash[..12])));

    // Pick the starting point: an in-progress run, the previous stage's
    // checkpoint, or a fresh network.
    let last = checkpoint_dir(&run_dir, "last");
    let mut start: Option<(PoseNet, CheckpointMeta)> = None;
    if last.join(META_FILE).is_file() {
        let meta = load_meta(&last)?;
        if meta.config_hash != hash {
            return Err(user(format!(
                "{} holds a run with config hash {} but the current config hashes to {hash}; use another --out",
                run_dir.display(),
                meta.config_hash
            )));
        }
        let resumable = match a.stage {
            None => true,
            Some(s) => meta.stage == s && !meta.stage_complete,
        };
        if resumable {
            log::info!("resuming from {} (stage {} epoch {})", last.display(), meta.stage, meta.epoch);
            start = Some(load_checkpoint(&last)?);
        }
    }
    if start.is_none() {
        if let Some(s) = a.stage.filter(|s| *s > 1) {
            let prev = checkpoint_dir(&run_dir, &format!("stage{}", s - 1));
            if !prev.join(META_FILE).is_file() {
                return Err(user(format!(
                    "--stage {s} needs the stage {} checkpoint at {}; run `poseforge train --stage {}` with the same --out first",
                    s - 1,
                    prev.display(),
                    s - 1
                )));
            }
            let (net, meta) = load_checkpoint(&prev)?;
            if meta.config_hash != hash {
                return Err(user(format!(
                    "{} was trained with config hash {}, current config hashes to {hash}",
                    prev.display(),
                    meta.config_hash
                )));
            }
            start = Some((net, meta));
        }
    }
    let (mut net, resume) = match start {
        Some((n, m)) => (n, Some(m)),
        None => (PoseNet::new(cfg.model.clone(), cfg.seed)?, None),
    };
    if net.config() != &cfg.model {
        return Err(user("checkpoint model configuration differs from the requested one"));
    }

    fs::create_dir_all(&run_dir)?;
    fs::write(run_dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    let checksum = dataset_checksum(&ds)?;
    write_manifest(
        &run_dir,
        "train",
        g,
        &cfg,
        serde_json::json!({
            "dataset": root,
            "dataset_checksum": checksum,
            "train_samples": train_set.len(),
            "val_samples": val_set.len(),
            "stage": a.stage,
            "ablations": cfg.ablations.tag(),
        }),
    )?;
    let settings = TrainSettings {
        loss: cfg.loss.clone(),
        augment: cfg.augment.clone(),
        schedule: cfg.schedule.clone(),
        graph: cfg.graph.clone(),
        sigma: cfg.heatmap_sigma,
        seed: cfg.seed,
        ablations: cfg.ablations,
        config_hash: hash,
    };
    let control = RunControl {
        stages: a.stage.map(|s| vec![s]).unwrap_or_default(),
        resume,
        out_dir: Some(run_dir.clone()),
    };
    let report = staged_training(&mut net, &train_set, &val_set, &settings, &control)?;
    let final_stage = report.epochs.last().map_or(0, |e| e.stage);
    let msr = uses_msr(final_stage, cfg.ablations);
    let train_pckh = pckh(&net, &train_set, msr)?;
    let val_pckh = if val_set.is_empty() { None } else { Some(pckh(&net, &val_set, msr)?) };
    write_json(
        &run_dir.join(TRAIN_REPORT_FILE),
        &TrainSummary {
            report: &report,
            final_stage,
            train_pckh,
            val_pckh,
        },
    )?;
    for s in &report.stages {
        println!(
            "stage {}: {} epochs, final loss {}, best val pckh {}",
            s.stage,
            s.epochs,
            s.final_loss.map_or("-".into(), |v| format!("{v:.5}")),
            s.best_val_pckh.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    println!("train pckh@0.5 {train_pckh:.4}");
    if let Some(v) = val_pckh {
        println!("val pckh@0.5 {v:.4}");
    }
    println!("run directory {}", run_dir.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub global: GlobalArgs,
    /// Checkpoint directory, or a run directory containing checkpoints/last.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split to evaluate.
    #[arg(long, default_value = "val")]
    pub split: String,
    /// Write skeleton overlays for the first N samples.
    #[arg(long, default_value_t = 0)]
    pub overlays: usize,
    /// Write the fused heatmaps of every sample as `.hms` files.
    #[arg(long)]
    pub save_heatmaps: bool,
}

fn resolve_checkpoint(p: &Path) -> Result<PathBuf> {
    if p.join(META_FILE).is_file() {
        return Ok(p.to_path_buf());
    }
    let last = checkpoint_dir(p, "last");
    if last.join(META_FILE).is_file() {
        return Ok(last);
    }
    Err(user(format!("no checkpoint at {} (expected {META_FILE} or checkpoints/last)", p.display())))
}

#[derive(Serialize)]
struct EvalDetails {
    checkpoint: PathBuf,
    checkpoint_hash: String,
    checkpoint_stage: usize,
    split: String,
    use_msr: bool,
    forward_passes: usize,
    low_confidence: usize,
    aggregate_pck: f64,
    auc: f64,
}

pub fn distances_csv(report_rows: &[poseforge::evaluation::SampleResult], records: &[&AnnotationRecord]) -> String {
    let mut s = String::from("index,image,normalizer");
    for id in KeypointId::ALL {
        s.push(',');
        s.push_str(id.name());
    }
    s.push('\n');
    for r in report_rows {
        s.push_str(&format!("{},{},{}", r.index, records[r.index].image, r.normalizer));
        for d in &r.distances {
            s.push(',');
            if let Some(d) = d {
                s.push_str(&d.to_string());
            }
        }
        s.push('\n');
    }
    s
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let g = &a.global;
    let cfg = load_config(g)?;
    let split: Split = a.split.parse()?;
    let ckpt = resolve_checkpoint(&a.checkpoint)?;
    let (net, meta) = load_checkpoint(&ckpt)?;
    if g.config.is_some() && cfg.config_hash() != meta.config_hash {
        return Err(user(format!(
            "checkpoint {} was trained with config hash {} but {} hashes to {}",
            ckpt.display(),
            meta.config_hash,
            g.config.as_ref().unwrap().display(),
            cfg.config_hash()
        )));
    }
    let requested = parse_ablations(&g.ablate)?;
    for ab in requested.active() {
        if ab != Ablation::NoMsr && !meta.ablations.contains(ab) {
            log::warn!(
                "`{}` only changes training; the checkpoint was trained without it, so the report is tagged but the model is unchanged",
                ab.name()
            );
        }
    }
    let mut tag = meta.ablations;
    for ab in requested.active() {
        tag = tag.with(ab);
    }
    let use_msr = uses_msr(meta.stage, meta.ablations) && !requested.no_msr;

    let root = data_root(g, &cfg);
    let ds = load_dataset(&root).with_context(|| format!("loading dataset (set --data or {DATA_ENV})"))?;
    let samples = load_samples(&ds, split)?;
    if samples.is_empty() {
        return Err(user(format!("split `{}` of {} is empty", split.name(), root.display())));
    }
    let predictor = Predictor { net: &net, use_msr };
    let results: Vec<ConditionalResult> = par::map_indexed(samples.len(), |i| {
        conditional_inference(&samples[i].image, &predictor, &cfg.eval)
    })
    .into_iter()
    .collect::<poseforge::Result<_>>()?;
    let preds: Vec<KeypointSet> = results.iter().map(|r| r.keypoints).collect();
    let gts: Vec<KeypointSet> = samples.iter().map(|s| s.record.keypoints).collect();
    cfg.eval.validate()?;
    let rows = sample_results(&preds, &gts, cfg.eval.metric)?;
    let mut report: EvalReport = report_from_results(&rows, samples.len(), &cfg.eval);
    report.ablation = tag.tag();

    let out = g.out.clone().unwrap_or_else(|| {
        let run = match ckpt.parent() {
            Some(p) if p.file_name().is_some_and(|n| n == "checkpoints") => p.parent().unwrap_or(p).to_path_buf(),
            _ => ckpt.clone(),
        };
        run.join(format!("eval-{}", split.name()))
    });
    fs::create_dir_all(&out)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    fs::write(out.join(CURVE_FILE), report.curve_csv())?;
    let records: Vec<&AnnotationRecord> = samples.iter().map(|s| &s.record).collect();
    fs::write(out.join(DISTANCES_FILE), distances_csv(&rows, &records))?;
    if a.overlays > 0 {
        let dir = out.join("overlays");
        fs::create_dir_all(&dir)?;
        for (i, (s, r)) in samples.iter().zip(&results).take(a.overlays).enumerate() {
            overlay(&s.image, &r.keypoints, &cfg).save_png(&dir.join(format!("{i:06}.png")))?;
        }
    }
    if a.save_heatmaps {
        let dir = out.join("heatmaps");
        fs::create_dir_all(&dir)?;
        for (i, r) in results.iter().enumerate() {
            let f = fs::File::create(dir.join(format!("{i:06}.hms")))?;
            r.heatmaps.write_hms(std::io::BufWriter::new(f))?;
        }
    }
    let details = EvalDetails {
        checkpoint: ckpt.clone(),
        checkpoint_hash: meta.config_hash.clone(),
        checkpoint_stage: meta.stage,
        split: split.name().to_string(),
        use_msr,
        forward_passes: results.iter().map(|r| r.forward_passes).sum(),
        low_confidence: results.iter().filter(|r| r.low_confidence).count(),
        aggregate_pck: report.aggregate_pck,
        auc: report.auc,
    };
    write_manifest(&out, "eval", g, &cfg, &details)?;
    println!(
        "{} {:?}@{} on {} {} samples ({} excluded): {:.4}, auc {:.4}",
        report.ablation.as_deref().map_or(String::new(), |t| format!("[{t}]")),
        report.metric,
        report.threshold,
        report.num_samples,
        split.name(),
        report.num_excluded,
        report.aggregate_pck,
        report.auc
    );
    println!("report written to {}", out.display());
    Ok(())
}

fn overlay(image: &Image, k: &KeypointSet, cfg: &RunConfig) -> Image {
    let f = VIEW_SCALE as f64;
    let scaled = k.map_positions(|x, y| ((x + 0.5) * f - 0.5, (y + 0.5) * f - 0.5));
    skeleton_overlay(&upscale(image, VIEW_SCALE), &scaled, &cfg.graph)
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub global: GlobalArgs,
    /// Split to draw samples from.
    #[arg(long, default_value = "train")]
    pub split: String,
    /// First sample index within the split.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Number of samples.
    #[arg(long, default_value_t = 8)]
    pub count: usize,
}

#[derive(Serialize)]
struct AugmentSidecar<'a> {
    source: &'a str,
    seed: u64,
    keypoints: &'a KeypointSet,
    applied_ops: &'a [poseforge::augmentation::AppliedOp],
}

pub fn augment(a: &AugmentArgs) -> Result<()> {
    let g = &a.global;
    let cfg = load_config(g)?;
    let ablations = parse_ablations(&g.ablate)?;
    let split: Split = a.split.parse()?;
    let root = data_root(g, &cfg);
    let ds = load_dataset(&root).with_context(|| format!("loading dataset (set --data or {DATA_ENV})"))?;
    let samples = load_samples(&ds, split)?;
    if a.index >= samples.len() {
        return Err(user(format!("split `{}` has {} samples, --index {} is out of range", split.name(), samples.len(), a.index)));
    }
    let out = g.out.clone().unwrap_or_else(|| cfg.out_dir.join("augment"));
    fs::create_dir_all(out.join(IMAGES_DIR))?;
    let mut records = Vec::new();
    for (i, s) in samples.iter().enumerate().skip(a.index).take(a.count) {
        let mut rng = stream_rng(mix(cfg.seed, 0xa11), i as u64);
        let aug = augment_sample(
            AugmentedSample::new(s.image.clone(), s.record.keypoints),
            &cfg.augment,
            !ablations.no_masking,
            &mut rng,
        );
        let name = format!("{IMAGES_DIR}/{i:06}.png");
        aug.image.save_png(&out.join(&name))?;
        write_json(
            &out.join(format!("{IMAGES_DIR}/{i:06}.json")),
            &AugmentSidecar {
                source: &s.record.image,
                seed: cfg.seed,
                keypoints: &aug.keypoints,
                applied_ops: &aug.applied_ops,
            },
        )?;
        records.push(AnnotationRecord {
            image: name,
            keypoints: aug.keypoints,
            ..s.record.clone()
        });
    }
    data::save_annotations(&records, &out.join(ANNOTATIONS_FILE))?;
    write_manifest(&out, "augment", g, &cfg, serde_json::json!({ "dataset": root, "split": split.name(), "samples": records.len() }))?;
    println!("wrote {} augmented samples to {}", records.len(), out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub global: GlobalArgs,
    /// `.hms` heatmap files or annotation (JSONL) files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// For annotation files, also render ground-truth heatmap grids.
    #[arg(long)]
    pub gt_heatmaps: bool,
}

enum InputKind {
    Heatmaps,
    Annotations,
}

fn sniff(path: &Path) -> Result<InputKind> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(b"HMS1") {
        return Ok(InputKind::Heatmaps);
    }
    if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
        return Ok(InputKind::Annotations);
    }
    Err(user(format!(
        "{}: unknown file magic (expected an HMS1 heatmap file or JSONL annotations)",
        path.display()
    )))
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned())
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let g = &a.global;
    let cfg = load_config(g)?;
    let out = g.out.clone().unwrap_or_else(|| cfg.out_dir.join("render"));
    fs::create_dir_all(&out)?;
    let mut written = 0;
    for input in &a.inputs {
        match sniff(input)? {
            InputKind::Heatmaps => {
                let f = fs::File::open(input)?;
                let h = HeatmapStack::read_hms(std::io::BufReader::new(f))?;
                heatmap_grid(&h, 2 * VIEW_SCALE).save_png(&out.join(format!("{}_grid.png", stem(input))))?;
                written += 1;
            }
            InputKind::Annotations => {
                let base = input.parent().unwrap_or(Path::new("."));
                for r in load_annotations(input)? {
                    let path = base.join(&r.image);
                    let full = Image::load_png(&path).with_context(|| format!("loading {}", path.display()))?;
                    let img = if r.crop.inside(full.width(), full.height()) { full.crop(r.crop) } else { full };
                    let name = stem(Path::new(&r.image));
                    overlay(&img, &r.keypoints, &cfg).save_png(&out.join(format!("{name}_overlay.png")))?;
                    written += 1;
                    if a.gt_heatmaps {
                        let res = (img.height() / STEM_STRIDE, img.width() / STEM_STRIDE);
                        let h = render_gt_heatmaps(&to_heatmap_coords(&r.keypoints, STEM_STRIDE), res, cfg.heatmap_sigma)?;
                        heatmap_grid(&h, 2 * VIEW_SCALE).save_png(&out.join(format!("{name}_gt_grid.png")))?;
                        written += 1;
                    }
                }
            }
        }
    }
    println!("wrote {written} images to {}", out.display());
    Ok(())
}
