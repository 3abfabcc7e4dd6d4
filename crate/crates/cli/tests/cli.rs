use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_poseforge");
/// Tiny network and one epoch per stage.
const TINY: [&str; 6] = [
    "--set",
    "schedule.stage_epochs=[1,1,1]",
    "--set",
    "model.base_channels=4",
    "--set",
    "model.msr_channels=4",
];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("POSEFORGE_DATA")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> (i32, String) {
    let o = run(dir, args);
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn checksum_line(stdout: &str) -> String {
    stdout.lines().find(|l| l.starts_with("checksum ")).unwrap().to_string()
}

/// `extra` with `base` inserted after the subcommand name.
fn with_args<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![extra[0]];
    v.extend(base);
    v.extend(&extra[1..]);
    v
}

#[test]
fn gen_is_reproducible_and_reports_counts() {
    let t = tempfile::tempdir().unwrap();
    let a = ok(t.path(), &["gen", "--count", "10", "--seed", "7", "--out", "a"]);
    ok(t.path(), &["gen", "--count", "10", "--seed", "7", "--out", "b"]);
    assert!(a.contains("train 8, val 2, test 0"), "{a}");
    assert_eq!(tree(&t.path().join("a")), tree(&t.path().join("b")));
    let c = ok(t.path(), &["gen", "--count", "10", "--seed", "8", "--out", "c"]);
    assert_ne!(checksum_line(&a), checksum_line(&c));
}

#[test]
fn gen_rejects_empty_dataset() {
    let t = tempfile::tempdir().unwrap();
    let (c, err) = code(t.path(), &["gen", "--count", "0", "--out", "d"]);
    assert_eq!(c, 1);
    assert!(err.contains("empty dataset"), "{err}");
}

#[test]
fn manifest_round_trip_regenerates_identical_checksum() {
    let t = tempfile::tempdir().unwrap();
    let first = ok(t.path(), &["gen", "--count", "6", "--seed", "3", "--hard", "--out", "a"]);
    let manifest = fs::read_to_string(t.path().join("a/manifest.json")).unwrap();
    let cfg = format!("{{\"data\": {{\"manifest\": {manifest}}}}}");
    fs::write(t.path().join("regen.json"), cfg).unwrap();
    let second = ok(t.path(), &["gen", "--config", "regen.json", "--out", "b"]);
    assert_eq!(checksum_line(&first), checksum_line(&second));
}

#[test]
fn gen_honours_env_root_and_force() {
    let t = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["gen", "--count", "3"])
        .current_dir(t.path())
        .env("POSEFORGE_DATA", t.path().join("envdata"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(t.path().join("envdata/annotations.jsonl").is_file());
    assert_eq!(code(t.path(), &["gen", "--count", "3", "--out", "envdata"]).0, 1);
    ok(t.path(), &["gen", "--count", "2", "--out", "envdata", "--force"]);
    assert_eq!(fs::read_dir(t.path().join("envdata/images")).unwrap().count(), 2);
}

#[test]
fn unknown_flags_and_keys_are_user_errors() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(t.path(), &["gen", "--bogus"]).0, 1);
    assert_eq!(code(t.path(), &["nope"]).0, 1);
    let (c, err) = code(t.path(), &["gen", "--set", "model.nope=1", "--out", "x"]);
    assert_eq!(c, 1);
    assert!(err.contains("model.nope"), "{err}");
    assert_eq!(code(t.path(), &["gen", "--preset", "huge", "--out", "x"]).0, 1);
    assert_eq!(code(t.path(), &["train", "--data", "missing"]).0, 1);
    assert_eq!(code(t.path(), &["--help"]).0, 0);
}

fn dataset(dir: &Path) {
    ok(dir, &["gen", "--count", "6", "--seed", "1", "--out", "d"]);
}

#[test]
fn stage_two_needs_stage_one() {
    let t = tempfile::tempdir().unwrap();
    dataset(t.path());
    let (c, err) = code(t.path(), &with_args(&TINY, &["train", "--data", "d", "--stage", "2", "--out", "r"]));
    assert_eq!(c, 1);
    assert!(err.contains("stage 1 checkpoint"), "{err}");
}

#[test]
fn staged_runs_resume_to_the_same_parameters() {
    let t = tempfile::tempdir().unwrap();
    dataset(t.path());
    ok(t.path(), &with_args(&TINY, &["train", "--data", "d", "--out", "whole"]));
    ok(t.path(), &with_args(&TINY, &["train", "--data", "d", "--out", "split", "--stage", "1"]));
    ok(t.path(), &with_args(&TINY, &["train", "--data", "d", "--out", "split", "--stage", "2"]));
    // No --stage: picks up the finished stage 2 from `last` and runs stage 3.
    ok(t.path(), &with_args(&TINY, &["train", "--data", "d", "--out", "split"]));
    let p = |run: &str| fs::read(t.path().join(run).join("checkpoints/last/params.bin")).unwrap();
    assert_eq!(p("whole"), p("split"));
    for s in ["stage1", "stage2", "stage3"] {
        assert!(t.path().join("whole/checkpoints").join(s).is_dir());
    }
    let log = fs::read_to_string(t.path().join("split/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4, "{log}");

    // A different config may not continue this run.
    let (c, err) = code(
        t.path(),
        &with_args(&TINY, &["train", "--data", "d", "--out", "split", "--seed", "5"]),
    );
    assert_eq!(c, 1);
    assert!(err.contains("config hash"), "{err}");
}

#[test]
fn non_finite_training_is_an_internal_error() {
    let t = tempfile::tempdir().unwrap();
    dataset(t.path());
    let (c, err) = code(
        t.path(),
        &with_args(&TINY, &["train", "--data", "d", "--out", "r", "--set", "schedule.learning_rate=1e30"]),
    );
    assert_eq!(c, 2, "{err}");
    assert!(err.contains("non-finite"), "{err}");
    assert!(t.path().join("r/nonfinite_dump.json").is_file());
}

#[test]
fn config_file_and_flags_layer_over_the_preset() {
    let t = tempfile::tempdir().unwrap();
    dataset(t.path());
    fs::write(
        t.path().join("c.toml"),
        "seed = 11\n[schedule]\nlearning_rate = 0.002\nbatch_size = 2\n",
    )
    .unwrap();
    let args = with_args(
        &TINY,
        &["train", "--data", "d", "--out", "r", "--config", "c.toml", "--set", "schedule.batch_size=3"],
    );
    ok(t.path(), &args);
    let written: toml::Value = toml::from_str(&fs::read_to_string(t.path().join("r/config.toml")).unwrap()).unwrap();
    assert_eq!(written["seed"].as_integer(), Some(11));
    assert_eq!(written["schedule"]["learning_rate"].as_float(), Some(0.002));
    assert_eq!(written["schedule"]["batch_size"].as_integer(), Some(3));
    assert_eq!(written["model"]["base_channels"].as_integer(), Some(4));
    assert_eq!(written["schedule"]["optimizer"].as_str(), Some("adam"));
}

fn trained(dir: &Path) {
    dataset(dir);
    ok(dir, &with_args(&TINY, &["train", "--data", "d", "--out", "r"]));
}

#[test]
fn eval_writes_tagged_report_matching_a_recount() {
    let t = tempfile::tempdir().unwrap();
    trained(t.path());
    let stdout = ok(
        t.path(),
        &["eval", "--data", "d", "--checkpoint", "r", "--split", "train", "--ablate", "no-structure-loss", "--out", "e"],
    );
    assert!(stdout.contains("[no-structure-loss]"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("e/report.json")).unwrap()).unwrap();
    assert_eq!(report["ablation"], "no-structure-loss");
    assert_eq!(report["num_samples"], 5);

    // Independent recount from the per-sample distance table.
    let csv = fs::read_to_string(t.path().join("e/distances.csv")).unwrap();
    let (mut hits, mut total) = (0usize, 0usize);
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 3 + 16);
        let norm: f64 = cells[2].parse().unwrap();
        for c in &cells[3..] {
            if c.is_empty() {
                continue;
            }
            total += 1;
            if c.parse::<f64>().unwrap() <= 0.5 * norm {
                hits += 1;
            }
        }
    }
    let recount = hits as f64 / total as f64;
    assert_eq!(report["aggregate_pck"].as_f64().unwrap(), recount);
    let curve = fs::read_to_string(t.path().join("e/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 51);
    assert!(t.path().join("e/run_manifest.json").is_file());
}

#[test]
fn eval_checks_explicit_config_hash() {
    let t = tempfile::tempdir().unwrap();
    trained(t.path());
    fs::write(t.path().join("other.toml"), "seed = 99\n").unwrap();
    let (c, err) = code(t.path(), &["eval", "--data", "d", "--checkpoint", "r", "--config", "other.toml"]);
    assert_eq!(c, 1);
    assert!(err.contains("config hash"), "{err}");
    assert_eq!(code(t.path(), &["eval", "--data", "d", "--checkpoint", "nowhere"]).0, 1);
}

#[test]
fn augment_and_render_round_trip() {
    let t = tempfile::tempdir().unwrap();
    trained(t.path());
    ok(t.path(), &["augment", "--data", "d", "--count", "2", "--seed", "4", "--out", "a1"]);
    ok(t.path(), &["augment", "--data", "d", "--count", "2", "--seed", "4", "--out", "a2"]);
    assert_eq!(tree(&t.path().join("a1/images")), tree(&t.path().join("a2/images")));
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("a1/images/000000.json")).unwrap()).unwrap();
    assert!(side["applied_ops"].is_array());

    ok(t.path(), &["eval", "--data", "d", "--checkpoint", "r", "--out", "e", "--save-heatmaps", "--overlays", "1"]);
    assert!(t.path().join("e/overlays/000000.png").is_file());
    ok(t.path(), &["render", "a1/annotations.jsonl", "e/heatmaps/000000.hms", "--gt-heatmaps", "--out", "png"]);
    for f in ["000000_overlay.png", "000001_overlay.png", "000000_gt_grid.png", "000000_grid.png"] {
        assert!(t.path().join("png").join(f).is_file(), "{f}");
    }
    let (c, err) = code(t.path(), &["render", "d/images/000000.png"]);
    assert_eq!(c, 1);
    assert!(err.contains("unknown file magic"), "{err}");
}
