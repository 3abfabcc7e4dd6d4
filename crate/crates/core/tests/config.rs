use std::fs;

use poseforge::config::{Preset, RunConfig};

/// Value of `schedule.learning_rate` for every combination of layers.
#[test]
fn later_layers_win_in_every_combination() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("c.toml");
    let json = dir.path().join("c.json");
    fs::write(&toml, "seed = 11\n[schedule]\nlearning_rate = 0.01\n").unwrap();
    fs::write(&json, r#"{"seed": 12, "schedule": {"learning_rate": 0.02}}"#).unwrap();
    for preset in [Preset::Toy, Preset::Paper] {
        let base = RunConfig::preset(preset);
        for file in [None, Some(&toml), Some(&json)] {
            for set in [None, Some(0.03)] {
                let overrides: Vec<String> = set.map(|v| format!("schedule.learning_rate={v}")).into_iter().collect();
                let c = RunConfig::load(preset, file.map(|p| p.as_path()), &overrides).unwrap();
                let from_file = file.map(|p| if p == &toml { (0.01, 11) } else { (0.02, 12) });
                let want_lr = set.or(from_file.map(|f| f.0)).unwrap_or(base.schedule.learning_rate);
                let want_seed = from_file.map_or(base.seed, |f| f.1);
                assert_eq!(c.schedule.learning_rate, want_lr, "{preset} {file:?} {set:?}");
                assert_eq!(c.seed, want_seed, "{preset} {file:?} {set:?}");
                assert_eq!(c.model, base.model, "untouched sections keep preset values");
            }
        }
    }
}

#[test]
fn invalid_layers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[schedule]\nlearnin_rate = 0.1\n").unwrap();
    assert!(RunConfig::load(Preset::Toy, Some(&bad), &[]).is_err());
    assert!(RunConfig::load(Preset::Toy, None, &["model.no_such=1".into()]).is_err());
    assert!(RunConfig::load(Preset::Toy, None, &["heatmap_sigma=-1".into()]).is_err());
    assert!(RunConfig::load(Preset::Toy, None, &["missing_equals".into()]).is_err());
}
