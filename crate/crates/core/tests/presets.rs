use falsify_core::harness::presets::{preset, PRESET_NAMES};
use falsify_core::ExperimentConfig;
use std::path::PathBuf;

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn bundled_configs_match_the_code() {
    for name in PRESET_NAMES {
        let path = config_dir().join(format!("{name}.json"));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let parsed = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(parsed, preset(name).unwrap(), "{name}");
    }
}

#[test]
fn no_stray_config_files() {
    for entry in std::fs::read_dir(config_dir()).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        let stem = name.strip_suffix(".json").expect("only json files");
        assert!(PRESET_NAMES.contains(&stem), "unexpected config {name}");
    }
}
