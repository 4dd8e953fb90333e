//! The shipped configuration files equal the built-in presets.

use metctl_bench::ScenarioConfig;
use metctl_core::ModelKind;

fn shipped(name: &str) -> ScenarioConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ScenarioConfig::load(&path).unwrap().config
}

#[test]
fn shipped_configs_match_presets() {
    if std::env::var_os("METCTL_WRITE_PRESETS").is_some() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for (kind, name) in [(ModelKind::FattyAcid, "fatty_acid.json"), (ModelKind::Lactate, "lactate.json")] {
            std::fs::write(dir.join(name), ScenarioConfig::preset(kind).to_json() + "\n").unwrap();
        }
    }
    assert_eq!(shipped("fatty_acid.json"), ScenarioConfig::preset(ModelKind::FattyAcid));
    assert_eq!(shipped("lactate.json"), ScenarioConfig::preset(ModelKind::Lactate));
}
