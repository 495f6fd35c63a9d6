//! The shipped config files stay in sync with the programmatic constructors.

use acrlnc::ExperimentConfig;
use std::path::Path;

fn repo_config(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn shipped_configs_match_constructors() {
    for (file, cfg) in [
        ("mp_reference.toml", ExperimentConfig::mp_reference()),
        ("mh_reference.toml", ExperimentConfig::mh_reference()),
        ("mp_bounds_reference.toml", ExperimentConfig::mp_bounds_reference()),
    ] {
        let parsed = ExperimentConfig::from_toml(&repo_config(file)).expect(file);
        assert_eq!(parsed.to_toml(), cfg.to_toml(), "{file} drifted from its constructor");
        assert_eq!(parsed.hash(), cfg.hash());
    }
}
