use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use abrsim::experiment::{emit_plot_data, recompute_aggregates, run_matrix, AggregateCell, ExperimentConfig};

const CONFIG: &str = r#"
schema_version = 1
seed = 7
b_max = [16, 40]
segment_count = 60
write_logs = true

[[profile]]
name = "mobile"
synthetic = { kind = "mobile", traces = 3, duration = 180 }

[[profile]]
name = "square"
synthetic = { kind = "controlled", duration = 120 }

[[algorithm]]
kind = "conventional"

[[algorithm]]
kind = "panda"

[[algorithm]]
kind = "bba"

[[algorithm]]
kind = "bola-o"

[[algorithm]]
kind = "abma+"
"#;

fn config() -> ExperimentConfig {
    ExperimentConfig::from_toml(CONFIG, Path::new(".")).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn matrix_writes_a_complete_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_matrix(&config(), dir.path()).unwrap();
    assert_eq!(outcome.sessions.len(), 4 * 5 * 2);
    assert_eq!(outcome.cells.len(), 2 * 5 * 2);
    for f in ["bundle.json", "sessions.csv", "sessions.json", "aggregates.csv", "aggregates.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert!(dir.path().join("logs/mobile/abma+/bmax-16/mobile-00.csv").is_file());
    assert!(dir.path().join("logs/square/bba/bmax-40/square-00.json").is_file());

    let written = emit_plot_data(dir.path()).unwrap();
    assert_eq!(written.len(), 5);
    for f in written {
        let text = fs::read_to_string(f).unwrap();
        assert_eq!(text.lines().count(), 1 + 20);
    }
}

#[test]
fn aggregates_rebuild_from_session_logs() {
    let dir = tempfile::tempdir().unwrap();
    run_matrix(&config(), dir.path()).unwrap();
    let stored: Vec<AggregateCell> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("aggregates.json")).unwrap()).unwrap();
    assert_eq!(recompute_aggregates(dir.path()).unwrap(), stored);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_matrix(&config(), a.path()).unwrap();
    run_matrix(&config(), b.path()).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn config_rejects_unknown_keys_and_versions() {
    let bad = CONFIG.replace("segment_count = 60", "segment_count = 60\nsurprise = 1");
    assert!(ExperimentConfig::from_toml(&bad, Path::new(".")).is_err());
    let bad = CONFIG.replace("schema_version = 1", "schema_version = 9");
    let cfg = ExperimentConfig::from_toml(&bad, Path::new("."));
    assert!(cfg.is_err() || cfg.unwrap().validate().is_err());
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mobile.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.algorithms.len(), 5);
}
