use std::fs;
use std::path::Path;

use recbreak::io::{load_draws, persist_draws, RunManifest};
use recbreak::krige::{simulate_predictive, PredictionGrid};
use recbreak::mcmc::{fit, ModelSpec, PosteriorDraws, Variant};
use recbreak::records::{extract_records, simulate_series, SimulatedSeriesConfig};
use recbreak::Error;

fn draws(variant: Variant) -> (PosteriorDraws, Vec<recbreak::records::Site>) {
    let panel = simulate_series(&SimulatedSeriesConfig::ldm(0.05, 1.0, 6, 4, 12, 2)).unwrap();
    let tensor = extract_records(&panel).unwrap();
    let spec = ModelSpec { iterations: 16, burn_in: 8, ..ModelSpec::new(variant) };
    (fit(&spec, &tensor, panel.sites()).unwrap().draws, panel.sites().to_vec())
}

fn rewrite(path: &Path, f: impl FnOnce(String) -> String) {
    fs::write(path, f(fs::read_to_string(path).unwrap())).unwrap();
}

#[test]
fn round_trip_every_variant() {
    for v in [Variant::M0, Variant::M1, Variant::M2, Variant::M3, Variant::M4, Variant::M5] {
        let (d, _) = draws(v);
        let dir = tempfile::tempdir().unwrap();
        let files = persist_draws(&d, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        assert_eq!(load_draws(dir.path()).unwrap(), d, "{v:?}");
    }
}

#[test]
fn truncated_file_is_rejected() {
    let (d, _) = draws(Variant::M2);
    let dir = tempfile::tempdir().unwrap();
    persist_draws(&d, dir.path()).unwrap();
    rewrite(&dir.path().join("w.csv"), |s| {
        let mut lines: Vec<&str> = s.lines().collect();
        lines.pop();
        lines.join("\n") + "\n"
    });
    assert!(matches!(load_draws(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn corrupt_value_reports_line() {
    let (d, _) = draws(Variant::M1);
    let dir = tempfile::tempdir().unwrap();
    persist_draws(&d, dir.path()).unwrap();
    rewrite(&dir.path().join("draws.csv"), |s| {
        let mut lines: Vec<String> = s.lines().map(String::from).collect();
        let last = lines[4].rfind(',').unwrap();
        lines[4].replace_range(last + 1.., "abc");
        lines.join("\n") + "\n"
    });
    match load_draws(dir.path()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn format_version_mismatch_is_rejected() {
    let (d, _) = draws(Variant::M0);
    let dir = tempfile::tempdir().unwrap();
    persist_draws(&d, dir.path()).unwrap();
    rewrite(&dir.path().join("draws.csv"), |s| s.replacen("# ", "# x", 1));
    assert!(matches!(load_draws(dir.path()), Err(Error::Format { .. })));

    persist_draws(&d, dir.path()).unwrap();
    let meta = dir.path().join("meta.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&meta).unwrap()).unwrap();
    let old = v["format"].as_str().unwrap().to_string();
    rewrite(&meta, |s| s.replacen(&old, "recbreak-draws v999", 1));
    assert!(matches!(load_draws(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn manifest_hashes_outputs_and_records_seed() {
    let (d, _) = draws(Variant::M1);
    let dir = tempfile::tempdir().unwrap();
    let files = persist_draws(&d, dir.path()).unwrap();
    let path = RunManifest::new("fit", Some(17), serde_json::json!({ "k": 1 })).write(dir.path(), &files).unwrap();
    let m = RunManifest::read(&path).unwrap();
    assert_eq!(m.seed, Some(17));
    assert!(m.verify(dir.path()).unwrap().is_empty());
    rewrite(&dir.path().join("w.csv"), |s| s + "\n");
    assert_eq!(m.verify(dir.path()).unwrap(), vec![std::path::PathBuf::from("w.csv")]);
}

#[test]
fn predictive_simulation_is_reproducible() {
    let (d, sites) = draws(Variant::M3);
    let grid = PredictionGrid::from_sites(&sites).unwrap();
    let a = simulate_predictive(&d, &grid, 6, 4).unwrap();
    let b = simulate_predictive(&d, &grid, 6, 4).unwrap();
    assert_eq!(a.indicators, b.indicators);
    assert!(a.probabilities.iter().zip(&b.probabilities).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a.indicators, simulate_predictive(&d, &grid, 6, 5).unwrap().indicators);
}
