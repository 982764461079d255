use std::fs;
use std::path::Path;

use seasol::config::RunConfig;
use seasol::io::grid::read_grid;
use seasol::pipeline::{run_pipeline, Stage};
use seasol::raster::min_max;
use seasol::synth::TwinTreeScene;

fn small_scene() -> TwinTreeScene {
    TwinTreeScene {
        size: 128,
        lot_half: 16,
        ..TwinTreeScene::default()
    }
}

fn load(dir: &Path) -> RunConfig {
    RunConfig::load(&dir.join("seasol.conf")).unwrap()
}

#[test]
fn twin_tree_run_writes_everything() {
    let dir = tempfile::tempdir().unwrap();
    small_scene().write(dir.path()).unwrap();
    let cfg = load(dir.path());
    let out = run_pipeline(&cfg).unwrap();

    let out_dir = dir.path().join("out");
    for f in ["leaf_on.asc", "leaf_off.asc", "zonal.csv", "report.json", "dsm.asc", "irradiation_leaf_off_deciduous.asc"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let leftovers: Vec<_> = fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".partial"))
        .collect();
    assert!(leftovers.is_empty());

    let rows = &out.zonal;
    assert_eq!(rows.len(), 3);
    let (ev, de) = (&rows[0], &rows[1]);
    let (on_e, on_d) = (ev.leaf_on_mean.unwrap(), de.leaf_on_mean.unwrap());
    assert!((on_e - on_d).abs() <= 1e-9 * on_e, "{on_e} vs {on_d}");
    assert!(de.leaf_off_mean.unwrap() > ev.leaf_off_mean.unwrap());

    let c = &out.report.constants;
    assert!((c.composite.f - (0.60 + 0.70 + 0.71) / 3.0).abs() < 1e-3);
    assert_eq!(out.report.warnings.defaulted_tree_pixels, 0);
    assert_eq!(out.report.warnings.empty_zones, 0);

    // reported constants agree with the emitted rasters
    let leaf_on = read_grid(&out_dir.join("leaf_on.asc")).unwrap();
    let (lo, _) = min_max(&leaf_on).unwrap();
    assert!((lo - c.composite.v).abs() <= 1e-5 * c.composite.v);
    let d = read_grid(&out_dir.join("irradiation_leaf_off_deciduous.asc")).unwrap();
    let (dmin, dmax) = min_max(&d).unwrap();
    assert!((dmin - c.composite.d_min).abs() <= 1e-5 * dmax);
    assert!((dmax - c.composite.d_max).abs() <= 1e-5 * dmax);

    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["constants"]["t"], 0.375);
    assert!(report["rasters"]["leaf_off"]["min"].is_number());
}

#[test]
fn f_zero_matches_no_penetration_composite() {
    let dir = tempfile::tempdir().unwrap();
    small_scene().write(dir.path()).unwrap();
    let mut cfg = load(dir.path());
    cfg.f_override = Some(0.0);
    let out = run_pipeline(&cfg).unwrap();
    let d = read_grid(&dir.path().join("out/irradiation_leaf_off_deciduous.asc")).unwrap();
    for (a, b) in out.season.d_adjusted.values().iter().zip(d.values()) {
        assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
    }
    let c = out.report.constants.composite;
    assert_eq!(c.deciduous_value, c.d_min);
    assert_eq!(out.report.constants.f_source, "override");
}

#[test]
fn missing_imagery_fails_validation_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let files = small_scene().write(dir.path()).unwrap();
    fs::remove_file(&files.imagery).unwrap();
    let err = run_pipeline(&load(dir.path())).err().unwrap();
    assert_eq!(err.stage, Stage::Validate);
    assert!(err.to_string().contains("imagery"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn stage_failure_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    small_scene().write(dir.path()).unwrap();
    fs::write(dir.path().join("zones.geojson"), "{not json").unwrap();
    let err = run_pipeline(&load(dir.path())).err().unwrap();
    assert_eq!(err.stage, Stage::Zonal);
    assert!(err.to_string().starts_with("stage 'zonal' failed"), "{err}");
    let out_dir = dir.path().join("out");
    assert_eq!(fs::read_dir(&out_dir).unwrap().count(), 0);
}

#[test]
fn v_override_out_of_range_is_composite_error() {
    let dir = tempfile::tempdir().unwrap();
    small_scene().write(dir.path()).unwrap();
    let mut cfg = load(dir.path());
    cfg.v_override = Some(1e9);
    let err = run_pipeline(&cfg).err().unwrap();
    assert_eq!(err.stage, Stage::Composite);
}
