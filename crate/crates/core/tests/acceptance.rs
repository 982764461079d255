//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always appear; exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use seasol::canopy::{crown_transparency, penetration_factor, CanopyPhoto, Roi, ThresholdMode};
use seasol::classify::RgbPixels;
use seasol::composite::{apply_penetration, beneath_trees_leaf_off, leaf_on_composite};
use seasol::config::RunConfig;
use seasol::io::grid::{encode_grid, parse_grid, read_grid};
use seasol::pipeline::{run_pipeline, PipelineOutputs};
use seasol::raster::{min_max, min_merge, BinaryMask, GridSpec, Raster, DEFAULT_NODATA};
use seasol::solar::{
    clearsky_components, daily_irradiation, pixel_daily_irradiation, solar_position, ShadowCaster, SolarConfig,
    SunPosition, TerrainMode,
};
use seasol::synth::TwinTreeScene;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spec(n: usize, cell: f64) -> GridSpec {
    GridSpec::new(n, n, 0.0, 0.0, cell).unwrap()
}

fn horizontal(day: u16) -> SolarConfig {
    SolarConfig {
        day_of_year: day,
        terrain_mode: TerrainMode::Horizontal,
        ..SolarConfig::default()
    }
}

/// Wall along a full row; the sun due south casts its shadow north. The
/// length is the distance from the wall cell to the farthest shaded cell.
fn c1_wall_shadows() -> Outcome {
    let n = 200;
    let wall_row = 150;
    let r = Raster::from_fn(spec(n, 0.5), |_, row| Some(if row == wall_row { 10.0 } else { 0.0 }));
    let t = Instant::now();
    let caster = ShadowCaster::new(&r, &SolarConfig::default()).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for (alt, expect) in [(45.0, 10.0), (0.5f64.atan().to_degrees(), 20.0)] {
        let sun = SunPosition {
            altitude: alt,
            azimuth: 180.0,
        };
        let mut lengths = Vec::new();
        for col in 0..n {
            let mut far = 0;
            for row in 0..wall_row {
                if caster.is_shadowed(col, row, &sun).map_err(|e| e.to_string())? {
                    far = far.max(wall_row - row);
                }
            }
            lengths.push(far as f64 * 0.5);
        }
        let worst = lengths.iter().map(|l| (l - expect).abs()).fold(0.0, f64::max);
        ok &= worst <= 0.5;
        lines.push(format!("alt {alt:.2}: {:.1} m (expect {expect}, worst dev {worst:.2} m)", lengths[n / 2]));
    }
    let secs = t.elapsed().as_secs_f64();
    check(ok && secs < 1.0, format!("{}; {secs:.3} s for 2 x {n}x{n}", lines.join("; ")))
}

fn c2_noon_altitudes() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (day, expect) in [(172u16, 77.7), (1, 31.2)] {
        let cfg = SolarConfig {
            latitude: 35.78,
            day_of_year: day,
            ..SolarConfig::default()
        };
        let alt = solar_position(&cfg, 12.0).altitude;
        ok &= (alt - expect).abs() <= 0.3;
        parts.push(format!("day {day}: {alt:.2} (expect {expect})"));
    }
    check(ok, parts.join(", "))
}

/// Independent reference: midpoint rule over one-minute steps, each minute
/// shaded or not as a whole.
fn minute_reference(r: &Raster, col: usize, row: usize, cfg: &SolarConfig) -> f64 {
    let caster = ShadowCaster::new(r, cfg).unwrap();
    (0..24 * 60)
        .map(|m| {
            let sun = solar_position(cfg, (m as f64 + 0.5) / 60.0);
            if sun.altitude <= 0.0 {
                return 0.0;
            }
            let shaded = caster.is_shadowed(col, row, &sun).unwrap();
            clearsky_components(&sun, cfg, 0.0, 0.0, shaded).total() / 60.0
        })
        .sum()
}

fn c3_integration() -> Outcome {
    let n = 64;
    // a 10 m wall along row 40, columns 20..44
    let r = Raster::from_fn(spec(n, 0.5), |c, row| {
        Some(if row == 40 && (20..44).contains(&c) { 10.0 } else { 0.0 })
    });
    let mut worst: f64 = 0.0;
    let mut shaded_cases = 0;
    for day in [172u16, 1, 80] {
        let cfg = horizontal(day);
        let open = minute_reference(&Raster::filled(*r.spec(), 0.0), 0, 0, &cfg);
        for (col, row) in [(5, 5), (32, 36), (32, 30), (18, 38), (45, 44), (32, 10)] {
            let got = pixel_daily_irradiation(&r, col, row, &cfg).map_err(|e| e.to_string())?;
            let reference = minute_reference(&r, col, row, &cfg);
            if reference < open * 0.999 {
                shaded_cases += 1;
            }
            worst = worst.max((got - reference).abs() / reference);
        }
    }
    check(
        worst < 0.01 && shaded_cases > 0,
        format!("worst relative error {:.4}% over 18 pixel-days ({shaded_cases} partly shaded)", worst * 100.0),
    )
}

fn c4_flat_field() -> Outcome {
    let r = Raster::filled(spec(256, 0.5), 0.0);
    let summer = daily_irradiation(&r, &SolarConfig::default()).map_err(|e| e.to_string())?;
    let winter = daily_irradiation(
        &r,
        &SolarConfig {
            day_of_year: 1,
            ..SolarConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let (lo, hi) = min_max(&summer).map_err(|e| e.to_string())?;
    let spread = (hi - lo) / hi;
    let above = summer.values().iter().zip(winter.values()).all(|(s, w)| s > w);
    let (wlo, _) = min_max(&winter).map_err(|e| e.to_string())?;
    check(
        spread < 1e-3 && above,
        format!("summer spread {:.2e}, summer {lo:.1} > winter {wlo:.1} everywhere: {above}", spread),
    )
}

/// Leaf-on raster of a small twin-tree scene plus a one-cell light well
/// in a 10 m block, which stays shaded all day. The turbidity puts that
/// all-day-shade floor just under 1216 Wh/m²/day.
fn leaf_on_with_light_well() -> (Raster, BinaryMask, (usize, usize)) {
    let s = TwinTreeScene {
        size: 96,
        lot_half: 12,
        ..TwinTreeScene::default()
    };
    let sp = s.spec();
    let mut v = Raster::filled(sp, 0.0).into_values();
    for p in &s.points() {
        let (c, r) = sp.cell_of(p.x, p.y).unwrap();
        let i = sp.index(c, r);
        v[i] = v[i].max(p.z);
    }
    let well = (10, 85);
    for r in well.1 - 2..=well.1 + 2 {
        for c in well.0 - 2..=well.0 + 2 {
            v[sp.index(c, r)] = if (c, r) == well { 0.0 } else { 10.0 };
        }
    }
    let dsm = Raster::new(sp, v, DEFAULT_NODATA).unwrap();
    let tree = BinaryMask::from_fn(sp, |c, r| Some(dsm.get(c, r) == Some(s.crown_height)));
    let cfg = SolarConfig {
        linke_turbidity: 2.98,
        ..SolarConfig::default()
    };
    (daily_irradiation(&dsm, &cfg).unwrap(), tree, well)
}

fn c5_composite_floor() -> Outcome {
    let (irr, tree, well) = leaf_on_with_light_well();
    let (out, v) = leaf_on_composite(&irr, &tree, None).map_err(|e| e.to_string())?;
    let (lo, _) = min_max(&out).map_err(|e| e.to_string())?;
    let well_value = irr.get(well.0, well.1).unwrap();
    let floor_ok = lo == v && v == well_value;
    let over = leaf_on_composite(&irr, &tree, Some(1216.0));
    let override_ok = match &over {
        Ok((o, vv)) => *vv == 1216.0 && (0..o.values().len()).all(|i| !tree.is_set(i) || o.values()[i] == 1216.0),
        Err(_) => false,
    };
    let detail = match &over {
        Ok(_) => format!(
            "minimum {lo:.2} == v {v:.2} == light-well value; override 1216 exact on {} tree pixels",
            tree.count()
        ),
        Err(e) => format!("minimum {lo:.2} == v {v:.2}; override 1216 rejected ({e})"),
    };
    check(floor_ok && override_ok && tree.count() > 0, detail)
}

fn c6_formulas() -> Outcome {
    let sp = GridSpec::new(2, 1, 0.0, 0.0, 1.0).unwrap();
    let d = Raster::new(sp, vec![678.0, 3105.0], DEFAULT_NODATA).unwrap();
    let adj = apply_penetration(&d, 0.67).map_err(|e| e.to_string())?;
    let a = adj.values()[0];
    let masks = seasol::classify::SceneMasks {
        building: BinaryMask::zeros(sp),
        tree: BinaryMask::zeros(sp),
        evergreen: BinaryMask::zeros(sp),
        deciduous: BinaryMask::zeros(sp),
    };
    let b = beneath_trees_leaf_off(&d, &adj, &masks, 0.67, (678.0, 3105.0), None)
        .map_err(|e| e.to_string())?
        .deciduous_value;
    check(
        (a - 2304.09).abs() <= 0.01 && (b - 2304.09).abs() <= 0.01,
        format!("penetration {a:.4}, beneath-deciduous {b:.4} (expect 2304.09)"),
    )
}

fn raster_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..5000.0, n)
}

fn c7_monotonicity() -> Outcome {
    let cases = 100;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let sp = GridSpec::new(8, 8, 0.0, 0.0, 1.0).unwrap();

    let penetration = runner.run(
        &(raster_strategy(64), 0.0f64..=1.0, 0.0f64..=1.0),
        |(vals, f1, f2)| {
            let (f1, f2) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let d = Raster::new(sp, vals, DEFAULT_NODATA).unwrap();
            let (_, max) = min_max(&d).unwrap();
            let a = apply_penetration(&d, f1).unwrap();
            let b = apply_penetration(&d, f2).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(x <= y);
                prop_assert!(*y <= max);
            }
            Ok(())
        },
    );

    let merge = runner.run(
        &(raster_strategy(64), raster_strategy(64), raster_strategy(64)),
        |(a, b, c)| {
            let rs: Vec<Raster> = [a, b, c]
                .into_iter()
                .map(|v| Raster::new(sp, v, DEFAULT_NODATA).unwrap())
                .collect();
            let m = min_merge(&[&rs[0], &rs[1], &rs[2]]).unwrap();
            for r in &rs {
                for (x, y) in m.values().iter().zip(r.values()) {
                    prop_assert!(x <= y);
                }
            }
            Ok(())
        },
    );

    // raise one cell of a random 32x32 scene; recompute everything
    let cfg = SolarConfig {
        time_step: 0.5,
        ..horizontal(172)
    };
    let obstacle = runner.run(
        &(
            prop::collection::vec(0.0f64..3.0, 32 * 32),
            0usize..32 * 32,
            0.5f64..12.0,
            prop::sample::select(vec![1u16, 80, 172, 300]),
        ),
        |(vals, idx, lift, day)| {
            let cfg = SolarConfig { day_of_year: day, ..cfg };
            let base = Raster::new(spec(32, 0.5), vals.clone(), DEFAULT_NODATA).unwrap();
            let mut raised = vals;
            raised[idx] += lift;
            let raised = Raster::new(spec(32, 0.5), raised, DEFAULT_NODATA).unwrap();
            let before = daily_irradiation(&base, &cfg).unwrap();
            let after = daily_irradiation(&raised, &cfg).unwrap();
            for (i, (a, b)) in after.values().iter().zip(before.values()).enumerate() {
                if i != idx {
                    prop_assert!(a <= b, "pixel {} rose from {} to {}", i, b, a);
                }
            }
            Ok(())
        },
    );

    let failures: Vec<String> = [
        ("penetration", penetration.err().map(|e| e.to_string())),
        ("min_merge", merge.err().map(|e| e.to_string())),
        ("obstacle", obstacle.err().map(|e| e.to_string())),
    ]
    .into_iter()
    .filter_map(|(name, e)| e.map(|e| format!("{name}: {e}")))
    .collect();
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("penetration, min_merge and obstacle properties held over {cases} cases each")
        } else {
            failures.join("; ")
        },
    )
}

fn run_scene(dir: &Path, threads: usize) -> Result<(PipelineOutputs, f64), String> {
    let mut cfg = RunConfig::load(&dir.join("seasol.conf")).map_err(|e| e.to_string())?;
    cfg.threads = threads;
    cfg.output_dir = Some(dir.join(format!("out-{threads}")));
    let t = Instant::now();
    let out = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    Ok((out, t.elapsed().as_secs_f64()))
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn c8_twin_tree(dir: &Path) -> Outcome {
    let (out, secs) = run_scene(dir, 0)?;
    let rows = &out.zonal;
    let ev = rows.iter().find(|r| r.id == "lot-evergreen").ok_or("no evergreen lot")?;
    let de = rows.iter().find(|r| r.id == "lot-deciduous").ok_or("no deciduous lot")?;
    let (on_e, on_d) = (ev.leaf_on_mean.unwrap_or(f64::NAN), de.leaf_on_mean.unwrap_or(f64::NAN));
    let (off_e, off_d) = (ev.leaf_off_mean.unwrap_or(f64::NAN), de.leaf_off_mean.unwrap_or(f64::NAN));
    let equal = (on_e - on_d).abs() <= 1e-9 * on_e.abs();
    check(
        equal && off_d > off_e && secs < 30.0,
        format!(
            "leaf-on {on_e:.2} vs {on_d:.2}; leaf-off evergreen {off_e:.2} < deciduous {off_d:.2}; f {:.3}; {secs:.1} s on 512x512",
            out.report.constants.composite.f
        ),
    )
}

fn c9_canopy() -> Outcome {
    let s = 200;
    let mut half = RgbPixels::filled(s, s, [30, 45, 25]);
    for y in 0..s / 2 {
        for x in 0..s {
            half.set(x, y, [210, 225, 245]);
        }
    }
    let photo = CanopyPhoto::new(half, Roi::default()).map_err(|e| e.to_string())?;
    let t = crown_transparency(&photo, ThresholdMode::Otsu).map_err(|e| e.to_string())?;
    let scene = TwinTreeScene::default();
    let photos: Vec<CanopyPhoto> = scene
        .photo_ratios
        .iter()
        .map(|&r| CanopyPhoto::new(scene.photo(r), Roi::default()).unwrap())
        .collect();
    let est = penetration_factor(&photos, ThresholdMode::Otsu).map_err(|e| e.to_string())?;
    check(
        (t.ratio - 0.5).abs() <= 0.01 && (est.factor - 0.67).abs() <= 0.005,
        format!("half-sky {:.4}; mean of {:?} -> f {:.4}", t.ratio, est.per_photo_ratios, est.factor),
    )
}

fn c10_determinism(dir: &Path) -> Outcome {
    run_scene(dir, 1)?;
    run_scene(dir, 4)?;
    let (a, b) = (dir.join("out-1"), dir.join("out-4"));
    let mut names: Vec<String> = fs::read_dir(&a)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".asc") || n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| fs::read(a.join(n)).ok() != fs::read(b.join(n)).ok())
        .collect();

    // round trip: emitted raster plus values across magnitudes
    let leaf_off = read_grid(&a.join("leaf_off.asc")).map_err(|e| e.to_string())?;
    let mut vals: Vec<f64> = leaf_off.values().iter().take(4096).copied().collect();
    let mut x = 1.234_567_891e-7;
    while x < 1e12 {
        vals.extend([x, -x, x * 3.7]);
        x *= 7.3;
    }
    let sp = GridSpec::new(vals.len(), 1, 0.0, 0.0, 1.0).unwrap();
    let r = Raster::new(sp, vals, DEFAULT_NODATA).unwrap();
    let back = parse_grid(&encode_grid(&r)).map_err(|e| e.to_string())?;
    let worst = r
        .values()
        .iter()
        .zip(back.values())
        .map(|(a, b)| if *a == 0.0 { b.abs() } else { ((a - b) / a).abs() })
        .fold(0.0, f64::max);
    check(
        differing.is_empty() && !names.is_empty() && worst <= 5e-6,
        format!(
            "{} files compared between 1 and 4 threads, {} differ; round-trip worst relative error {worst:.2e}",
            names.len(),
            differing.len()
        ),
    )
}

fn main() {
    let scene_dir = tempfile::tempdir().expect("temp dir");
    TwinTreeScene::default().write(scene_dir.path()).expect("scene written");
    let criteria: Vec<(&str, Criterion)> = vec![
        ("shadow geometry", Box::new(c1_wall_shadows)),
        ("solar position", Box::new(c2_noon_altitudes)),
        ("integration convergence", Box::new(c3_integration)),
        ("flat-field uniformity", Box::new(c4_flat_field)),
        ("composite floor", Box::new(c5_composite_floor)),
        ("formula instantiation", Box::new(c6_formulas)),
        ("monotonicity suite", Box::new(c7_monotonicity)),
        ("twin-tree end-to-end", Box::new(|| c8_twin_tree(scene_dir.path()))),
        ("canopy estimator", Box::new(c9_canopy)),
        ("determinism and I/O", Box::new(|| c10_determinism(scene_dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2}. {name}: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
