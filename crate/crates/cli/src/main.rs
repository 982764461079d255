//! `seasol`: seasonal solar potential beneath trees.
//!
//! Every config key is also a `--flag` (underscores become dashes); flags
//! override values read from `--config`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};

use seasol::canopy::{crown_transparency, CanopyPhoto};
use seasol::classify::SceneMasks;
use seasol::composite::{compose, SeasonInputs};
use seasol::config::{RunConfig, KEYS};
use seasol::io::{geojson, grid, image};
use seasol::pipeline::{self, run_pipeline, Stage, Surfaces};
use seasol::raster::{BinaryMask, Raster};
use seasol::solar::{daily_irradiation, solar_position, sun_half_day};
use seasol::zonal::{rasterize_zones, write_csv, zonal_means};

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn cli() -> Command {
    let mut cmd = Command::new("seasol")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Seasonal clear-sky solar irradiation beneath trees, summarized per parking lot and road")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .global(true)
                .value_name("FILE")
                .help("key = value config file"),
        )
        .arg(
            Arg::new("verbose")
                .long("verbose")
                .short('v')
                .global(true)
                .action(ArgAction::Count)
                .help("more log output (repeatable)"),
        );
    for k in KEYS {
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(flag(k.name))
                .global(true)
                .value_name("VALUE")
                .help(k.help)
                .help_heading("Config keys"),
        );
    }
    let input_dir = || {
        Arg::new("input_dir")
            .long("input-dir")
            .value_name("DIR")
            .help("directory holding the previous stage's rasters (default: output_dir)")
    };
    cmd.subcommand(Command::new("grid").about("Grid LiDAR points into void-filled dsm.asc and dem.asc"))
        .subcommand(
            Command::new("sun")
                .about("Sun positions for a day, or a daily irradiation raster for a surface")
                .arg(Arg::new("day").long("day").value_name("N").value_parser(clap::value_parser!(u16)).help("day of year (default leaf_on_day)"))
                .arg(Arg::new("surface").long("surface").value_name("ASC").help("surface raster; omit to print sun positions"))
                .arg(Arg::new("out").long("out").value_name("ASC").help("output raster (default output_dir/irradiation_day<N>.asc)")),
        )
        .subcommand(
            Command::new("classify")
                .about("Building, tree, evergreen and deciduous masks plus the substituted DEMs")
                .arg(input_dir()),
        )
        .subcommand(Command::new("canopy").about("Crown transparency per photo and the penetration factor"))
        .subcommand(
            Command::new("compose")
                .about("Four irradiation runs and the leaf-on and leaf-off composites")
                .arg(input_dir()),
        )
        .subcommand(
            Command::new("zonal")
                .about("Zone means of the composites, written to zonal.csv")
                .arg(input_dir()),
        )
        .subcommand(Command::new("pipeline").about("Every stage end to end, with report.json"))
}

fn load_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(p) => RunConfig::load(Path::new(p))?,
        None => RunConfig::default(),
    };
    let cwd = std::env::current_dir().context("current directory")?;
    for k in KEYS {
        if let Some(v) = m.get_one::<String>(k.name) {
            cfg.set(k.name, v, &cwd)
                .with_context(|| format!("--{}", flag(k.name)))?;
        }
    }
    Ok(cfg)
}

fn need<'a>(v: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    v.as_deref()
        .ok_or_else(|| anyhow!("missing required key '{key}' (set it in the config or with --{})", flag(key)))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let d = need(&cfg.output_dir, "output_dir")?.to_path_buf();
    fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    Ok(d)
}

fn in_dir(cfg: &RunConfig, m: &ArgMatches) -> Result<PathBuf> {
    match m.get_one::<String>("input_dir") {
        Some(d) => Ok(PathBuf::from(d)),
        None => Ok(need(&cfg.output_dir, "output_dir")?.to_path_buf()),
    }
}

fn read(dir: &Path, name: &str) -> Result<Raster> {
    Ok(grid::read_grid(&dir.join(format!("{name}.asc")))?)
}

fn write(dir: &Path, name: &str, r: &Raster) -> Result<()> {
    grid::write_grid(r, &dir.join(format!("{name}.asc")))?;
    log::info!("wrote {name}.asc");
    Ok(())
}

fn read_masks(dir: &Path) -> Result<SceneMasks> {
    let m = |name: &str| -> Result<BinaryMask> { Ok(BinaryMask::new(read(dir, name)?)?) };
    Ok(SceneMasks {
        building: m("building_mask")?,
        tree: m("tree_mask")?,
        evergreen: m("evergreen_mask")?,
        deciduous: m("deciduous_mask")?,
    })
}

/// Runs `f`, tagging failures with the stage name.
fn staged<T>(stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| anyhow!("stage '{}' failed: {e:#}", stage.name()))
}

fn cmd_grid(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let s = staged(Stage::Ingest, || Ok(pipeline::ingest(cfg)?))?;
    staged(Stage::Output, || {
        write(&out, "dsm", &s.dsm)?;
        write(&out, "dem", &s.dem)
    })?;
    println!(
        "{} x {} grid, {} noise points dropped",
        s.dsm.spec().ncols,
        s.dsm.spec().nrows,
        s.points_dropped
    );
    Ok(())
}

fn cmd_sun(cfg: &RunConfig, m: &ArgMatches) -> Result<()> {
    let day = m.get_one::<u16>("day").copied().unwrap_or(cfg.leaf_on_day);
    let solar = cfg.solar_for_day(day);
    solar.validate()?;
    let Some(surface) = m.get_one::<String>("surface") else {
        let half = sun_half_day(&solar);
        println!("day {day}, latitude {}: daylight {:.2} h", solar.latitude, 2.0 * half);
        println!("solar_time,altitude_deg,azimuth_deg");
        let mut t = 12.0 - half;
        while t <= 12.0 + half + 1e-9 {
            let p = solar_position(&solar, t);
            println!("{t:.2},{:.3},{:.3}", p.altitude, p.azimuth);
            t += solar.time_step;
        }
        let noon = solar_position(&solar, 12.0);
        println!("noon altitude {:.3}", noon.altitude);
        return Ok(());
    };
    let r = staged(Stage::Irradiation, || {
        let surface = grid::read_grid(Path::new(surface))?;
        Ok(daily_irradiation(&surface, &solar)?)
    })?;
    let path = match m.get_one::<String>("out") {
        Some(p) => PathBuf::from(p),
        None => out_dir(cfg)?.join(format!("irradiation_day{day}.asc")),
    };
    staged(Stage::Output, || Ok(grid::write_grid(&r, &path)?))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_classify(cfg: &RunConfig, m: &ArgMatches) -> Result<()> {
    let input = in_dir(cfg, m)?;
    let out = out_dir(cfg)?;
    let c = staged(Stage::Classify, || {
        let s = Surfaces {
            dsm: read(&input, "dsm")?,
            dem: read(&input, "dem")?,
            points_dropped: 0,
        };
        Ok(pipeline::classify(cfg, &s)?)
    })?;
    staged(Stage::Output, || {
        write(&out, "building_dem", &c.building_dem)?;
        write(&out, "channel_percent", &c.channel_percent)?;
        write(&out, "evergreen_dem", &c.evergreen_dem)?;
        write(&out, "deciduous_dem", &c.deciduous_dem)?;
        write(&out, "building_mask", c.masks.building.as_raster())?;
        write(&out, "tree_mask", c.masks.tree.as_raster())?;
        write(&out, "evergreen_mask", c.masks.evergreen.as_raster())?;
        write(&out, "deciduous_mask", c.masks.deciduous.as_raster())
    })?;
    let count = |b: &BinaryMask| b.as_raster().values().iter().filter(|&&v| v == 1.0).count();
    println!(
        "building {} px, evergreen {} px, deciduous {} px, {} tree pixels defaulted to deciduous",
        count(&c.masks.building),
        count(&c.masks.evergreen),
        count(&c.masks.deciduous),
        c.defaulted_tree_pixels
    );
    Ok(())
}

fn cmd_canopy(cfg: &RunConfig) -> Result<()> {
    staged(Stage::Canopy, || {
        if cfg.f_override.is_none() {
            for p in &cfg.photos {
                let photo = CanopyPhoto::new(image::read_rgb(p)?, cfg.roi)?;
                let t = crown_transparency(&photo, cfg.canopy_threshold)?;
                println!(
                    "{}: ratio {:.4}, threshold {}, {} roi pixels{}",
                    p.display(),
                    t.ratio,
                    t.threshold,
                    t.roi_pixels,
                    if t.degenerate { " (single luminance level)" } else { "" }
                );
            }
        }
        let (est, source) = pipeline::canopy_factor(cfg)?;
        println!("f = {:.4} ({source})", est.factor);
        Ok(())
    })
}

fn cmd_compose(cfg: &RunConfig, m: &ArgMatches) -> Result<()> {
    let input = in_dir(cfg, m)?;
    let out = out_dir(cfg)?;
    let (masks, surfaces) = staged(Stage::Classify, || {
        Ok((
            read_masks(&input)?,
            [read(&input, "dsm")?, read(&input, "building_dem")?, read(&input, "evergreen_dem")?, read(&input, "deciduous_dem")?],
        ))
    })?;
    let [dsm, bdem, edem, ddem] = surfaces;
    let runs = staged(Stage::Irradiation, || {
        let on = cfg.solar_for_day(cfg.leaf_on_day);
        let off = cfg.solar_for_day(cfg.leaf_off_day);
        Ok([
            daily_irradiation(&dsm, &on)?,
            daily_irradiation(&bdem, &off)?,
            daily_irradiation(&edem, &off)?,
            daily_irradiation(&ddem, &off)?,
        ])
    })?;
    staged(Stage::Output, || {
        for (name, r) in [
            "irradiation_leaf_on_dsm",
            "irradiation_leaf_off_building",
            "irradiation_leaf_off_evergreen",
            "irradiation_leaf_off_deciduous",
        ]
        .into_iter()
        .zip(&runs)
        {
            write(&out, name, r)?;
        }
        Ok(())
    })?;
    let (est, source) = staged(Stage::Canopy, || Ok(pipeline::canopy_factor(cfg)?))?;
    let [leaf_on_irr, b, e, d] = runs;
    let (season, c) = staged(Stage::Composite, || {
        Ok(compose(&SeasonInputs {
            leaf_on_irr,
            b,
            e,
            d,
            masks,
            f: est.factor,
            v_override: cfg.v_override,
            evergreen_override: cfg.evergreen_shade_override,
        })?)
    })?;
    staged(Stage::Output, || {
        write(&out, "deciduous_adjusted", &season.d_adjusted)?;
        write(&out, "evergreen_substituted", &season.e_sub)?;
        write(&out, "deciduous_substituted", &season.d_sub)?;
        write(&out, "leaf_on", &season.leaf_on)?;
        write(&out, "leaf_off", &season.leaf_off)
    })?;
    println!(
        "v = {:.2}, f = {:.4} ({source}), d range [{:.2}, {:.2}], evergreen {:.2}, deciduous {:.2} Wh/m²/day",
        c.v, c.f, c.d_min, c.d_max, c.evergreen_value, c.deciduous_value
    );
    Ok(())
}

fn cmd_zonal(cfg: &RunConfig, m: &ArgMatches) -> Result<()> {
    let input = in_dir(cfg, m)?;
    let out = out_dir(cfg)?;
    let rows = staged(Stage::Zonal, || {
        let zones = geojson::read_zones(need(&cfg.zones, "zones")?)?;
        let on = read(&input, "leaf_on")?;
        let off = read(&input, "leaf_off")?;
        let labels = rasterize_zones(&zones, on.spec())?;
        if labels.overlap_pixels > 0 {
            log::warn!("{} pixels lie in more than one zone; the later zone wins", labels.overlap_pixels);
        }
        let rows = zonal_means(&on, &off, &labels.labels, &zones)?;
        write(&out, "zone_labels", &labels.labels)?;
        let path = out.join("zonal.csv");
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_csv(&rows, std::io::BufWriter::new(f))?;
        Ok(rows)
    })?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
    for r in &rows {
        println!(
            "{:<20} {:<8} leaf-on {:>10} leaf-off {:>10} ({} px)",
            r.id,
            r.kind.as_str(),
            fmt(r.leaf_on_mean),
            fmt(r.leaf_off_mean),
            r.pixel_count
        );
    }
    Ok(())
}

fn cmd_pipeline(cfg: &RunConfig) -> Result<()> {
    let out = run_pipeline(cfg)?;
    let c = &out.report.constants.composite;
    let total: f64 = out.report.timings.iter().map(|t| t.seconds).sum();
    println!(
        "{} zones, v = {:.2}, f = {:.4}, {:.1} s; outputs in {}",
        out.zonal.len(),
        c.v,
        c.f,
        total,
        out.output_dir.display()
    );
    Ok(())
}

fn run(m: &ArgMatches) -> Result<()> {
    let cfg = load_config(m).map_err(|e| anyhow!("stage 'validate' failed: {e:#}"))?;
    let pool = rayon_threads(cfg.threads);
    let (name, sub) = m.subcommand().expect("subcommand required");
    let go = || match name {
        "grid" => cmd_grid(&cfg),
        "sun" => cmd_sun(&cfg, sub),
        "classify" => cmd_classify(&cfg, sub),
        "canopy" => cmd_canopy(&cfg),
        "compose" => cmd_compose(&cfg, sub),
        "zonal" => cmd_zonal(&cfg, sub),
        "pipeline" => cmd_pipeline(&cfg),
        _ => unreachable!("unknown subcommand {name}"),
    };
    if name == "pipeline" {
        // sizes its own pool
        return go();
    }
    pool?.install(go)
}

fn rayon_threads(n: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| anyhow!("stage 'validate' failed: thread pool: {e}"))
}

fn main() -> ExitCode {
    let m = cli().get_matches();
    let level = match m.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&m) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        cli().debug_assert();
    }

    #[test]
    fn every_key_has_a_flag() {
        let m = cli()
            .try_get_matches_from(["seasol", "canopy", "--f-override", "0.5", "--leaf-on-day", "170"])
            .unwrap();
        let cfg = load_config(&m).unwrap();
        assert_eq!(cfg.f_override, Some(0.5));
        assert_eq!(cfg.leaf_on_day, 170);
        for k in KEYS {
            assert!(cli().get_arguments().any(|a| a.get_id() == k.name), "{}", k.name);
        }
    }
}
