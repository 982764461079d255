use crate::error::{Error, Result};
use crate::raster::{par_fill, Raster};

use super::clearsky::{ClearSky, Orientation};
use super::position::{solar_position, sun_half_day};
use super::shadow::{RayDir, ShadowCaster, SweepDir};
use super::{SolarConfig, SunPosition, TerrainMode};

/// Shadow transitions inside an integration step are located to this
/// precision (hours).
const TRANSITION_PRECISION: f64 = 1.0 / 3600.0;

/// Spacing (hours) of the extra shading probes inside a step that an
/// obstacle might reach. Shadows of thin objects can come and go between
/// two nodes.
const SHADE_PROBE: f64 = 1.0 / 60.0;

#[derive(Debug, Clone, Copy)]
struct GridPoint {
    t: f64,
    sun: SunPosition,
    sky: Option<ClearSky>,
}

impl GridPoint {
    fn at(cfg: &SolarConfig, t: f64) -> Self {
        let sun = solar_position(cfg, t);
        GridPoint {
            t,
            sun,
            sky: ClearSky::new(&sun, cfg),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    t: f64,
    sun: SunPosition,
    sky: Option<ClearSky>,
    /// Sunrise/sunset end points take the shading state of their interior
    /// neighbour instead of marching at zero altitude.
    endpoint: bool,
}

/// Integration nodes for one day: solar noon, then outward in `time_step`
/// increments, closed by sunrise and sunset. The node set is symmetric about
/// noon.
#[derive(Debug, Clone)]
pub struct DayPlan {
    nodes: Vec<Node>,
    /// Per step: evenly spaced points no more than `SHADE_PROBE` apart,
    /// both nodes included.
    grid: Vec<Vec<GridPoint>>,
    albedo: f64,
}

impl DayPlan {
    pub fn new(cfg: &SolarConfig) -> Result<Self> {
        cfg.validate()?;
        let half = sun_half_day(cfg);
        let mut offsets = Vec::new();
        if half > 0.0 {
            let mut k = 1usize;
            loop {
                let s = k as f64 * cfg.time_step;
                if s >= half {
                    break;
                }
                offsets.push(s);
                k += 1;
            }
            offsets.push(half);
        }
        let polar_day = half >= 12.0;
        let node = |t: f64, endpoint: bool| {
            let sun = solar_position(cfg, t);
            Node {
                t,
                sun,
                sky: ClearSky::new(&sun, cfg),
                endpoint: endpoint && !polar_day,
            }
        };
        let mut nodes = Vec::with_capacity(2 * offsets.len() + 1);
        if half > 0.0 {
            let last = offsets.len() - 1;
            for (i, s) in offsets.iter().enumerate().rev() {
                nodes.push(node(12.0 - s, i == last));
            }
            nodes.push(node(12.0, false));
            for (i, s) in offsets.iter().enumerate() {
                nodes.push(node(12.0 + s, i == last));
            }
        }
        let grid = nodes
            .windows(2)
            .map(|w| {
                let count = ((w[1].t - w[0].t) / SHADE_PROBE).ceil().max(1.0) as usize;
                (0..=count)
                    .map(|k| {
                        let node = match k {
                            0 => &w[0],
                            k if k == count => &w[1],
                            _ => return GridPoint::at(cfg, w[0].t + (w[1].t - w[0].t) * k as f64 / count as f64),
                        };
                        GridPoint {
                            t: node.t,
                            sun: node.sun,
                            sky: node.sky,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(DayPlan {
            nodes,
            grid,
            albedo: cfg.albedo,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Daily irradiation (Wh/m²) of one receiver. `shadowed(sun)` reports
    /// whether the receiver is shaded for a sun position above the horizon.
    ///
    /// Diffuse and reflected parts use the trapezoidal rule over the nodes.
    /// The beam is interpolated linearly between nodes and integrated only
    /// over the sunlit part of each step. Steps where shade may fall are
    /// probed every `SHADE_PROBE`, so short shade or sun windows between
    /// nodes are not missed; each change of state is located by bisection.
    pub fn integrate<F>(&self, cfg: &SolarConfig, orient: &Orientation, shadowed: F) -> f64
    where
        F: Fn(&SunPosition) -> bool,
    {
        self.integrate_with(cfg, orient, &Closure(shadowed))
    }

    fn integrate_with<S: Shade>(&self, cfg: &SolarConfig, orient: &Orientation, shade: &S) -> f64 {
        let n = self.nodes.len();
        if n < 2 {
            return 0.0;
        }
        let mut state = vec![false; n];
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.endpoint && node.sun.altitude > 0.0 {
                state[i] = shade.at_node(i, &node.sun);
            }
        }
        if self.nodes[0].endpoint {
            state[0] = state[1];
        }
        if self.nodes[n - 1].endpoint {
            state[n - 1] = state[n - 2];
        }
        let parts: Vec<(f64, f64)> = self
            .nodes
            .iter()
            .map(|node| match &node.sky {
                Some(sky) => {
                    let (d, r) = sky.diffuse_reflected_on(orient, self.albedo);
                    (sky.beam_on(orient), d + r)
                }
                None => (0.0, 0.0),
            })
            .collect();

        let mut total = 0.0;
        for i in 0..n - 1 {
            let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
            let dt = b.t - a.t;
            let (beam_a, other_a) = parts[i];
            let (beam_b, other_b) = parts[i + 1];
            total += 0.5 * dt * (other_a + other_b);
            let step = Step {
                cfg,
                orient,
                grid: &self.grid[i],
                fine: a.endpoint || b.endpoint,
                shade,
                index: i,
                t0: a.t,
                beam0: beam_a,
                slope: (beam_b - beam_a) / dt,
            };
            total += if shade.step_may_shade(i) {
                step.probed(self, state[i], state[i + 1])
            } else {
                step.segment(self, state[i], state[i + 1])
            };
        }
        total
    }

    /// Bisects for the time at which the shading state flips within
    /// `[lo, hi]`. `into_shade` tells whether `hi` is the shaded side.
    fn switch_time<F>(&self, cfg: &SolarConfig, mut lo: f64, mut hi: f64, into_shade: bool, shadowed: &F) -> f64
    where
        F: Fn(&SunPosition) -> bool,
    {
        while hi - lo > TRANSITION_PRECISION {
            let mid = 0.5 * (lo + hi);
            let sun = solar_position(cfg, mid);
            let shaded = sun.altitude <= 0.0 || shadowed(&sun);
            if shaded == into_shade {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn rays(&self, caster: &ShadowCaster<'_>) -> Vec<RayDir> {
        self.nodes.iter().map(|n| caster.ray(&n.sun)).collect()
    }

    fn grid_rays(&self, caster: &ShadowCaster<'_>) -> Vec<Vec<RayDir>> {
        self.grid
            .iter()
            .map(|g| g.iter().map(|p| caster.ray(&p.sun)).collect())
            .collect()
    }
}

/// Shading of one receiver over the day.
trait Shade {
    /// At node `i`, whose sun is above the horizon.
    fn at_node(&self, i: usize, sun: &SunPosition) -> bool;
    /// At grid point `k` of step `i`, sun above the horizon.
    fn at_grid(&self, i: usize, k: usize, sun: &SunPosition) -> bool;
    /// At a sun position above the horizon.
    fn at(&self, sun: &SunPosition) -> bool;
    /// False when no sun position from node `i` to node `i + 1` can shade.
    fn step_may_shade(&self, i: usize) -> bool;
}

struct Closure<F>(F);

impl<F: Fn(&SunPosition) -> bool> Shade for Closure<F> {
    fn at_node(&self, _: usize, sun: &SunPosition) -> bool {
        (self.0)(sun)
    }

    fn at_grid(&self, _: usize, _: usize, sun: &SunPosition) -> bool {
        (self.0)(sun)
    }

    fn at(&self, sun: &SunPosition) -> bool {
        (self.0)(sun)
    }

    fn step_may_shade(&self, _: usize) -> bool {
        true
    }
}

/// One receiver against one surface.
struct Traced<'c, 'r> {
    caster: &'c ShadowCaster<'r>,
    rays: &'c [RayDir],
    grid_rays: &'c [Vec<RayDir>],
    sweeps: &'c [SweepDir],
    col: usize,
    row: usize,
    z0: f64,
    clear: f64,
}

impl Shade for Traced<'_, '_> {
    fn at_node(&self, i: usize, _: &SunPosition) -> bool {
        self.caster.march(self.col, self.row, self.z0, &self.rays[i])
    }

    fn at_grid(&self, i: usize, k: usize, _: &SunPosition) -> bool {
        self.caster.march(self.col, self.row, self.z0, &self.grid_rays[i][k])
    }

    fn at(&self, sun: &SunPosition) -> bool {
        self.caster.march(self.col, self.row, self.z0, &self.caster.ray(sun))
    }

    fn step_may_shade(&self, i: usize) -> bool {
        self.caster.sweep_may_shade(self.col, self.row, self.z0, self.clear, &self.sweeps[i])
    }
}

/// Beam integration over one step between nodes.
struct Step<'a, S> {
    cfg: &'a SolarConfig,
    orient: &'a Orientation,
    grid: &'a [GridPoint],
    /// Next to sunrise or sunset, where the beam is far from linear.
    fine: bool,
    shade: &'a S,
    index: usize,
    t0: f64,
    beam0: f64,
    slope: f64,
}

impl<S: Shade> Step<'_, S> {
    fn beam(&self, sky: &Option<ClearSky>) -> f64 {
        sky.as_ref().map_or(0.0, |s| s.beam_on(self.orient))
    }

    /// Trapezoid of the beam interpolated linearly between the nodes.
    fn lit(&self, t0: f64, t1: f64) -> f64 {
        let beam = |t: f64| self.beam0 + self.slope * (t - self.t0);
        0.5 * (t1 - t0) * (beam(t0) + beam(t1))
    }

    /// Beam over the whole step in sunlight; over the grid next to sunrise
    /// and sunset.
    fn full(&self) -> f64 {
        let (lo, hi) = (self.grid[0].t, self.grid[self.grid.len() - 1].t);
        if !self.fine {
            return self.lit(lo, hi);
        }
        self.grid
            .windows(2)
            .map(|w| 0.5 * (w[1].t - w[0].t) * (self.beam(&w[0].sky) + self.beam(&w[1].sky)))
            .sum()
    }

    /// Beam over the step assuming at most one change of state.
    fn segment(&self, plan: &DayPlan, lo: bool, hi: bool) -> f64 {
        let shadowed = |sun: &SunPosition| self.shade.at(sun);
        let (t0, t1) = (self.grid[0].t, self.grid[self.grid.len() - 1].t);
        match (lo, hi) {
            (false, false) => self.full(),
            (true, true) => 0.0,
            (false, true) => self.lit(t0, plan.switch_time(self.cfg, t0, t1, true, &shadowed)),
            (true, false) => self.lit(plan.switch_time(self.cfg, t0, t1, false, &shadowed), t1),
        }
    }

    /// Probes every grid point. A step found sunlit throughout is
    /// integrated as an unprobed one; otherwise the beam is taken at the
    /// grid points and switch times themselves, since a short sunlit spell
    /// near sunrise or sunset sees a beam far from linear.
    fn probed(&self, plan: &DayPlan, lo: bool, hi: bool) -> f64 {
        let last = self.grid.len() - 1;
        let state: Vec<bool> = (0..=last)
            .map(|k| match k {
                0 => lo,
                k if k == last => hi,
                k => {
                    let p = &self.grid[k];
                    p.sun.altitude <= 0.0 || self.shade.at_grid(self.index, k, &p.sun)
                }
            })
            .collect();
        if state.iter().all(|s| !s) {
            return self.full();
        }
        let shadowed = |sun: &SunPosition| self.shade.at(sun);
        let beam_at = |t: f64| self.beam(&GridPoint::at(self.cfg, t).sky);
        (0..last)
            .map(|k| {
                let (a, b) = (&self.grid[k], &self.grid[k + 1]);
                match (state[k], state[k + 1]) {
                    (false, false) => 0.5 * (b.t - a.t) * (self.beam(&a.sky) + self.beam(&b.sky)),
                    (true, true) => 0.0,
                    (false, true) => {
                        let ts = plan.switch_time(self.cfg, a.t, b.t, true, &shadowed);
                        0.5 * (ts - a.t) * (self.beam(&a.sky) + beam_at(ts))
                    }
                    (true, false) => {
                        let ts = plan.switch_time(self.cfg, a.t, b.t, false, &shadowed);
                        0.5 * (b.t - ts) * (beam_at(ts) + self.beam(&b.sky))
                    }
                }
            })
            .sum()
    }
}

/// Per-pixel receiver orientation. Slope and aspect come from Horn's 3x3
/// gradient in terrain-following mode; missing neighbours (edges, nodata)
/// take the center value.
pub fn surface_orientation(surface: &Raster, mode: TerrainMode) -> Vec<Orientation> {
    let spec = *surface.spec();
    match mode {
        TerrainMode::Horizontal => vec![Orientation::HORIZONTAL; spec.len()],
        TerrainMode::TerrainFollowing => {
            let cs = spec.cell_size;
            (0..spec.len())
                .map(|i| {
                    let (col, row) = (i % spec.ncols, i / spec.ncols);
                    let Some(zc) = surface.at(i) else {
                        return Orientation::HORIZONTAL;
                    };
                    let z = |dc: isize, dr: isize| -> f64 {
                        let c = col as isize + dc;
                        let r = row as isize + dr;
                        if c < 0 || r < 0 || c >= spec.ncols as isize || r >= spec.nrows as isize {
                            return zc;
                        }
                        surface.get(c as usize, r as usize).unwrap_or(zc)
                    };
                    // rows increase southward
                    let dzdx = ((z(1, -1) + 2.0 * z(1, 0) + z(1, 1))
                        - (z(-1, -1) + 2.0 * z(-1, 0) + z(-1, 1)))
                        / (8.0 * cs);
                    let dzdy = ((z(-1, -1) + 2.0 * z(0, -1) + z(1, -1))
                        - (z(-1, 1) + 2.0 * z(0, 1) + z(1, 1)))
                        / (8.0 * cs);
                    if dzdx == 0.0 && dzdy == 0.0 {
                        return Orientation::HORIZONTAL;
                    }
                    let norm = (dzdx * dzdx + dzdy * dzdy + 1.0).sqrt();
                    Orientation {
                        cos_slope: 1.0 / norm,
                        normal: [-dzdx / norm, -dzdy / norm, 1.0 / norm],
                    }
                })
                .collect()
        }
    }
}

/// Clear-sky daily irradiation (Wh/m²/day) for every valid pixel.
pub fn daily_irradiation(surface: &Raster, cfg: &SolarConfig) -> Result<Raster> {
    let plan = DayPlan::new(cfg)?;
    let caster = ShadowCaster::new(surface, cfg)?;
    let orient = surface_orientation(surface, cfg.terrain_mode);
    let rays = plan.rays(&caster);
    let grid_rays = plan.grid_rays(&caster);
    let sweeps: Vec<_> = rays.windows(2).map(|w| caster.sweep(&w[0], &w[1])).collect();
    let spec = *surface.spec();
    let nodata = surface.nodata();
    let values = par_fill(&spec, |col, row| {
        let idx = spec.index(col, row);
        let Some(z0) = surface.at(idx) else {
            return nodata;
        };
        let shade = Traced {
            caster: &caster,
            rays: &rays,
            grid_rays: &grid_rays,
            sweeps: &sweeps,
            col,
            row,
            z0,
            clear: caster.clear_rise(col, row, z0),
        };
        plan.integrate_with(cfg, &orient[idx], &shade)
    });
    let out = surface.with_values(values);
    if out.valid_count() == 0 {
        return Err(Error::EmptyRaster);
    }
    Ok(out)
}

/// Daily irradiation of a single pixel, computed exactly as
/// [`daily_irradiation`] would.
pub fn pixel_daily_irradiation(surface: &Raster, col: usize, row: usize, cfg: &SolarConfig) -> Result<f64> {
    let plan = DayPlan::new(cfg)?;
    let caster = ShadowCaster::new(surface, cfg)?;
    let spec = surface.spec();
    if col >= spec.ncols || row >= spec.nrows {
        return Err(Error::Index {
            col,
            row,
            ncols: spec.ncols,
            nrows: spec.nrows,
        });
    }
    let z0 = surface
        .get(col, row)
        .ok_or_else(|| Error::Argument(format!("pixel ({col}, {row}) is nodata")))?;
    let orient = surface_orientation(surface, cfg.terrain_mode)[spec.index(col, row)];
    let rays = plan.rays(&caster);
    let grid_rays = plan.grid_rays(&caster);
    let sweeps: Vec<_> = rays.windows(2).map(|w| caster.sweep(&w[0], &w[1])).collect();
    let shade = Traced {
        caster: &caster,
        rays: &rays,
        grid_rays: &grid_rays,
        sweeps: &sweeps,
        col,
        row,
        z0,
        clear: caster.clear_rise(col, row, z0),
    };
    Ok(plan.integrate_with(cfg, &orient, &shade))
}
