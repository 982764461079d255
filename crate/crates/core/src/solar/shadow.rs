use crate::error::{Error, Result};
use crate::raster::Raster;

use super::{SolarConfig, SunPosition};

/// Side length, in cells, of the blocks whose maxima let the tracer skip
/// stretches of the ray that nothing can rise above.
const BLOCK: usize = 8;

/// Block rings summarized around every block. Beyond this the global
/// maximum stands in for the ring maxima.
const RINGS: usize = 24;

/// Spacing, in cells, of the samples taken across patches with a nodata
/// corner.
const NODATA_SAMPLING: f64 = 0.25;


/// Shadow tracer over one surface.
///
/// The surface is the bilinear interpolant of the cell-center heights
/// (constant beyond the outermost centers, out to the raster edge). A ray
/// leaves the pixel center toward the sun; at horizontal distance `d` its
/// height is `z0 + d * tan(altitude)`. The pixel is shadowed when the
/// surface rises strictly above the ray anywhere within
/// `shadow_max_distance`. Along a ray the interpolant is quadratic inside
/// each patch between four centers, so every patch is tested exactly.
/// Patches with a nodata corner use the remaining corners, renormalized,
/// sampled every quarter cell.
///
/// Block and ring maxima only skip stretches that provably stay at or
/// below the ray, so results equal an unaccelerated trace.
pub struct ShadowCaster<'a> {
    surface: &'a Raster,
    global_max: f64,
    /// Trace length in cells.
    max_dist: f64,
    cell_size: f64,
    bcols: usize,
    block_max: Vec<f64>,
    /// `ring_max[b * (RINGS + 1) + r]`: highest block maximum within
    /// Chebyshev block distance `r` of block `b`.
    ring_max: Vec<f64>,
    far: std::sync::OnceLock<FarField>,
}

/// Per-sun-position constants shared by every pixel.
#[derive(Debug, Clone, Copy)]
pub struct RayDir {
    /// Grid-index displacement per cell of horizontal distance (columns
    /// east, rows south).
    cu: f64,
    cv: f64,
    /// Ray rise per cell of horizontal distance, meters.
    rise: f64,
}

impl RayDir {
    fn angle(&self) -> f64 {
        self.cv.atan2(self.cu)
    }
}

/// Wraps an angle difference into `(-pi, pi]`.
fn wrap(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// The rays swept while the sun moves from one ray direction to another:
/// horizontal angles within `half` of `center`, rising at least `rise`
/// per cell. Shared by every pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SweepDir {
    center: f64,
    half: f64,
    /// Unit vectors along the clockwise and anticlockwise edges.
    e1: (f64, f64),
    e2: (f64, f64),
    rise: f64,
    /// First and last far-field bin covered.
    bins: (usize, usize),
}

fn bin_of(a: f64) -> usize {
    use std::f64::consts::{PI, TAU};
    (((a + PI) / TAU * BINS as f64).floor() as isize).rem_euclid(BINS as isize) as usize
}

impl SweepDir {
    fn new(a: &RayDir, b: &RayDir) -> Self {
        let delta = wrap(b.angle() - a.angle());
        let center = a.angle() + 0.5 * delta;
        let half = 0.5 * delta.abs();
        let unit = |t: f64| {
            let (y, x) = t.sin_cos();
            (x, y)
        };
        SweepDir {
            center,
            half,
            e1: unit(center - half),
            e2: unit(center + half),
            rise: a.rise.min(b.rise),
            bins: (bin_of(wrap(center - half)), bin_of(wrap(center + half))),
        }
    }
}

/// A sweep seen from one pixel, out to `reach` cells.
struct Sweep<'s> {
    dir: &'s SweepDir,
    col: f64,
    row: f64,
    reach2: f64,
}

impl Sweep<'_> {
    /// Squared distance from the pixel to the rectangle
    /// `[u0, u1] x [v0, v1]`, if within reach.
    fn distance2(&self, u0: f64, u1: f64, v0: f64, v1: f64) -> Option<f64> {
        let gap = |lo: f64, hi: f64| if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 };
        let (dx, dy) = (gap(u0 - self.col, u1 - self.col), gap(v0 - self.row, v1 - self.row));
        let d2 = dx * dx + dy * dy;
        (d2 <= self.reach2).then_some(d2)
    }

    /// Whether height `top` at squared distance `d2` clears the lowest ray.
    fn above(&self, top: f64, z0: f64, d2: f64) -> bool {
        let h = top - z0;
        h > 0.0 && h * h > d2 * self.dir.rise * self.dir.rise
    }

    /// Whether the rectangle meets the sector. Rectangles holding the pixel
    /// always do.
    fn meets(&self, u0: f64, u1: f64, v0: f64, v1: f64) -> bool {
        let (x0, x1, y0, y1) = (u0 - self.col, u1 - self.col, v0 - self.row, v1 - self.row);
        if x0 <= 0.0 && x1 >= 0.0 && y0 <= 0.0 && y1 >= 0.0 {
            return true;
        }
        let d = self.dir;
        let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)];
        if d.half >= std::f64::consts::FRAC_PI_2 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (x, y) in corners {
                let a = wrap(y.atan2(x) - d.center);
                lo = lo.min(a);
                hi = hi.max(a);
            }
            return if hi - lo > std::f64::consts::PI {
                // spans the back of the sector
                hi <= d.half || lo >= -d.half
            } else {
                lo <= d.half && hi >= -d.half
            };
        }
        let cross = |a: (f64, f64), b: (f64, f64)| a.0 * b.1 - a.1 * b.0;
        if corners.iter().any(|&p| cross(d.e1, p) >= 0.0 && cross(p, d.e2) >= 0.0) {
            return true;
        }
        // otherwise an edge of the sector must cross the rectangle
        let hits = |e: (f64, f64)| {
            let slab = |lo: f64, hi: f64, c: f64| {
                if c == 0.0 {
                    if lo <= 0.0 && hi >= 0.0 {
                        (f64::NEG_INFINITY, f64::INFINITY)
                    } else {
                        (f64::INFINITY, f64::NEG_INFINITY)
                    }
                } else {
                    let (a, b) = (lo / c, hi / c);
                    (a.min(b), a.max(b))
                }
            };
            let (ax, bx) = slab(x0, x1, e.0);
            let (ay, by) = slab(y0, y1, e.1);
            ax.max(ay).max(0.0) <= bx.min(by)
        };
        hits(d.e1) || hits(d.e2)
    }
}

/// Interval of one axis the ray is in: `-1` is the half cell before the
/// first center, `n - 1` the half cell after the last, `k` otherwise spans
/// centers `k` and `k + 1`.
#[inline]
fn interval(p: f64, dir: f64, n: usize) -> Option<isize> {
    let last = n as f64 - 1.0;
    if p < -0.5 || p > last + 0.5 || (p == -0.5 && dir < 0.0) || (p == last + 0.5 && dir > 0.0) {
        return None;
    }
    // a position on a boundary belongs to the interval ahead of the ray
    let k = if dir < 0.0 { p.ceil() - 1.0 } else { p.floor() };
    Some((k.max(-1.0) as isize).min(n as isize - 1))
}

/// Distance along the ray to the far boundary of interval `k`.
#[inline]
fn interval_exit(p0: f64, dir: f64, k: isize, n: usize) -> f64 {
    let last = n as isize - 1;
    if dir > 0.0 {
        let hi = if k >= last { last as f64 + 0.5 } else { (k + 1) as f64 };
        (hi - p0) / dir
    } else if dir < 0.0 {
        let lo = if k < 0 { -0.5 } else { k as f64 };
        (lo - p0) / dir
    } else {
        f64::INFINITY
    }
}

/// First and last patch index held by block `b` on an axis of `n` centers.
fn block_patches(b: usize, n: usize) -> (isize, isize) {
    let first = if b == 0 { -1 } else { (b * BLOCK) as isize };
    (first, ((b + 1) * BLOCK).min(n) as isize - 1)
}

/// Extent of the patches starting at index `k` on an axis of `n` centers.
fn patch_span(k: isize, n: usize) -> (f64, f64) {
    ((k as f64).max(-0.5), ((k + 1) as f64).min(n as f64 - 0.5))
}

/// Angular bins of the far-field table.
const BINS: usize = 64;

/// For every block and direction bin, the steepest rise from the block's
/// lowest cell to any block two or more rings away whose extent meets
/// that bin, within the trace length.
struct FarField {
    slope: Vec<f64>,
    /// Highest valid corner of patch `(ku, kv)` at `(kv + 1) * (ncols + 1) + ku + 1`.
    patch_top: Vec<f64>,
}

impl FarField {
    fn new(caster: &ShadowCaster<'_>) -> Self {
        use std::f64::consts::TAU;
        let spec = caster.surface.spec();
        let (nc, nr) = (spec.ncols, spec.nrows);
        let (bcols, brows) = (caster.bcols, nr.div_ceil(BLOCK));
        let bin = bin_of;
        let span = |b: usize, n: usize| {
            let (ka, kb) = block_patches(b, n);
            (patch_span(ka, n).0, patch_span(kb, n).1)
        };
        let limit = (caster.max_dist / BLOCK as f64).ceil() as usize + 1;
        let mut slope = vec![f64::NEG_INFINITY; bcols * brows * BINS];
        for bj in 0..brows {
            for bi in 0..bcols {
                let mut low = f64::INFINITY;
                for r in bj * BLOCK..((bj + 1) * BLOCK).min(nr) {
                    for c in bi * BLOCK..((bi + 1) * BLOCK).min(nc) {
                        if let Some(z) = caster.surface.get(c, r) {
                            low = low.min(z);
                        }
                    }
                }
                if !low.is_finite() {
                    continue;
                }
                // pixel centers of this block
                let (su0, su1) = ((bi * BLOCK) as f64, (((bi + 1) * BLOCK).min(nc) - 1) as f64);
                let (sv0, sv1) = ((bj * BLOCK) as f64, (((bj + 1) * BLOCK).min(nr) - 1) as f64);
                let row = &mut slope[(bj * bcols + bi) * BINS..(bj * bcols + bi + 1) * BINS];
                for tj in bj.saturating_sub(limit)..=(bj + limit).min(brows - 1) {
                    for ti in bi.saturating_sub(limit)..=(bi + limit).min(bcols - 1) {
                        if ti.abs_diff(bi) <= 1 && tj.abs_diff(bj) <= 1 {
                            continue;
                        }
                        let top = caster.block_max[tj * bcols + ti];
                        if top <= low {
                            continue;
                        }
                        let (tu0, tu1) = span(ti, nc);
                        let (tv0, tv1) = span(tj, nr);
                        // offsets from any source pixel to any target point
                        let (x0, x1, y0, y1) = (tu0 - su1, tu1 - su0, tv0 - sv1, tv1 - sv0);
                        let gap = |lo: f64, hi: f64| if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 };
                        let d = gap(x0, x1).hypot(gap(y0, y1));
                        if d > caster.max_dist {
                            continue;
                        }
                        let s = (top - low) / d;
                        let angles = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)].map(|(x, y)| y.atan2(x));
                        // the widest gap between corner angles is the side facing away
                        let mut sorted = angles;
                        sorted.sort_by(f64::total_cmp);
                        let mut start = 0;
                        let mut widest = TAU + sorted[0] - sorted[3];
                        for k in 1..4 {
                            if sorted[k] - sorted[k - 1] > widest {
                                widest = sorted[k] - sorted[k - 1];
                                start = k;
                            }
                        }
                        let (from, to) = (sorted[start], sorted[(start + 3) % 4]);
                        let (mut k, last) = (bin(from), bin(to));
                        loop {
                            row[k] = row[k].max(s);
                            if k == last {
                                break;
                            }
                            k = (k + 1) % BINS;
                        }
                    }
                }
            }
        }
        let mut patch_top = vec![f64::NEG_INFINITY; (nc + 1) * (nr + 1)];
        for kv in -1..nr as isize {
            for ku in -1..nc as isize {
                let clamp = |k: isize, n: usize| (k.max(0) as usize).min(n - 1);
                let mut m = f64::NEG_INFINITY;
                for (c, r) in [(ku, kv), (ku + 1, kv), (ku, kv + 1), (ku + 1, kv + 1)] {
                    if let Some(z) = caster.surface.get(clamp(c, nc), clamp(r, nr)) {
                        m = m.max(z);
                    }
                }
                patch_top[(kv + 1) as usize * (nc + 1) + (ku + 1) as usize] = m;
            }
        }
        FarField { slope, patch_top }
    }

    fn may_shade(&self, block: usize, dir: &SweepDir) -> bool {
        let row = &self.slope[block * BINS..(block + 1) * BINS];
        let (mut k, last) = dir.bins;
        loop {
            if row[k] > dir.rise {
                return true;
            }
            if k == last {
                return false;
            }
            k = (k + 1) % BINS;
        }
    }
}

impl<'a> ShadowCaster<'a> {
    pub fn new(surface: &'a Raster, cfg: &SolarConfig) -> Result<Self> {
        let spec = surface.spec();
        let global_max = crate::raster::min_max(surface)?.1;
        let bcols = spec.ncols.div_ceil(BLOCK);
        let brows = spec.nrows.div_ceil(BLOCK);
        // block (bi, bj) holds the patches whose low corner lies in it, so
        // its maximum covers cells [b*B, b*B + B] on each axis
        let mut block_max = vec![f64::NEG_INFINITY; bcols * brows];
        for bj in 0..brows {
            let r0 = bj * BLOCK;
            let r1 = (r0 + BLOCK).min(spec.nrows - 1);
            for bi in 0..bcols {
                let c0 = bi * BLOCK;
                let c1 = (c0 + BLOCK).min(spec.ncols - 1);
                let mut m = f64::NEG_INFINITY;
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        if let Some(v) = surface.get(c, r) {
                            m = m.max(v);
                        }
                    }
                }
                block_max[bj * bcols + bi] = m;
            }
        }
        let ring_max = ring_maxima(&block_max, bcols, brows);
        Ok(ShadowCaster {
            surface,
            global_max,
            max_dist: cfg.shadow_max_distance / spec.cell_size,
            cell_size: spec.cell_size,
            bcols,
            block_max,
            ring_max,
            far: std::sync::OnceLock::new(),
        })
    }

    pub fn ray(&self, sun: &SunPosition) -> RayDir {
        let (sa, ca) = sun.azimuth.to_radians().sin_cos();
        RayDir {
            cu: sa,
            cv: -ca,
            rise: self.cell_size * sun.altitude.to_radians().tan(),
        }
    }

    pub fn is_shadowed(&self, col: usize, row: usize, sun: &SunPosition) -> Result<bool> {
        let spec = self.surface.spec();
        if col >= spec.ncols || row >= spec.nrows {
            return Err(Error::Index {
                col,
                row,
                ncols: spec.ncols,
                nrows: spec.nrows,
            });
        }
        let z0 = self.surface.get(col, row).ok_or_else(|| {
            Error::Argument(format!("pixel ({col}, {row}) is nodata"))
        })?;
        if sun.altitude <= 0.0 {
            return Ok(true);
        }
        Ok(self.march(col, row, z0, &self.ray(sun)))
    }

    #[inline]
    pub(crate) fn march(&self, col: usize, row: usize, z0: f64, ray: &RayDir) -> bool {
        self.trace(col, row, z0, ray, true)
    }

    /// False when no ray between directions `a` and `b` (the shorter way
    /// round) rising at least as steeply as the lower of the two can be
    /// shaded. Conservative: true may still mean no shade.
    ///
    /// The 3x3 blocks around the pixel are checked patch by patch; farther
    /// blocks through [`FarField`].
    pub(crate) fn sweep(&self, a: &RayDir, b: &RayDir) -> SweepDir {
        SweepDir::new(a, b)
    }

    /// The sun rise at and above which the ring bounds around the pixel
    /// rule out shade in every direction.
    pub(crate) fn clear_rise(&self, col: usize, row: usize, z0: f64) -> f64 {
        let spec = self.surface.spec();
        let lead = |r: usize| (BLOCK * r.saturating_sub(1)) as f64;
        let bound = |h: f64, r: usize| match lead(r) {
            l if l > 0.0 => (h - z0) / l,
            _ if h > z0 => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        let near = |p: usize, n: usize| [p.saturating_sub(1) / BLOCK, p.min(n - 1) / BLOCK];
        let mut clear = bound(self.global_max, RINGS + 1);
        for bj in near(row, spec.nrows) {
            for bi in near(col, spec.ncols) {
                let block = bj * self.bcols + bi;
                for (r, &h) in self.ring_max[block * (RINGS + 1)..(block + 1) * (RINGS + 1)].iter().enumerate() {
                    clear = clear.max(bound(h, r));
                }
            }
        }
        clear
    }

    /// Whether any sun position of the sweep can shade the pixel. `clear`
    /// comes from [`Self::clear_rise`].
    pub(crate) fn sweep_may_shade(&self, col: usize, row: usize, z0: f64, clear: f64, dir: &SweepDir) -> bool {
        let rise = dir.rise;
        if rise <= 0.0 {
            return true;
        }
        if rise >= clear {
            return false;
        }
        let reach = self.max_dist.min((self.global_max - z0) / rise);
        if reach <= 0.0 {
            return false;
        }
        let spec = self.surface.spec();
        let (nc, nr) = (spec.ncols, spec.nrows);
        let sweep = Sweep {
            dir,
            col: col as f64,
            row: row as f64,
            reach2: reach * reach,
        };
        let (bi, bj) = (col / BLOCK, row / BLOCK);
        let far = self.far.get_or_init(|| FarField::new(self));
        if far.may_shade(bj * self.bcols + bi, dir) {
            return true;
        }
        let brows = nr.div_ceil(BLOCK);
        for tj in bj.saturating_sub(1)..=(bj + 1).min(brows - 1) {
            for ti in bi.saturating_sub(1)..=(bi + 1).min(self.bcols - 1) {
                let (ka, kb) = block_patches(ti, nc);
                let (la, lb) = block_patches(tj, nr);
                let (u0, u1) = (patch_span(ka, nc).0, patch_span(kb, nc).1);
                let (v0, v1) = (patch_span(la, nr).0, patch_span(lb, nr).1);
                let Some(d2) = sweep.distance2(u0, u1, v0, v1) else {
                    continue;
                };
                if !sweep.above(self.block_max[tj * self.bcols + ti], z0, d2) || !sweep.meets(u0, u1, v0, v1) {
                    continue;
                }
                for kv in la..=lb {
                    for ku in ka..=kb {
                        let (pu0, pu1) = patch_span(ku, nc);
                        let (pv0, pv1) = patch_span(kv, nr);
                        let top = far.patch_top[(kv + 1) as usize * (nc + 1) + (ku + 1) as usize];
                        if top <= z0 {
                            continue;
                        }
                        if let Some(d2) = sweep.distance2(pu0, pu1, pv0, pv1) {
                            let above = if d2 > 0.0 { sweep.above(top, z0, d2) } else { self.grows_past(&sweep, ku, kv) };
                            if above && sweep.meets(pu0, pu1, pv0, pv1) {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    /// Whether patch `(ku, kv)`, which has the pixel as a corner, can rise
    /// above a ray of the sweep. Along any ray from the corner the
    /// bilinear rise is at most `s * (P+ + Q+ + |R|)`.
    fn grows_past(&self, sweep: &Sweep<'_>, ku: isize, kv: isize) -> bool {
        let spec = self.surface.spec();
        let clamp = |k: isize, n: usize| (k.max(0) as usize).min(n - 1);
        let (ia, ib) = (clamp(ku, spec.ncols), clamp(ku + 1, spec.ncols));
        let (ja, jb) = (clamp(kv, spec.nrows), clamp(kv + 1, spec.nrows));
        let corners = [
            self.surface.get(ia, ja),
            self.surface.get(ib, ja),
            self.surface.get(ia, jb),
            self.surface.get(ib, jb),
        ];
        let [Some(z00), Some(z10), Some(z01), Some(z11)] = corners else {
            return true;
        };
        let (col, row) = (sweep.col as usize, sweep.row as usize);
        let (za, zu, zv, zuv) = match (col == ia, row == ja) {
            (true, true) => (z00, z10, z01, z11),
            (false, true) => (z10, z00, z11, z01),
            (true, false) => (z01, z11, z00, z10),
            (false, false) => (z11, z01, z10, z00),
        };
        let growth = (zu - za).max(0.0) + (zv - za).max(0.0) + (zuv - zu - zv + za).abs();
        growth > sweep.dir.rise
    }

    fn trace(&self, col: usize, row: usize, z0: f64, ray: &RayDir, accelerate: bool) -> bool {
        let spec = self.surface.spec();
        let (nc, nr) = (spec.ncols, spec.nrows);
        let (u0, v0) = (col as f64, row as f64);
        let rising = ray.rise > 0.0;
        let mut s = 0.0;
        while s < self.max_dist {
            let zr = z0 + s * ray.rise;
            if zr >= self.global_max {
                return false;
            }
            let (u, v) = (u0 + s * ray.cu, v0 + s * ray.cv);
            let (Some(ku), Some(kv)) = (interval(u, ray.cu, nc), interval(v, ray.cv, nr)) else {
                return false;
            };
            let block = (kv.max(0) as usize / BLOCK) * self.bcols + ku.max(0) as usize / BLOCK;
            if accelerate && rising {
                match self.safe_distance(block, zr, ray.rise) {
                    None => return false,
                    Some(j) if j > 0.0 => {
                        s += j;
                        continue;
                    }
                    Some(_) => {}
                }
                if self.block_max[block] <= zr {
                    // nothing in this block reaches the (rising) ray
                    let exit = self.block_exit(u0, v0, ray, block);
                    if exit > s {
                        s = exit;
                        continue;
                    }
                }
            }
            let end = interval_exit(u0, ray.cu, ku, nc)
                .min(interval_exit(v0, ray.cv, kv, nr))
                .min(self.max_dist);
            if self.patch_shades(ku, kv, s, end, u0, v0, z0, ray) {
                return true;
            }
            if end <= s {
                // boundary rounding; nudge forward
                s = next_up(s);
            } else {
                s = end;
            }
        }
        false
    }

    /// Distance along the ray to where it leaves `block`.
    fn block_exit(&self, u0: f64, v0: f64, ray: &RayDir, block: usize) -> f64 {
        let spec = self.surface.spec();
        let (bi, bj) = (block % self.bcols, block / self.bcols);
        let axis = |p0: f64, dir: f64, b: usize, n: usize| {
            let lo = if b == 0 { -0.5 } else { (b * BLOCK) as f64 };
            let hi = if (b + 1) * BLOCK >= n - 1 { n as f64 - 0.5 } else { ((b + 1) * BLOCK) as f64 };
            if dir > 0.0 {
                (hi - p0) / dir
            } else if dir < 0.0 {
                (lo - p0) / dir
            } else {
                f64::INFINITY
            }
        };
        axis(u0, ray.cu, bi, spec.ncols).min(axis(v0, ray.cv, bj, spec.nrows))
    }

    /// Distance along the ray, from a point in `block` at ray height `zr`,
    /// over which the surface provably stays at or below the ray. `None`
    /// if it does for the rest of the ray.
    ///
    /// Patches in block ring `r >= 1` start at least `B(r - 1)` cells from
    /// the current point on some axis (`B` the block size), and the ray
    /// moves at most one cell per cell of distance on either axis, so it
    /// meets ring `r` no sooner than `B(r - 1)` ahead, at height
    /// `zr + B(r - 1) * rise`. Up to the first ring whose maximum exceeds
    /// that height nothing can rise above the ray.
    #[inline]
    fn safe_distance(&self, block: usize, zr: f64, rise: f64) -> Option<f64> {
        let lead = |r: usize| (BLOCK * r.saturating_sub(1)) as f64;
        let rings = &self.ring_max[block * (RINGS + 1)..(block + 1) * (RINGS + 1)];
        match rings
            .iter()
            .enumerate()
            .position(|(r, &h)| h > zr + lead(r) * rise)
        {
            Some(r) => Some(lead(r)),
            None if self.global_max > zr + lead(RINGS + 1) * rise => Some(lead(RINGS + 1)),
            None => None,
        }
    }

    /// Whether the surface rises above the ray anywhere on `(a, b]` (or
    /// `[a, b]` when `a > 0`) within patch `(ku, kv)`.
    #[allow(clippy::too_many_arguments)]
    fn patch_shades(&self, ku: isize, kv: isize, a: f64, b: f64, u0: f64, v0: f64, z0: f64, ray: &RayDir) -> bool {
        let spec = self.surface.spec();
        let (nc, nr) = (spec.ncols, spec.nrows);
        let ia = ku.max(0) as usize;
        let ib = ((ku + 1).max(0) as usize).min(nc - 1);
        let ja = kv.max(0) as usize;
        let jb = ((kv + 1).max(0) as usize).min(nr - 1);
        let corners = [
            self.surface.get(ia, ja),
            self.surface.get(ib, ja),
            self.surface.get(ia, jb),
            self.surface.get(ib, jb),
        ];
        let pos = |s: f64| (u0 + s * ray.cu, v0 + s * ray.cv);
        let zray = |s: f64| z0 + s * ray.rise;
        // fractions within the patch; constant along a clamped axis
        let frac = |p: f64, lo: usize, hi: usize| if hi == lo { 0.0 } else { (p - lo as f64).clamp(0.0, 1.0) };
        let [Some(z00), Some(z10), Some(z01), Some(z11)] = corners else {
            return self.sparse_patch_shades(&corners, a, b, |s| {
                let (u, v) = pos(s);
                (frac(u, ia, ib), frac(v, ja, jb))
            }, zray);
        };
        let height = |s: f64| {
            let (u, v) = pos(s);
            let (fu, fv) = (frac(u, ia, ib), frac(v, ja, jb));
            z00 * (1.0 - fu) * (1.0 - fv) + z10 * fu * (1.0 - fv) + z01 * (1.0 - fu) * fv + z11 * fu * fv
        };
        if height(b) > zray(b) || (a > 0.0 && height(a) > zray(a)) {
            return true;
        }
        // interior maximum of the quadratic height minus ray
        let du = if ib == ia { 0.0 } else { ray.cu };
        let dv = if jb == ja { 0.0 } else { ray.cv };
        let c2 = (z00 - z10 - z01 + z11) * du * dv;
        if c2 >= 0.0 {
            return false;
        }
        let (u, v) = pos(a);
        let (fu, fv) = (frac(u, ia, ib), frac(v, ja, jb));
        let c1 = ((z10 - z00) * (1.0 - fv) + (z11 - z01) * fv) * du + ((z01 - z00) * (1.0 - fu) + (z11 - z10) * fu) * dv
            - ray.rise;
        let t = -c1 / (2.0 * c2);
        let s = a + t;
        s > a && s < b && height(s) > zray(s)
    }

    /// Patch with nodata corners: the valid corners' weighted mean, sampled.
    fn sparse_patch_shades<F, Z>(&self, corners: &[Option<f64>; 4], a: f64, b: f64, frac: F, zray: Z) -> bool
    where
        F: Fn(f64) -> (f64, f64),
        Z: Fn(f64) -> f64,
    {
        let height = |s: f64| {
            let (fu, fv) = frac(s);
            let w = [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv];
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (z, w) in corners.iter().zip(w) {
                if let Some(z) = z {
                    acc += w * z;
                    wsum += w;
                }
            }
            (wsum > 0.0).then(|| acc / wsum)
        };
        let n = ((b - a) / NODATA_SAMPLING).ceil().max(1.0) as usize;
        (0..=n).any(|i| {
            let s = if i == n { b } else { a + i as f64 * NODATA_SAMPLING };
            s > 0.0 && matches!(height(s), Some(h) if h > zray(s))
        })
    }
}

#[inline]
fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::MIN_POSITIVE
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// Maxima over growing squares of blocks, by repeated 3x3 dilation. The
/// square at radius `r` includes the inner rings, but since the reach
/// height grows with `r` the first ring passing the test is the same as
/// with exact ring maxima.
fn ring_maxima(block_max: &[f64], bcols: usize, brows: usize) -> Vec<f64> {
    let n = bcols * brows;
    let mut out = vec![f64::NEG_INFINITY; n * (RINGS + 1)];
    let mut cur = block_max.to_vec();
    let mut tmp = vec![f64::NEG_INFINITY; n];
    for r in 0..=RINGS {
        if r > 0 {
            for j in 0..brows {
                for i in 0..bcols {
                    let mut m = cur[j * bcols + i];
                    if i > 0 {
                        m = m.max(cur[j * bcols + i - 1]);
                    }
                    if i + 1 < bcols {
                        m = m.max(cur[j * bcols + i + 1]);
                    }
                    tmp[j * bcols + i] = m;
                }
            }
            for j in 0..brows {
                for i in 0..bcols {
                    let mut m = tmp[j * bcols + i];
                    if j > 0 {
                        m = m.max(tmp[(j - 1) * bcols + i]);
                    }
                    if j + 1 < brows {
                        m = m.max(tmp[(j + 1) * bcols + i]);
                    }
                    cur[j * bcols + i] = m;
                }
            }
        }
        for (b, &m) in cur.iter().enumerate() {
            out[b * (RINGS + 1) + r] = m;
        }
    }
    out
}

/// One-off shadow test. Builds the block index on every call; use
/// [`ShadowCaster`] when testing many pixels.
pub fn is_shadowed(
    surface: &Raster,
    col: usize,
    row: usize,
    sun: &SunPosition,
    cfg: &SolarConfig,
) -> Result<bool> {
    ShadowCaster::new(surface, cfg)?.is_shadowed(col, row, sun)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridSpec, DEFAULT_NODATA};

    fn sun(alt: f64, az: f64) -> SunPosition {
        SunPosition {
            altitude: alt,
            azimuth: az,
        }
    }

    #[test]
    fn flat_plane_never_shadowed() {
        let r = Raster::filled(GridSpec::new(20, 20, 0.0, 0.0, 0.5).unwrap(), 3.0);
        let caster = ShadowCaster::new(&r, &SolarConfig::default()).unwrap();
        for az in [0.0, 45.0, 133.0, 270.0] {
            assert!(!caster.is_shadowed(10, 10, &sun(5.0, az)).unwrap());
        }
    }

    #[test]
    fn out_of_bounds_is_index_error() {
        let r = Raster::filled(GridSpec::new(4, 4, 0.0, 0.0, 0.5).unwrap(), 0.0);
        let err = is_shadowed(&r, 4, 0, &sun(30.0, 180.0), &SolarConfig::default());
        assert!(matches!(err, Err(Error::Index { .. })));
    }

    #[test]
    fn nodata_corners_are_skipped() {
        let spec = GridSpec::new(6, 1, 0.0, 0.0, 1.0).unwrap();
        let r = Raster::new(spec, vec![0.0, DEFAULT_NODATA, DEFAULT_NODATA, 5.0, 0.0, 0.0], DEFAULT_NODATA).unwrap();
        let cfg = SolarConfig::default();
        // sun due east, low: the 5 m post at col 3 shades col 0
        assert!(is_shadowed(&r, 0, 0, &sun(10.0, 90.0), &cfg).unwrap());
        // sun due west: nothing west of col 0
        assert!(!is_shadowed(&r, 0, 0, &sun(10.0, 270.0), &cfg).unwrap());
    }

    #[test]
    fn max_distance_limits_search() {
        let spec = GridSpec::new(200, 1, 0.0, 0.0, 1.0).unwrap();
        let mut v = vec![0.0; 200];
        v[150] = 10.0;
        let r = Raster::new(spec, v, DEFAULT_NODATA).unwrap();
        let near = SolarConfig {
            shadow_max_distance: 100.0,
            ..Default::default()
        };
        let far = SolarConfig {
            shadow_max_distance: 1000.0,
            ..Default::default()
        };
        let s = sun(2.0, 90.0);
        assert!(!is_shadowed(&r, 0, 0, &s, &near).unwrap());
        assert!(is_shadowed(&r, 0, 0, &s, &far).unwrap());
    }

    /// Dense point samples of the interpolant: any hit must also be a hit
    /// of the exact trace.
    fn dense_hit(r: &Raster, col: usize, row: usize, sun: &SunPosition, max_dist: f64) -> bool {
        let z0 = r.get(col, row).unwrap();
        let c = ShadowCaster::new(r, &SolarConfig::default()).unwrap();
        let ray = c.ray(sun);
        let ray = RayDir { rise: ray.rise / c.cell_size, ..ray };
        let n = (max_dist / 0.01) as usize;
        (1..=n).any(|i| {
            let s = i as f64 * 0.01;
            let (u, v) = (col as f64 + s * ray.cu, row as f64 + s * ray.cv);
            let spec = r.spec();
            if u < -0.5 || v < -0.5 || u > spec.ncols as f64 - 0.5 || v > spec.nrows as f64 - 0.5 {
                return false;
            }
            let (uc, vc) = (u.clamp(0.0, (spec.ncols - 1) as f64), v.clamp(0.0, (spec.nrows - 1) as f64));
            let (i0, j0) = (uc.floor() as usize, vc.floor() as usize);
            let (i1, j1) = ((i0 + 1).min(spec.ncols - 1), (j0 + 1).min(spec.nrows - 1));
            let (fu, fv) = (uc - i0 as f64, vc - j0 as f64);
            let h = [(i0, j0, (1.0 - fu) * (1.0 - fv)), (i1, j0, fu * (1.0 - fv)), (i0, j1, (1.0 - fu) * fv), (i1, j1, fu * fv)]
                .iter()
                .map(|&(cc, rr, w)| w * r.get(cc, rr).unwrap())
                .sum::<f64>();
            h > z0 + s * ray.rise + 1e-9
        })
    }

    /// Sparse tall posts and blocks over a low rough floor.
    fn scene(seed: u64, n: usize, with_nodata: bool) -> Raster {
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let spec = GridSpec::new(n, n, 0.0, 0.0, 0.5).unwrap();
        let mut v: Vec<f64> = (0..n * n).map(|_| next() * 0.3).collect();
        for _ in 0..n / 4 {
            let (c, r) = ((next() * n as f64) as usize, (next() * n as f64) as usize);
            let h = next() * 15.0;
            let w = 1 + (next() * 4.0) as usize;
            for rr in r..(r + w).min(n) {
                for cc in c..(c + w).min(n) {
                    v[rr * n + cc] = h;
                }
            }
        }
        if with_nodata {
            for _ in 0..3 {
                v[(next() * (n * n) as f64) as usize] = DEFAULT_NODATA;
            }
        }
        Raster::new(spec, v, DEFAULT_NODATA).unwrap()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn skipping_matches_plain_trace(
            seed in 0u64..u64::MAX,
            n in 20usize..90,
            alt in 0.5f64..80.0,
            az in 0.0f64..360.0,
            holes in proptest::bool::ANY,
        ) {
            let r = scene(seed, n, holes);
            let cfg = SolarConfig { shadow_max_distance: 30.0, ..Default::default() };
            let c = ShadowCaster::new(&r, &cfg).unwrap();
            let ray = c.ray(&sun(alt, az));
            for row in 0..n {
                for col in 0..n {
                    let Some(z0) = r.get(col, row) else { continue };
                    proptest::prop_assert_eq!(
                        c.trace(col, row, z0, &ray, true),
                        c.trace(col, row, z0, &ray, false),
                        "({}, {})", col, row
                    );
                }
            }
        }

        /// Whenever the sweep gate rules shade out, no sun position on a
        /// path inside the sweep shades the pixel.
        #[test]
        fn sweep_gate_never_misses_shade(
            seed in 0u64..u64::MAX,
            n in 20usize..100,
            alt in 1.0f64..60.0,
            dalt in -3.0f64..3.0,
            az in 0.0f64..360.0,
            daz in -25.0f64..25.0,
            reach in 5.0f64..200.0,
            holes in proptest::bool::ANY,
        ) {
            let r = scene(seed, n, holes);
            let cfg = SolarConfig { shadow_max_distance: reach, ..Default::default() };
            let c = ShadowCaster::new(&r, &cfg).unwrap();
            let (a, b) = (sun(alt, az), sun((alt + dalt).max(0.5), az + daz));
            let sweep = c.sweep(&c.ray(&a), &c.ray(&b));
            let path: Vec<RayDir> = (0..=60)
                .map(|k| {
                    let f = k as f64 / 60.0;
                    c.ray(&sun(a.altitude + f * (b.altitude - a.altitude), a.azimuth + f * daz))
                })
                .collect();
            for row in 0..n {
                for col in 0..n {
                    let Some(z0) = r.get(col, row) else { continue };
                    if c.sweep_may_shade(col, row, z0, c.clear_rise(col, row, z0), &sweep) {
                        continue;
                    }
                    for ray in &path {
                        proptest::prop_assert!(!c.trace(col, row, z0, ray, false), "({}, {})", col, row);
                    }
                }
            }
        }

        #[test]
        fn dense_samples_never_beat_the_exact_trace(
            seed in 0u64..u64::MAX,
            alt in 0.5f64..80.0,
            az in 0.0f64..360.0,
        ) {
            let n = 24;
            let r = scene(seed, n, false);
            let c = ShadowCaster::new(&r, &SolarConfig::default()).unwrap();
            let s = sun(alt, az);
            for row in (0..n).step_by(3) {
                for col in (0..n).step_by(3) {
                    if dense_hit(&r, col, row, &s, 2.0 * n as f64) {
                        proptest::prop_assert!(c.is_shadowed(col, row, &s).unwrap(), "({}, {})", col, row);
                    }
                }
            }
        }
    }
}
