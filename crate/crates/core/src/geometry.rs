//! Planar polygons and pixel-center rasterization.

use crate::error::{Error, Result};
use crate::raster::GridSpec;

pub type Point = [f64; 2];

/// A polygon as a set of rings (outer boundary plus holes, or the parts of
/// a multipolygon). Containment uses the even-odd rule across all rings.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub rings: Vec<Vec<Point>>,
}

impl Polygon {
    pub fn new(rings: Vec<Vec<Point>>) -> Result<Self> {
        let p = Polygon { rings };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rings.is_empty() {
            return Err(Error::Geometry("polygon has no rings".into()));
        }
        for (i, ring) in self.rings.iter().enumerate() {
            let distinct = if ring.len() > 1 && ring.first() == ring.last() {
                ring.len() - 1
            } else {
                ring.len()
            };
            if distinct < 3 {
                return Err(Error::Geometry(format!(
                    "ring {i} has {distinct} distinct vertices, need at least 3"
                )));
            }
            if ring.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::Geometry(format!("ring {i} has non-finite coordinates")));
            }
        }
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        self.rings
            .iter()
            .all(|r| r.len() > 1 && r.first() == r.last())
    }

    /// Even-odd containment. An edge is counted when it straddles the
    /// horizontal line through the point with one endpoint strictly above
    /// and one at-or-below, and crosses strictly to the right of the point.
    /// Points on left/bottom edges are therefore inside, points on
    /// right/top edges outside, so adjacent polygons sharing an edge never
    /// both claim a pixel center.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            let n = ring.len();
            let mut j = n - 1;
            for i in 0..n {
                let [xi, yi] = ring[i];
                let [xj, yj] = ring[j];
                if (yi > y) != (yj > y) {
                    let xc = xi + (y - yi) * (xj - xi) / (yj - yi);
                    if x < xc {
                        inside = !inside;
                    }
                }
                j = i;
            }
        }
        inside
    }

    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for [x, y] in self.rings.iter().flatten() {
            b.0 = b.0.min(*x);
            b.1 = b.1.min(*y);
            b.2 = b.2.max(*x);
            b.3 = b.3.max(*y);
        }
        b
    }
}

/// Calls `f(col, row)` for every cell whose center lies inside `poly`.
pub fn for_each_cell_inside<F>(poly: &Polygon, spec: &GridSpec, mut f: F)
where
    F: FnMut(usize, usize),
{
    let (xmin, ymin, xmax, ymax) = poly.bbox();
    let cs = spec.cell_size;
    let clamp = |v: f64, n: usize| v.max(0.0).min(n as f64) as usize;
    let c0 = clamp(((xmin - spec.x_origin) / cs - 0.5).floor(), spec.ncols);
    let c1 = clamp(((xmax - spec.x_origin) / cs + 0.5).ceil(), spec.ncols);
    let j0 = clamp(((ymin - spec.y_origin) / cs - 0.5).floor(), spec.nrows);
    let j1 = clamp(((ymax - spec.y_origin) / cs + 0.5).ceil(), spec.nrows);
    for j in j0..j1 {
        let row = spec.nrows - 1 - j;
        for col in c0..c1 {
            let (x, y) = spec.cell_center(col, row);
            if poly.contains(x, y) {
                f(col, row);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, w: f64) -> Polygon {
        Polygon::new(vec![vec![
            [x0, y0],
            [x0 + w, y0],
            [x0 + w, y0 + w],
            [x0, y0 + w],
            [x0, y0],
        ]])
        .unwrap()
    }

    #[test]
    fn rejects_short_rings() {
        assert!(Polygon::new(vec![vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]]).is_err());
        assert!(Polygon::new(vec![]).is_err());
    }

    #[test]
    fn edge_tie_rule() {
        let p = square(0.0, 0.0, 1.0);
        assert!(p.contains(0.5, 0.5));
        // left and bottom edges inside, right and top outside
        assert!(p.contains(0.0, 0.5));
        assert!(p.contains(0.5, 0.0));
        assert!(!p.contains(1.0, 0.5));
        assert!(!p.contains(0.5, 1.0));
    }

    #[test]
    fn holes_by_even_odd() {
        let mut p = square(0.0, 0.0, 4.0);
        p.rings.push(square(1.0, 1.0, 2.0).rings.remove(0));
        assert!(p.contains(0.5, 0.5));
        assert!(!p.contains(2.0, 2.0));
    }

    #[test]
    fn shared_edge_claims_each_center_once() {
        let spec = GridSpec::new(4, 4, 0.0, 0.0, 0.5).unwrap();
        // boundary at x = 1.0 is not on a center; shift so it is: x = 0.75
        let a = Polygon::new(vec![vec![[0.0, 0.0], [0.75, 0.0], [0.75, 2.0], [0.0, 2.0]]]).unwrap();
        let b = Polygon::new(vec![vec![[0.75, 0.0], [2.0, 0.0], [2.0, 2.0], [0.75, 2.0]]]).unwrap();
        let mut hits = vec![0; spec.len()];
        for p in [&a, &b] {
            for_each_cell_inside(p, &spec, |c, r| hits[spec.index(c, r)] += 1);
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn unit_square_covers_four_centers() {
        let spec = GridSpec::new(10, 10, 0.0, 0.0, 0.5).unwrap();
        let mut n = 0;
        for_each_cell_inside(&square(1.0, 1.0, 1.0), &spec, |_, _| n += 1);
        assert_eq!(n, 4);
    }
}
