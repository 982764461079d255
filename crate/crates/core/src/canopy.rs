//! Crown transparency from upward-looking canopy photographs, and the light
//! penetration factor aggregated over a photo sample.

use serde::{Deserialize, Serialize};

use crate::classify::RgbPixels;
use crate::error::{Error, Result};

/// Smallest region of interest accepted, in pixels.
pub const MIN_ROI_PIXELS: usize = 100;

/// Circular region of interest. The center is given as fractions of image
/// width and height, the radius as a fraction of `min(width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
}

impl Default for Roi {
    fn default() -> Self {
        Roi {
            center_x: 0.5,
            center_y: 0.5,
            radius: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanopyPhoto {
    pub image: RgbPixels,
    pub roi: Roi,
}

impl CanopyPhoto {
    pub fn new(image: RgbPixels, roi: Roi) -> Result<Self> {
        let (w, h) = (image.width as f64, image.height as f64);
        let cx = roi.center_x * w;
        let cy = roi.center_y * h;
        let r = roi.radius * w.min(h);
        if !(r > 0.0) || cx - r < 0.0 || cy - r < 0.0 || cx + r > w || cy + r > h {
            return Err(Error::Geometry(format!(
                "roi center ({cx:.1}, {cy:.1}) radius {r:.1} does not fit a {w}x{h} image"
            )));
        }
        Ok(CanopyPhoto { image, roi })
    }

    /// `(x, y)` of the pixels whose centers fall inside the roi, row-major.
    pub fn roi_pixels(&self) -> Vec<(usize, usize)> {
        let img = &self.image;
        let (w, h) = (img.width as f64, img.height as f64);
        let (cx, cy) = (self.roi.center_x * w, self.roi.center_y * h);
        let r = self.roi.radius * w.min(h);
        let r2 = r * r;
        let mut out = Vec::new();
        let y0 = (cy - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil() as usize).min(img.height);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(img.width);
        for y in y0..y1 {
            let dy = y as f64 + 0.5 - cy;
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - cx;
                if dx * dx + dy * dy <= r2 {
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn roi_luminance(&self) -> Vec<u8> {
        self.roi_pixels()
            .into_iter()
            .map(|(x, y)| luminance(self.image.get(x, y)))
            .collect()
    }
}

#[inline]
pub fn luminance([r, g, b]: [u8; 3]) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdMode {
    #[default]
    Otsu,
    /// Fixed luminance threshold; pixels at or above are sky.
    Fixed(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transparency {
    /// Sky pixels over roi pixels.
    pub ratio: f64,
    /// Luminance at or above which a pixel counts as sky.
    pub threshold: u16,
    pub roi_pixels: usize,
    /// The roi had a single luminance level; ratio forced to 0.
    pub degenerate: bool,
}

/// Otsu's threshold over a 256-bin histogram: the lowest luminance of the
/// upper class. When several splits maximise the between-class variance the
/// middle of that run is used. `None` for a single-level histogram.
pub fn otsu_threshold(hist: &[usize; 256]) -> Option<u16> {
    let total: usize = hist.iter().sum();
    if hist.iter().filter(|&&n| n > 0).count() < 2 {
        return None;
    }
    let total_f = total as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut scores = [f64::NEG_INFINITY; 255];
    for (k, score) in scores.iter_mut().enumerate() {
        w0 += hist[k] as f64;
        sum0 += k as f64 * hist[k] as f64;
        let w1 = total_f - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        *score = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    }
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = best * 1e-12;
    let first = scores.iter().position(|&s| s >= best - tol)?;
    let last = scores.iter().rposition(|&s| s >= best - tol)?;
    Some(((first + last) / 2 + 1) as u16)
}

pub fn crown_transparency(photo: &CanopyPhoto, mode: ThresholdMode) -> Result<Transparency> {
    let lum = photo.roi_luminance();
    if lum.len() < MIN_ROI_PIXELS {
        return Err(Error::Argument(format!(
            "roi holds {} pixels, need at least {MIN_ROI_PIXELS}",
            lum.len()
        )));
    }
    let mut hist = [0usize; 256];
    for &l in &lum {
        hist[l as usize] += 1;
    }
    let threshold = match mode {
        ThresholdMode::Fixed(t) => Some(t as u16),
        ThresholdMode::Otsu => otsu_threshold(&hist),
    };
    let Some(threshold) = threshold else {
        log::warn!(
            "canopy roi has a single luminance level ({}); transparency set to 0",
            lum[0]
        );
        return Ok(Transparency {
            ratio: 0.0,
            threshold: 256,
            roi_pixels: lum.len(),
            degenerate: true,
        });
    };
    let sky = hist[(threshold as usize).min(256)..].iter().sum::<usize>();
    Ok(Transparency {
        ratio: sky as f64 / lum.len() as f64,
        threshold,
        roi_pixels: lum.len(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetrationEstimate {
    pub per_photo_ratios: Vec<f64>,
    pub factor: f64,
    pub degenerate_photos: usize,
}

impl PenetrationEstimate {
    /// Mean of already-measured ratios.
    pub fn from_ratios(ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::Argument("penetration factor needs at least one photo".into()));
        }
        if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Range {
                what: "crown transparency ratio".into(),
                value: *r,
                min: 0.0,
                max: 1.0,
            });
        }
        let factor = ratios.iter().sum::<f64>() / ratios.len() as f64;
        Ok(PenetrationEstimate {
            per_photo_ratios: ratios,
            factor,
            degenerate_photos: 0,
        })
    }
}

pub fn penetration_factor(photos: &[CanopyPhoto], mode: ThresholdMode) -> Result<PenetrationEstimate> {
    if photos.is_empty() {
        return Err(Error::Argument("penetration factor needs at least one photo".into()));
    }
    let measured = photos
        .iter()
        .map(|p| crown_transparency(p, mode))
        .collect::<Result<Vec<_>>>()?;
    let mut est = PenetrationEstimate::from_ratios(measured.iter().map(|t| t.ratio).collect())?;
    est.degenerate_photos = measured.iter().filter(|t| t.degenerate).count();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SKY: [u8; 3] = [255, 255, 255];
    const LEAF: [u8; 3] = [0, 0, 0];

    fn photo(w: usize, h: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> CanopyPhoto {
        let mut img = RgbPixels::filled(w, h, LEAF);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, f(x, y));
            }
        }
        CanopyPhoto::new(img, Roi::default()).unwrap()
    }

    #[test]
    fn uniform_roi_is_degenerate() {
        // white disc inside the roi, black frame outside it
        let p = photo(100, 100, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - 50.0, y as f64 + 0.5 - 50.0);
            if dx * dx + dy * dy <= 46.0 * 46.0 {
                SKY
            } else {
                LEAF
            }
        });
        let t = crown_transparency(&p, ThresholdMode::Otsu).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.ratio, 0.0);
    }

    #[test]
    fn fixed_threshold_override() {
        let p = photo(100, 100, |x, _| if x < 50 { [200, 200, 200] } else { [100, 100, 100] });
        let hi = crown_transparency(&p, ThresholdMode::Fixed(250)).unwrap();
        let lo = crown_transparency(&p, ThresholdMode::Fixed(50)).unwrap();
        assert_eq!(hi.ratio, 0.0);
        assert_eq!(lo.ratio, 1.0);
    }

    #[test]
    fn otsu_separates_two_gray_levels() {
        let p = photo(120, 120, |x, _| if x < 60 { [180, 190, 200] } else { [40, 60, 30] });
        let t = crown_transparency(&p, ThresholdMode::Otsu).unwrap();
        assert!((t.ratio - 0.5).abs() < 0.01, "{t:?}");
        assert!(t.threshold > 55 && t.threshold <= 189);
    }

    #[test]
    fn roi_must_fit_and_be_large_enough() {
        let img = RgbPixels::filled(10, 10, SKY);
        let bad = Roi {
            center_x: 0.1,
            ..Default::default()
        };
        assert!(CanopyPhoto::new(img.clone(), bad).is_err());
        let small = CanopyPhoto::new(img, Roi::default()).unwrap();
        assert!(crown_transparency(&small, ThresholdMode::Otsu).is_err());
    }

    #[test]
    fn factor_of_single_and_empty() {
        let p = photo(100, 100, |x, _| if x < 50 { SKY } else { LEAF });
        let one = penetration_factor(std::slice::from_ref(&p), ThresholdMode::Otsu).unwrap();
        assert_eq!(one.factor, one.per_photo_ratios[0]);
        assert!(penetration_factor(&[], ThresholdMode::Otsu).is_err());
    }

    #[test]
    fn all_canopy_gives_zero() {
        let p = photo(100, 100, |_, _| LEAF);
        let est = penetration_factor(&[p.clone(), p], ThresholdMode::Otsu).unwrap();
        assert_eq!(est.factor, 0.0);
        assert_eq!(est.degenerate_photos, 2);
    }
}
