//! RGB imagery: binary PPM (P6), 8-bit PNG, and world-file sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use crate::classify::{RgbImage, RgbPixels};
use crate::error::{Error, Result};
use crate::raster::GridSpec;

pub fn read_rgb(path: &Path) -> Result<RgbPixels> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P6") {
        parse_ppm(&bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(&bytes)
    } else {
        Err(Error::Capability(format!(
            "{}: not a binary PPM (P6) or PNG image",
            path.display()
        )))
    }
}

pub fn parse_ppm(bytes: &[u8]) -> Result<RgbPixels> {
    const CTX: &str = "PPM";
    let mut pos = 2usize;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and '#' comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(CTX, format!("byte {start}"), "expected a header integer"))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::parse(CTX, format!("byte {pos}"), "expected whitespace after maxval"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Capability(format!("PPM maxval {maxval}; only 255 is supported")));
    }
    let need = w * h * 3;
    let data = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::parse(CTX, format!("byte {}", bytes.len()), format!("expected {need} pixel bytes")))?;
    RgbPixels::new(w, h, data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

pub fn encode_ppm(img: &RgbPixels) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().flatten());
    out
}

pub fn write_ppm(img: &RgbPixels, path: &Path) -> Result<()> {
    fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

fn decode_png(bytes: &[u8]) -> Result<RgbPixels> {
    let to_err = |e: png::DecodingError| Error::parse("PNG", "stream", e.to_string());
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(to_err)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(to_err)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Capability(format!("PNG bit depth {:?}; only 8-bit is supported", info.bit_depth)));
    }
    let stride = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::Capability(format!("PNG color type {other:?}; RGB required"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h);
    for row in buf[..info.buffer_size()].chunks(info.line_size) {
        data.extend(row.chunks_exact(stride).take(w).map(|c| [c[0], c[1], c[2]]));
    }
    RgbPixels::new(w, h, data)
}

/// Sidecar candidates: `name.<e0><e_last>w` (e.g. `.pgw`, `.pmw`), then
/// `name.wld`.
pub fn world_file_candidates(image: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let Some(ext) = image.extension().and_then(|e| e.to_str()) {
        let chars: Vec<char> = ext.chars().collect();
        if chars.len() >= 2 {
            out.push(image.with_extension(format!("{}{}w", chars[0], chars[chars.len() - 1])));
        }
    }
    out.push(image.with_extension("wld"));
    out
}

/// Six-line world file: x pixel size, two rotation terms, negative y pixel
/// size, then the upper-left pixel center.
pub fn parse_world_file(text: &str, width: usize, height: usize) -> Result<GridSpec> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .enumerate()
        .map(|(i, t)| {
            t.parse::<f64>()
                .map_err(|_| Error::parse("world file", format!("value {}", i + 1), format!("bad number '{t}'")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != 6 {
        return Err(Error::parse("world file", "end of file", format!("expected 6 values, found {}", vals.len())));
    }
    let [a, d, b, e, c, f] = [vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]];
    if d != 0.0 || b != 0.0 {
        return Err(Error::Capability("rotated world files are not supported".into()));
    }
    if !(a > 0.0) || (a + e).abs() > 1e-9 * a {
        return Err(Error::Capability(format!(
            "world file pixel size ({a}, {e}) is not square and north-up"
        )));
    }
    GridSpec::new(width, height, c - a / 2.0, f + a / 2.0 - height as f64 * a, a)
}

pub fn encode_world_file(spec: &GridSpec) -> String {
    let cs = spec.cell_size;
    format!(
        "{cs}\n0\n0\n{}\n{}\n{}\n",
        -cs,
        spec.x_origin + cs / 2.0,
        spec.y_max() - cs / 2.0
    )
}

/// Imagery plus its world-file georeferencing.
pub fn read_georeferenced(path: &Path) -> Result<RgbImage> {
    let pixels = read_rgb(path)?;
    let world = world_file_candidates(path)
        .into_iter()
        .find(|p| p.exists())
        .ok_or_else(|| Error::Config(format!("no world file found next to {}", path.display())))?;
    let text = fs::read_to_string(&world).map_err(|e| Error::io(&world, e))?;
    let spec = parse_world_file(&text, pixels.width, pixels.height)?;
    RgbImage::new(pixels, spec)
}

/// Writes `path` as PPM and a `.wld` sidecar.
pub fn write_georeferenced(img: &RgbImage, path: &Path) -> Result<()> {
    write_ppm(&img.pixels, path)?;
    let world = path.with_extension("wld");
    fs::write(&world, encode_world_file(&img.spec)).map_err(|e| Error::io(&world, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_with_comment() {
        let img = RgbPixels::new(2, 1, vec![[1, 2, 3], [250, 251, 252]]).unwrap();
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([1, 2, 3, 250, 251, 252]);
        assert_eq!(parse_ppm(&bytes).unwrap(), img);
        assert_eq!(parse_ppm(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn ppm_truncated_or_wide() {
        assert!(parse_ppm(b"P6 2 2 255\n\x00\x00").is_err());
        assert!(matches!(parse_ppm(b"P6 1 1 65535\n\x00\x00\x00\x00\x00\x00"), Err(Error::Capability(_))));
    }

    #[test]
    fn png_decodes_rgb() {
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, 2, 2);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120]).unwrap();
        }
        let img = decode_png(&bytes).unwrap();
        assert_eq!(img.get(1, 1), [100, 110, 120]);
        assert_eq!(img.get(1, 0), [40, 50, 60]);
    }

    #[test]
    fn world_file_round_trip() {
        let spec = GridSpec::new(40, 30, 1000.0, 2000.0, 0.1524).unwrap();
        let back = parse_world_file(&encode_world_file(&spec), 40, 30).unwrap();
        assert!((back.x_origin - spec.x_origin).abs() < 1e-9);
        assert!((back.y_origin - spec.y_origin).abs() < 1e-9);
        assert_eq!(back.cell_size, spec.cell_size);
    }

    #[test]
    fn world_file_rejects_rotation_and_anisotropy() {
        assert!(parse_world_file("1\n0.1\n0\n-1\n0\n0\n", 1, 1).is_err());
        assert!(parse_world_file("1\n0\n0\n-2\n0\n0\n", 1, 1).is_err());
        assert!(parse_world_file("1\n0\n0\n-1\n0\n", 1, 1).is_err());
    }

    #[test]
    fn sidecar_names() {
        let c = world_file_candidates(Path::new("/x/img.png"));
        assert_eq!(c[0], Path::new("/x/img.pgw"));
        assert_eq!(c[1], Path::new("/x/img.wld"));
    }
}
