//! ESRI ASCII grid reading and writing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{GridSpec, Raster};

/// Formats with six significant digits, `%g` style: fixed notation for
/// decimal exponents in [-5, 6), scientific otherwise, trailing zeros
/// removed.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.to_string()
    }
}

pub fn encode_grid(r: &Raster) -> String {
    let s = r.spec();
    let mut out = String::with_capacity(s.len() * 8 + 128);
    writeln!(out, "ncols {}", s.ncols).unwrap();
    writeln!(out, "nrows {}", s.nrows).unwrap();
    writeln!(out, "xllcorner {}", s.x_origin).unwrap();
    writeln!(out, "yllcorner {}", s.y_origin).unwrap();
    writeln!(out, "cellsize {}", s.cell_size).unwrap();
    writeln!(out, "NODATA_value {}", format_sig6(r.nodata())).unwrap();
    for row in r.values().chunks(s.ncols) {
        let mut first = true;
        for &v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&format_sig6(v));
        }
        out.push('\n');
    }
    out
}

pub fn write_grid(r: &Raster, path: &Path) -> Result<()> {
    fs::write(path, encode_grid(r)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<Raster> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text).map_err(|e| match e {
        Error::Parse {
            context,
            location,
            message,
        } => Error::Parse {
            context: format!("{} ({context})", path.display()),
            location,
            message,
        },
        other => other,
    })
}

pub fn parse_grid(text: &str) -> Result<Raster> {
    const CTX: &str = "ASCII grid";
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut header = |keys: &[&str]| -> Result<(String, f64, usize)> {
        let Some((lineno, line)) = lines.next() else {
            return Err(Error::parse(CTX, "end of file", format!("missing header '{}'", keys[0])));
        };
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default().to_ascii_lowercase();
        if !keys.contains(&key.as_str()) {
            return Err(Error::parse(
                CTX,
                format!("line {lineno}"),
                format!("expected header '{}', found '{key}'", keys[0]),
            ));
        }
        let raw = parts.next().unwrap_or_default();
        let value: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(CTX, format!("line {lineno}"), format!("bad value '{raw}' for {key}")))?;
        if parts.next().is_some() {
            return Err(Error::parse(CTX, format!("line {lineno}"), format!("trailing tokens after {key}")));
        }
        Ok((key, value, lineno))
    };
    let count = |(key, v, lineno): (String, f64, usize)| -> Result<usize> {
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::parse(CTX, format!("line {lineno}"), format!("{key} must be a positive integer")));
        }
        Ok(v as usize)
    };
    let ncols = count(header(&["ncols"])?)?;
    let nrows = count(header(&["nrows"])?)?;
    let (xkey, x, _) = header(&["xllcorner", "xllcenter"])?;
    let (ykey, y, _) = header(&["yllcorner", "yllcenter"])?;
    let (_, cs, cs_line) = header(&["cellsize"])?;
    if !(cs > 0.0) {
        return Err(Error::parse(CTX, format!("line {cs_line}"), "cellsize must be > 0"));
    }
    let (_, nodata, _) = header(&["nodata_value"])?;
    let x0 = if xkey == "xllcenter" { x - cs / 2.0 } else { x };
    let y0 = if ykey == "yllcenter" { y - cs / 2.0 } else { y };
    let spec = GridSpec::new(ncols, nrows, x0, y0, cs)?;

    let mut values = Vec::with_capacity(spec.len());
    let mut rows = 0usize;
    for (lineno, line) in lines {
        rows += 1;
        if rows > nrows {
            return Err(Error::parse(
                CTX,
                format!("line {lineno}"),
                format!("expected {nrows} rows, found more"),
            ));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::parse(CTX, format!("line {lineno}"), format!("bad value '{tok}'")))?;
            values.push(v);
        }
        let found = values.len() - before;
        if found != ncols {
            return Err(Error::parse(
                CTX,
                format!("line {lineno}"),
                format!("expected {ncols} values in row {rows}, found {found}"),
            ));
        }
    }
    if rows != nrows {
        return Err(Error::parse(
            CTX,
            "end of file",
            format!("expected {nrows} rows, found {rows}"),
        ));
    }
    Raster::new(spec, values, nodata)
}
