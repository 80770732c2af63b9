//! File formats: MAT1 text matrices, PGM images and `key = value` configs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use jointsparse::{Mask, Matrix};

use crate::error::{HarnessError, Result};

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| HarnessError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// `MAT1 <rows> <cols>` then the entries in row-major order, 17 significant digits.
pub fn format_matrix(m: &Matrix) -> String {
    let mut s = format!("MAT1 {} {}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| HarnessError::parse(path, 1, "empty file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let (rows, cols) = match head.as_slice() {
        ["MAT1", r, c] => match (r.parse::<usize>(), c.parse::<usize>()) {
            (Ok(r), Ok(c)) => (r, c),
            _ => return Err(HarnessError::parse(path, 1, "bad MAT1 dimensions")),
        },
        _ => return Err(HarnessError::parse(path, 1, "expected `MAT1 <rows> <cols>`")),
    };
    let mut values = Vec::with_capacity(rows * cols);
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|_| HarnessError::parse(path, i + 1, format!("`{tok}` is not a number")))?;
            values.push(v);
        }
    }
    if values.len() != rows * cols {
        return Err(jointsparse::Error::DimensionMismatch(format!(
            "{}: header says {rows}x{cols}, found {} values",
            path.display(),
            values.len()
        ))
        .into());
    }
    Ok(Matrix::from_row_slice(rows, cols, &values))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| HarnessError::parse(path, 1, "not UTF-8 text"))?;
    parse_matrix(&text, path)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write(path, format_matrix(m).as_bytes())
}

/// Grayscale image with its declared maximum value.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub pixels: Matrix,
    pub maxval: u16,
}

/// Reads P2 or P5. Values are returned unscaled, in `[0, maxval]`.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Pgm> {
    let mut pos = 0;
    let mut line = 1;
    // Next whitespace-delimited header token, skipping `#` comments.
    let token = |pos: &mut usize, line: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                if bytes[*pos] == b'\n' {
                    *line += 1;
                }
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos, &mut line).unwrap_or_default();
    if magic != "P2" && magic != "P5" {
        return Err(HarnessError::parse(
            path,
            line,
            format!("unsupported PGM magic `{magic}`"),
        ));
    }
    let num = |what: &str, pos: &mut usize, line: &mut usize| -> Result<usize> {
        let t = token(pos, line).ok_or_else(|| HarnessError::parse(path, *line, format!("missing {what}")))?;
        t.parse()
            .map_err(|_| HarnessError::parse(path, *line, format!("bad {what} `{t}`")))
    };
    let width = num("width", &mut pos, &mut line)?;
    let height = num("height", &mut pos, &mut line)?;
    let maxval = num("maxval", &mut pos, &mut line)?;
    if maxval == 0 || maxval > 65535 {
        return Err(HarnessError::parse(
            path,
            line,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    let count = width * height;
    let mut values = Vec::with_capacity(count);
    if magic == "P5" {
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        if bytes.len() < pos + need {
            return Err(HarnessError::parse(path, line, "raster is truncated"));
        }
        let raster = &bytes[pos..pos + need];
        if wide {
            values.extend(
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize),
            );
        } else {
            values.extend(raster.iter().map(|&b| b as usize));
        }
    } else {
        for _ in 0..count {
            values.push(num("pixel", &mut pos, &mut line)?);
        }
    }
    if let Some(v) = values.iter().find(|&&v| v > maxval) {
        return Err(HarnessError::parse(
            path,
            line,
            format!("pixel {v} exceeds maxval {maxval}"),
        ));
    }
    let data: Vec<f64> = values.into_iter().map(|v| v as f64).collect();
    Ok(Pgm {
        pixels: Matrix::from_row_slice(height, width, &data),
        maxval: maxval as u16,
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    parse_pgm(&read(path)?, path)
}

/// Binary P5. Pixels are rounded and clamped to `[0, maxval]`.
pub fn format_pgm(img: &Pgm) -> Vec<u8> {
    let (h, w) = img.pixels.shape();
    let mut out = format!("P5\n{w} {h}\n{}\n", img.maxval).into_bytes();
    for r in 0..h {
        for c in 0..w {
            let v = img.pixels[(r, c)].round().clamp(0.0, img.maxval as f64) as u16;
            if img.maxval > 255 {
                out.extend_from_slice(&v.to_be_bytes());
            } else {
                out.push(v as u8);
            }
        }
    }
    out
}

pub fn write_pgm(path: &Path, img: &Pgm) -> Result<()> {
    write(path, &format_pgm(img))
}

/// Mask from a PGM whose pixels are all 0 or 1.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = read_pgm(path)?;
    if img.pixels.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(HarnessError::parse(path, 1, "mask pixels must be 0 or 1"));
    }
    Ok(img.pixels.map(|v| v == 1.0))
}

/// Linearly maps `[lo, hi]` to `[0, 255]` and writes an 8-bit image.
pub fn write_scaled_pgm(path: &Path, m: &Matrix, lo: f64, hi: f64) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels = m.map(|v| (v - lo) / span * 255.0);
    write_pgm(path, &Pgm { pixels, maxval: 255 })
}

/// `key = value` pairs with the line each came from. Blank lines and `#`
/// comments are ignored; duplicate keys are an error.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    pub entries: BTreeMap<String, (String, usize)>,
}

pub fn parse_key_values(text: &str, path: &Path) -> Result<KeyValues> {
    let mut kv = KeyValues::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::parse(path, i + 1, format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(HarnessError::parse(path, i + 1, "empty key"));
        }
        if let Some((_, first)) = kv.entries.get(k) {
            return Err(HarnessError::parse(
                path,
                i + 1,
                format!("key `{k}` already set on line {first}"),
            ));
        }
        kv.entries.insert(k.to_string(), (v.to_string(), i + 1));
    }
    Ok(kv)
}

pub fn read_key_values(path: &Path) -> Result<(KeyValues, String)> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| HarnessError::parse(path, 1, "not UTF-8 text"))?;
    Ok((parse_key_values(&text, path)?, text))
}

pub fn write_key_values(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    write(path, text.as_bytes())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use jointsparse::rng::{self, Purpose};
    use rand::Rng as _;

    fn p() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn matrix_round_trip() {
        let mut g = rng::stream(1, Purpose::Perturb, 0);
        let m = Matrix::from_fn(5, 7, |_, _| {
            (g.random::<f64>() - 0.5) * 10f64.powi(g.random_range(-8..8))
        });
        let back = parse_matrix(&format_matrix(&m), p()).unwrap();
        assert_eq!(back, m);
        assert!((back - &m).amax() <= 1e-15);
    }

    #[test]
    fn matrix_is_row_major() {
        let m = parse_matrix("MAT1 2 3\n1 2 3\n4 5 6\n", p()).unwrap();
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(m[(1, 0)], 4.0);
        assert!(parse_matrix("MAT1 2 2\n1 2 3\n", p()).is_err());
        assert!(matches!(
            parse_matrix("MAT2 1 1\n1\n", p()),
            Err(HarnessError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn p5_values_are_unscaled() {
        let mut bytes = b"P5\n# comment\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 17, 255, 128, 3, 200]);
        let img = parse_pgm(&bytes, p()).unwrap();
        assert_eq!(img.maxval, 255);
        assert_eq!(
            img.pixels,
            Matrix::from_row_slice(2, 3, &[0.0, 17.0, 255.0, 128.0, 3.0, 200.0])
        );
        assert_eq!(parse_pgm(&format_pgm(&img), p()).unwrap(), img);
    }

    #[test]
    fn pgm_round_trips_16_bit_and_ascii() {
        let img = Pgm {
            pixels: Matrix::from_row_slice(2, 2, &[0.0, 65535.0, 1000.0, 42.0]),
            maxval: 65535,
        };
        assert_eq!(parse_pgm(&format_pgm(&img), p()).unwrap(), img);
        let ascii = parse_pgm(b"P2\n2 2\n15\n0 15\n# c\n7 3\n", p()).unwrap();
        assert_eq!(ascii.pixels, Matrix::from_row_slice(2, 2, &[0.0, 15.0, 7.0, 3.0]));
        assert!(parse_pgm(b"P2\n1 1\n5\n9\n", p()).is_err());
        assert!(parse_pgm(b"P6\n1 1\n5\n1\n", p()).is_err());
    }

    #[test]
    fn key_values_parse() {
        let kv = parse_key_values("# header\nseed = 3\n\nname = x # trailing\n", p()).unwrap();
        assert_eq!(kv.entries["seed"], ("3".to_string(), 2));
        assert_eq!(kv.entries["name"], ("x".to_string(), 4));
        let err = parse_key_values("a = 1\nb\n", p()).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 2, .. }));
        let err = parse_key_values("a = 1\na = 2\n", p()).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 2, .. }));
    }
}
