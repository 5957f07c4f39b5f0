use std::io::{BufRead, Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Grayscale image with nonnegative real intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        if pixels.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("image pixels must be finite and nonnegative".into()));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_vector(width: usize, height: usize, v: &DVector<f64>) -> Result<Self> {
        Self::new(width, height, v.iter().copied().collect())
    }

    /// Like [`Image::from_vector`] but clamps negative entries to zero.
    pub fn from_vector_clamped(width: usize, height: usize, v: &DVector<f64>) -> Result<Self> {
        Self::new(width, height, v.iter().map(|p| p.max(0.0)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.pixels)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.width, self.height, self.pixels.iter().map(|p| p * factor).collect())
    }

    /// Deterministic piecewise-constant test scene with intensities in `[20, 200]`.
    pub fn phantom(width: usize, height: usize) -> Result<Self> {
        let (w, h) = (width as f64, height as f64);
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let (u, v) = ((c as f64 + 0.5) / w, (r as f64 + 0.5) / h);
                let mut val = 20.0;
                if (0.1..0.45).contains(&u) && (0.15..0.6).contains(&v) {
                    val = 120.0;
                }
                let (du, dv) = (u - 0.68, v - 0.35);
                if du * du + dv * dv < 0.04 {
                    val = 200.0;
                }
                let (du, dv) = (u - 0.5, v - 0.78);
                if du * du / 0.09 + dv * dv / 0.01 < 1.0 {
                    val = 80.0 + 60.0 * u;
                }
                if (0.75..0.85).contains(&u) && (0.6..0.95).contains(&v) {
                    val = 160.0;
                }
                pixels.push(val);
            }
        }
        Self::new(width, height, pixels)
    }

    /// Binary PGM (P5), values rounded and clamped to `[0, 255]`.
    pub fn write_pgm<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|p| p.round().clamp(0.0, 255.0) as u8).collect();
        out.write_all(&bytes)
    }

    pub fn read_pgm<R: Read>(input: &mut R) -> Result<Self> {
        let mut data = Vec::new();
        input.read_to_end(&mut data)?;
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < data.len() && data[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < data.len() && data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Parse("truncated PGM header".into()));
            }
            Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(Error::Parse("not a binary PGM (P5) file".into()));
        }
        let num = |s: String| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad PGM header field {s:?}")))
        };
        let width = num(token()?)?;
        let height = num(token()?)?;
        let maxval = num(token()?)?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let end = start + width * height;
        if data.len() < end {
            return Err(Error::Parse("truncated PGM raster".into()));
        }
        let pixels = data[start..end].iter().map(|&b| b as f64).collect();
        Self::new(width, height, pixels)
    }

    /// Whitespace-separated reals, one image row per line.
    pub fn write_text<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut pixels = Vec::new();
        let mut width = None;
        let mut height = 0;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Parse(format!("row {} has {} entries, expected {w}", height + 1, row.len())))
                }
                _ => {}
            }
            pixels.extend(row);
            height += 1;
        }
        Self::new(width.unwrap_or(0), height, pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let img = Image::new(3, 2, vec![0.0, 1.0, 2.0, 128.0, 254.0, 255.0]).unwrap();
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        let back = Image::read_pgm(&mut &buf[..]).unwrap();
        assert_eq!(back, img);
        let mut again = Vec::new();
        back.write_pgm(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let mut data = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        data.extend([7u8, 9u8]);
        let img = Image::read_pgm(&mut &data[..]).unwrap();
        assert_eq!(img.pixels(), &[7.0, 9.0]);
    }

    #[test]
    fn text_round_trip() {
        let img = Image::new(2, 2, vec![0.1, 2.5, 1e-7, 3.0]).unwrap();
        let mut buf = Vec::new();
        img.write_text(&mut buf).unwrap();
        assert_eq!(Image::read_text(&buf[..]).unwrap(), img);
        assert!(Image::read_text("1 2\n3\n".as_bytes()).is_err());
    }

    #[test]
    fn rejects_negative_pixels() {
        assert!(Image::new(1, 1, vec![-1.0]).is_err());
        assert!(Image::new(2, 1, vec![1.0]).is_err());
    }

    #[test]
    fn phantom_is_positive() {
        let p = Image::phantom(16, 16).unwrap();
        assert!(p.min() >= 20.0 && p.max() <= 200.0);
    }
}
