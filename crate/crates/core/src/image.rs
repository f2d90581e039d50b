//! RGB float images, PFM I/O and comparison metrics.

use crate::math::{vec3, Vec3};
use crate::{Error, Result};
use std::io::{BufRead, Read, Write};
use std::path::Path;

/// RGB image with f64 pixels; (0,0) is the top-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub w: usize,
    pub h: usize,
    data: Vec<Vec3>,
}

impl Image {
    pub fn new(w: usize, h: usize) -> Image {
        Image { w, h, data: vec![Vec3::ZERO; w * h] }
    }

    pub fn from_pixels(w: usize, h: usize, data: Vec<Vec3>) -> Result<Image> {
        if data.len() != w * h {
            return Err(Error::DimensionMismatch("image pixel count".into()));
        }
        Ok(Image { w, h, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> Vec3 {
        self.data[y * self.w + x]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut Vec3 {
        &mut self.data[y * self.w + x]
    }

    pub fn pixels(&self) -> &[Vec3] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [Vec3] {
        &mut self.data
    }

    pub fn same_shape(&self, o: &Image) -> bool {
        self.w == o.w && self.h == o.h
    }

    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> Image {
        Image {
            w: self.w,
            h: self.h,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn mean(&self) -> Vec3 {
        let mut s = Vec3::ZERO;
        for p in &self.data {
            s += *p;
        }
        s / self.data.len() as f64
    }

    /// Sum over pixels and channels of |a - b| divided by the entry count.
    pub fn l1_distance(&self, o: &Image) -> Result<f64> {
        if !self.same_shape(o) {
            return Err(Error::DimensionMismatch("image shapes differ".into()));
        }
        let n = (self.data.len() * 3) as f64;
        let mut s = 0.0;
        for (a, b) in self.data.iter().zip(o.data.iter()) {
            let d = *a - *b;
            s += d.x.abs() + d.y.abs() + d.z.abs();
        }
        Ok(s / n)
    }

    pub fn mse(&self, o: &Image) -> Result<f64> {
        if !self.same_shape(o) {
            return Err(Error::DimensionMismatch("image shapes differ".into()));
        }
        let n = (self.data.len() * 3) as f64;
        let mut s = 0.0;
        for (a, b) in self.data.iter().zip(o.data.iter()) {
            let d = *a - *b;
            s += d.dot(d);
        }
        Ok(s / n)
    }
}

/// PSNR against peak 1.0; +inf when the images are identical.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let mse = a.mse(b)?;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(-10.0 * mse.log10())
    }
}

/// Write a 3-channel PFM ("PF"), little-endian, bottom row first.
pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "PF\n{} {}\n-1.0\n", img.w, img.h)?;
    for y in (0..img.h).rev() {
        for x in 0..img.w {
            let p = img.pixel(x, y);
            for c in [p.x, p.y, p.z] {
                f.write_all(&(c as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let kind = read_token(&mut f)?;
    let channels = match kind.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => {
            return Err(Error::Format(format!(
                "{}: bad PFM magic {other:?}",
                path.display()
            )))
        }
    };
    let w: usize = parse_tok(&read_token(&mut f)?, path, "width")?;
    let h: usize = parse_tok(&read_token(&mut f)?, path, "height")?;
    let scale: f64 = parse_tok(&read_token(&mut f)?, path, "scale")?;
    if scale == 0.0 {
        return Err(Error::Format("PFM scale may not be zero".into()));
    }
    let little_endian = scale < 0.0;
    let mag = scale.abs();
    let mut payload = vec![0u8; w * h * channels * 4];
    f.read_exact(&mut payload)
        .map_err(|_| Error::Format(format!("{}: truncated PFM payload", path.display())))?;
    let mut img = Image::new(w, h);
    let mut off = 0;
    for row in 0..h {
        let y = h - 1 - row; // bottom row first
        for x in 0..w {
            let mut px = [0f64; 3];
            for item in px.iter_mut().take(channels) {
                let b = [payload[off], payload[off + 1], payload[off + 2], payload[off + 3]];
                off += 4;
                let v = if little_endian {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                };
                *item = v as f64 * mag;
            }
            *img.pixel_mut(x, y) = if channels == 1 {
                Vec3::splat(px[0])
            } else {
                vec3(px[0], px[1], px[2])
            };
        }
    }
    Ok(img)
}

fn read_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    // Skip whitespace.
    loop {
        r.read_exact(&mut byte)?;
        if !byte[0].is_ascii_whitespace() {
            break;
        }
    }
    loop {
        tok.push(byte[0] as char);
        r.read_exact(&mut byte)?;
        if byte[0].is_ascii_whitespace() {
            break;
        }
    }
    Ok(tok)
}

fn parse_tok<T: std::str::FromStr>(tok: &str, path: &Path, what: &str) -> Result<T> {
    tok.parse().map_err(|_| {
        Error::Format(format!("{}: bad PFM {what}: {tok:?}", path.display()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image() -> Image {
        let mut img = Image::new(3, 2);
        for y in 0..2 {
            for x in 0..3 {
                *img.pixel_mut(x, y) = vec3(
                    (x as f32 * 0.25) as f64,
                    (y as f32 * 0.5) as f64,
                    ((x + y) as f32 * 0.125) as f64,
                );
            }
        }
        img
    }

    #[test]
    fn pfm_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pfm");
        let img = test_image();
        write_pfm(&p, &img).unwrap();
        let back = read_pfm(&p).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pfm_manual_header() {
        // 2x2 RGB, little-endian: bottom row stored first.
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pfm");
        let mut bytes = b"PF\n2 2\n-1.0\n".to_vec();
        for v in 0..12 {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        std::fs::write(&p, bytes).unwrap();
        let img = read_pfm(&p).unwrap();
        assert_eq!(img.pixel(0, 1), vec3(0.0, 1.0, 2.0)); // bottom-left
        assert_eq!(img.pixel(1, 0), vec3(9.0, 10.0, 11.0)); // top-right
    }

    #[test]
    fn pfm_big_endian_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("be.pfm");
        let mut bytes = b"PF\n1 1\n+1.0\n".to_vec();
        for v in [0.5f32, 0.25, 2.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        std::fs::write(&p, bytes).unwrap();
        let img = read_pfm(&p).unwrap();
        assert_eq!(img.pixel(0, 0), vec3(0.5, 0.25, 2.0));
    }

    #[test]
    fn pfm_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pfm");
        std::fs::write(&p, b"P6\n1 1\n-1.0\n????").unwrap();
        assert!(read_pfm(&p).is_err());
    }

    #[test]
    fn psnr_values() {
        let img = test_image();
        assert!(psnr(&img, &img).unwrap().is_infinite());
        let shifted = img.map(|p| p + Vec3::splat(0.1));
        let v = psnr(&img, &shifted).unwrap();
        assert!((v - 20.0).abs() < 1e-9, "psnr {v}");
    }

    #[test]
    fn l1_single_pixel_example() {
        let a = Image::new(2, 2);
        let mut b = Image::new(2, 2);
        b.pixel_mut(1, 0).y = -0.5;
        assert!((a.l1_distance(&b).unwrap() - 0.5 / 12.0).abs() < 1e-12);
    }
}
