//! Image container and binary PGM (P5) / PPM (P6) I/O.
//!
//! Intensities are stored as f64 in channel-row-column order, shape
//! `(d, m, n)` with `d` either 1 (greyscale) or 3 (color). Files are
//! the only 8-bit boundary; all math stays in doubles. Degraded
//! observations are allowed to leave [0, 1] (additive noise is
//! unbounded) and are clamped only when written back to disk.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array3;

use crate::error::{DeconvError, Result};

/// A d x m x n intensity array. `clamped` records whether the values
/// were forced into [0, 1] at construction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Array3<f64>,
    clamped: bool,
}

impl Image {
    /// Wraps an array, requiring 1 or 3 channels and finite entries.
    /// Values outside [0, 1] are permitted (degraded observations).
    pub fn new(data: Array3<f64>) -> Result<Image> {
        let d = data.shape()[0];
        if d != 1 && d != 3 {
            return Err(DeconvError::Invalid(format!(
                "image must have 1 or 3 channels, got {d}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::Invalid(
                "image contains non-finite intensities".into(),
            ));
        }
        Ok(Image {
            data,
            clamped: false,
        })
    }

    /// Like [`Image::new`] but clamps into [0, 1] and records the fact.
    pub fn new_clamped(mut data: Array3<f64>) -> Result<Image> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::Invalid(
                "image contains non-finite intensities".into(),
            ));
        }
        data.mapv_inplace(|v| v.clamp(0.0, 1.0));
        let mut img = Image::new(data)?;
        img.clamped = true;
        Ok(img)
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn was_clamped(&self) -> bool {
        self.clamped
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn rows(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn cols(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2])
    }

    /// Center crop to `size x size`. Errors if the image is smaller.
    pub fn center_crop(&self, size: usize) -> Result<Image> {
        let (d, m, n) = self.shape();
        if m < size || n < size {
            return Err(DeconvError::ShapeMismatch(format!(
                "cannot crop {m}x{n} image to {size}x{size}"
            )));
        }
        let r0 = (m - size) / 2;
        let c0 = (n - size) / 2;
        let cropped = self
            .data
            .slice(ndarray::s![0..d, r0..r0 + size, c0..c0 + size])
            .to_owned();
        Ok(Image {
            data: cropped,
            clamped: self.clamped,
        })
    }
}

/// Loads a binary PGM (P5) or PPM (P6) file with maxval 255.
/// Intensities map to [0, 1] by value / 255. Header comments are
/// tolerated; anything else malformed is an error.
pub fn load_image<P: AsRef<Path>>(path: P) -> Result<Image> {
    let bytes = fs::read(&path)?;
    parse_netpbm(&bytes)
}

fn parse_netpbm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let magic = read_token(bytes, &mut pos)
        .ok_or_else(|| DeconvError::Format("missing magic number".into()))?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(DeconvError::Format(format!(
                "unsupported magic number {other:?} (want P5 or P6)"
            )))
        }
    };
    let width = read_usize(bytes, &mut pos, "width")?;
    let height = read_usize(bytes, &mut pos, "height")?;
    let maxval = read_usize(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(DeconvError::Format(format!(
            "unsupported maxval {maxval} (only 255)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(DeconvError::Format("zero image dimension".into()));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(DeconvError::Format("missing payload separator".into())),
    }
    let n_pixels = width * height * channels;
    let payload = bytes
        .get(pos..pos + n_pixels)
        .ok_or_else(|| DeconvError::Format("truncated payload".into()))?;

    let mut data = Array3::zeros((channels, height, width));
    for i in 0..height {
        for j in 0..width {
            for c in 0..channels {
                let byte = payload[(i * width + j) * channels + c];
                data[[c, i, j]] = byte as f64 / 255.0;
            }
        }
    }
    Image::new(data)
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn read_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
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
    if *pos > start {
        Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    } else {
        None
    }
}

fn read_usize(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok =
        read_token(bytes, pos).ok_or_else(|| DeconvError::Format(format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| DeconvError::Format(format!("bad {what}: {tok:?}")))
}

/// Saves as P5 (1 channel) or P6 (3 channels), maxval 255, no header
/// comments. Values are clamped to [0, 1] and quantized by
/// `round(v * 255)`, so save-load-save is byte-stable.
pub fn save_image<P: AsRef<Path>>(img: &Image, path: P) -> Result<()> {
    let (d, m, n) = img.shape();
    let file = fs::File::create(&path)?;
    let mut w = BufWriter::new(file);
    let magic = if d == 1 { "P5" } else { "P6" };
    write!(w, "{magic}\n{n} {m}\n255\n")?;
    let mut payload = Vec::with_capacity(d * m * n);
    for i in 0..m {
        for j in 0..n {
            for c in 0..d {
                let v = img.data[[c, i, j]].clamp(0.0, 1.0);
                payload.push((v * 255.0).round() as u8);
            }
        }
    }
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}
