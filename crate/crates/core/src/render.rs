//! Heatmap rendering of variance matrices as binary PPM images.
//!
//! Row `i = 0` sits at the bottom of the image so the identity lies at the
//! centre and the matrix reads like a plot over `(v_j, v_i)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::varmat::VarianceMatrix;

/// Viridis anchors from low to high.
const VIRIDIS: [[u8; 3]; 5] = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
];

const GUTTER: usize = 2;

/// Maps `t` in `[0, 1]` onto the colour ramp; out-of-range values clamp.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let lo = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let frac = pos - lo as f64;
    let (a, b) = (VIRIDIS[lo], VIRIDIS[lo + 1]);
    std::array::from_fn(|c| (a[c] as f64 + (b[c] as f64 - a[c] as f64) * frac).round() as u8)
}

/// An 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples, top row first.
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let o = (y * self.width + x) * 3;
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Binary PPM (P6, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    fn blit(&mut self, src: &Image, x0: usize, y0: usize) {
        for y in 0..src.height {
            let d = ((y0 + y) * self.width + x0) * 3;
            let s = y * src.width * 3;
            self.pixels[d..d + src.width * 3].copy_from_slice(&src.pixels[s..s + src.width * 3]);
        }
    }
}

fn normaliser(scale_max: Option<f64>, data_max: f64) -> Result<f64> {
    match scale_max {
        Some(s) if !(s.is_finite() && s >= 0.0) => {
            Err(Error::invalid("scale_max must be finite and >= 0"))
        }
        Some(s) => Ok(s),
        None => Ok(data_max),
    }
}

/// One pixel per cell: `δ[i][j]` lands at `(x = j, y = n - i)`.
/// Values are divided by `scale_max` (default: the matrix maximum); a zero
/// scale paints everything with the low colour.
pub fn render_matrix(m: &VarianceMatrix, scale_max: Option<f64>) -> Result<Image> {
    let scale = normaliser(scale_max, m.max())?;
    Ok(paint(m, scale))
}

fn paint(m: &VarianceMatrix, scale: f64) -> Image {
    let size = m.size();
    let mut img = Image::new(size, size);
    for i in 0..size {
        for j in 0..size {
            let t = if scale > 0.0 {
                m.get(i, j) / scale
            } else {
                0.0
            };
            img.set(j, size - 1 - i, colormap(t));
        }
    }
    img
}

/// Tiles matrices into a grid (`rows[r][c]`), separated by black gutters.
/// All tiles share one colour scale, by default the largest value shown.
pub fn render_grid(rows: &[Vec<&VarianceMatrix>], scale_max: Option<f64>) -> Result<Image> {
    let size = rows
        .iter()
        .flatten()
        .next()
        .map(|m| m.size())
        .ok_or_else(|| Error::invalid("nothing to render"))?;
    if rows.iter().flatten().any(|m| m.size() != size) {
        return Err(Error::Shape("grid tiles differ in size".into()));
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let data_max = rows.iter().flatten().map(|m| m.max()).fold(0.0, f64::max);
    let scale = normaliser(scale_max, data_max)?;
    let span = |k: usize| k * size + k.saturating_sub(1) * GUTTER;
    let mut img = Image::new(span(cols), span(rows.len()));
    for (r, row) in rows.iter().enumerate() {
        for (c, m) in row.iter().enumerate() {
            img.blit(&paint(m, scale), c * (size + GUTTER), r * (size + GUTTER));
        }
    }
    Ok(img)
}
