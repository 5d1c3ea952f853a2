//! Grayscale figure output: image montages and density curves as PGM and PNG.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::eval::EvalReport;
use crate::image::Image;
use crate::{Error, Result};

/// Gray levels of the first and second density curve.
pub const CURVE_LEVELS: [u8; 2] = [64, 192];

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    fn set(&mut self, row: usize, col: usize, v: u8) {
        self.data[row * self.width + col] = v;
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write!(w, "P5\n{} {}\n255\n", self.width, self.height).map_err(|e| Error::io(path, e))?;
        w.write_all(&self.data).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
        let mut writer = enc.write_header().map_err(to_io)?;
        writer.write_image_data(&self.data).map_err(to_io)?;
        writer.finish().map_err(to_io)
    }

    /// Writes `<stem>.pgm` and `<stem>.png`.
    pub fn write_both(&self, stem: &Path) -> Result<Vec<PathBuf>> {
        let pgm = stem.with_extension("pgm");
        let png = stem.with_extension("png");
        self.write_pgm(&pgm)?;
        self.write_png(&png)?;
        Ok(vec![pgm, png])
    }
}

/// Min–max maps a tile to 0..=255; a constant tile becomes 128.
fn normalize(img: &Image) -> Vec<u8> {
    let px = img.pixels();
    let lo = px.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![128; px.len()];
    }
    px.iter()
        .map(|&v| (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Row-major tiling with 1-px black gutters around every tile.
pub fn montage(images: &[Image], cols: usize) -> Result<Raster> {
    let first = images
        .first()
        .ok_or_else(|| Error::Precondition("montage needs at least one image".into()))?;
    if cols == 0 {
        return Err(Error::Precondition("montage needs at least one column".into()));
    }
    let p = first.side();
    if let Some(bad) = images.iter().find(|im| im.side() != p) {
        return Err(Error::shape(format!("{p}x{p} tiles"), format!("{0}x{0}", bad.side())));
    }
    let cols = cols.min(images.len());
    let rows = images.len().div_ceil(cols);
    let mut r = Raster::filled(cols * (p + 1) + 1, rows * (p + 1) + 1, 0);
    for (k, img) in images.iter().enumerate() {
        let (tr, tc) = (k / cols, k % cols);
        let tile = normalize(img);
        for y in 0..p {
            for x in 0..p {
                r.set(1 + tr * (p + 1) + y, 1 + tc * (p + 1) + x, tile[y * p + x]);
            }
        }
    }
    Ok(r)
}

pub fn plot_montage(images: &[Image], cols: usize, stem: &Path) -> Result<Vec<PathBuf>> {
    montage(images, cols)?.write_both(stem)
}

const PLOT_HEIGHT: usize = 200;
const BIN_PX: usize = 2;

/// Line plot of densities over 1° bins on a white canvas with a black frame.
/// The y-axis is scaled to the largest bin over all curves.
pub fn density_raster(curves: &[&[f64]]) -> Result<Raster> {
    if curves.is_empty() || curves.iter().any(|c| c.is_empty()) {
        return Err(Error::Precondition("density plot needs non-empty curves".into()));
    }
    if curves.len() > CURVE_LEVELS.len() {
        return Err(Error::Precondition(format!(
            "at most {} curves per plot",
            CURVE_LEVELS.len()
        )));
    }
    let bins = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    let peak = curves
        .iter()
        .flat_map(|c| c.iter().copied())
        .fold(0.0f64, f64::max);
    let (w, h) = (bins * BIN_PX + 2, PLOT_HEIGHT + 2);
    let mut r = Raster::filled(w, h, 255);
    for x in 0..w {
        r.set(0, x, 0);
        r.set(h - 1, x, 0);
    }
    for y in 0..h {
        r.set(y, 0, 0);
        r.set(y, w - 1, 0);
    }
    let to_row = |v: f64| -> usize {
        let frac = if peak > 0.0 { v / peak } else { 0.0 };
        let y = ((1.0 - frac) * (PLOT_HEIGHT - 1) as f64).round() as usize;
        1 + y.min(PLOT_HEIGHT - 1)
    };
    for (curve, &level) in curves.iter().zip(&CURVE_LEVELS) {
        let mut prev: Option<usize> = None;
        for (b, &v) in curve.iter().enumerate() {
            let row = to_row(v);
            for dx in 0..BIN_PX {
                let col = 1 + b * BIN_PX + dx;
                let from = if dx == 0 { prev.unwrap_or(row) } else { row };
                let (a, z) = (from.min(row), from.max(row));
                for y in a..=z {
                    r.set(y, col, level);
                }
            }
            prev = Some(row);
        }
    }
    Ok(r)
}

/// Writes `<stem>.pgm`, `<stem>.png` and `<stem>.csv` with one density column per report.
pub fn plot_density(reports: &[(&str, &EvalReport)], stem: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() || reports.iter().any(|(_, r)| r.angular_distances.is_empty()) {
        return Err(Error::Precondition("cannot plot an empty report".into()));
    }
    let curves: Vec<&[f64]> = reports.iter().map(|(_, r)| r.histogram.as_slice()).collect();
    let mut paths = density_raster(&curves)?.write_both(stem)?;
    let mut csv = String::from("bin_deg");
    for (name, _) in reports {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    let bins = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    for b in 0..bins {
        csv.push_str(&b.to_string());
        for c in &curves {
            csv.push_str(&format!(",{}", c.get(b).copied().unwrap_or(0.0)));
        }
        csv.push('\n');
    }
    let csv_path = stem.with_extension("csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    paths.push(csv_path);
    Ok(paths)
}
