//! Ground-truth metrics: true-neighbor counts and angular-distance densities.

use std::path::Path;

use rayon::prelude::*;

use crate::classify::{Aligner, NeighborTable};
use crate::image::{Image, ImageStack, Quaternion};
use crate::steerable::{build_basis, BasisSpec, SteerableCoeffs};
use crate::{Error, Result};

/// Default correlation threshold for a true neighbor.
pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// Number of 1° histogram bins on [0°, 180°].
pub const BINS: usize = 180;

/// Angle between the viewing directions of two orientations, in degrees.
pub fn angular_distance(qi: &Quaternion, qj: &Quaternion) -> f64 {
    let (a, b) = (qi.viewing_direction(), qj.viewing_direction());
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Angular distance for a neighbor entry. A mirrored match relates opposite
/// viewing directions, so reflected pairs report `min(d, 180° − d)`.
pub fn neighbor_distance(qi: &Quaternion, qj: &Quaternion, reflected: bool) -> f64 {
    let d = angular_distance(qi, qj);
    if reflected {
        d.min(180.0 - d)
    } else {
        d
    }
}

/// Clean images prepared for rotation-and-reflection correlation: each is
/// made zero-mean on the disk and expanded in a Fourier–Bessel basis of
/// radius `(p − 1)/2`, where rotation is exact.
#[derive(Debug)]
pub struct CleanReference {
    coeffs: Vec<SteerableCoeffs>,
    inv_norm: Vec<f64>,
    aligner: Aligner,
}

fn centered_on_disk(img: &Image, basis: &BasisSpec) -> Result<Image> {
    let disk = basis.disk();
    let mean = disk.iter().map(|&i| img.pixels()[i]).sum::<f64>() / disk.len() as f64;
    let mut out = img.clone();
    for &i in disk {
        out.pixels_mut()[i] -= mean;
    }
    Ok(out)
}

impl CleanReference {
    pub fn new(clean: &[&Image], angles: usize) -> Result<Self> {
        let first = clean
            .first()
            .ok_or_else(|| Error::MissingTruth("no clean images".into()))?;
        let side = first.side();
        let basis = build_basis(side, ((side - 1) / 2) as f64)?;
        Self::with_basis(clean, &basis, angles)
    }

    pub fn with_basis(clean: &[&Image], basis: &BasisSpec, angles: usize) -> Result<Self> {
        let coeffs = clean
            .par_iter()
            .map(|img| basis.expand(&centered_on_disk(img, basis)?))
            .collect::<Result<Vec<_>>>()?;
        let inv_norm = coeffs
            .iter()
            .map(|c| {
                let n = c.norm();
                if n > 0.0 {
                    1.0 / n
                } else {
                    0.0
                }
            })
            .collect();
        Ok(CleanReference {
            coeffs,
            inv_norm,
            aligner: Aligner::new(angles)?,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Maximum normalized correlation over rotations and mirroring; 0 when
    /// either image is constant on the disk.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        if self.inv_norm[i] == 0.0 || self.inv_norm[j] == 0.0 {
            return 0.0;
        }
        self.aligner
            .align(&self.coeffs[i], &self.coeffs[j])
            .map(|r| r.corr)
            .unwrap_or(0.0)
    }
}

/// Aligned correlation of two clean images (see [`CleanReference`]).
pub fn clean_pair_correlation(a: &Image, b: &Image, angles: usize) -> Result<f64> {
    let r = CleanReference::new(&[a, b], angles)?;
    Ok(r.correlation(0, 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_images: usize,
    pub k: usize,
    pub threshold: f64,
    /// Directed pairs whose clean images correlate above the threshold.
    pub true_neighbors: usize,
    pub pairs: usize,
    /// One per directed pair, in table order.
    pub correlations: Vec<f64>,
    pub angular_distances: Vec<f64>,
    /// Density per 1° bin; sums to 1.
    pub histogram: Vec<f64>,
}

impl EvalReport {
    /// Fraction of angular distances in `[0, deg]`.
    pub fn mass_below(&self, deg: f64) -> f64 {
        if self.angular_distances.is_empty() {
            return 0.0;
        }
        self.angular_distances.iter().filter(|&&d| d <= deg).count() as f64
            / self.angular_distances.len() as f64
    }

    pub fn mean_correlation(&self) -> f64 {
        self.correlations.iter().sum::<f64>() / self.correlations.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("# reflected neighbor pairs use angular distance min(d, 180 - d)\n");
        s.push_str("metric,value\n");
        s.push_str(&format!("n_images,{}\n", self.n_images));
        s.push_str(&format!("k,{}\n", self.k));
        s.push_str(&format!("threshold,{}\n", self.threshold));
        s.push_str(&format!("pairs,{}\n", self.pairs));
        s.push_str(&format!("true_neighbors,{}\n", self.true_neighbors));
        s.push_str(&format!("mean_correlation,{}\n", self.mean_correlation()));
        s.push_str(&format!("mass_0_20_deg,{}\n", self.mass_below(20.0)));
        s.push('\n');
        s.push_str("bin_deg,density\n");
        for (b, d) in self.histogram.iter().enumerate() {
            s.push_str(&format!("{b},{d}\n"));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// 1° bins over [0°, 180°], normalized to integrate to 1.
pub fn histogram(distances: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; BINS];
    if distances.is_empty() {
        return h;
    }
    for &d in distances {
        let b = (d.floor() as usize).min(BINS - 1);
        h[b] += 1.0;
    }
    let n = distances.len() as f64;
    for v in &mut h {
        *v /= n;
    }
    h
}

/// Kolmogorov–Smirnov distance to the distribution of the angle between two
/// independent uniform directions, `F(θ) = (1 − cos θ)/2`.
pub fn ks_uniform_directions(distances: &[f64]) -> f64 {
    let mut d: Vec<f64> = distances.to_vec();
    d.sort_by(f64::total_cmp);
    let n = d.len() as f64;
    d.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = (1.0 - x.to_radians().cos()) / 2.0;
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// True-neighbor count and angular distances for every directed pair of `table`.
pub fn evaluate(
    table: &NeighborTable,
    rotations: &[Quaternion],
    clean: &CleanReference,
    threshold: f64,
) -> Result<EvalReport> {
    if rotations.len() != table.len() || clean.len() != table.len() {
        return Err(Error::MissingTruth(format!(
            "table has {} rows but truth covers {} rotations and {} clean images",
            table.len(),
            rotations.len(),
            clean.len()
        )));
    }
    let per_row: Vec<Vec<(f64, f64)>> = (0..table.len())
        .into_par_iter()
        .map(|i| {
            table
                .row(i)
                .iter()
                .map(|nb| {
                    (
                        clean.correlation(i, nb.j),
                        neighbor_distance(&rotations[i], &rotations[nb.j], nb.reflected),
                    )
                })
                .collect()
        })
        .collect();
    let (correlations, angular_distances): (Vec<f64>, Vec<f64>) = per_row.into_iter().flatten().unzip();
    let true_neighbors = correlations.iter().filter(|&&c| c > threshold).count();
    Ok(EvalReport {
        n_images: table.len(),
        k: table.k_final(),
        threshold,
        true_neighbors,
        pairs: correlations.len(),
        histogram: histogram(&angular_distances),
        correlations,
        angular_distances,
    })
}

/// [`evaluate`] taking rotations and clean images from the stack's ground truth.
pub fn evaluate_stack(
    table: &NeighborTable,
    stack: &ImageStack,
    threshold: f64,
    angles: usize,
) -> Result<EvalReport> {
    let truth = stack
        .truth()
        .ok_or_else(|| Error::MissingTruth("stack has no ground-truth rotations".into()))?;
    let clean = stack
        .clean_images()
        .ok_or_else(|| Error::MissingTruth("stack has no clean images".into()))?;
    let rotations: Vec<Quaternion> = truth.iter().map(|t| t.rotation).collect();
    let reference = CleanReference::new(&clean, angles)?;
    evaluate(table, &rotations, &reference, threshold)
}
